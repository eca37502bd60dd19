"""Dirichlet-Markov mixture models of fixation sequences and their Bayes factors.

A k-state model clusters training fixations into k regions, fits a 2D KDE
per region, and puts Jeffreys Dirichlet(0.5, ..., 0.5) priors on the initial
distribution and on every row of the transition matrix, updated with the
states observed in the training sequences. The null model treats fixations
as i.i.d. draws from one KDE over all training points.

The Bayes factor of a held-out sequence is null over alternative, so values
below 1 favour the Markov model. Everything is accumulated in log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import gammaln, logsumexp

from .clustering import ClusterConfig, ClusterModel
from .data import ColourScheme, DataError, Dataset, FixationSequence, split_train_test
from .density import Kde2D, fit_cluster_kde, log_likelihood_iid

JEFFREYS = 0.5
LOG2 = np.log(2.0)


@dataclass(frozen=True, eq=False)
class TransitionCounts:
    initial: np.ndarray
    transitions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "initial", np.asarray(self.initial, dtype=np.int64))
        object.__setattr__(self, "transitions", np.asarray(self.transitions, dtype=np.int64))
        k = len(self.initial)
        if self.transitions.shape != (k, k):
            raise ValueError("transition counts must be k x k")

    @property
    def k(self) -> int:
        return len(self.initial)


def count_states(state_sequences: Iterable[Sequence[int]], k: int) -> TransitionCounts:
    """Tally first states and adjacent state pairs."""
    initial = np.zeros(k, dtype=np.int64)
    transitions = np.zeros((k, k), dtype=np.int64)
    for states in state_sequences:
        states = np.asarray(states, dtype=int)
        if len(states) == 0:
            continue
        initial[states[0]] += 1
        np.add.at(transitions, (states[:-1], states[1:]), 1)
    return TransitionCounts(initial, transitions)


def count_transitions(train_sequences: Iterable[FixationSequence], clusters: ClusterModel) -> TransitionCounts:
    return count_states((clusters.assign(seq.points) for seq in train_sequences), clusters.k)


@dataclass(frozen=True, eq=False)
class DirichletMarkovPosterior:
    initial_alpha: np.ndarray
    transition_alpha: np.ndarray

    def __post_init__(self):
        a0 = np.asarray(self.initial_alpha, float)
        a = np.asarray(self.transition_alpha, float)
        if a.shape != (len(a0), len(a0)):
            raise ValueError("transition alphas must be k x k")
        if np.any(a0 <= 0) or np.any(a <= 0):
            raise ValueError("Dirichlet parameters must be positive")
        object.__setattr__(self, "initial_alpha", a0)
        object.__setattr__(self, "transition_alpha", a)

    @property
    def k(self) -> int:
        return len(self.initial_alpha)

    def permute(self, perm) -> "DirichletMarkovPosterior":
        perm = np.asarray(perm)
        a0 = np.empty_like(self.initial_alpha)
        a0[perm] = self.initial_alpha
        a = np.empty_like(self.transition_alpha)
        a[np.ix_(perm, perm)] = self.transition_alpha
        return DirichletMarkovPosterior(a0, a)

    def to_json(self) -> dict:
        return {"initial_alpha": self.initial_alpha.tolist(),
                "transition_alpha": self.transition_alpha.tolist()}

    @classmethod
    def from_json(cls, payload: dict) -> "DirichletMarkovPosterior":
        return cls(payload["initial_alpha"], payload["transition_alpha"])


def posterior_from_counts(counts: TransitionCounts, prior: float = JEFFREYS) -> DirichletMarkovPosterior:
    return DirichletMarkovPosterior(prior + counts.initial, prior + counts.transitions)


def posterior_mean(posterior: DirichletMarkovPosterior) -> tuple[np.ndarray, np.ndarray]:
    """Posterior-mean initial distribution and transition matrix."""
    a0, a = posterior.initial_alpha, posterior.transition_alpha
    return a0 / a0.sum(), a / a.sum(axis=1, keepdims=True)


def log_markov_evidence(posterior: DirichletMarkovPosterior, states: Sequence[int]) -> float:
    """log E[pi_{s_1} prod_t p_{s_{t-1}, s_t}] under the posterior, in closed form.

    pi and the rows of p are independent Dirichlets, so the expectation is a
    product of Dirichlet-multinomial moments, one per row that the test
    sequence leaves.
    """
    states = np.asarray(states, dtype=int)
    a0, a = posterior.initial_alpha, posterior.transition_alpha
    out = np.log(a0[states[0]]) - np.log(a0.sum())
    u = count_states([states], posterior.k).transitions
    rows = u.sum(axis=1) > 0
    a, u = a[rows], u[rows]
    out += (gammaln(a.sum(axis=1)) - gammaln(a.sum(axis=1) + u.sum(axis=1))).sum()
    out += (gammaln(a + u) - gammaln(a)).sum()
    return float(out)


@dataclass(frozen=True, eq=False)
class MarkovMixtureModel:
    clusters: ClusterModel
    densities: tuple[Kde2D, ...]
    null_density: Kde2D
    posterior: DirichletMarkovPosterior

    def __post_init__(self):
        object.__setattr__(self, "densities", tuple(self.densities))
        if len(self.densities) != self.clusters.k or self.posterior.k != self.clusters.k:
            raise ValueError("densities, posterior and clusters disagree on k")

    @property
    def k(self) -> int:
        return self.clusters.k

    def states(self, sequence) -> np.ndarray:
        return self.clusters.assign(getattr(sequence, "points", sequence))

    def log_density_ratio(self, sequence) -> tuple[float, np.ndarray]:
        """(sum_t log f(X_t) - sum_t log f_{s_t}(X_t), states)."""
        points = np.asarray(getattr(sequence, "points", sequence), float).reshape(-1, 2)
        states = self.states(points)
        log_alt = sum(self.densities[s].log_density(points[states == s]).sum() for s in np.unique(states))
        return log_likelihood_iid(self.null_density, points) - float(log_alt), states

    def relabel(self, perm) -> "MarkovMixtureModel":
        """The same model with cluster ``i`` renamed ``perm[i]``."""
        perm = np.asarray(perm)
        densities = [None] * self.k
        for old, new in enumerate(perm):
            densities[new] = self.densities[old]
        return MarkovMixtureModel(self.clusters.relabel(perm), tuple(densities),
                                  self.null_density, self.posterior.permute(perm))

    def to_json(self) -> dict:
        pi_hat, p_hat = posterior_mean(self.posterior)
        return {
            "k": self.k,
            "clusters": self.clusters.to_json(),
            "densities": [d.to_json() for d in self.densities],
            "null_density": self.null_density.to_json(),
            "posterior": self.posterior.to_json(),
            "posterior_mean": {"pi": pi_hat.tolist(), "p": p_hat.tolist()},
        }

    @classmethod
    def from_json(cls, payload: dict) -> "MarkovMixtureModel":
        return cls(ClusterModel.from_json(payload["clusters"]),
                   tuple(Kde2D.from_json(d) for d in payload["densities"]),
                   Kde2D.from_json(payload["null_density"]),
                   DirichletMarkovPosterior.from_json(payload["posterior"]))


def bandwidth_floor(points: np.ndarray) -> np.ndarray:
    sd = np.asarray(points, float).std(axis=0, ddof=1) if len(points) > 1 else np.zeros(2)
    return np.where(sd > 0, 0.01 * sd, 1.0)


def fit_model(train_sequences: Sequence[FixationSequence], k: int,
              cluster_config: ClusterConfig = ClusterConfig(), seed=0) -> MarkovMixtureModel:
    """Cluster the pooled training fixations and build the k-state model."""
    if not train_sequences:
        raise DataError("no training sequences")
    points = np.concatenate([s.points for s in train_sequences])
    clusters = cluster_config.fit(points, k, seed=seed)
    floor = bandwidth_floor(points)
    densities = tuple(fit_cluster_kde(clusters.members(j), floor) for j in range(k))
    null = fit_cluster_kde(points, floor)
    posterior = posterior_from_counts(count_transitions(train_sequences, clusters))
    return MarkovMixtureModel(clusters, densities, null, posterior)


def closed_form_log_bf(model: MarkovMixtureModel, test) -> float:
    log_ratio, states = model.log_density_ratio(test)
    return log_ratio - log_markov_evidence(model.posterior, states)


def closed_form_bf(model: MarkovMixtureModel, test) -> float:
    """Exact Bayes factor (null over k-state model) for a hard-assigned test sequence."""
    with np.errstate(over="ignore", under="ignore"):
        return float(np.exp(closed_form_log_bf(model, test)))


def mc_log_bf(model: MarkovMixtureModel, test, samples: int = 10_000, seed=0) -> tuple[float, float]:
    """Monte Carlo log Bayes factor and the standard error of log BF.

    Draws (pi, p) from the Dirichlet posterior through normalised Gamma
    variates and averages pi_{s_1} prod p_{s_{t-1}, s_t} with log-sum-exp.
    The error is the delta-method sd of the log of the sample mean; with a
    single sample it cannot be estimated and is reported as infinite.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    log_ratio, states = model.log_density_ratio(test)
    post = model.posterior
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    g0 = rng.standard_gamma(post.initial_alpha, size=(samples, post.k))
    g = rng.standard_gamma(post.transition_alpha, size=(samples, post.k, post.k))
    log_w = np.log(g0[:, states[0]]) - np.log(g0.sum(axis=1))
    u = count_states([states], post.k).transitions
    rows, cols = np.nonzero(u)
    if len(rows):
        log_p = np.log(g[:, rows, cols]) - np.log(g[:, rows, :].sum(axis=2))
        log_w = log_w + log_p @ u[rows, cols]
    log_mean = logsumexp(log_w) - np.log(samples)
    if samples > 1:
        w = np.exp(log_w - log_w.max())
        rel_se = w.std(ddof=1) / (np.sqrt(samples) * w.mean())
    else:
        rel_se = np.inf
    return float(log_ratio - log_mean), float(rel_se)


def mc_bf(model: MarkovMixtureModel, test, samples: int = 10_000, seed=0) -> tuple[float, float]:
    """Monte Carlo Bayes factor and its delta-method standard error."""
    log_bf, rel_se = mc_log_bf(model, test, samples, seed)
    with np.errstate(over="ignore", under="ignore"):
        bf = float(np.exp(log_bf))
    return bf, bf * rel_se


# -- per-image scoring ---------------------------------------------------------------

@dataclass(frozen=True)
class ScoreConfig:
    samples: int = 10_000
    combine: str = "geometric"
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("MC samples must be >= 1")
        if self.combine not in ("geometric", "arithmetic"):
            raise ValueError(f"unknown combine rule {self.combine!r}")

    def to_json(self) -> dict:
        return {"mc_samples": self.samples, "combine": self.combine, "seed": self.seed}


def _pow2(v: float) -> float:
    """2**v saturating to 0 or inf instead of raising."""
    with np.errstate(over="ignore", under="ignore"):
        return float(np.exp2(v))


def combine_log2(log2_bfs, rule: str = "geometric") -> float:
    log2_bfs = np.asarray(log2_bfs, float)
    if rule == "geometric":
        return float(log2_bfs.mean())
    return float((logsumexp(log2_bfs * LOG2) - np.log(len(log2_bfs))) / LOG2)


@dataclass
class KScore:
    k: int
    subjects: list[str]
    per_subject_log2_bf: list[float]
    per_subject_mc_se: list[float]
    per_subject_closed_form_log2_bf: list[float]
    combined_log2_bf: float
    mc_std_error: float
    closed_form_log2_bf: float
    pi_mean: list[float]
    p_mean: list[list[float]]

    @property
    def per_subject_bf(self) -> list[float]:
        return [_pow2(v) for v in self.per_subject_log2_bf]

    @property
    def combined_bf(self) -> float:
        return _pow2(self.combined_log2_bf)

    @property
    def closed_form_bf(self) -> float:
        return _pow2(self.closed_form_log2_bf)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "subjects": self.subjects,
            "per_subject_bf": self.per_subject_bf,
            "per_subject_log2_bf": self.per_subject_log2_bf,
            "per_subject_mc_se": self.per_subject_mc_se,
            "per_subject_closed_form_log2_bf": self.per_subject_closed_form_log2_bf,
            "combined_bf": self.combined_bf,
            "combined_log2_bf": self.combined_log2_bf,
            "mc_std_error": self.mc_std_error,
            "closed_form_bf": self.closed_form_bf,
            "closed_form_log2_bf": self.closed_form_log2_bf,
            "posterior_mean": {"pi": self.pi_mean, "p": self.p_mean},
        }

    @classmethod
    def from_json(cls, payload: dict) -> "KScore":
        return cls(k=payload["k"], subjects=payload["subjects"],
                   per_subject_log2_bf=payload["per_subject_log2_bf"],
                   per_subject_mc_se=payload["per_subject_mc_se"],
                   per_subject_closed_form_log2_bf=payload["per_subject_closed_form_log2_bf"],
                   combined_log2_bf=payload["combined_log2_bf"],
                   mc_std_error=payload["mc_std_error"],
                   closed_form_log2_bf=payload["closed_form_log2_bf"],
                   pi_mean=payload["posterior_mean"]["pi"], p_mean=payload["posterior_mean"]["p"])


@dataclass
class BayesFactorReport:
    image_id: int
    scheme: ColourScheme
    per_k: dict[int, KScore]
    config: dict = field(default_factory=dict)

    @property
    def candidates(self) -> list[int]:
        return [k for k in sorted(self.per_k) if k >= 2]

    @property
    def selected_k(self) -> int:
        # min() keeps the first (smallest) k among equal scores
        return min(self.candidates, key=lambda k: self.per_k[k].combined_log2_bf)

    @property
    def strongest_log2_bf(self) -> float:
        return self.per_k[self.selected_k].combined_log2_bf

    @property
    def strongest_bf(self) -> float:
        return _pow2(self.strongest_log2_bf)

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "scheme": self.scheme.value,
            "selected_k": self.selected_k,
            "strongest_bf": self.strongest_bf,
            "strongest_log2_bf": self.strongest_log2_bf,
            "per_k": {str(k): self.per_k[k].to_json() for k in sorted(self.per_k)},
            "config": self.config,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "BayesFactorReport":
        return cls(image_id=payload["image_id"], scheme=ColourScheme.parse(payload["scheme"]),
                   per_k={int(k): KScore.from_json(v) for k, v in payload["per_k"].items()},
                   config=payload.get("config", {}))


class ScoringError(RuntimeError):
    pass


def score_image(dataset: Dataset, image_id: int, scheme: ColourScheme, k_range: Iterable[int] = range(1, 11),
                cluster_config: ClusterConfig = ClusterConfig(),
                score_config: ScoreConfig = ScoreConfig()) -> BayesFactorReport:
    """Leave-one-subject-out Bayes factors for one (image, scheme) over a range of k.

    Each held-out subject is scored against a model fitted to the others;
    the per-subject values are then combined (geometric mean by default).
    Fold seeds derive from (seed, subject position, k).
    """
    scheme = ColourScheme(scheme)
    subjects = dataset.subjects(image_id, scheme)
    if len(subjects) < 2:
        raise ScoringError(f"image {image_id} ({scheme.value}): need at least 2 subjects, "
                           f"have {len(subjects)}")
    k_values = sorted(set(int(k) for k in k_range))
    if not k_values or k_values[0] < 1 or not any(k >= 2 for k in k_values):
        raise ValueError("k range must contain some k >= 2 and no k < 1")
    per_k = {}
    for k in k_values:
        log2_mc, rel_se, log2_cf, pis, ps = [], [], [], [], []
        reference = None
        for position, subject in enumerate(subjects):
            train, test = split_train_test(dataset, image_id, scheme, subject)
            try:
                model = fit_model(train, k, cluster_config, seed=[score_config.seed, position, k, 0])
            except ValueError as exc:
                raise ScoringError(f"image {image_id} ({scheme.value}), k={k}, "
                                   f"held-out {subject}: {exc}") from exc
            log_bf, se = mc_log_bf(model, test, score_config.samples, seed=[score_config.seed, position, k, 1])
            log2_mc.append(log_bf / LOG2)
            rel_se.append(se)
            log2_cf.append(closed_form_log_bf(model, test) / LOG2)
            # fold labellings are arbitrary; match centres to the first fold before averaging
            centres = model.clusters.centres
            if reference is None:
                reference = centres
            cost = np.linalg.norm(centres[:, None, :] - reference[None, :, :], axis=2)
            pi_hat, p_hat = posterior_mean(model.posterior.permute(linear_sum_assignment(cost)[1]))
            pis.append(pi_hat)
            ps.append(p_hat)
        combined = combine_log2(log2_mc, score_config.combine)
        if score_config.combine == "geometric":
            # se of exp(mean log BF) from per-subject relative errors
            combined_rel_se = np.sqrt(np.sum(np.square(rel_se))) / len(rel_se)
        else:
            bfs = np.exp2(np.asarray(log2_mc) - combined)
            combined_rel_se = np.sqrt(np.sum(np.square(np.asarray(rel_se) * bfs))) / len(bfs)
        per_k[k] = KScore(
            k=k, subjects=list(subjects),
            per_subject_log2_bf=log2_mc,
            per_subject_mc_se=[r * _pow2(v) for r, v in zip(rel_se, log2_mc)],
            per_subject_closed_form_log2_bf=log2_cf,
            combined_log2_bf=combined,
            mc_std_error=float(combined_rel_se) * _pow2(combined),
            closed_form_log2_bf=combine_log2(log2_cf, score_config.combine),
            pi_mean=np.mean(pis, axis=0).tolist(),
            p_mean=np.mean(ps, axis=0).tolist(),
        )
    config = {"cluster": cluster_config.to_json(), "score": score_config.to_json(), "k_values": k_values}
    return BayesFactorReport(image_id, scheme, per_k, config)
