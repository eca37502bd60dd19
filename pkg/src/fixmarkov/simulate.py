"""Synthetic fixation data from a known k-state Markov point process."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .data import ColourScheme, Dataset, FixationSequence


class SimSpecError(ValueError):
    pass


@dataclass(frozen=True)
class Emission:
    mean: tuple[float, float]
    sd: tuple[float, float]


@dataclass(frozen=True)
class DurationModel:
    base_ms: float = 250.0
    coupling: float = 1.0
    noise_sd: float = 0.25


@dataclass(frozen=True, eq=False)
class SimSpec:
    initial_probs: np.ndarray
    transition_matrix: np.ndarray
    emissions: tuple[Emission, ...]
    subjects: int = 10
    fixations: tuple[int, int] = (60, 60)
    duration_model: DurationModel | None = None
    seed: int = 0
    image_id: int = 1
    scheme: ColourScheme = ColourScheme.NORMAL

    def __post_init__(self):
        pi = np.asarray(self.initial_probs, float)
        p = np.asarray(self.transition_matrix, float)
        k = len(pi)
        if k < 1 or p.shape != (k, k) or len(self.emissions) != k:
            raise SimSpecError("initial_probs, transition_matrix and emissions must agree on k")
        if np.any(pi < 0) or abs(pi.sum() - 1) > 1e-12:
            raise SimSpecError("initial_probs must be a probability vector")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1) > 1e-12):
            raise SimSpecError("transition_matrix rows must be probability vectors")
        if any(min(e.sd) <= 0 for e in self.emissions):
            raise SimSpecError("emission sds must be positive")
        lo, hi = (self.fixations, self.fixations) if np.isscalar(self.fixations) else self.fixations
        if not 1 <= lo <= hi:
            raise SimSpecError("fixation counts must satisfy 1 <= min <= max")
        if self.subjects < 1:
            raise SimSpecError("need at least one subject")
        object.__setattr__(self, "initial_probs", pi)
        object.__setattr__(self, "transition_matrix", p)
        object.__setattr__(self, "fixations", (int(lo), int(hi)))
        object.__setattr__(self, "scheme", ColourScheme(self.scheme))

    @property
    def k(self) -> int:
        return len(self.initial_probs)

    def stationary(self) -> np.ndarray:
        p = self.transition_matrix
        a = np.vstack([p.T - np.eye(self.k), np.ones(self.k)])
        b = np.zeros(self.k + 1)
        b[-1] = 1
        w = np.linalg.lstsq(a, b, rcond=None)[0]
        w = np.clip(w, 0, None)
        return w / w.sum()

    def true_density(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, float))
        out = np.zeros(len(points))
        for w, e in zip(self.stationary(), self.emissions):
            z = (points - np.asarray(e.mean)) / np.asarray(e.sd)
            out += w * np.exp(-0.5 * (z ** 2).sum(axis=1)) / (2 * np.pi * np.prod(e.sd))
        return out

    @classmethod
    def from_json(cls, payload: dict) -> "SimSpec":
        dm = payload.get("duration_model")
        fixations = payload.get("fixations_per_subject", 60)
        return cls(
            initial_probs=payload["initial_probs"],
            transition_matrix=payload["transition_matrix"],
            emissions=tuple(Emission(tuple(e["mean"]), tuple(e["sd"])) for e in payload["emissions"]),
            subjects=payload.get("subjects", 10),
            fixations=tuple(fixations) if isinstance(fixations, list) else fixations,
            duration_model=DurationModel(**dm) if dm else None,
            seed=payload.get("seed", 0),
            image_id=payload.get("image_id", 1),
            scheme=ColourScheme.parse(payload.get("scheme", "normal")),
        )

    @classmethod
    def load(cls, path) -> "SimSpec":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class Simulation:
    dataset: Dataset
    states: dict[tuple[str, int], np.ndarray] = field(default_factory=dict)


def simulate(spec: SimSpec) -> Simulation:
    """Draw every subject's fixation sequence; true states are kept on the side."""
    prefix = spec.scheme.value[0]
    seqs, states = [], {}
    children = np.random.SeedSequence([spec.seed, spec.image_id]).spawn(spec.subjects)
    peak = spec.true_density([e.mean for e in spec.emissions]).max()
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        n = int(rng.integers(spec.fixations[0], spec.fixations[1] + 1))
        s = np.empty(n, dtype=int)
        s[0] = rng.choice(spec.k, p=spec.initial_probs)
        for t in range(1, n):
            s[t] = rng.choice(spec.k, p=spec.transition_matrix[s[t - 1]])
        means = np.array([spec.emissions[j].mean for j in s], float)
        sds = np.array([spec.emissions[j].sd for j in s], float)
        points = means + sds * rng.standard_normal((n, 2))
        dm = spec.duration_model or DurationModel(coupling=0.0)
        level = spec.true_density(points) / peak
        durations = dm.base_ms * (1 + dm.coupling * level) * rng.lognormal(0.0, dm.noise_sd, n)
        subject = f"{prefix}{i + 1}"
        seqs.append(FixationSequence(subject, spec.image_id, spec.scheme, points, durations))
        states[(subject, spec.image_id)] = s
    return Simulation(Dataset(tuple(seqs)), states)


def write_states(states: dict, path) -> None:
    """Sidecar CSV of true states; never part of the fixation table."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["subject_id", "image_id", "fixation_index", "state"])
        for (subject, image), s in sorted(states.items()):
            for t, state in enumerate(s, start=1):
                out.writerow([subject, image, t, int(state)])


def read_states(path) -> dict:
    rows: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault((row["subject_id"], int(row["image_id"])), []).append(
                (int(row["fixation_index"]), int(row["state"])))
    return {key: np.array([s for _, s in sorted(v)]) for key, v in rows.items()}


@dataclass
class EmpiricalCheck:
    initial_freq: np.ndarray
    transition_freq: np.ndarray
    initial_deviation: float
    transition_deviation: float
    off_diagonal_mass: float
    flagged: bool

    def to_json(self) -> dict:
        return {"initial_freq": self.initial_freq.tolist(),
                "transition_freq": np.where(np.isnan(self.transition_freq), None,
                                            self.transition_freq).tolist(),
                "initial_deviation": self.initial_deviation,
                "transition_deviation": self.transition_deviation,
                "off_diagonal_mass": self.off_diagonal_mass,
                "flagged": self.flagged}


def empirical_check(states: dict, spec: SimSpec, tolerance: float = 0.15) -> EmpiricalCheck:
    """Compare empirical initial/transition frequencies of true states with the generating SimSpec.

    Deviations are sup-norms; rows never left in the data are skipped.
    """
    k = spec.k
    initial = np.zeros(k)
    counts = np.zeros((k, k))
    for s in states.values():
        s = np.asarray(s, dtype=int)
        if np.any(s >= k):
            # states from a larger model cannot be compared row-wise
            return EmpiricalCheck(initial, np.full((k, k), np.nan), 1.0, 1.0, float("nan"), True)
        initial[s[0]] += 1
        np.add.at(counts, (s[:-1], s[1:]), 1)
    initial_freq = initial / max(initial.sum(), 1)
    row_tot = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        trans_freq = np.where(row_tot > 0, counts / row_tot, np.nan)
    seen = row_tot[:, 0] > 0
    init_dev = float(np.abs(initial_freq - spec.initial_probs).max())
    trans_dev = float(np.abs(trans_freq[seen] - spec.transition_matrix[seen]).max()) if seen.any() else 0.0
    off_diag = float((counts.sum() - np.trace(counts)) / counts.sum()) if counts.sum() else 0.0
    return EmpiricalCheck(initial_freq, trans_freq, init_dev, trans_dev, off_diag, trans_dev > tolerance)


def three_region_spec(seed: int = 0, image_id: int = 1, scheme=ColourScheme.NORMAL,
                      subjects: int = 10, fixations: int = 60, stay: float = 0.8,
                      duration_coupling: float = 0.0) -> SimSpec:
    """Three well-separated regions with sticky transitions."""
    move = (1 - stay) / 2
    return SimSpec(
        initial_probs=np.full(3, 1 / 3),
        transition_matrix=np.array([[stay, move, move], [move, stay, move], [move, move, stay]]),
        emissions=(Emission((-300.0, 0.0), (40.0, 40.0)), Emission((300.0, 0.0), (40.0, 40.0)),
                   Emission((0.0, 250.0), (40.0, 40.0))),
        subjects=subjects, fixations=(fixations, fixations),
        duration_model=DurationModel(coupling=duration_coupling) if duration_coupling else None,
        seed=seed, image_id=image_id, scheme=scheme,
    )


def single_blob_spec(seed: int = 0, image_id: int = 1, scheme=ColourScheme.GRAYSCALE,
                     subjects: int = 10, fixations: int = 60) -> SimSpec:
    """i.i.d. fixations from one Gaussian blob."""
    return SimSpec(initial_probs=np.ones(1), transition_matrix=np.ones((1, 1)),
                   emissions=(Emission((0.0, 0.0), (150.0, 120.0)),),
                   subjects=subjects, fixations=(fixations, fixations), seed=seed,
                   image_id=image_id, scheme=scheme)
