"""Saccade extraction and the classical tests used alongside the Markov model.

Distribution functions come from the regularized incomplete beta/gamma
functions in :mod:`scipy.special`; the test statistics themselves are
computed here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special
from scipy.stats import rankdata

from .data import ColourScheme, Dataset, FixationSequence
from .density import Kde2D, scott_bandwidth


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    extra: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def __post_init__(self):
        object.__setattr__(self, "p_value", float(min(1.0, max(0.0, self.p_value))))

    def to_json(self) -> dict:
        return {"statistic": float(self.statistic), "p_value": self.p_value, **self.extra}


@dataclass(frozen=True)
class SaccadeSet:
    subject_id: str
    scheme: ColourScheme
    lengths: np.ndarray


def saccades(sequence) -> np.ndarray:
    """Euclidean distances between successive fixations."""
    points = np.asarray(getattr(sequence, "points", sequence), float).reshape(-1, 2)
    return np.sqrt((np.diff(points, axis=0) ** 2).sum(axis=1))


def saccade_sets(dataset: Dataset) -> list[SaccadeSet]:
    """One set per (subject, scheme), pooling the subject's images."""
    pooled: dict[tuple[str, ColourScheme], list[np.ndarray]] = {}
    for seq in dataset:
        pooled.setdefault((seq.subject_id, seq.colour_scheme), []).append(saccades(seq))
    return [SaccadeSet(subject, scheme, np.concatenate(parts))
            for (subject, scheme), parts in sorted(pooled.items(), key=lambda kv: (kv[0][1].value, kv[0][0]))]


def normalize_per_subject(sets: Sequence[SaccadeSet]) -> list[SaccadeSet]:
    out = []
    for s in sets:
        x = np.asarray(s.lengths, float)
        if len(x) < 2:
            raise StatsError(f"subject {s.subject_id!r} has fewer than 2 saccades")
        sd = x.std(ddof=1)
        if not sd > 0:
            raise StatsError(f"subject {s.subject_id!r} has zero saccade variance")
        out.append(SaccadeSet(s.subject_id, s.scheme, (x - x.mean()) / sd))
    return out


# -- distribution tails --------------------------------------------------------------

def kolmogorov_sf(lam: float, terms: int = 100) -> float:
    """P(K > lam) for the limiting Kolmogorov distribution."""
    if lam <= 0:
        return 1.0
    if lam < 1.0:
        # the alternating series converges slowly near zero; use the theta-function form
        j = np.arange(1, terms + 1)
        cdf = np.sqrt(2 * np.pi) / lam * np.exp(-((2 * j - 1) ** 2) * np.pi ** 2 / (8 * lam ** 2)).sum()
        return float(min(1.0, max(0.0, 1.0 - cdf)))
    j = np.arange(1, terms + 1)
    return float(min(1.0, max(0.0, 2 * ((-1.0) ** (j - 1) * np.exp(-2 * j ** 2 * lam ** 2)).sum())))


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail P(|T| > |t|)."""
    return float(special.betainc(df / 2, 0.5, df / (df + t * t)))


def chi2_sf(x: float, df: float) -> float:
    return float(special.gammaincc(df / 2, max(x, 0.0) / 2))


def normal_sf(z: float) -> float:
    return float(special.ndtr(-z))


# -- tests ---------------------------------------------------------------------------

def ks_statistic(a, b) -> float:
    a, b = np.sort(np.asarray(a, float)), np.sort(np.asarray(b, float))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.abs(fa - fb).max())


def ks_two_sample(a, b) -> TestResult:
    a, b = np.asarray(a, float), np.asarray(b, float)
    if len(a) == 0 or len(b) == 0:
        raise StatsError("KS test needs two non-empty samples")
    d = ks_statistic(a, b)
    n_eff = len(a) * len(b) / (len(a) + len(b))
    return TestResult(d, kolmogorov_sf(np.sqrt(n_eff) * d), {"n_a": len(a), "n_b": len(b)})


def paired_t(a, b, confidence: float = 0.95) -> TestResult:
    a, b = np.asarray(a, float), np.asarray(b, float)
    if len(a) != len(b) or len(a) < 2:
        raise StatsError("paired t-test needs two samples of equal length >= 2")
    d = a - b
    n = len(d)
    sd = d.std(ddof=1)
    if not sd > 0:
        raise StatsError("paired differences have zero variance; t is undefined")
    se = sd / np.sqrt(n)
    t = d.mean() / se
    df = n - 1
    half = special.stdtrit(df, 0.5 + confidence / 2) * se
    return TestResult(float(t), student_t_sf2(t, df),
                      {"df": df, "mean_difference": float(d.mean()),
                       "ci": [float(d.mean() - half), float(d.mean() + half)], "confidence": confidence})


def _tie_term(pooled: np.ndarray) -> float:
    _, counts = np.unique(pooled, return_counts=True)
    return float((counts ** 3 - counts).sum())


def mann_whitney(a, b) -> TestResult:
    """U counts pairs with a > b (ties count half), so a wholly below b gives U = 0.

    Two-sided p from the normal approximation with tie and continuity
    corrections; ``extra['z']`` is the uncorrected-for-continuity z score.
    """
    a, b = np.asarray(a, float), np.asarray(b, float)
    na, nb = len(a), len(b)
    if na == 0 or nb == 0:
        raise StatsError("Mann-Whitney needs two non-empty samples")
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    u = ranks[:na].sum() - na * (na + 1) / 2
    n = na + nb
    mu = na * nb / 2
    var = na * nb / 12 * ((n + 1) - _tie_term(pooled) / (n * (n - 1)))
    if var <= 0:
        return TestResult(float(u), 1.0, {"z": 0.0, "u_other": float(na * nb - u), "tie_corrected": True})
    sigma = np.sqrt(var)
    z_cc = max(abs(u - mu) - 0.5, 0.0) / sigma
    return TestResult(float(u), 2 * normal_sf(z_cc),
                      {"z": float((u - mu) / sigma), "u_other": float(na * nb - u), "tie_corrected": True})


def kruskal_wallis(groups: Sequence) -> TestResult:
    groups = [np.asarray(g, float) for g in groups]
    if len(groups) < 2 or any(len(g) == 0 for g in groups):
        raise StatsError("Kruskal-Wallis needs at least two non-empty groups")
    pooled = np.concatenate(groups)
    n = len(pooled)
    ranks = rankdata(pooled)
    h, start = 0.0, 0
    for g in groups:
        h += ranks[start:start + len(g)].sum() ** 2 / len(g)
        start += len(g)
    h = 12 / (n * (n + 1)) * h - 3 * (n + 1)
    correction = 1 - _tie_term(pooled) / (n ** 3 - n)
    df = len(groups) - 1
    if correction <= 0:
        return TestResult(0.0, 1.0, {"df": df})
    h /= correction
    return TestResult(float(h), chi2_sf(h, df), {"df": df})


def pearson(x, y, confidence: float = 0.95) -> TestResult:
    """Pearson r with a Fisher-z confidence interval and t-test p-value."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    n = len(x)
    if n != len(y) or n < 4:
        raise StatsError("correlation needs paired samples of length >= 4")
    if not (x.std() > 0 and y.std() > 0):
        raise StatsError("correlation is undefined for a constant sample")
    r = float(np.clip(np.corrcoef(x, y)[0, 1], -1.0, 1.0))
    z = np.arctanh(min(max(r, -1 + 1e-16), 1 - 1e-16))
    q = special.ndtri(0.5 + confidence / 2) / np.sqrt(n - 3)
    t = r * np.sqrt((n - 2) / max(1 - r * r, 1e-300))
    return TestResult(r, student_t_sf2(t, n - 2),
                      {"n": n, "ci": [float(np.tanh(z - q)), float(np.tanh(z + q))], "confidence": confidence})


# -- dataset-level analyses ----------------------------------------------------------

def duration_weighted_kde(sequences: Sequence[FixationSequence]) -> Kde2D:
    points = np.concatenate([s.points for s in sequences])
    durations = np.concatenate([s.durations for s in sequences])
    h = scott_bandwidth(points) if len(points) > 1 else np.zeros(2)
    if not np.all(h > 0):
        raise StatsError("training fixations have no spread; cannot form a density")
    return Kde2D(points, h, weights=durations)


def duration_density_pairs(dataset: Dataset, image_id: int, scheme: ColourScheme) -> tuple[np.ndarray, np.ndarray]:
    """Leave-one-subject-out (density, duration) pairs for one image."""
    pool = dataset.select(image_id, scheme)
    if len(pool) < 2:
        raise StatsError(f"image {image_id} ({scheme.value}): need at least 2 subjects")
    dens, durs = [], []
    for held in pool:
        kde = duration_weighted_kde([s for s in pool if s is not held])
        dens.append(kde(held.points))
        durs.append(held.durations)
    return np.concatenate(dens), np.concatenate(durs)


def duration_density_correlation(dataset: Dataset, image_id: int | None, scheme: ColourScheme) -> TestResult:
    """Correlation of held-out fixation durations with the others' duration-weighted density.

    ``image_id=None`` pools the folds of every image shown in ``scheme``.
    """
    scheme = ColourScheme(scheme)
    images = [image_id] if image_id is not None else sorted({s.image_id for s in dataset.select(scheme=scheme)})
    dens, durs = [], []
    for image in images:
        if len(dataset.select(image, scheme)) < 2:
            if image_id is not None:
                raise StatsError(f"image {image} ({scheme.value}): need at least 2 subjects")
            continue
        d, t = duration_density_pairs(dataset, image, scheme)
        dens.append(d)
        durs.append(t)
    if not dens:
        raise StatsError(f"no image in {scheme.value} has two or more subjects")
    return pearson(np.concatenate(dens), np.concatenate(durs))


def fixation_counts(dataset: Dataset) -> dict[ColourScheme, np.ndarray]:
    """Number of fixations per (subject, image), grouped by scheme."""
    return {scheme: np.array([len(s) for s in dataset.select(scheme=scheme)]) for scheme in dataset.schemes}


SCHEME_PAIRS = ((ColourScheme.NORMAL, ColourScheme.ABNORMAL),
                (ColourScheme.NORMAL, ColourScheme.GRAYSCALE),
                (ColourScheme.ABNORMAL, ColourScheme.GRAYSCALE))


def pair_label(a: ColourScheme, b: ColourScheme) -> str:
    return f"{a.short} - {b.short}"
