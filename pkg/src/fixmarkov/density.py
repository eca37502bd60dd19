"""Gaussian kernel density estimates.

2D estimates use a product Gaussian kernel with a per-axis normal-reference
bandwidth ``sd * n**(-1/6)``. The 1D estimate used for saccade lengths picks
its bandwidth by the Sheather-Jones solve-the-equation plug-in rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_LOG_2PI = np.log(2 * np.pi)


class DegenerateClusterError(ValueError):
    """Too few points, or no spread on some axis, to pick a bandwidth."""


class BandwidthError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Kde2D:
    support: np.ndarray
    bandwidth: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        support = np.asarray(self.support, float).reshape(-1, 2)
        bandwidth = np.asarray(self.bandwidth, float).reshape(2)
        if len(support) == 0:
            raise ValueError("KDE support is empty")
        if not np.all(bandwidth > 0):
            raise ValueError(f"bandwidths must be positive, got {bandwidth}")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "bandwidth", bandwidth)
        if self.weights is not None:
            w = np.asarray(self.weights, float).reshape(-1)
            if len(w) != len(support) or np.any(w < 0) or w.sum() <= 0:
                raise ValueError("weights must be non-negative, one per support point, not all zero")
            object.__setattr__(self, "weights", w / w.sum())

    def log_density(self, q, chunk: int = 2048) -> np.ndarray:
        """Log density at each row of ``q``, computed without underflow."""
        q = np.atleast_2d(np.asarray(q, float))
        if self.weights is None:
            log_w = -np.log(len(self.support))
        else:
            with np.errstate(divide="ignore"):
                log_w = np.log(self.weights)[None, :]
        norm = _LOG_2PI + np.log(self.bandwidth).sum()
        out = np.empty(len(q))
        for start in range(0, len(q), chunk):
            z = (q[start:start + chunk, None, :] - self.support[None, :, :]) / self.bandwidth
            a = -0.5 * (z ** 2).sum(axis=-1) + log_w
            top = a.max(axis=1, keepdims=True)
            out[start:start + chunk] = (top + np.log(np.exp(a - top).sum(axis=1, keepdims=True)))[:, 0] - norm
        return out

    def __call__(self, q) -> np.ndarray:
        return np.exp(self.log_density(q))

    def to_json(self) -> dict:
        out = {"support": self.support.tolist(), "bandwidth": self.bandwidth.tolist()}
        if self.weights is not None:
            out["weights"] = self.weights.tolist()
        return out

    @classmethod
    def from_json(cls, payload: dict) -> "Kde2D":
        return cls(payload["support"], payload["bandwidth"], payload.get("weights"))


def scott_bandwidth(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, float).reshape(-1, 2)
    return points.std(axis=0, ddof=1) * len(points) ** (-1 / 6)


def fit_kde2d(points, weights=None) -> Kde2D:
    points = np.asarray(points, float).reshape(-1, 2)
    if len(points) < 2:
        raise DegenerateClusterError(f"degenerate cluster: {len(points)} point(s)")
    h = scott_bandwidth(points)
    if not np.all(h > 0):
        raise DegenerateClusterError("degenerate cluster: zero variance on an axis")
    return Kde2D(points, h, weights)


def fit_cluster_kde(points, floor) -> Kde2D:
    """2D KDE that tolerates tiny clusters.

    Clusters with fewer than four points, or an axis whose normal-reference
    bandwidth falls below ``floor``, get that axis' bandwidth raised to
    ``floor`` (per-axis, typically 1% of the full training sd).
    """
    points = np.asarray(points, float).reshape(-1, 2)
    floor = np.broadcast_to(np.asarray(floor, float), (2,))
    if len(points) >= 2:
        h = scott_bandwidth(points)
    else:
        h = np.zeros(2)
    if len(points) < 4:
        h = np.maximum(h, floor)
    else:
        h = np.where(h < floor, floor, h)
    return Kde2D(points, h)


def log_likelihood_iid(kde: Kde2D, points) -> float:
    """Sum of log densities of the given points (zero for an empty sequence)."""
    points = getattr(points, "points", points)
    points = np.asarray(points, float).reshape(-1, 2)
    if len(points) == 0:
        return 0.0
    return float(kde.log_density(points).sum())


def density_grid(kde: Kde2D, x_range, y_range, width: int, height: int):
    """Density evaluated on a ``height`` x ``width`` grid; returns (xs, ys, values)."""
    xs = np.linspace(x_range[0], x_range[1], width)
    ys = np.linspace(y_range[0], y_range[1], height)
    gx, gy = np.meshgrid(xs, ys)
    values = kde(np.column_stack([gx.ravel(), gy.ravel()])).reshape(height, width)
    return xs, ys, values


# -- 1D --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Kde1D:
    support: np.ndarray
    bandwidth: float

    def __post_init__(self):
        support = np.asarray(self.support, float).reshape(-1)
        if len(support) == 0:
            raise ValueError("KDE support is empty")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        object.__setattr__(self, "support", support)

    def __call__(self, q) -> np.ndarray:
        q = np.atleast_1d(np.asarray(q, float))
        z = (q[:, None] - self.support[None, :]) / self.bandwidth
        return np.exp(-0.5 * z ** 2).sum(axis=1) / (len(self.support) * self.bandwidth * np.sqrt(2 * np.pi))


def normal_reference_bandwidth(values) -> float:
    values = np.asarray(values, float)
    return 1.06 * values.std(ddof=1) * len(values) ** (-0.2)


def _phi4(z):
    return (z ** 4 - 6 * z ** 2 + 3) * np.exp(-0.5 * z ** 2) / np.sqrt(2 * np.pi)


def _phi6(z):
    return (z ** 6 - 15 * z ** 4 + 45 * z ** 2 - 15) * np.exp(-0.5 * z ** 2) / np.sqrt(2 * np.pi)


def _functional(x, g, deriv, order, chunk=1024):
    # double sum over all ordered pairs, diagonal included, scaled by n(n-1)
    n = len(x)
    total = 0.0
    for start in range(0, n, chunk):
        total += deriv((x[start:start + chunk, None] - x[None, :]) / g).sum()
    return total / (n * (n - 1) * g ** (order + 1))


def sheather_jones_bandwidth(values, rtol: float = 1e-7) -> float:
    """Sheather-Jones solve-the-equation bandwidth for a Gaussian kernel.

    Pilot estimates of the second and third density-derivative functionals
    use normal-reference pilot bandwidths scaled from min(sd, IQR/1.349);
    the fixed-point equation is then solved by bisection.
    """
    x = np.asarray(values, float).reshape(-1)
    n = len(x)
    if n < 5:
        raise BandwidthError(f"Sheather-Jones needs at least 5 values, got {n}")
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    scale = min(sd, (q75 - q25) / 1.349) if q75 > q25 else sd
    if not scale > 0:
        raise BandwidthError("Sheather-Jones needs values with nonzero spread")

    a = 1.241 * scale * n ** (-1 / 7)
    b = 1.230 * scale * n ** (-1 / 9)
    s_a = _functional(x, a, _phi4, 4)
    t_b = -_functional(x, b, _phi6, 6)
    if not (s_a > 0 and t_b > 0):
        raise BandwidthError("pilot functional estimates are not positive; use the normal reference")
    alpha_coef = 1.357 * (s_a / t_b) ** (1 / 7)
    c1 = 1 / (2 * np.sqrt(np.pi) * n)

    def gap(h):
        s = _functional(x, alpha_coef * h ** (5 / 7), _phi4, 4)
        if s <= 0:
            return -h
        return (c1 / s) ** 0.2 - h

    hi = 1.144 * scale * n ** (-0.2)
    lo = 0.1 * hi
    for _ in range(60):
        if gap(lo) > 0:
            break
        lo /= 2
    else:
        raise BandwidthError("could not bracket the Sheather-Jones root; use the normal reference")
    for _ in range(60):
        if gap(hi) < 0:
            break
        hi *= 2
    else:
        raise BandwidthError("could not bracket the Sheather-Jones root; use the normal reference")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fit_kde1d_sj(values) -> Kde1D:
    return Kde1D(np.asarray(values, float), sheather_jones_bandwidth(values))


def evaluate_kde2d(kde: Kde2D, q) -> float:
    return float(kde(np.asarray(q, float).reshape(1, 2))[0])
