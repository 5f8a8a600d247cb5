"""Border-corrected K, inhomogeneous K and G estimators, and empirical Palm averages."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core import PointPattern, Window


class SummaryError(ValueError):
    pass


@dataclass(frozen=True)
class SummaryCurve:
    r: np.ndarray
    estimate: np.ndarray
    se: np.ndarray | None = None
    theoretical: np.ndarray | None = None
    name: str = "K"

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 1 or len(r) == 0:
            raise SummaryError("r must be a nonempty 1-d grid")
        if r[0] < 0 or np.any(np.diff(r) <= 0):
            raise SummaryError("r must be nonnegative and strictly increasing")
        object.__setattr__(self, "r", r)
        for attr in ("estimate", "se", "theoretical"):
            val = getattr(self, attr)
            if val is None:
                continue
            val = np.asarray(val, dtype=float)
            if val.shape != r.shape:
                raise SummaryError(f"{attr} has length {len(val)}, expected {len(r)}")
            object.__setattr__(self, attr, val)
        if self.se is not None and np.any(self.se < 0):
            raise SummaryError("standard errors must be nonnegative")


def r_grid(rmax: float, bins: int) -> np.ndarray:
    """``bins`` equally spaced values from 0 to ``rmax`` inclusive."""
    return np.linspace(0.0, float(rmax), int(bins))


def _check_grid(x: PointPattern, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.ndim != 1 or len(r) == 0 or r[0] < 0 or np.any(np.diff(r) <= 0):
        raise SummaryError("r grid must be nonnegative and strictly increasing")
    if not r[-1] < x.window.sides.min() / 2:
        raise SummaryError(f"r = {r[-1]} must be below half the shortest window side "
                           f"({x.window.sides.min() / 2}) for the border correction")
    return r


def _ordered_pairs(points: np.ndarray, rmax: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if len(points) < 2:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty, np.empty(0)
    pairs = cKDTree(points).query_pairs(rmax, output_type="ndarray")
    if len(pairs) == 0:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty, np.empty(0)
    i = np.concatenate([pairs[:, 0], pairs[:, 1]])
    j = np.concatenate([pairs[:, 1], pairs[:, 0]])
    d = np.sqrt(np.sum((points[i] - points[j]) ** 2, axis=1))
    return i, j, d


def _border_pair_sum(x: PointPattern, r: np.ndarray, weights=None) -> np.ndarray:
    """``sum_{u in W-t} sum_{v != u} w(u, v) 1(|u - v| <= t)`` at every ``t`` in ``r``."""
    i, j, d = _ordered_pairs(x.points, r[-1])
    if len(d) == 0:
        return np.zeros(len(r))
    w = np.ones(len(d)) if weights is None else weights(i, j)
    border = x.window.boundary_distance(x.points)[i]
    lo = np.searchsorted(r, d, side="left")
    hi = np.searchsorted(r, border, side="right")
    ok = lo < hi
    acc = np.zeros(len(r) + 1)
    np.add.at(acc, lo[ok], w[ok])
    np.add.at(acc, hi[ok], -w[ok])
    return np.cumsum(acc[:-1])


def _eroded_volume(window: Window, r: np.ndarray) -> np.ndarray:
    return np.prod(window.sides[None, :] - 2 * r[:, None], axis=1)


def estimate_K(x: PointPattern, r) -> SummaryCurve:
    """Minus-sampling K estimate, normalised by ``N (N - 1) / |W|^2``."""
    if len(x) == 0:
        raise SummaryError("K needs a nonempty pattern")
    r = _check_grid(x, r)
    n = len(x)
    total = _border_pair_sum(x, r)
    rho2 = n * (n - 1) / x.window.volume ** 2
    est = total / (_eroded_volume(x.window, r) * rho2) if n > 1 else np.zeros(len(r))
    return SummaryCurve(r, est, theoretical=math.pi * r ** 2, name="K")


def estimate_K_inhom(x: PointPattern, rho: Callable | float, r) -> SummaryCurve:
    """Inhomogeneous K with weights ``1 / (rho(u) rho(v))``."""
    if len(x) == 0:
        raise SummaryError("K needs a nonempty pattern")
    r = _check_grid(x, r)
    if callable(rho):
        lam = np.asarray(rho(x.points), dtype=float)
        lam = np.broadcast_to(lam, (len(x),))
    else:
        lam = np.full(len(x), float(rho))
    if np.any(~(lam > 0)):
        raise SummaryError("intensity must be positive at every event")
    total = _border_pair_sum(x, r, lambda i, j: 1.0 / (lam[i] * lam[j]))
    return SummaryCurve(r, total / _eroded_volume(x.window, r),
                        theoretical=math.pi * r ** 2, name="Kinhom")


def nearest_neighbour_distances(points: np.ndarray) -> np.ndarray:
    d, _ = cKDTree(points).query(points, k=2)
    return d[:, 1]


def estimate_G(x: PointPattern, r) -> SummaryCurve:
    """Minus-sampling nearest-neighbour distribution; NaN where no reference point survives."""
    if len(x) < 2:
        raise SummaryError("G needs at least two points")
    r = _check_grid(x, r)
    nn = nearest_neighbour_distances(x.points)
    border = x.window.boundary_distance(x.points)
    ref = border[None, :] >= r[:, None]
    hit = ref & (nn[None, :] <= r[:, None])
    counts = ref.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        est = np.where(counts > 0, hit.sum(axis=1) / counts, np.nan)
    theo = 1.0 - np.exp(-x.intensity * math.pi * r ** 2)
    return SummaryCurve(r, est, theoretical=theo, name="G")


def average_curves(curves: Sequence[SummaryCurve]) -> SummaryCurve:
    """Replicate mean with standard errors; theoretical reference from the first curve."""
    if not curves:
        raise SummaryError("no curves to average")
    est = np.vstack([c.estimate for c in curves])
    se = est.std(axis=0, ddof=1) / math.sqrt(len(curves)) if len(curves) > 1 else np.zeros(est.shape[1])
    first = curves[0]
    return SummaryCurve(first.r, est.mean(axis=0), se, first.theoretical, first.name)


def empirical_palm_statistic(patterns: Sequence[PointPattern], h: Callable, B: Window) -> tuple[float, float]:
    """Replicate mean of ``(rho_hat |B|)^-1 sum_{x in X_B} h(x, X - {x} shifted by -x)``.

    ``h(x, y)`` receives the event and the rest of the pattern centred at it.
    """
    if all(len(p) == 0 for p in patterns):
        raise SummaryError("all patterns are empty")
    if not B.volume > 0:
        raise SummaryError("region B must have positive volume")
    values = []
    for p in patterns:
        if len(p) == 0:
            values.append(0.0)
            continue
        pts = p.points
        total = 0.0
        for k in np.flatnonzero(B.contains(pts)):
            rest = np.delete(pts, k, axis=0) - pts[k]
            total += float(h(pts[k], rest))
        values.append(total / (p.intensity * B.volume))
    values = np.asarray(values)
    se = values.std(ddof=1) / math.sqrt(len(values)) if len(values) > 1 else 0.0
    return float(values.mean()), float(se)
