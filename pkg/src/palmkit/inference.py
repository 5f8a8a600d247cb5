"""Palm likelihood estimation for stationary isotropic cluster models."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core import PointPattern, Window

RADIAL_NODES = 512
FD_STEP = 1e-5
MAX_EVALUATIONS = 2000
SIMPLEX_TOL = 1e-6


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class ThomasFamily:
    """Thomas pair correlation ``1 + exp(-r^2 / (4 sigma^2)) / (4 pi sigma^2 kappa)``."""

    name: str = "thomas"
    params: tuple[str, ...] = ("kappa", "sigma")

    def g0(self, r, theta) -> np.ndarray:
        kappa, sigma = theta
        s2 = sigma * sigma
        return 1.0 + np.exp(-np.asarray(r) ** 2 / (4 * s2)) / (4 * math.pi * s2 * kappa)

    def default_bounds(self, rho: float, R: float) -> tuple[tuple[float, float], ...]:
        return ((rho * 1e-3, rho * 1e3), (R * 1e-3, R))


FAMILIES = {"thomas": ThomasFamily()}


@lru_cache(maxsize=8)
def _legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def _radial_rule(R: float, n: int = RADIAL_NODES) -> tuple[np.ndarray, np.ndarray]:
    x, w = _legendre(n)
    r = (x + 1) * R / 2
    return r, w * R / 2 * 2 * math.pi * r


@dataclass(frozen=True)
class PalmFitProblem:
    """Pattern, tuning radius ``R``, intensity ``rho`` and a pcf family with box bounds.

    ``rho`` defaults to ``N / |W|``; ``bounds`` default to the family's
    scale-aware defaults.
    """

    pattern: PointPattern
    R: float
    rho: float | None = None
    family: ThomasFamily = field(default_factory=ThomasFamily)
    bounds: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        W = self.pattern.window
        if not 0 < self.R < W.sides.min() / 2:
            raise FitError(f"R must lie in (0, {W.sides.min() / 2}), got {self.R}")
        rho = self.pattern.intensity if self.rho is None else float(self.rho)
        if not rho > 0:
            raise FitError("intensity must be positive (empty pattern?)")
        object.__setattr__(self, "rho", rho)
        bounds = self.bounds or self.family.default_bounds(rho, self.R)
        bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
        if len(bounds) != len(self.family.params) or any(not lo < hi for lo, hi in bounds):
            raise FitError("bounds must give lower < upper for every parameter")
        object.__setattr__(self, "bounds", bounds)

    @property
    def window(self) -> Window:
        return self.pattern.window

    @cached_property
    def _data(self) -> tuple[np.ndarray, int]:
        pts = self.pattern.points
        inner = self.window.boundary_distance(pts) >= self.R if len(pts) else np.zeros(0, bool)
        n_inner = int(np.count_nonzero(inner))
        if n_inner == 0 or len(pts) < 2:
            return np.empty(0), n_inner
        tree = cKDTree(pts)
        dists = []
        for k in np.flatnonzero(inner):
            nbrs = tree.query_ball_point(pts[k], self.R)
            d = np.sqrt(np.sum((pts[nbrs] - pts[k]) ** 2, axis=1))
            dists.append(d[np.asarray(nbrs) != k])
        return np.concatenate(dists), n_inner

    @property
    def pair_distances(self) -> np.ndarray:
        """Distances of ordered pairs ``(u, v)``, ``u`` in ``W - R``, ``0 < |u - v| <= R``."""
        return self._data[0]

    @property
    def n_inner(self) -> int:
        return self._data[1]

    def in_bounds(self, theta) -> bool:
        return all(lo <= t <= hi for t, (lo, hi) in zip(theta, self.bounds))


def palm_loglik(p: PalmFitProblem, theta) -> float:
    """Palm log-likelihood: pair log-intensities minus the expected pair count."""
    theta = tuple(float(t) for t in theta)
    if not p.in_bounds(theta):
        raise FitError(f"theta {theta} outside bounds {p.bounds}")
    if p.n_inner == 0:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = p.rho * p.family.g0(p.pair_distances, theta)
        if np.any(~(vals > 0)):
            return -math.inf
        r, w = _radial_rule(p.R)
        integral = p.rho * float(np.sum(w * p.family.g0(r, theta)))
    return float(np.sum(np.log(vals))) - p.n_inner * integral


def palm_score(p: PalmFitProblem, theta) -> np.ndarray:
    """Central finite-difference gradient of :func:`palm_loglik`."""
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros(len(theta))
    if p.n_inner == 0:
        return grad
    for j in range(len(theta)):
        h = FD_STEP * max(abs(theta[j]), 1e-12)
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        grad[j] = (_loglik_unchecked(p, up) - _loglik_unchecked(p, dn)) / (2 * h)
    return grad


def _loglik_unchecked(p: PalmFitProblem, theta) -> float:
    vals = p.rho * p.family.g0(p.pair_distances, theta)
    r, w = _radial_rule(p.R)
    return float(np.sum(np.log(vals))) - p.n_inner * p.rho * float(np.sum(w * p.family.g0(r, theta)))


@dataclass(frozen=True)
class ConvergenceReport:
    converged: bool
    iterations: int
    evaluations: int
    spread: float
    at_bound: tuple[str, ...]

    @property
    def boundary_solution(self) -> bool:
        return bool(self.at_bound)


class FitResult(NamedTuple):
    theta: np.ndarray
    loglik: float
    report: ConvergenceReport


def nelder_mead_max(fn: Callable[[np.ndarray], float], x0, bounds: Sequence[tuple[float, float]],
                    max_evals: int = MAX_EVALUATIONS, tol: float = SIMPLEX_TOL,
                    step: float = 0.1) -> tuple[np.ndarray, float, bool, int, int, float]:
    """Maximise ``fn`` by Nelder-Mead with every trial point clipped to ``bounds``.

    Stops when the simplex diameter relative to the best vertex falls below
    ``tol`` or after ``max_evals`` evaluations.
    """
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    clip = lambda x: np.minimum(np.maximum(x, lo), hi)
    x0 = clip(np.asarray(x0, dtype=float))
    d = len(x0)
    simplex = [x0]
    for j in range(d):
        v = x0.copy()
        v[j] = x0[j] * (1 + step) if x0[j] * (1 + step) <= hi[j] else x0[j] * (1 - step)
        if v[j] == x0[j]:
            v[j] = x0[j] + step
        simplex.append(clip(v))
    simplex = np.array(simplex)
    evals = 0

    def f(x):
        nonlocal evals
        evals += 1
        val = fn(x)
        return -val if np.isfinite(val) else math.inf

    values = np.array([f(v) for v in simplex])
    iterations = 0
    converged = False
    spread = math.inf
    while True:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        scale = np.maximum(np.abs(simplex[0]), 1e-300)
        spread = float(np.max(np.abs(simplex[1:] - simplex[0]) / scale))
        if spread < tol:
            converged = True
            break
        if evals >= max_evals:
            break
        iterations += 1
        centroid = simplex[:-1].mean(axis=0)
        xr = clip(centroid + (centroid - simplex[-1]))
        fr = f(xr)
        if fr < values[0]:
            xe = clip(centroid + 2 * (centroid - simplex[-1]))
            fe = f(xe)
            simplex[-1], values[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
        else:
            if fr < values[-1]:
                xc = clip(centroid + 0.5 * (xr - centroid))
            else:
                xc = clip(centroid + 0.5 * (simplex[-1] - centroid))
            fc = f(xc)
            if fc < min(fr, values[-1]):
                simplex[-1], values[-1] = xc, fc
            else:
                simplex[1:] = clip(simplex[0] + 0.5 * (simplex[1:] - simplex[0]))
                values[1:] = [f(v) for v in simplex[1:]]
    return simplex[0], -values[0], converged, iterations, evals, spread


def fit_palm(p: PalmFitProblem, theta_init) -> FitResult:
    """Maximise the Palm likelihood from ``theta_init``."""
    theta_init = tuple(float(t) for t in theta_init)
    if not p.in_bounds(theta_init):
        raise FitError(f"initial value {theta_init} outside bounds {p.bounds}")
    best, value, converged, iters, evals, spread = nelder_mead_max(
        lambda th: palm_loglik(p, th), theta_init, p.bounds)
    at_bound = tuple(name for name, t, (lo, hi) in zip(p.family.params, best, p.bounds)
                     if abs(t - lo) <= 1e-6 * abs(lo) or abs(t - hi) <= 1e-6 * abs(hi))
    report = ConvergenceReport(converged, iters, evals, spread, at_bound)
    return FitResult(np.asarray(best), float(value), report)
