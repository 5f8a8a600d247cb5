"""Parametric point process models and their closed-form characteristics.

Five model classes are supported: Poisson, Strauss (Gibbs), log Gaussian
Cox, Neyman-Scott shot-noise Cox, and determinantal. Evaluation helpers
accept a single point ``(2,)`` or a batch ``(n, 2)`` and return a float or
an ``(n,)`` array accordingly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .core import Window, as_points


class ModelError(ValueError):
    """Invalid model parameters."""


class UnsupportedClosedForm(NotImplementedError):
    """The requested characteristic has no closed form for this model."""


def _batch(u):
    arr = np.asarray(u, dtype=float)
    single = arr.ndim == 1
    return as_points(arr), single


def _out(values, single):
    values = np.asarray(values, dtype=float)
    return float(values[0]) if single else values


# ---------------------------------------------------------------- fields

@dataclass(frozen=True)
class LinearField:
    """``u -> const + slope . u``; constant when the slope is zero."""

    const: float
    slope: tuple[float, float] = (0.0, 0.0)

    def __call__(self, u):
        pts, single = _batch(u)
        return _out(self.const + pts @ np.asarray(self.slope, dtype=float), single)

    @property
    def is_constant(self) -> bool:
        return not any(self.slope)

    def bounds(self, window: Window) -> tuple[float, float]:
        """Exact min and max over a box (attained at corners)."""
        corners = np.array(np.meshgrid(*zip(window.lower, window.upper))).reshape(window.dim, -1).T
        vals = self(corners)
        return float(vals.min()), float(vals.max())

    def integral(self, window: Window) -> float:
        return float(window.volume * self(window.center))


def constant(value: float) -> LinearField:
    return LinearField(float(value))


def field_integral(fn: Callable, window: Window, n: int = 256) -> float:
    if isinstance(fn, LinearField):
        return fn.integral(window)
    nodes, area = window.grid(n)
    return float(np.sum(fn(nodes)) * area)


# ---------------------------------------------------------------- covariance

COVARIANCE_FAMILIES = ("exponential", "gaussian")


@dataclass(frozen=True)
class CovarianceModel:
    """Stationary isotropic covariance ``c(u, v) = variance * r(|u - v| / scale)``."""

    family: str
    variance: float
    scale: float

    def __post_init__(self):
        if self.family not in COVARIANCE_FAMILIES:
            raise ModelError(f"unknown covariance family {self.family!r}")
        if not self.variance > 0:
            raise ModelError("covariance variance (sigma2) must be positive")
        if not self.scale > 0:
            raise ModelError("covariance scale (phi) must be positive")

    def of_distance(self, r):
        r = np.asarray(r, dtype=float)
        if self.family == "exponential":
            return self.variance * np.exp(-r / self.scale)
        return self.variance * np.exp(-(r / self.scale) ** 2)

    def __call__(self, u, v):
        """Elementwise covariance of broadcastable point arrays."""
        d = np.sqrt(np.sum((np.asarray(u, float) - np.asarray(v, float)) ** 2, axis=-1))
        val = self.of_distance(d)
        return float(val) if np.ndim(val) == 0 else val

    def matrix(self, a, b=None):
        a = as_points(a)
        b = a if b is None else as_points(b)
        d = np.sqrt(np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1))
        return self.of_distance(d)


def covariance_eval(c: CovarianceModel, u, v) -> float:
    return c(u, v)


# ---------------------------------------------------------------- Poisson

@dataclass(frozen=True)
class PoissonModel:
    """Poisson process with intensity function ``intensity``.

    ``rho_max`` bounds the intensity for thinning; it is derived
    automatically for :class:`LinearField` intensities.
    """

    intensity: Callable = field(default_factory=lambda: constant(1.0))
    rho_max: float | None = None

    def __post_init__(self):
        if isinstance(self.intensity, (int, float)):
            object.__setattr__(self, "intensity", constant(self.intensity))
        if isinstance(self.intensity, LinearField) and self.intensity.is_constant \
                and self.intensity.const < 0:
            raise ModelError("Poisson intensity must be nonnegative")

    def rate(self, u):
        return self.intensity(u)

    def upper_bound(self, window: Window) -> float:
        if self.rho_max is not None:
            return float(self.rho_max)
        if isinstance(self.intensity, LinearField):
            lo, hi = self.intensity.bounds(window)
            if lo < 0:
                raise ModelError("Poisson intensity is negative somewhere in the window")
            return hi
        raise ModelError("rho_max is required for a non-linear intensity function")

    def mean_count(self, window: Window) -> float:
        return field_integral(self.intensity, window)


# ---------------------------------------------------------------- Strauss

@dataclass(frozen=True)
class StraussModel:
    """Strauss process on ``window`` with potentials ``theta1`` and ``theta2 * 1(d <= R)``.

    ``fixed`` holds points whose interaction enters as an extra first-order
    potential ``theta2 * #{x in fixed : |u - x| <= R}``; this is how Palm
    versions of the model are represented.
    """

    theta1: float
    theta2: float
    R: float
    window: Window
    fixed: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if not self.theta2 >= 0:
            raise ModelError("Strauss interaction theta2 must be nonnegative")
        if not self.R > 0:
            raise ModelError("Strauss interaction range R must be positive")
        object.__setattr__(self, "fixed", tuple(tuple(map(float, p)) for p in self.fixed))

    @property
    def gamma(self) -> float:
        """Interaction factor ``exp(-theta2)``; zero for a hard core."""
        return 0.0 if math.isinf(self.theta2) else math.exp(-self.theta2)

    @property
    def fixed_points(self) -> np.ndarray:
        return as_points(self.fixed) if self.fixed else np.empty((0, 2))

    def _close_counts(self, u: np.ndarray, others: np.ndarray) -> np.ndarray:
        if len(others) == 0:
            return np.zeros(len(u), dtype=np.int64)
        d2 = np.sum((u[:, None, :] - others[None, :, :]) ** 2, axis=-1)
        return np.count_nonzero(d2 <= self.R * self.R, axis=1)

    def first_order(self, u):
        """Palm-shifted first-order potential ``theta1 + theta2 * #close fixed points``."""
        pts, single = _batch(u)
        k = self._close_counts(pts, self.fixed_points)
        with np.errstate(invalid="ignore"):
            extra = np.where(k > 0, self.theta2 * k, 0.0)
        return _out(self.theta1 + extra, single)

    def papangelou(self, u, x) -> np.ndarray | float:
        """``lambda(u, x)`` for each row of ``u``; ``x`` must not contain ``u``."""
        pts, single = _batch(u)
        xs = x.points if hasattr(x, "points") else as_points(x)
        t = self._close_counts(pts, xs) + self._close_counts(pts, self.fixed_points)
        val = math.exp(-self.theta1) * np.power(self.gamma, t)
        return _out(val, single)

    def log_density(self, x) -> float:
        """Unnormalised log density ``-sum Phi``; ``-inf`` under a violated hard core."""
        xs = x.points if hasattr(x, "points") else as_points(x)
        n = len(xs)
        if n == 0:
            return 0.0
        d2 = np.sum((xs[:, None, :] - xs[None, :, :]) ** 2, axis=-1)
        pairs = (np.count_nonzero(d2 <= self.R * self.R) - n) // 2
        t = pairs + int(self._close_counts(xs, self.fixed_points).sum())
        if t and self.gamma == 0.0:
            return -math.inf
        return -self.theta1 * n - (self.theta2 * t if t else 0.0)

    def with_fixed(self, points) -> "StraussModel":
        pts = as_points(points)
        return StraussModel(self.theta1, self.theta2, self.R, self.window,
                            self.fixed + tuple(map(tuple, pts)))


# ---------------------------------------------------------------- LGCP

@dataclass(frozen=True)
class ShiftedMean:
    """Mean function ``base(u) + sum_i c(u, x_i)``."""

    base: Callable
    covariance: CovarianceModel
    points: tuple[tuple[float, float], ...]

    def __call__(self, u):
        pts, single = _batch(u)
        shift = self.covariance.matrix(pts, as_points(self.points)).sum(axis=1)
        return _out(np.asarray(self.base(pts)) + shift, single)


@dataclass(frozen=True)
class LgcpModel:
    """Log Gaussian Cox process driven by ``Y ~ GP(mean, covariance)``."""

    mean: Callable
    covariance: CovarianceModel

    def __post_init__(self):
        if isinstance(self.mean, (int, float)):
            object.__setattr__(self, "mean", constant(self.mean))


# ---------------------------------------------------------------- SNCP

@dataclass(frozen=True)
class ThomasKernel:
    """Isotropic normal offspring density with standard deviation ``sigma``."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ModelError("Thomas kernel sigma must be positive")

    @property
    def effective_radius(self) -> float:
        return 5.0 * self.sigma

    def density(self, d):
        d = np.asarray(d, dtype=float)
        s2 = self.sigma ** 2
        return np.exp(-np.sum(d * d, axis=-1) / (2 * s2)) / (2 * math.pi * s2)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.normal(0.0, self.sigma, size=(n, 2))

    def overlap(self, r):
        """``int k(d) k(d + w) dd`` for ``|w| = r``: a normal density with variance 2 sigma^2."""
        r = np.asarray(r, dtype=float)
        s2 = self.sigma ** 2
        return np.exp(-r * r / (4 * s2)) / (4 * math.pi * s2)


@dataclass(frozen=True)
class MaternClusterKernel:
    """Uniform offspring density on a disc of radius ``radius``."""

    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ModelError("Matern cluster radius must be positive")

    @property
    def effective_radius(self) -> float:
        return self.radius

    def density(self, d):
        d = np.asarray(d, dtype=float)
        inside = np.sum(d * d, axis=-1) <= self.radius ** 2
        return inside / (math.pi * self.radius ** 2)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        rad = self.radius * np.sqrt(rng.random(n))
        ang = 2 * math.pi * rng.random(n)
        return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])

    def overlap(self, r):
        """Lens area of two discs at distance ``r`` divided by (pi radius^2)^2."""
        r = np.minimum(np.asarray(r, dtype=float), 2 * self.radius)
        a = self.radius
        lens = 2 * a * a * np.arccos(r / (2 * a)) - (r / 2) * np.sqrt(np.maximum(4 * a * a - r * r, 0.0))
        return lens / (math.pi * a * a) ** 2


ClusterKernel = Union[ThomasKernel, MaternClusterKernel]


@dataclass(frozen=True)
class SncpModel:
    """Neyman-Scott process: Poisson(kappa) parents, Poisson(gamma) offspring each."""

    kappa: float
    gamma: float
    kernel: ClusterKernel

    def __post_init__(self):
        if not (self.kappa > 0 and self.gamma > 0):
            raise ModelError("SNCP parent intensity kappa and cluster mean gamma must be positive")


# ---------------------------------------------------------------- DPP

class DppKernel:
    """Base class for determinantal point process kernels.

    Subclasses implement :meth:`gram`; kernels are immutable once built.
    """

    window: Window

    def gram(self, a, b=None) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, u, v) -> float:
        return float(self.gram(as_points(u), as_points(v))[0, 0])

    def diagonal(self, u) -> np.ndarray:
        pts = as_points(u)
        return np.array([self.gram(p[None], p[None])[0, 0] for p in pts])


@dataclass(frozen=True, eq=False)
class GaussianDppKernel(DppKernel):
    """``C(u, v) = rho * exp(-|u - v|^2 / alpha^2)``; valid when ``rho * pi * alpha^2 <= 1``."""

    rho: float
    alpha: float
    window: Window = field(default_factory=Window.unit)

    def __post_init__(self):
        if not (self.rho > 0 and self.alpha > 0):
            raise ModelError("Gaussian DPP needs positive rho and alpha")
        if self.rho * math.pi * self.alpha ** 2 > 1 + 1e-12:
            raise ModelError("Gaussian DPP kernel does not exist: rho * pi * alpha^2 > 1")

    def gram(self, a, b=None):
        a = as_points(a)
        b = a if b is None else as_points(b)
        d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
        return self.rho * np.exp(-d2 / self.alpha ** 2)

    def diagonal(self, u):
        return np.full(len(as_points(u)), self.rho)


@dataclass(frozen=True, eq=False)
class FeatureDppKernel(DppKernel):
    """Finite-rank kernel ``sum_k w_k cos(f_k . u + b_k) cos(f_k . v + b_k)``.

    Positive semidefinite for nonnegative weights by construction.
    """

    weights: tuple[float, ...]
    frequencies: tuple[tuple[float, float], ...]
    phases: tuple[float, ...]
    window: Window = field(default_factory=Window.unit)

    def __post_init__(self):
        if not (len(self.weights) == len(self.frequencies) == len(self.phases)):
            raise ModelError("feature kernel components have mismatched lengths")
        if any(w < 0 for w in self.weights):
            raise ModelError("feature kernel weights must be nonnegative")

    @classmethod
    def random(cls, rng: np.random.Generator, rank: int, scale: float = 1.0,
               window: Window | None = None) -> "FeatureDppKernel":
        w = rng.uniform(0.1, 1.0, rank) * scale
        f = rng.normal(0.0, 6.0, (rank, 2))
        b = rng.uniform(0.0, 2 * math.pi, rank)
        return cls(tuple(w), tuple(map(tuple, f)), tuple(b), window or Window.unit())

    def features(self, u) -> np.ndarray:
        pts = as_points(u)
        f = np.asarray(self.frequencies, dtype=float).reshape(-1, 2)
        return np.cos(pts @ f.T + np.asarray(self.phases))

    def gram(self, a, b=None):
        fa = self.features(a)
        fb = fa if b is None else self.features(b)
        return (fa * np.asarray(self.weights)) @ fb.T

    def diagonal(self, u):
        fu = self.features(u)
        return (fu * fu) @ np.asarray(self.weights)


ModelSpec = Union[PoissonModel, StraussModel, LgcpModel, SncpModel, DppKernel]


# ---------------------------------------------------------------- characteristics

def intensity(m: ModelSpec, u):
    """First-order intensity at ``u``."""
    pts, single = _batch(u)
    if isinstance(m, PoissonModel):
        vals = np.broadcast_to(m.rate(pts), (len(pts),))
    elif isinstance(m, LgcpModel):
        vals = np.exp(np.asarray(m.mean(pts)) + m.covariance.variance / 2)
    elif isinstance(m, SncpModel):
        vals = np.full(len(pts), m.kappa * m.gamma)
    elif isinstance(m, DppKernel):
        vals = m.diagonal(pts)
    elif isinstance(m, StraussModel):
        raise UnsupportedClosedForm(
            "the intensity of a Gibbs process has no closed form; estimate it by "
            "Monte Carlo, e.g. the mean of the Papangelou intensity over simulations")
    else:
        raise TypeError(f"unsupported model {type(m).__name__}")
    return _out(vals, single)


def pcf(m: ModelSpec, u, v):
    """Pair correlation ``g(u, v)``; zero where either intensity vanishes."""
    u, single = _batch(u)
    v, _ = _batch(v)
    u, v = np.broadcast_arrays(u, v)
    if isinstance(m, PoissonModel):
        g = np.ones(len(u))
    elif isinstance(m, LgcpModel):
        g = np.exp(m.covariance(u, v))
    elif isinstance(m, SncpModel):
        r = np.sqrt(np.sum((u - v) ** 2, axis=-1))
        g = 1.0 + m.kernel.overlap(r) / m.kappa
    elif isinstance(m, DppKernel):
        cuu, cvv = m.diagonal(u), m.diagonal(v)
        cuv = np.array([m.gram(a[None], b[None])[0, 0] for a, b in zip(u, v)])
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(cuu * cvv > 0, 1.0 - cuv ** 2 / (cuu * cvv), 0.0)
    elif isinstance(m, StraussModel):
        raise UnsupportedClosedForm("Gibbs pair correlation has no closed form")
    else:
        raise TypeError(f"unsupported model {type(m).__name__}")
    g = np.atleast_1d(g).astype(float)
    if not isinstance(m, DppKernel):
        rho = np.asarray(intensity(m, u)) * np.asarray(intensity(m, v))
        g = np.where(np.atleast_1d(rho) > 0, g, 0.0)
    return _out(g, single)


def joint_intensity(m: ModelSpec, points) -> float:
    """Closed-form ``rho^(n)`` at pairwise distinct ``points`` (Poisson, LGCP, DPP)."""
    pts = as_points(points)
    if isinstance(m, PoissonModel):
        return float(np.prod(intensity(m, pts)))
    if isinstance(m, LgcpModel):
        rho = np.prod(intensity(m, pts))
        c = m.covariance.matrix(pts)
        return float(rho * np.exp(np.sum(np.triu(c, 1))))
    if isinstance(m, DppKernel):
        return float(np.linalg.det(m.gram(pts)))
    if isinstance(m, SncpModel) and len(pts) <= 2:
        if len(pts) == 1:
            return intensity(m, pts[0])
        return float(intensity(m, pts[0]) ** 2 * pcf(m, pts[0], pts[1]))
    raise UnsupportedClosedForm(f"no closed-form joint intensity of order {len(pts)} "
                                f"for {type(m).__name__}")


@dataclass(frozen=True)
class ClusterAugmented:
    """Neyman-Scott process with one extra cluster attached at ``point``.

    This is the one-point reduced Palm distribution of ``base`` at ``point``:
    the base process united with an independent cluster whose centre is
    ``point - D`` with ``D`` drawn from the offspring kernel.
    """

    base: SncpModel
    point: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(v) for v in self.point))
