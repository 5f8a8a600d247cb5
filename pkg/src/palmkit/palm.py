"""Reduced Palm distributions, Papangelou intensities and density algebra.

Densities are taken with respect to the unit-rate Poisson process on a
bounded window. Closed-form Palm constructions are provided for Poisson,
Strauss, log Gaussian Cox, Neyman-Scott and determinantal models.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import GeometryError, PointPattern, Window, as_points
from .models import (ClusterAugmented, DppKernel, LgcpModel, ModelError, ModelSpec,
                     PoissonModel, ShiftedMean, SncpModel, StraussModel,
                     UnsupportedClosedForm, field_integral, intensity, pcf)
from .rng import as_generator

DET_TOLERANCE = 1e-9
EIGEN_THRESHOLD = 1 - 1e-9
NYSTROM_NODES = 32
SNCP_QUADRATURE_NODES = 200


class PalmError(ValueError):
    pass


def _config(x) -> np.ndarray:
    if isinstance(x, PointPattern):
        return x.points
    return as_points(x) if np.size(x) else np.empty((0, 2))


def _distinct(points: np.ndarray) -> None:
    if len(points) > 1 and len(np.unique(points, axis=0)) != len(points):
        raise PalmError("conditioning points must be pairwise distinct")


def _overlaps(a: np.ndarray, b: np.ndarray) -> bool:
    if len(a) == 0 or len(b) == 0:
        return False
    return bool(np.any(np.all(a[:, None, :] == b[None, :, :], axis=-1)))


# ---------------------------------------------------------------- densities

@dataclass(frozen=True)
class UnnormalizedDensity:
    """Density (possibly unnormalised) of a finite point process on ``window``.

    ``evaluate`` maps an ``(n, 2)`` array of points to a nonnegative number.
    """

    evaluate: Callable[[np.ndarray], float]
    window: Window
    hereditary: bool = True

    def __call__(self, x) -> float:
        return float(self.evaluate(_config(x)))


def poisson_density(m: PoissonModel, window: Window) -> UnnormalizedDensity:
    """``f(x) = exp(|W| - int rho) prod rho(x_i)``."""
    log_norm = window.volume - field_integral(m.intensity, window)

    def evaluate(x):
        if len(x) == 0:
            return math.exp(log_norm)
        return math.exp(log_norm) * float(np.prod(m.rate(x)))

    return UnnormalizedDensity(evaluate, window)


def strauss_density(m: StraussModel) -> UnnormalizedDensity:
    """Unnormalised Strauss density ``exp(-sum of potentials)``."""
    def evaluate(x):
        return math.exp(m.log_density(x))

    return UnnormalizedDensity(evaluate, m.window)


def papangelou(f: UnnormalizedDensity, points, x) -> float:
    """n-th order Papangelou intensity ``f(x + points) / f(x)`` with 0/0 = 0."""
    pts = _config(points)
    xs = _config(x)
    _distinct(pts)
    if _overlaps(pts, xs):
        raise PalmError("points must be disjoint from the configuration")
    denom = f(xs)
    if denom == 0:
        return 0.0
    return f(np.vstack([xs, pts])) / denom


def joint_intensity_mc(f: UnnormalizedDensity, points, n_mc: int, rng) -> tuple[float, float]:
    """Monte Carlo ``rho^(n)(points) = E f(Z + points)`` over unit-rate Poisson ``Z``."""
    if n_mc < 100:
        raise ValueError("n_mc must be at least 100")
    pts = _config(points)
    _distinct(pts)
    if len(pts) and not np.all(f.window.contains(pts)):
        raise PalmError("conditioning points must lie in the density's window")
    gen = as_generator(rng)
    vals = np.empty(n_mc)
    for k in range(n_mc):
        z = f.window.uniform(gen, gen.poisson(f.window.volume))
        vals[k] = f(np.vstack([z, pts]))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_mc))


def cox_joint_intensity_mc(m: LgcpModel, points, n_mc: int, rng) -> tuple[float, float]:
    """Monte Carlo ``E prod Lambda(x_i)`` from the joint Gaussian law of ``Y`` at the points."""
    pts = _config(points)
    gen = as_generator(rng)
    mean = np.asarray(m.mean(pts), dtype=float)
    cov = m.covariance.matrix(pts)
    y = gen.multivariate_normal(mean, cov, size=n_mc, method="cholesky")
    vals = np.exp(y.sum(axis=1))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_mc))


def palm_density(f: UnnormalizedDensity, points, rho_n: float) -> UnnormalizedDensity:
    """Reduced Palm density ``x -> f(x + points) / rho_n`` on configurations disjoint from ``points``."""
    if not rho_n > 0:
        raise PalmError("the joint intensity rho_n must be positive")
    pts = _config(points)
    _distinct(pts)

    def evaluate(x):
        if _overlaps(pts, x):
            raise PalmError("configuration must not contain the conditioning points")
        return f(np.vstack([x, pts])) / rho_n

    return UnnormalizedDensity(evaluate, f.window, f.hereditary)


@dataclass(frozen=True)
class ConditionalDensity(UnnormalizedDensity):
    """Density of ``X`` on ``S \\ B`` given ``X_B = xB``, with its estimated marginal."""

    marginal: float = 1.0
    marginal_se: float = 0.0
    region: Window | None = None


def conditional_density_region(f: UnnormalizedDensity, xB, B: Window, n_mc: int,
                               rng) -> ConditionalDensity:
    """``f(xB + x) / f_B(xB)`` where ``f_B(xB) = E f(Z_{S\\B} + xB)`` is estimated by Monte Carlo."""
    S = f.window
    if not (all(a >= c for a, c in zip(B.lower, S.lower)) and all(b <= d for b, d in zip(B.upper, S.upper))):
        raise GeometryError("conditioning region must lie inside the density's window")
    xb = _config(xB)
    if len(xb) and not np.all(B.contains(xb)):
        raise PalmError("conditioning configuration must lie in the region B")
    gen = as_generator(rng)
    vals = np.empty(n_mc)
    for k in range(n_mc):
        z = S.uniform(gen, gen.poisson(S.volume))
        z = z[~B.contains(z)] if len(z) else z
        vals[k] = f(np.vstack([z, xb]))
    marginal = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else 0.0
    if marginal <= 3 * se or marginal <= 0:
        raise PalmError(f"marginal density estimate {marginal:.4g} is within 3 SE ({se:.3g}) of zero")

    def evaluate(x):
        if len(x) and np.any(B.contains(x)):
            raise PalmError("configuration must lie outside the conditioning region")
        return f(np.vstack([xb, x])) / marginal

    return ConditionalDensity(evaluate, S, f.hereditary, marginal, se, B)


# ---------------------------------------------------------------- DPP kernels

@dataclass(frozen=True, eq=False)
class PalmDppKernel(DppKernel):
    """Schur complement ``C_x(u, v) = C(u, v) - C(u, x) C(x, v) / C(x, x)``."""

    base: DppKernel
    point: tuple[float, float]
    window: Window = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(v) for v in self.point))
        if self.window is None:
            object.__setattr__(self, "window", self.base.window)
        cxx = self.base.gram(self._x)[0, 0]
        if not cxx > 0:
            raise PalmError("conditioning point has zero DPP intensity")
        object.__setattr__(self, "_cxx", float(cxx))

    @property
    def _x(self) -> np.ndarray:
        return np.asarray(self.point)[None, :]

    def gram(self, a, b=None):
        a = as_points(a)
        b = a if b is None else as_points(b)
        cax = self.base.gram(a, self._x)
        cxb = cax.T if b is a else self.base.gram(self._x, b)
        return self.base.gram(a, b) - (cax @ cxb) / self._cxx

    def diagonal(self, u):
        u = as_points(u)
        cux = self.base.gram(u, self._x)[:, 0]
        return self.base.diagonal(u) - cux * cux / self._cxx


def dpp_palm_kernel(C: DppKernel, x) -> PalmDppKernel:
    return PalmDppKernel(C, tuple(np.asarray(x, dtype=float)))


@dataclass(frozen=True, eq=False)
class TildeDppKernel(DppKernel):
    """Nystrom solution of ``T - int T C = C`` interpolated off the nodes.

    ``T(u, v) = C(u, v) + w C(u, Z) (I - w C(Z, Z))^{-1} C(Z, v)`` for
    midpoint nodes ``Z`` with common weight ``w``.
    """

    base: DppKernel
    window: Window
    nodes: np.ndarray
    weight: float
    vectors: np.ndarray
    inv_gain: np.ndarray

    def gram(self, a, b=None):
        a = as_points(a)
        b = a if b is None else as_points(b)
        pa = self.base.gram(a, self.nodes) @ self.vectors
        pb = pa if b is a else self.base.gram(b, self.nodes) @ self.vectors
        return self.base.gram(a, b) + self.weight * (pa * self.inv_gain) @ pb.T

    def diagonal(self, u):
        u = as_points(u)
        pu = self.base.gram(u, self.nodes) @ self.vectors
        return self.base.diagonal(u) + self.weight * np.sum(pu * pu * self.inv_gain, axis=1)


def dpp_tilde_kernel(C: DppKernel, S: Window, quad_n: int = NYSTROM_NODES) -> tuple[TildeDppKernel, np.ndarray]:
    """Solve the tilde-kernel integral equation on ``S``; return it and the discrete eigenvalues of ``C``."""
    nodes, weight = S.grid(quad_n)
    a = weight * C.gram(nodes)
    a = (a + a.T) / 2
    lam, vec = np.linalg.eigh(a)
    if lam.max(initial=0.0) >= EIGEN_THRESHOLD:
        raise PalmError(f"kernel eigenvalue {lam.max():.6g} >= 1: no density with respect to Poisson on S")
    kernel = TildeDppKernel(C, S, nodes, weight, vec, 1.0 / (1.0 - lam))
    return kernel, lam[::-1].copy()


def dpp_density_unnormalized(Ctilde: DppKernel, x) -> float:
    """``det [Ctilde](x)``; 1 for the empty pattern."""
    pts = _config(x)
    if len(pts) == 0:
        return 1.0
    sign, logdet = np.linalg.slogdet(Ctilde.gram(pts))
    det = sign * math.exp(logdet) if sign != 0 else 0.0
    if det < -DET_TOLERANCE:
        raise PalmError(f"Gram determinant {det:.3g} is negative: kernel is not positive semidefinite")
    return max(det, 0.0)


def dpp_density(Ctilde: DppKernel, window: Window) -> UnnormalizedDensity:
    return UnnormalizedDensity(lambda x: dpp_density_unnormalized(Ctilde, x), window)


# ---------------------------------------------------------------- Palm models

@dataclass(frozen=True)
class PalmModel:
    """Reduced Palm version of ``base`` at ``points``, realised as a model of the same class."""

    base: ModelSpec
    points: tuple[tuple[float, float], ...]
    realized: object

    @property
    def kind(self) -> str:
        if isinstance(self.base, PoissonModel):
            return "same_as_base"
        if isinstance(self.realized, LgcpModel):
            return "shifted_lgcp"
        if isinstance(self.realized, StraussModel):
            return "shifted_gibbs"
        if isinstance(self.realized, ClusterAugmented):
            return "cluster_augmented"
        return "reduced_dpp"


def _canonical(points) -> np.ndarray:
    pts = as_points(points)
    _distinct(pts)
    order = np.lexsort(pts.T[::-1])
    return pts[order]


def palm_model(m: ModelSpec, points) -> PalmModel:
    """Closed-form reduced Palm model at pairwise distinct ``points``."""
    pts = _canonical(points)
    key = tuple(map(tuple, pts))
    if isinstance(m, PoissonModel):
        if np.any(np.asarray(m.rate(pts)) <= 0):
            raise PalmError("Palm distribution requires positive intensity at the conditioning points")
        return PalmModel(m, key, m)
    if isinstance(m, LgcpModel):
        mean = m.mean
        if isinstance(mean, ShiftedMean) and mean.covariance == m.covariance:
            merged = _canonical(np.vstack([as_points(mean.points), pts]))
            shifted = ShiftedMean(mean.base, m.covariance, tuple(map(tuple, merged)))
        else:
            shifted = ShiftedMean(mean, m.covariance, key)
        return PalmModel(m, key, LgcpModel(shifted, m.covariance))
    if isinstance(m, StraussModel):
        if not np.all(m.window.contains(pts)):
            raise PalmError("conditioning points must lie in the Strauss window")
        return PalmModel(m, key, m.with_fixed(pts))
    if isinstance(m, SncpModel):
        if len(pts) != 1:
            raise UnsupportedClosedForm("only one-point Palm distributions are available for SNCP models")
        return PalmModel(m, key, ClusterAugmented(m, key[0]))
    if isinstance(m, DppKernel):
        if len(pts) != 1:
            raise UnsupportedClosedForm("only one-point Palm kernels are constructed for DPP models; "
                                        "apply palm_model repeatedly for more points")
        return PalmModel(m, key, dpp_palm_kernel(m, pts[0]))
    raise TypeError(f"no Palm construction for {type(m).__name__}")


def sncp_palm_excess(m: SncpModel, x, u, n: int = SNCP_QUADRATURE_NODES):
    """``gamma * E k_o(u - c_x)`` with ``c_x = x - D``, ``D ~ k_o``, by polar Gauss-Legendre quadrature."""
    x = np.asarray(x, dtype=float)
    u = as_points(u)
    r_eff = m.kernel.effective_radius
    gl, wl = np.polynomial.legendre.leggauss(n)
    radii = (gl + 1) * r_eff / 2
    wr = wl * r_eff / 2 * radii
    angles = 2 * math.pi * np.arange(n) / n
    disp = np.stack([np.outer(radii, np.cos(angles)), np.outer(radii, np.sin(angles))], axis=-1)
    weights = (wr[:, None] * (2 * math.pi / n)) * m.kernel.density(disp)
    out = np.empty(len(u))
    for k, point in enumerate(u):
        out[k] = np.sum(weights * m.kernel.density(point - x + disp))
    return m.gamma * out


def palm_intensity(m: ModelSpec, points, u):
    """Intensity of the reduced Palm process at ``u``."""
    pts = _canonical(points)
    u_arr = np.asarray(u, dtype=float)
    single = u_arr.ndim == 1
    uu = as_points(u_arr)
    if _overlaps(uu, pts):
        raise PalmError("u must differ from the conditioning points")
    if isinstance(m, PoissonModel):
        palm_model(m, pts)
        val = np.broadcast_to(intensity(m, uu), (len(uu),))
    elif isinstance(m, LgcpModel):
        val = np.asarray(intensity(m, uu), dtype=float).copy()
        for p in pts:
            val *= np.asarray(pcf(m, uu, np.broadcast_to(p, uu.shape)))
    elif isinstance(m, DppKernel):
        realized = palm_model(m, pts).realized
        val = realized.diagonal(uu)
    elif isinstance(m, SncpModel):
        palm_model(m, pts)
        val = np.asarray(intensity(m, uu)) + sncp_palm_excess(m, pts[0], uu)
    elif isinstance(m, StraussModel):
        raise UnsupportedClosedForm("Gibbs Palm intensities have no closed form")
    else:
        raise TypeError(f"unsupported model {type(m).__name__}")
    val = np.asarray(val, dtype=float)
    return float(val[0]) if single else val


def lgcp_thinning_probability(m: LgcpModel, points, u):
    """Retention ``exp(-sum_i c(u, x_i))`` that thins the Palm LGCP back to the base process."""
    pts = as_points(points)
    arr = np.asarray(u, dtype=float)
    p = np.exp(-m.covariance.matrix(as_points(arr), pts).sum(axis=1))
    return float(p[0]) if arr.ndim == 1 else p


def conditioning_points(points: Sequence) -> np.ndarray:
    """Validate a sequence of conditioning points."""
    pts = as_points(points)
    _distinct(pts)
    return pts
