"""Samplers for the supported model classes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterator

import numpy as np

from .core import PointPattern, Window, as_points
from .models import (ClusterAugmented, CovarianceModel, DppKernel, LgcpModel, LinearField,
                     PoissonModel, SncpModel, StraussModel, constant)
from .rng import as_generator

MAX_FIELD_CELLS = 64 * 64
DEFAULT_RESOLUTION = (64, 64)
STRAUSS_BURN_IN = 100_000
JITTERS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridField:
    """Field values at the cell centres of a regular ``n1 x n2`` grid.

    ``values[i, j]`` belongs to the cell with x-index ``i`` and y-index ``j``.
    """

    window: Window
    resolution: tuple[int, int]
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != tuple(self.resolution):
            raise ValueError(f"field shape {vals.shape} does not match resolution {self.resolution}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def cell_area(self) -> float:
        return self.window.volume / (self.resolution[0] * self.resolution[1])

    def centers(self) -> np.ndarray:
        return cell_centers(self.window, self.resolution)

    def cell_index(self, points) -> tuple[np.ndarray, np.ndarray]:
        pts = as_points(points)
        rel = (pts - self.window.lower) / self.window.sides
        i = np.clip((rel[:, 0] * self.resolution[0]).astype(int), 0, self.resolution[0] - 1)
        j = np.clip((rel[:, 1] * self.resolution[1]).astype(int), 0, self.resolution[1] - 1)
        return i, j

    def __call__(self, points):
        i, j = self.cell_index(points)
        return self.values[i, j]


def cell_centers(window: Window, resolution) -> np.ndarray:
    """Cell centres ordered like ``values.ravel()`` of a :class:`GridField`."""
    n1, n2 = resolution
    xs = window.lower[0] + (np.arange(n1) + 0.5) * window.sides[0] / n1
    ys = window.lower[1] + (np.arange(n2) + 0.5) * window.sides[1] / n2
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


# ---------------------------------------------------------------- Poisson

def _uniform_pattern(window: Window, n: int, rng) -> np.ndarray:
    return window.uniform(rng, n)


def sample_poisson(rho, window: Window, rng, rho_max: float | None = None) -> PointPattern:
    """Poisson process with intensity ``rho`` on ``window``.

    ``rho`` may be a number, a callable, a :class:`PoissonModel` or a
    :class:`GridField` (piecewise-constant intensity). Non-constant callables
    are sampled by thinning a rate-``rho_max`` process.
    """
    gen = as_generator(rng)
    if isinstance(rho, PoissonModel):
        if rho_max is None and (rho.rho_max is not None or isinstance(rho.intensity, LinearField)):
            rho_max = rho.upper_bound(window)
        rho = rho.intensity
    if isinstance(rho, GridField):
        return _sample_piecewise(rho, window, gen)
    if isinstance(rho, (int, float)):
        rho = constant(rho)
    if isinstance(rho, LinearField) and rho.is_constant:
        if rho.const < 0:
            raise SamplingError("intensity must be nonnegative")
        n = gen.poisson(rho.const * window.volume)
        return PointPattern(_uniform_pattern(window, n, gen), window, check=False)
    if rho_max is None:
        if isinstance(rho, LinearField):
            rho_max = rho.bounds(window)[1]
        else:
            raise SamplingError("rho_max is required to thin an inhomogeneous intensity")
    if rho_max <= 0:
        return PointPattern.empty(window)
    n = gen.poisson(rho_max * window.volume)
    pts = _uniform_pattern(window, n, gen)
    keep_u = gen.random(n)
    if n == 0:
        return PointPattern.empty(window)
    ratio = np.asarray(rho(pts), dtype=float) / rho_max
    if np.any(ratio > 1 + 1e-12):
        raise SamplingError(f"rho_max={rho_max} is below the intensity (ratio {ratio.max():.4g})")
    if np.any(ratio < 0):
        raise SamplingError("intensity must be nonnegative")
    return PointPattern(pts[keep_u < ratio], window, check=False)


def _sample_piecewise(field: GridField, window: Window, gen) -> PointPattern:
    if field.window != window:
        raise SamplingError("piecewise intensity grid must cover the sampling window")
    rates = np.asarray(field.values).ravel() * field.cell_area
    if np.any(rates < 0):
        raise SamplingError("intensity must be nonnegative")
    counts = gen.poisson(rates)
    total = int(counts.sum())
    if total == 0:
        return PointPattern.empty(window)
    n1, n2 = field.resolution
    cells = np.repeat(np.arange(rates.size), counts)
    i, j = np.divmod(cells, n2)
    offs = gen.random((total, 2))
    dx, dy = window.sides[0] / n1, window.sides[1] / n2
    x = window.lower[0] + (i + offs[:, 0]) * dx
    y = window.lower[1] + (j + offs[:, 1]) * dy
    pts = np.column_stack([np.minimum(x, window.upper[0]), np.minimum(y, window.upper[1])])
    return PointPattern(pts, window, check=False)


# ---------------------------------------------------------------- Gaussian fields

@lru_cache(maxsize=16)
def _factor(cov: CovarianceModel, window: Window, resolution: tuple[int, int]) -> np.ndarray:
    centers = cell_centers(window, resolution)
    c = cov.matrix(centers)
    eye = np.eye(len(c))
    for jitter in JITTERS:
        try:
            return np.linalg.cholesky(c + jitter * cov.variance * eye)
        except np.linalg.LinAlgError:
            continue
    raise SamplingError(f"grid covariance not positive definite even with jitter {JITTERS[-1]}")


def field_factor(cov: CovarianceModel, window: Window, resolution=DEFAULT_RESOLUTION,
                 max_cells: int = MAX_FIELD_CELLS) -> np.ndarray:
    """Lower Cholesky factor of the covariance between cell centres (cached)."""
    resolution = tuple(int(r) for r in resolution)
    if resolution[0] * resolution[1] > max_cells:
        raise SamplingError(f"grid {resolution} exceeds the dense-factorisation cap of {max_cells} cells")
    return _factor(cov, window, resolution)


def sample_gaussian_field(mean: Callable, cov: CovarianceModel, window: Window, resolution, rng,
                          max_cells: int = MAX_FIELD_CELLS) -> GridField:
    gen = as_generator(rng)
    resolution = tuple(int(r) for r in resolution)
    factor = field_factor(cov, window, resolution, max_cells)
    z = gen.standard_normal(factor.shape[0])
    mu = np.broadcast_to(np.asarray(mean(cell_centers(window, resolution)), dtype=float), z.shape)
    return GridField(window, resolution, (mu + factor @ z).reshape(resolution))


def sample_lgcp(m: LgcpModel, window: Window, resolution=DEFAULT_RESOLUTION, rng=None) -> PointPattern:
    """Cox process driven by ``exp(Y)`` with ``Y`` constant on grid cells."""
    gen = as_generator(rng)
    y = sample_gaussian_field(m.mean, m.covariance, window, resolution, gen)
    return _sample_piecewise(GridField(window, y.resolution, np.exp(y.values)), window, gen)


def lgcp_from_field(values: np.ndarray, window: Window, resolution, rng) -> PointPattern:
    """LGCP realisation given the log-intensity at the cell centres."""
    resolution = tuple(int(r) for r in resolution)
    lam = np.exp(np.asarray(values, dtype=float)).reshape(resolution)
    return _sample_piecewise(GridField(window, resolution, lam), window, as_generator(rng))


# ---------------------------------------------------------------- Neyman-Scott

def _offspring(m: SncpModel, centres: np.ndarray, gen) -> np.ndarray:
    counts = gen.poisson(m.gamma, len(centres))
    total = int(counts.sum())
    if total == 0:
        return np.empty((0, 2))
    return np.repeat(centres, counts, axis=0) + m.kernel.sample(gen, total)


def sample_neyman_scott(m: SncpModel, window: Window, rng) -> PointPattern:
    gen = as_generator(rng)
    outer = window.expand(m.kernel.effective_radius)
    parents = outer.uniform(gen, gen.poisson(m.kappa * outer.volume))
    pts = _offspring(m, parents, gen)
    return PointPattern(pts[window.contains(pts)] if len(pts) else pts, window, check=False)


def sample_extra_cluster(m: SncpModel, x, rng, window: Window | None = None) -> PointPattern:
    """The extra cluster of the one-point Palm distribution at ``x``."""
    gen = as_generator(rng)
    x = np.asarray(x, dtype=float)
    window = window or Window.from_bounds(tuple(x - 1e6) + tuple(x + 1e6))
    centre = x - m.kernel.sample(gen, 1)[0]
    pts = _offspring(m, centre[None, :], gen)
    return PointPattern(pts[window.contains(pts)] if len(pts) else pts, window, check=False)


def sample_cluster_augmented(m: ClusterAugmented, window: Window, rng) -> PointPattern:
    gen = as_generator(rng)
    base = sample_neyman_scott(m.base, window, gen)
    extra = sample_extra_cluster(m.base, m.point, gen, window)
    return PointPattern(np.vstack([base.points, extra.points]), window, check=False)


# ---------------------------------------------------------------- Strauss

class StraussChain:
    """Birth-death Metropolis-Hastings sampler for a :class:`StraussModel`.

    Each proposal is a birth (probability 1/2) of a uniform point or a death
    of a uniformly chosen existing point.
    """

    CHUNK = 4096

    def __init__(self, m: StraussModel, rng, init=None):
        self.model = m
        self.window = m.window
        self._gen = as_generator(rng)
        start = np.empty((0, 2)) if init is None else as_points(
            init.points if hasattr(init, "points") else init)
        self._pts = np.empty((max(64, 2 * len(start)), 2))
        self._pts[:len(start)] = start
        self.n = len(start)
        self._fixed = m.fixed_points
        self._r2 = m.R * m.R
        self._gamma = m.gamma
        self._base = math.exp(-m.theta1) * m.window.volume
        self.proposals = 0
        self.accepted = 0

    def _lam_vol(self, u: np.ndarray, exclude: int = -1) -> float:
        """``lambda(u, x) |W|`` with point ``exclude`` removed from ``x``."""
        pts = self._pts[:self.n]
        t = int(np.count_nonzero(np.sum((pts - u) ** 2, axis=1) <= self._r2))
        if exclude >= 0:
            t -= 1
        if len(self._fixed):
            t += int(np.count_nonzero(np.sum((self._fixed - u) ** 2, axis=1) <= self._r2))
        if t == 0:
            return self._base
        return self._base * self._gamma ** t

    def run(self, steps: int) -> None:
        lower = np.asarray(self.window.lower)
        sides = self.window.sides
        done = 0
        while done < steps:
            k = min(self.CHUNK, steps - done)
            draws = self._gen.random((k, 5))
            for coin, ux, uy, acc, pick in draws:
                if coin < 0.5:
                    u = lower + np.array([ux, uy]) * sides
                    if acc * (self.n + 1) < self._lam_vol(u):
                        if self.n == len(self._pts):
                            self._pts = np.vstack([self._pts, np.empty_like(self._pts)])
                        self._pts[self.n] = u
                        self.n += 1
                        self.accepted += 1
                elif self.n > 0:
                    i = min(int(pick * self.n), self.n - 1)
                    if acc * self._lam_vol(self._pts[i], exclude=i) < self.n:
                        self.n -= 1
                        self._pts[i] = self._pts[self.n]
                        self.accepted += 1
            done += k
        self.proposals += steps

    def state(self) -> PointPattern:
        return PointPattern(self._pts[:self.n].copy(), self.window, check=False)

    def samples(self, n_samples: int, thin: int) -> Iterator[PointPattern]:
        for _ in range(n_samples):
            self.run(thin)
            yield self.state()


def sample_strauss(m: StraussModel, steps: int = STRAUSS_BURN_IN, rng=None, init=None) -> PointPattern:
    """State of the birth-death chain after ``steps`` proposals."""
    if steps < 1:
        raise ValueError("steps must be positive")
    chain = StraussChain(m, rng, init)
    chain.run(steps)
    return chain.state()


# ---------------------------------------------------------------- dispatch

def simulate(model, window: Window, rng, *, resolution=DEFAULT_RESOLUTION,
             steps: int = STRAUSS_BURN_IN) -> PointPattern:
    """Draw one realisation of ``model`` on ``window``."""
    gen = as_generator(rng)
    if isinstance(model, PoissonModel):
        return sample_poisson(model, window, gen)
    if isinstance(model, LgcpModel):
        return sample_lgcp(model, window, resolution, gen)
    if isinstance(model, SncpModel):
        return sample_neyman_scott(model, window, gen)
    if isinstance(model, ClusterAugmented):
        return sample_cluster_augmented(model, window, gen)
    if isinstance(model, StraussModel):
        if model.window != window:
            model = StraussModel(model.theta1, model.theta2, model.R, window, model.fixed)
        return sample_strauss(model, steps, gen)
    if isinstance(model, DppKernel):
        raise NotImplementedError("determinantal point process simulation is not supported")
    raise TypeError(f"cannot simulate {type(model).__name__}")


LGCP_BATCH = 256


def sample_lgcp_batch(means: np.ndarray, cov: CovarianceModel, window: Window, resolution,
                      gens: list) -> list[PointPattern]:
    """One LGCP realisation per generator; ``means[k]`` is the log-intensity mean at the cell centres.

    Each generator first supplies its field's normals and then its Poisson
    draws, so realisation ``k`` depends on ``gens[k]`` alone. Matrix products
    run over fixed-size blocks to keep results independent of scheduling.
    """
    resolution = tuple(int(r) for r in resolution)
    factor = field_factor(cov, window, resolution)
    means = np.broadcast_to(np.asarray(means, dtype=float), (len(gens), factor.shape[0]))
    out: list[PointPattern] = []
    for start in range(0, len(gens), LGCP_BATCH):
        block = gens[start:start + LGCP_BATCH]
        z = np.column_stack([g.standard_normal(factor.shape[0]) for g in block])
        y = (factor @ z).T + means[start:start + len(block)]
        for g, row in zip(block, y):
            out.append(lgcp_from_field(row, window, resolution, g))
    return out
