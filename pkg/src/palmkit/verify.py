"""Monte Carlo and exact checks of Palm, Campbell-Mecke, Slivnyak-Mecke and GNZ identities.

Every check compares a left-hand side computed from realisations of the
model with a right-hand side computed from the Palm (or Papangelou) side
and reports the z-score ``|lhs - rhs| / se``. Replicate ``i`` of each side
uses its own child stream, so reports do not depend on thread count.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import PointPattern, Window, as_points
from .functionals import (Constant, Functional, HasNeighbour, InDisk, IsEmpty, NeighbourCount,
                          NoNeighbour, PairIsolated, PairNeighbourCount, PairWithin)
from .models import (ClusterAugmented, CovarianceModel, DppKernel, FeatureDppKernel,
                     GaussianDppKernel, LgcpModel, LinearField, MaternClusterKernel, PoissonModel,
                     SncpModel, StraussModel, ThomasKernel, constant, field_integral, intensity,
                     joint_intensity, pcf)
from .palm import dpp_palm_kernel, lgcp_thinning_probability, palm_model
from .rng import RngStream, replicate_map
from .simulate import (DEFAULT_RESOLUTION, STRAUSS_BURN_IN, StraussChain, cell_centers,
                       sample_cluster_augmented, sample_lgcp_batch, sample_neyman_scott,
                       sample_poisson)

THRESHOLD = 3.0
EXACT_TOLERANCE = 1e-10
GNZ_QUADRATURE = 64
GNZ_THIN = 200
GNZ_CHAINS = 4
GNZ_BATCHES_PER_CHAIN = 5
# anchor tuples averaged against each fresh Poisson realisation on the right-hand side
POISSON_ANCHORS = 64


@dataclass(frozen=True)
class IdentityReport:
    name: str
    lhs: float
    rhs: float
    se_combined: float
    z: float
    passed: bool
    n_reps: int
    seed: int

    @property
    def se(self) -> float:
        return self.se_combined


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return float(v.mean()) if len(v) else 0.0, 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


def _z(lhs: float, rhs: float, se: float) -> float:
    diff = abs(lhs - rhs)
    if se > 0:
        return diff / se
    return 0.0 if diff <= 1e-12 * max(abs(lhs), abs(rhs), 1.0) else math.inf


def make_report(name: str, lhs: float, rhs: float, se: float, n_reps: int, seed: int) -> IdentityReport:
    z = _z(lhs, rhs, se)
    return IdentityReport(name, float(lhs), float(rhs), float(se), float(z), bool(z <= THRESHOLD),
                          int(n_reps), int(seed))


def two_sample_report(name: str, lhs_vals, rhs_vals, rng: RngStream) -> IdentityReport:
    lhs, se_l = _mean_se(lhs_vals)
    rhs, se_r = _mean_se(rhs_vals)
    return make_report(name, lhs, rhs, math.hypot(se_l, se_r), len(lhs_vals), rng.seed)


def exact_report(name: str, lhs: float, rhs: float, n_reps: int, seed: int,
                 tol: float = EXACT_TOLERANCE) -> IdentityReport:
    """Deterministic identity: the relative tolerance band is reported as 3 standard errors."""
    se = tol * max(abs(lhs), abs(rhs), 1e-300) / THRESHOLD
    return make_report(name, lhs, rhs, se, n_reps, seed)


# ---------------------------------------------------------------- Poisson

def _check_order(h: Functional, n: int) -> None:
    if h.order != n:
        raise ValueError(f"functional has order {h.order}, expected {n}")
    if n not in (1, 2):
        raise ValueError("only orders 1 and 2 are supported")


def _poisson_sides(m: PoissonModel, h: Functional, n: int, reps: int, rng: RngStream,
                   window: Window, rhs_scale: float, threads, anchors_per_rep: int = POISSON_ANCHORS):
    _check_order(h, n)

    def lhs(g):
        return h.sum_over(sample_poisson(m, window, g))

    def rhs(g):
        x = sample_poisson(m, window, g)
        anchors = window.uniform(g, n * anchors_per_rep)
        rates = np.broadcast_to(np.asarray(m.rate(anchors), dtype=float), (len(anchors),))
        weights = window.volume ** n * np.prod(rates.reshape(anchors_per_rep, n), axis=1)
        values = h.evaluate_many(anchors.reshape(anchors_per_rep, n, -1), x.points)
        return rhs_scale * float(np.sum(np.where(weights > 0, weights * values, 0.0))) / anchors_per_rep

    return (replicate_map(lhs, reps, rng.child(0), threads),
            replicate_map(rhs, reps, rng.child(1), threads))


def check_slivnyak(m: PoissonModel, h: Functional, n: int, reps: int, rng: RngStream,
                   window: Window | None = None, rhs_scale: float = 1.0, threads=None,
                   name: str | None = None, anchors_per_rep: int = POISSON_ANCHORS) -> IdentityReport:
    """Sum over n-tuples of events versus the integral against fresh (unconditioned) realisations.

    The right-hand integral is a randomised quadrature: each replicate draws
    one realisation and averages ``h`` over ``anchors_per_rep`` uniform anchor
    tuples weighted by ``|W|^n rho(x_1)...rho(x_n)``.
    """
    window = window or Window.unit()
    lhs, rhs = _poisson_sides(m, h, n, reps, rng, window, rhs_scale, threads, anchors_per_rep)
    return two_sample_report(name or f"slivnyak_n{n}_{type(h).__name__}", lhs, rhs, rng)


def check_factorial_moment(m: PoissonModel, reps: int, rng: RngStream, window: Window | None = None,
                           rhs_scale: float = 1.0, threads=None, name: str | None = None) -> IdentityReport:
    """``E N(N - 1)`` against ``(int rho)^2``."""
    window = window or Window.unit()

    def one(g):
        k = len(sample_poisson(m, window, g))
        return k * (k - 1)

    vals = replicate_map(one, reps, rng.child(0), threads)
    lhs, se = _mean_se(vals)
    rhs = rhs_scale * m.mean_count(window) ** 2
    return make_report(name or "factorial_moment_n2", lhs, rhs, se, reps, rng.seed)


# ---------------------------------------------------------------- Campbell-Mecke

def check_campbell_mecke(m, h: Functional, n: int, reps: int, rng: RngStream,
                         window: Window | None = None, rhs_scale: float = 1.0, threads=None,
                         resolution=DEFAULT_RESOLUTION, name: str | None = None) -> IdentityReport:
    """Sum over n-tuples of events versus the integral of Palm expectations times ``rho^(n)``."""
    window = window or Window.unit()
    _check_order(h, n)
    label = name or f"campbell_mecke_{type(m).__name__}_n{n}_{type(h).__name__}"
    if isinstance(m, PoissonModel):
        lhs, rhs = _poisson_sides(m, h, n, reps, rng, window, rhs_scale, threads)
    elif isinstance(m, LgcpModel):
        lhs, rhs = _lgcp_campbell(m, h, n, reps, rng, window, rhs_scale, resolution)
    elif isinstance(m, SncpModel):
        if n != 1:
            raise ValueError("SNCP Campbell-Mecke checks are limited to n = 1")
        rho = intensity(m, window.center)

        def lhs_one(g):
            return h.sum_over(sample_neyman_scott(m, window, g))

        def rhs_one(g):
            anchor = window.uniform(g, 1)
            x = sample_cluster_augmented(palm_model(m, anchor).realized, window, g)
            return rhs_scale * window.volume * rho * h(anchor, x.points)

        lhs = replicate_map(lhs_one, reps, rng.child(0), threads)
        rhs = replicate_map(rhs_one, reps, rng.child(1), threads)
    else:
        raise TypeError(f"Campbell-Mecke check unsupported for {type(m).__name__}")
    return two_sample_report(label, lhs, rhs, rng)


def _gens(rng: RngStream, reps: int) -> list:
    return [rng.child(i).generator() for i in range(reps)]


def _lgcp_campbell(m: LgcpModel, h, n, reps, rng, window, rhs_scale, resolution):
    centers = cell_centers(window, resolution)
    base_mean = np.asarray(m.mean(centers), dtype=float)
    lhs_patterns = sample_lgcp_batch(base_mean, m.covariance, window, resolution, _gens(rng.child(0), reps))
    lhs = [h.sum_over(x) for x in lhs_patterns]
    gens = _gens(rng.child(1), reps)
    anchors = [window.uniform(g, n) for g in gens]
    means = np.array([np.asarray(palm_model(m, a).realized.mean(centers)) for a in anchors])
    weights = [window.volume ** n * joint_intensity(m, a) for a in anchors]
    palm_patterns = sample_lgcp_batch(means, m.covariance, window, resolution, gens)
    rhs = [rhs_scale * w * h(a, x.points) for w, a, x in zip(weights, anchors, palm_patterns)]
    return lhs, rhs


# ---------------------------------------------------------------- LGCP closure

def _disc_quadrature(fn: Callable, centre, radius: float, window: Window, n: int = 800) -> float:
    """Midpoint rule for ``int_{b(centre, radius) and window} fn``."""
    c = np.asarray(centre, dtype=float)
    lo = np.maximum(c - radius, window.lower)
    hi = np.minimum(c + radius, window.upper)
    box = Window(tuple(lo), tuple(hi))
    nodes, area = box.grid(n)
    inside = np.sum((nodes - c) ** 2, axis=1) <= radius * radius
    return float(np.sum(fn(nodes[inside])) * area)


def check_lgcp_closure(m: LgcpModel, x, reps: int, rng: RngStream, window: Window | None = None,
                       radius: float = 0.2, rhs_scale: float = 1.0, resolution=DEFAULT_RESOLUTION,
                       name: str | None = None) -> IdentityReport:
    """Mean count of the simulated Palm LGCP near ``x`` against quadrature of ``rho(u) g(u, x)``."""
    window = window or Window.unit()
    x = np.asarray(x, dtype=float)
    centers = cell_centers(window, resolution)
    mean = np.asarray(palm_model(m, [x]).realized.mean(centers))
    patterns = sample_lgcp_batch(mean, m.covariance, window, resolution, _gens(rng.child(0), reps))
    counts = [int(np.count_nonzero(np.sum((p.points - x) ** 2, axis=1) <= radius ** 2)) for p in patterns]
    lhs, se = _mean_se(counts)

    def integrand(u):
        return np.asarray(intensity(m, u)) * np.asarray(pcf(m, u, np.broadcast_to(x, u.shape)))

    rhs = rhs_scale * _disc_quadrature(integrand, x, radius, window)
    return make_report(name or "lgcp_palm_closure", lhs, rhs, se, reps, rng.seed)


def check_lgcp_thinning(m: LgcpModel, x, reps: int, rng: RngStream, window: Window | None = None,
                        rhs_scale: float = 1.0, resolution=DEFAULT_RESOLUTION,
                        name: str | None = None) -> IdentityReport:
    """Palm LGCP thinned with ``exp(-c(u, x))`` against the base mean count ``int rho``."""
    window = window or Window.unit()
    x = np.asarray(x, dtype=float)
    centers = cell_centers(window, resolution)
    mean = np.asarray(palm_model(m, [x]).realized.mean(centers))
    gens = _gens(rng.child(0), reps)
    patterns = sample_lgcp_batch(mean, m.covariance, window, resolution, gens)
    counts = []
    for g, p in zip(gens, patterns):
        if len(p) == 0:
            counts.append(0)
            continue
        keep = g.random(len(p)) < lgcp_thinning_probability(m, [x], p.points)
        counts.append(int(np.count_nonzero(keep)))
    lhs, se = _mean_se(counts)
    rhs = rhs_scale * field_integral(lambda u: intensity(m, u), window)
    return make_report(name or "lgcp_palm_thinning", lhs, rhs, se, reps, rng.seed)


# ---------------------------------------------------------------- GNZ

def check_gnz(m: StraussModel, h: Functional, reps: int, rng: RngStream, burn_in: int = STRAUSS_BURN_IN,
              thin: int = GNZ_THIN, chains: int = GNZ_CHAINS, quad_n: int = GNZ_QUADRATURE,
              rhs_scale: float = 1.0, threads=None, name: str | None = None) -> IdentityReport:
    """``E sum h(x, X - x)`` against ``E int lambda(u, X) h(u, X) du`` on Strauss samples.

    Both sides are evaluated on the same post-burn-in states; the standard
    error of their difference comes from batch means within each chain.
    """
    _check_order(h, 1)
    nodes, area = m.window.grid(quad_n)
    sizes = [reps // chains + (1 if c < reps % chains else 0) for c in range(chains)]

    def run_chain(c: int):
        chain = StraussChain(m, rng.child(c))
        chain.run(burn_in)
        out = []
        for x in chain.samples(sizes[c], thin):
            lam = np.asarray(m.papangelou(nodes, x), dtype=float)
            out.append((h.sum_over(x), rhs_scale * area * float(np.sum(lam * h.at_many(nodes, x)))))
        return np.array(out).reshape(-1, 2)

    from .rng import thread_count
    from concurrent.futures import ThreadPoolExecutor
    workers = thread_count(threads)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_chain, range(chains)))
    else:
        results = [run_chain(c) for c in range(chains)]
    batch_diffs = []
    for res in results:
        for block in np.array_split(res, min(GNZ_BATCHES_PER_CHAIN, max(len(res), 1))):
            if len(block):
                batch_diffs.append(block[:, 0].mean() - block[:, 1].mean())
    allres = np.vstack(results)
    lhs, rhs = float(allres[:, 0].mean()), float(allres[:, 1].mean())
    se = float(np.std(batch_diffs, ddof=1) / math.sqrt(len(batch_diffs))) if len(batch_diffs) > 1 else 0.0
    return make_report(name or f"gnz_{type(h).__name__}", lhs, rhs, se, reps, rng.seed)


# ---------------------------------------------------------------- DPP

def check_dpp_identities(C: DppKernel, pts, x, seed: int = 0, name: str | None = None,
                         tol: float = EXACT_TOLERANCE) -> IdentityReport:
    """``det[C](pts + x) = C(x, x) det[C_x](pts)``, exactly up to rounding."""
    pts = as_points(pts)
    x = np.asarray(x, dtype=float)
    lhs = float(np.linalg.det(C.gram(np.vstack([pts, x[None, :]]))))
    cx = dpp_palm_kernel(C, x)
    rhs = float(C.gram(x[None, :])[0, 0] * np.linalg.det(cx.gram(pts)))
    return exact_report(name or "dpp_palm_determinant", lhs, rhs, 1, seed, tol)


def check_dpp_iterated(C: DppKernel, pts, x1, x2, seed: int = 0, name: str | None = None,
                       tol: float = EXACT_TOLERANCE) -> IdentityReport:
    """Two-step Palm kernel reproduces ``det[C](pts + {x1, x2})``."""
    pts = as_points(pts)
    x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
    lhs = float(np.linalg.det(C.gram(np.vstack([pts, x1, x2]))))
    c1 = dpp_palm_kernel(C, x1)
    c12 = dpp_palm_kernel(c1, x2)
    rhs = float(C.gram(x1[None])[0, 0] * c1.gram(x2[None])[0, 0] * np.linalg.det(c12.gram(pts)))
    return exact_report(name or "dpp_palm_iterated", lhs, rhs, 1, seed, tol)


def random_dpp_case(g: np.random.Generator, window: Window | None = None):
    """A random PSD kernel with 1-6 points and a conditioning point, all distinct."""
    window = window or Window.unit()
    if g.random() < 0.5:
        alpha = g.uniform(0.05, 0.3)
        kernel = GaussianDppKernel(g.uniform(0.2, 1.0) / (math.pi * alpha ** 2), alpha, window)
    else:
        kernel = FeatureDppKernel.random(g, int(g.integers(8, 40)), g.uniform(0.5, 5.0), window)
    k = int(g.integers(1, 7))
    pts = window.uniform(g, k + 2)
    return kernel, pts[:k], pts[k], pts[k + 1]


def _worst_exact(name: str, cases: int, rng: RngStream, build: Callable, tol: float) -> IdentityReport:
    worst = None
    for i in range(cases):
        rep = build(rng.child(i).generator())
        rel = abs(rep.lhs - rep.rhs) / max(abs(rep.lhs), abs(rep.rhs), 1e-300)
        if worst is None or rel > worst[0]:
            worst = (rel, rep)
    rep = worst[1]
    return exact_report(name, rep.lhs, rep.rhs, cases, rng.seed, tol)


def check_dpp_random(cases: int, rng: RngStream, rhs_scale: float = 1.0, iterated: bool = False,
                     tol: float = EXACT_TOLERANCE, name: str | None = None) -> IdentityReport:
    """Worst relative error of the Palm determinant identity over random kernels and point sets."""
    def build(g):
        kernel, pts, x1, x2 = random_dpp_case(g)
        rep = check_dpp_iterated(kernel, pts, x1, x2) if iterated else check_dpp_identities(kernel, pts, x1)
        return make_report(rep.name, rep.lhs, rhs_scale * rep.rhs, 0.0, 1, rng.seed)

    label = name or ("dpp_palm_iterated" if iterated else "dpp_palm_determinant")
    return _worst_exact(label, cases, rng, build, tol)


# ---------------------------------------------------------------- suites

@dataclass(frozen=True)
class Check:
    name: str
    suite: str
    default_reps: int
    run: Callable[[RngStream, int, float, object], IdentityReport]

    def stream(self, seed: int) -> RngStream:
        return RngStream(seed, zlib.crc32(self.name.encode()))


UNIT = Window.unit()
POISSON_50 = PoissonModel(constant(50.0))
LGCP_DEFAULT = LgcpModel(constant(math.log(50.0) - 0.5), CovarianceModel("exponential", 1.0, 0.2))
STRAUSS_DEFAULT = StraussModel(0.0, math.log(2.0), 0.1, UNIT)
STRAUSS_DENSE = StraussModel(-math.log(50.0), math.log(2.0), 0.1, UNIT)
STRAUSS_FREE = StraussModel(-math.log(50.0), 0.0, 0.1, UNIT)
THOMAS_DEFAULT = SncpModel(25.0, 4.0, ThomasKernel(0.03))
MATERN_DEFAULT = SncpModel(25.0, 4.0, MaternClusterKernel(0.05))


def _slivnyak(name, h, n, model=POISSON_50):
    return Check(name, "poisson", 10_000,
                 lambda rng, reps, s, t: check_slivnyak(model, h, n, reps, rng, UNIT, s, t, name))


def _build_checks() -> list[Check]:
    checks = [
        _slivnyak("slivnyak_n1_constant", Constant(), 1),
        _slivnyak("slivnyak_n1_neighbour_count", NeighbourCount(0.1, 50), 1),
        _slivnyak("slivnyak_n1_no_neighbour", NoNeighbour(0.05), 1),
        _slivnyak("slivnyak_n2_constant", Constant(order=2), 2),
        _slivnyak("slivnyak_n2_pair_within", PairWithin(0.1), 2),
        _slivnyak("slivnyak_n2_pair_isolated", PairIsolated(0.2, 0.05), 2),
        _slivnyak("slivnyak_n1_empty_rho1", IsEmpty(), 1, PoissonModel(constant(1.0))),
        Check("factorial_moment_rho10", "poisson", 10_000,
              lambda rng, reps, s, t: check_factorial_moment(PoissonModel(constant(10.0)), reps, rng, UNIT, s, t,
                                                             "factorial_moment_rho10")),
        Check("campbell_mecke_poisson_n1", "poisson", 10_000,
              lambda rng, reps, s, t: check_campbell_mecke(POISSON_50, Constant(), 1, reps, rng, UNIT, s, t,
                                                           name="campbell_mecke_poisson_n1")),
        Check("campbell_mecke_lgcp_n1", "lgcp", 2000,
              lambda rng, reps, s, t: check_campbell_mecke(LGCP_DEFAULT, NeighbourCount(0.1, 50), 1, reps, rng,
                                                           UNIT, s, t, name="campbell_mecke_lgcp_n1")),
        Check("campbell_mecke_lgcp_n2", "lgcp", 2000,
              lambda rng, reps, s, t: check_campbell_mecke(LGCP_DEFAULT, Constant(order=2), 2, reps, rng,
                                                           UNIT, s, t, name="campbell_mecke_lgcp_n2")),
        Check("campbell_mecke_lgcp_n2_palm_count", "lgcp", 2000,
              lambda rng, reps, s, t: check_campbell_mecke(LGCP_DEFAULT, PairNeighbourCount(0.1, 3), 2, reps,
                                                           rng, UNIT, s, t,
                                                           name="campbell_mecke_lgcp_n2_palm_count")),
        Check("lgcp_palm_closure", "lgcp", 2000,
              lambda rng, reps, s, t: check_lgcp_closure(LGCP_DEFAULT, (0.4, 0.55), reps, rng, UNIT, 0.2, s,
                                                         name="lgcp_palm_closure")),
        Check("lgcp_palm_thinning", "lgcp", 2000,
              lambda rng, reps, s, t: check_lgcp_thinning(LGCP_DEFAULT, (0.4, 0.55), reps, rng, UNIT, s,
                                                          name="lgcp_palm_thinning")),
        Check("gnz_strauss_constant", "gibbs", 2000,
              lambda rng, reps, s, t: check_gnz(STRAUSS_DEFAULT, Constant(), reps, rng, rhs_scale=s, threads=t,
                                                name="gnz_strauss_constant")),
        Check("gnz_strauss_disc", "gibbs", 2000,
              lambda rng, reps, s, t: check_gnz(STRAUSS_DEFAULT, InDisk((0.5, 0.5), 0.25), reps, rng,
                                                rhs_scale=s, threads=t, name="gnz_strauss_disc")),
        Check("gnz_strauss_dense_neighbours", "gibbs", 2000,
              lambda rng, reps, s, t: check_gnz(STRAUSS_DENSE, NeighbourCount(0.1, 50), reps, rng,
                                                rhs_scale=s, threads=t, name="gnz_strauss_dense_neighbours")),
        Check("gnz_strauss_poisson_reduction", "gibbs", 2000,
              lambda rng, reps, s, t: check_gnz(STRAUSS_FREE, Constant(), reps, rng, rhs_scale=s, threads=t,
                                                name="gnz_strauss_poisson_reduction")),
        Check("campbell_mecke_thomas_n1", "sncp", 2000,
              lambda rng, reps, s, t: check_campbell_mecke(THOMAS_DEFAULT, HasNeighbour(0.05), 1, reps, rng,
                                                           UNIT, s, t, name="campbell_mecke_thomas_n1")),
        Check("campbell_mecke_matern_n1", "sncp", 2000,
              lambda rng, reps, s, t: check_campbell_mecke(MATERN_DEFAULT, HasNeighbour(0.05), 1, reps, rng,
                                                           UNIT, s, t, name="campbell_mecke_matern_n1")),
        Check("dpp_palm_determinant", "dpp", 100,
              lambda rng, reps, s, t: check_dpp_random(reps, rng, s, name="dpp_palm_determinant")),
        Check("dpp_palm_iterated", "dpp", 100,
              lambda rng, reps, s, t: check_dpp_random(reps, rng, s, iterated=True, name="dpp_palm_iterated")),
    ]
    return checks


CHECKS = _build_checks()
SUITES = ("default", "poisson", "lgcp", "gibbs", "sncp", "dpp")


def suite_checks(suite: str) -> list[Check]:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    return [c for c in CHECKS if suite == "default" or c.suite == suite]


def run_suite(suite: str, seed: int, reps: int | None = None, rhs_scale: float = 1.0,
              threads=None, names: Sequence[str] | None = None) -> list[IdentityReport]:
    """Run every check of ``suite``; ``reps`` overrides each check's default replicate count."""
    out = []
    for check in suite_checks(suite):
        if names is not None and check.name not in names:
            continue
        out.append(check.run(check.stream(seed), reps or check.default_reps, rhs_scale, threads))
    return out
