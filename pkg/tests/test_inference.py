import math
from dataclasses import dataclass

import numpy as np
import pytest

from palmkit.core import PointPattern, Window
from palmkit.inference import (FitError, PalmFitProblem, ThomasFamily, fit_palm, nelder_mead_max, palm_loglik,
                               palm_score)
from palmkit.models import SncpModel, ThomasKernel
from palmkit.rng import RngStream, replicate_map
from palmkit.simulate import sample_neyman_scott, sample_poisson

UNIT = Window.unit()
THOMAS = SncpModel(25, 4, ThomasKernel(0.03))


@dataclass(frozen=True)
class FlatFamily:
    name: str = "flat"
    params: tuple = ("dummy",)

    def g0(self, r, theta):
        return np.ones_like(np.asarray(r, dtype=float))

    def default_bounds(self, rho, R):
        return ((0.0, 1.0),)


def analytic_thomas_score(p, kappa, sigma):
    """Independent closed-form gradient of the Thomas Palm log-likelihood."""
    d = p.pair_distances
    s2 = sigma * sigma
    q = np.exp(-d * d / (4 * s2)) / (4 * math.pi * s2)
    g = 1 + q / kappa
    dg_dk = -q / kappa ** 2
    dg_ds = q * (d * d / (2 * sigma ** 3) - 2 / sigma) / kappa
    tail = math.exp(-p.R ** 2 / (4 * s2))
    dI_dk = -(1 - tail) / kappa ** 2
    dI_ds = -tail * p.R ** 2 / (2 * sigma ** 3) / kappa
    c = p.n_inner * p.rho
    return np.array([np.sum(dg_dk / g) - c * dI_dk, np.sum(dg_ds / g) - c * dI_ds])


def test_empty_eroded_pattern():
    x = PointPattern([(0.05, 0.05), (0.95, 0.9)], UNIT)
    p = PalmFitProblem(x, 0.1)
    assert p.n_inner == 0
    assert palm_loglik(p, (25, 0.03)) == 0.0
    assert np.all(palm_score(p, (25, 0.03)) == 0)


def test_flat_family_hand_value():
    x = PointPattern([(0.5, 0.5), (0.55, 0.5), (0.95, 0.5)], UNIT)
    p = PalmFitProblem(x, 0.1, rho=3.0, family=FlatFamily())
    # ordered pairs with the first point inside [0.1, 0.9]^2: (1,2) and (2,1); both first points are inner
    assert p.n_inner == 2 and len(p.pair_distances) == 2
    expected = 2 * math.log(3.0) - 2 * 3.0 * math.pi * 0.01
    assert palm_loglik(p, (0.5,)) == pytest.approx(expected, rel=1e-12)


def test_thomas_single_pair_hand_value():
    r0, kappa, sigma, rho = 0.04, 20.0, 0.025, 50.0
    # one point in W - R, its partner at distance r0 outside W - R
    x = PointPattern([(0.87, 0.5), (0.87 + r0, 0.5)], UNIT)
    p = PalmFitProblem(x, 0.1, rho=rho)
    assert p.n_inner == 1 and len(p.pair_distances) == 1
    g = 1 + math.exp(-r0 ** 2 / (4 * sigma ** 2)) / (4 * math.pi * sigma ** 2 * kappa)
    integral = math.pi * 0.01 + (1 - math.exp(-0.01 / (4 * sigma ** 2))) / kappa
    expected = math.log(rho * g) - rho * integral
    assert palm_loglik(p, (kappa, sigma)) == pytest.approx(expected, rel=1e-10)


def test_score_matches_analytic_five_points():
    x = PointPattern([(0.4, 0.4), (0.43, 0.41), (0.45, 0.38), (0.6, 0.6), (0.62, 0.57)], UNIT)
    p = PalmFitProblem(x, 0.1, rho=60.0)
    theta = (30.0, 0.03)
    assert np.allclose(palm_score(p, theta), analytic_thomas_score(p, *theta), rtol=1e-6, atol=0)


@pytest.mark.parametrize("seed", range(5))
def test_score_matches_analytic_random(seed):
    x = sample_neyman_scott(THOMAS, UNIT, RngStream(seed))
    p = PalmFitProblem(x, 0.1)
    g = np.random.default_rng(seed)
    theta = (g.uniform(5, 80), g.uniform(0.01, 0.08))
    assert np.allclose(palm_score(p, theta), analytic_thomas_score(p, *theta), rtol=1e-6, atol=1e-6)


def test_score_unbiased_at_truth():
    scores = np.array(replicate_map(
        lambda g: palm_score(PalmFitProblem(sample_neyman_scott(THOMAS, UNIT, g), 0.1, rho=100.0), (25, 0.03)),
        200, RngStream(41)))
    mean = scores.mean(axis=0)
    se = scores.std(axis=0, ddof=1) / math.sqrt(len(scores))
    assert np.all(np.abs(mean) <= 3 * se)


def test_loglik_translation_invariant():
    x = sample_neyman_scott(THOMAS, UNIT, RngStream(5))
    a = palm_loglik(PalmFitProblem(x, 0.1), (25, 0.03))
    b = palm_loglik(PalmFitProblem(x.translate([3.25, -1.5]), 0.1), (25, 0.03))
    assert b == pytest.approx(a, rel=1e-12)


def test_fit_equivariance():
    x = sample_neyman_scott(THOMAS, UNIT, RngStream(6))
    s = 2.0
    fit = fit_palm(PalmFitProblem(x, 0.1), (20, 0.04))
    fit_s = fit_palm(PalmFitProblem(x.scale(s), 0.1 * s), (20 / s ** 2, 0.04 * s))
    assert fit_s.theta[0] == pytest.approx(fit.theta[0] / s ** 2, rel=1e-6)
    assert fit_s.theta[1] == pytest.approx(fit.theta[1] * s, rel=1e-6)


def test_fit_large_pattern_consistency():
    # kappa = 25, sigma = 0.03 with gamma = 40 on a 2 x 2 window gives about 4000 events
    W = Window((0, 0), (2, 2))
    m = SncpModel(25, 40, ThomasKernel(0.03))
    errs = []
    for seed in range(100, 105):
        fit = fit_palm(PalmFitProblem(sample_neyman_scott(m, W, RngStream(seed)), 0.1), (25, 0.03))
        assert fit.report.converged
        errs.append(np.abs(fit.theta - [25, 0.03]) / [25, 0.03])
    assert np.all(np.median(errs, axis=0) < 0.10)


def test_fit_poisson_data_hits_boundary():
    flagged = []
    for seed in range(8):
        x = sample_poisson(100.0, UNIT, RngStream(200 + seed))
        fit = fit_palm(PalmFitProblem(x, 0.1), (25, 0.03))
        flagged.append(fit.report.boundary_solution)
    assert sum(flagged) >= len(flagged) / 2


def test_fit_errors():
    x = sample_neyman_scott(THOMAS, UNIT, RngStream(7))
    with pytest.raises(FitError):
        PalmFitProblem(x, 0.6)
    p = PalmFitProblem(x, 0.1)
    with pytest.raises(FitError):
        fit_palm(p, (25, 0.5))
    with pytest.raises(FitError):
        palm_loglik(p, (25, 0.5))
    with pytest.raises(FitError):
        PalmFitProblem(PointPattern.empty(UNIT), 0.1)


def test_nelder_mead_box():
    f = lambda x: -((x[0] - 3) ** 2 + (x[1] + 1) ** 2)
    best, val, conv, *_ = nelder_mead_max(f, (0.5, 0.5), ((0, 10), (0, 10)))
    assert conv and best[0] == pytest.approx(3, rel=1e-5) and best[1] == 0.0
    best, *_ = nelder_mead_max(lambda x: -np.sum((x - [1.5, 2.5]) ** 2), (1, 1), ((0, 5), (0, 5)))
    assert best == pytest.approx([1.5, 2.5], rel=1e-5)
