import math

import numpy as np
import pytest

from palmkit.core import Window
from palmkit.models import (ClusterAugmented, CovarianceModel, LgcpModel, LinearField, PoissonModel, SncpModel,
                            StraussModel, ThomasKernel, constant)
from palmkit.rng import RngStream, replicate_map
from palmkit.simulate import (SamplingError, StraussChain, cell_centers, sample_extra_cluster, sample_gaussian_field,
                              sample_lgcp, sample_lgcp_batch, sample_neyman_scott, sample_poisson, sample_strauss,
                              simulate)
from palmkit.summaries import estimate_G, estimate_K

from conftest import within_3se

UNIT = Window.unit()
EXP = CovarianceModel("exponential", 1.0, 0.2)


def counts(fn, n, seed):
    return np.array(replicate_map(lambda g: len(fn(g)), n, RngStream(seed)), dtype=float)


def test_poisson_zero_intensity():
    assert len(sample_poisson(0.0, UNIT, RngStream(1))) == 0


def test_poisson_unit_rate_mean_and_dispersion():
    c = counts(lambda g: sample_poisson(1.0, UNIT, g), 10_000, 2)
    ok, *_ = within_3se(c, 1.0)
    assert ok
    # index of dispersion: var/mean, SE from the delta method for Poisson(1)
    disp = c.var(ddof=1) / c.mean()
    assert abs(disp - 1) <= 3 * math.sqrt(2 / len(c))


def test_poisson_linear_intensity():
    m = PoissonModel(LinearField(0.0, (2.0, 0.0)))
    ok, *_ = within_3se(counts(lambda g: sample_poisson(m, UNIT, g), 10_000, 3), 1.0)
    assert ok


def test_poisson_bad_bound():
    with pytest.raises(SamplingError):
        sample_poisson(PoissonModel(lambda u: 2 * u[..., 0]), UNIT, RngStream(1), rho_max=1.0)


def test_gaussian_field_degenerate_variance():
    cov = CovarianceModel("exponential", 1e-12, 0.2)
    f = sample_gaussian_field(constant(0.3), cov, UNIT, (16, 16), RngStream(4))
    assert np.max(np.abs(f.values - 0.3)) < 1e-4


def test_gaussian_field_moments():
    res = (16, 16)
    centers = cell_centers(UNIT, res)
    i = 0
    j = int(np.argmin(np.abs(np.linalg.norm(centers - centers[i], axis=1) - 0.1875)))
    vals = np.array(replicate_map(lambda g: sample_gaussian_field(constant(0.0), EXP, UNIT, res, g).values.ravel()[[i, j]],
                                  10_000, RngStream(5)))
    ok, *_ = within_3se(vals[:, 0] ** 2, 1.0)
    assert ok
    target = math.exp(-np.linalg.norm(centers[i] - centers[j]) / 0.2)
    ok, *_ = within_3se(vals[:, 0] * vals[:, 1], target)
    assert ok


def test_lgcp_vanishing_intensity():
    m = LgcpModel(-30.0, EXP)
    assert all(len(sample_lgcp(m, UNIT, (32, 32), RngStream(6).child(i))) == 0 for i in range(200))


def test_lgcp_mean_count():
    mean = np.zeros(64 * 64)
    gens = [RngStream(7).child(i).generator() for i in range(10_000)]
    c = np.array([len(x) for x in sample_lgcp_batch(mean, EXP, UNIT, (64, 64), gens)], dtype=float)
    ok, *_ = within_3se(c, math.exp(0.5))
    assert ok


def test_lgcp_batch_matches_single():
    m = LgcpModel(1.0, EXP)
    gens = [RngStream(8).child(i).generator() for i in range(3)]
    batch = sample_lgcp_batch(np.full(32 * 32, 1.0), EXP, UNIT, (32, 32), gens)
    single = [sample_lgcp(m, UNIT, (32, 32), RngStream(8).child(i)) for i in range(3)]
    assert all(np.array_equal(a.points, b.points) for a, b in zip(batch, single))


def test_neyman_scott_counts():
    m = SncpModel(25, 4, ThomasKernel(0.03))
    ok, *_ = within_3se(counts(lambda g: sample_neyman_scott(m, UNIT, g), 4000, 9), 100)
    assert ok
    tiny = SncpModel(25, 1e-9, ThomasKernel(0.03))
    assert all(len(sample_neyman_scott(tiny, UNIT, RngStream(9).child(i))) == 0 for i in range(1000))


def test_neyman_scott_clustering():
    m = SncpModel(25, 4, ThomasKernel(0.03))
    k = np.array(replicate_map(lambda g: estimate_K(sample_neyman_scott(m, UNIT, g), [0.1]).estimate[0],
                               500, RngStream(10)))
    se = k.std(ddof=1) / math.sqrt(len(k))
    assert k.mean() - math.pi * 0.01 > 3 * se


def test_extra_cluster():
    m = SncpModel(25, 4, ThomasKernel(0.03))
    x = np.array([0.5, 0.5])
    big = Window((-10, -10), (10, 10))
    clusters = replicate_map(lambda g: sample_extra_cluster(m, x, g, big), 4000, RngStream(11))
    ok, *_ = within_3se([len(c) for c in clusters], 4)
    assert ok
    sq = np.concatenate([np.sum((c.points - x) ** 2, axis=1) for c in clusters])
    ok, *_ = within_3se(sq, 4 * 0.03 ** 2)
    assert ok
    tiny = SncpModel(25, 1e-9, ThomasKernel(0.03))
    assert all(len(sample_extra_cluster(tiny, x, RngStream(11).child(i), UNIT)) == 0 for i in range(1000))


def test_cluster_augmented_contains_base_count():
    m = SncpModel(25, 4, ThomasKernel(0.03))
    aug = ClusterAugmented(m, (0.5, 0.5))
    c = counts(lambda g: simulate(aug, UNIT, g), 4000, 12)
    assert c.mean() > 100


def chain_counts(m, seed, n=1000, thin=100, burn=20_000, init=None):
    chain = StraussChain(m, RngStream(seed), init)
    chain.run(burn)
    return np.array([len(x) for x in chain.samples(n, thin)], dtype=float)


def batch_mean_se(c, batches=20):
    means = np.array([b.mean() for b in np.array_split(c, batches)])
    return c.mean(), means.std(ddof=1) / math.sqrt(batches)


def test_strauss_poisson_reduction():
    m = StraussModel(-math.log(30), 0.0, 0.1, UNIT)
    mean, se = batch_mean_se(chain_counts(m, 13))
    assert abs(mean - 30) <= 3 * se


def test_strauss_hard_core():
    m = StraussModel(-math.log(80), math.inf, 0.05, UNIT)
    x = sample_strauss(m, 50_000, RngStream(14))
    d = np.linalg.norm(x.points[:, None] - x.points[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    assert len(x) > 10 and d.min() > 0.05


def test_strauss_inhibition_in_G():
    m = StraussModel(-math.log(100), math.log(2), 0.1, UNIT)
    chain = StraussChain(m, RngStream(15))
    chain.run(100_000)
    samples = list(chain.samples(300, 300))
    g_strauss = np.array([estimate_G(x, [0.05]).estimate[0] for x in samples])
    rho = np.mean([len(x) for x in samples])
    g_pois = np.array(replicate_map(lambda g: estimate_G(sample_poisson(rho, UNIT, g), [0.05]).estimate[0],
                                    300, RngStream(16)))
    se = math.hypot(g_strauss.std(ddof=1), g_pois.std(ddof=1)) / math.sqrt(300)
    assert g_pois.mean() - g_strauss.mean() > 3 * se


def test_strauss_chain_start_invariance():
    m = StraussModel(-math.log(50), math.log(2), 0.1, UNIT)
    a, se_a = batch_mean_se(chain_counts(m, 17))
    b, se_b = batch_mean_se(chain_counts(m, 18, init=sample_poisson(50, UNIT, RngStream(18, 1))))
    assert abs(a - b) <= 3 * math.hypot(se_a, se_b)


@pytest.mark.parametrize("model", [PoissonModel(30.0), LgcpModel(3.0, EXP), SncpModel(25, 4, ThomasKernel(0.03)),
                                   StraussModel(-math.log(30), math.log(2), 0.1, UNIT)])
def test_determinism_and_thread_independence(model, monkeypatch):
    def run(threads):
        monkeypatch.setenv("PALMKIT_THREADS", str(threads))
        return replicate_map(lambda g: simulate(model, UNIT, g, resolution=(32, 32), steps=2000), 6, RngStream(19))
    a, b = run(1), run(4)
    assert all(np.array_equal(p.points, q.points) for p, q in zip(a, b))
    assert any(len(p) for p in a)
    for p in a:
        assert np.all(UNIT.contains(p.points)) and len(np.unique(p.points, axis=0)) == len(p)
