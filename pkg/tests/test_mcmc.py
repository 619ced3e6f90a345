import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bayesurv.core import CensoredObservation, DesignMatrix, SurvivalDataset, TimePartition
from bayesurv.mcmc import (
    ChainConfig,
    FunctionTarget,
    ModelTarget,
    ParamLayout,
    PosteriorSamples,
    run_chains,
    sample_target,
)
from bayesurv.models import Block, ModelSpec
from bayesurv.priors import Gamma, InvWishart, Normal, Uniform
from support import small_case


def _blocks():
    return [
        Block("beta", (2, 2), Normal(), ["beta[1,1]", "beta[2,1]", "beta[1,2]", "beta[2,2]"]),
        Block("lam", (2,), Gamma(), ["lam[1]", "lam[2]"]),
        Block("alpha", (), Uniform(0, 10), ["alpha"]),
        Block("Sigma", (2, 2), InvWishart(), ["Sigma[1,1]", "Sigma[1,2]", "Sigma[2,2]"]),
    ]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-4, 4), min_size=10, max_size=10))
def test_transform_round_trip(z):
    layout = ParamLayout(_blocks())
    z = np.asarray(z)
    vals, _ = layout.untransform(z)
    np.testing.assert_allclose(layout.transform(vals), z, atol=1e-9)
    assert 0 < vals["alpha"] < 10
    assert np.all(np.linalg.eigvalsh(vals["Sigma"]) > 0)


def _numeric_logjac(layout, z, name):
    """log |det d vec(value) / dz| restricted to the block's coordinates."""
    b = [blk for blk in layout.blocks if blk.name == name][0]
    o = layout.offsets[layout.blocks.index(b)]
    h = 1e-6

    def vec(zz):
        v = layout.untransform(zz)[0][name]
        return b.stored(v) if np.ndim(v) else np.array([v])

    J = np.empty((b.size, b.size))
    for i in range(b.size):
        e = np.zeros_like(z)
        e[o + i] = h
        J[:, i] = (vec(z + e) - vec(z - e)) / (2 * h)
    return np.linalg.slogdet(J)[1]


def test_transform_jacobians():
    layout = ParamLayout(_blocks())
    z = np.random.default_rng(0).normal(size=layout.dim) * 0.5
    total = 0.0
    for b in layout.blocks:
        total += _numeric_logjac(layout, z, b.name)
    assert layout.untransform(z)[1] == pytest.approx(total, rel=1e-6)


def test_chain_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(n_chains=0)
    with pytest.raises(ValueError):
        ChainConfig(n_iter=5, thin=10)
    with pytest.raises(ValueError):
        ChainConfig(burn_in=-1)
    assert ChainConfig(n_iter=100, thin=10).n_draws == 10


def test_samples_shape_checks():
    with pytest.raises(ValueError):
        PosteriorSamples(["a"], np.zeros((2, 5, 2)))
    with pytest.raises(ValueError):
        PosteriorSamples(["a"], np.full((2, 5, 1), np.nan))
    s = PosteriorSamples(["a", "b"], np.arange(20.0).reshape(2, 5, 2))
    np.testing.assert_array_equal(s["a"], [0, 2, 4, 6, 8, 10, 12, 14, 16, 18])
    with pytest.raises(KeyError):
        s.index("c")


def _correlated_normal():
    cov = np.array([[1.0, 0.8], [0.8, 2.0]])
    prec = np.linalg.inv(cov)
    mean = np.array([1.0, -2.0])
    return FunctionTarget(lambda z: -0.5 * (z - mean) @ prec @ (z - mean), 2), mean, cov


def test_sampler_recovers_gaussian_moments():
    target, mean, cov = _correlated_normal()
    s = sample_target(target, ChainConfig(n_chains=2, burn_in=1000, n_iter=8000, thin=2, seed=3))
    x = s.pooled()
    np.testing.assert_allclose(x.mean(axis=0), mean, atol=0.1)
    np.testing.assert_allclose(np.cov(x, rowvar=False), cov, rtol=0.1, atol=0.05)
    for rates in s.acceptance["scalar"].values():
        assert all(0.1 <= r <= 0.7 for r in rates)


def test_seed_determinism():
    target, _, _ = _correlated_normal()
    cfg = ChainConfig(n_chains=2, burn_in=100, n_iter=200, thin=1, seed=11)
    a = sample_target(target, cfg).draws
    b = sample_target(target, cfg).draws
    c = sample_target(target, ChainConfig(n_chains=2, burn_in=100, n_iter=200, thin=1, seed=12)).draws
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a[0], a[1])


def test_thinning_and_draw_count():
    target, _, _ = _correlated_normal()
    s = sample_target(target, ChainConfig(n_chains=3, burn_in=10, n_iter=95, thin=10, seed=1))
    assert s.draws.shape == (3, 9, 2)


def test_conjugate_exponential_gamma():
    rng = np.random.default_rng(8)
    t = rng.exponential(1 / 0.7, size=60)
    c = 2.5
    obs = tuple(CensoredObservation.from_status(i, min(ti, c), int(ti <= c)) for i, ti in enumerate(t))
    data = SurvivalDataset(obs, DesignMatrix.empty(len(obs)))
    a0, b0 = 2.0, 1.0
    spec = ModelSpec("ph", priors={"lambda": Gamma(a0, b0)},
                     structure={"partition": TimePartition([0.0, c + 0.001])})
    s = run_chains(spec, data, ChainConfig(n_chains=2, burn_in=500, n_iter=4000, thin=1, seed=5))
    a, b = a0 + data.delta.sum(), b0 + data.time.sum()
    x = s["lambda[1]"]
    assert x.mean() == pytest.approx(a / b, rel=0.02)
    assert x.var() == pytest.approx(a / b ** 2, rel=0.1)


def test_latent_storage_option():
    spec, data, _ = small_case("frailty", 0, n=20, mixed=False)
    cfg = ChainConfig(n_chains=2, burn_in=20, n_iter=20, thin=1, seed=1, save_latents=False)
    s = run_chains(spec, data, cfg)
    assert not any(n.startswith("w[") for n in s.param_names)
    s = run_chains(spec, data, ChainConfig(n_chains=2, burn_in=20, n_iter=20, thin=1, seed=1))
    assert s.latent_mask.sum() == data.extras["n_groups"]
    assert "lambda" in s.global_names
    np.testing.assert_allclose(s["lambda"], np.exp(s["beta[1]"]))


def test_shift_move_indices_resolve():
    spec, data, _ = small_case("joint", 0, n=20)
    target = ModelTarget(spec, data)
    moves = target.shift_moves()
    labels = target.layout.labels
    j, k, jc, js = moves[0]
    assert (labels[j], k, labels[jc], labels[js]) == ("betaL[1]", 0, "betaS[1]", "gamma")
    assert labels[moves[1][0]] == "betaL[2]" and moves[1][2] == -1


def _std_normal_logpdf(z):
    return -0.5 * float(z @ z)


def test_workers_give_identical_draws():
    target = FunctionTarget(_std_normal_logpdf, 2)
    cfg = ChainConfig(n_chains=2, burn_in=50, n_iter=50, thin=1, seed=2)
    serial = sample_target(target, cfg).draws
    cfg_par = ChainConfig(n_chains=2, burn_in=50, n_iter=50, thin=1, seed=2, n_workers=2)
    np.testing.assert_array_equal(serial, sample_target(target, cfg_par).draws)


def test_init_failure_message():
    target = FunctionTarget(lambda z: -math.inf, 1)
    with pytest.raises(RuntimeError, match="not finite"):
        sample_target(target, ChainConfig(n_chains=1, burn_in=1, n_iter=1, thin=1))
