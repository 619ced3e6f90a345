import math

import numpy as np
import pytest
from scipy import stats

from bayesurv.core import TimePartition
from bayesurv.likelihoods import _mvn_logpdf_rows
from bayesurv.models import FAMILIES, ModelSpec, log_posterior
from bayesurv.priors import Gamma, InvWishart, Normal, Uniform, log_prior, prior_from_dict
from support import random_values, small_case


def test_normal_prior_uses_precision():
    p = Normal(0.0, 0.001)
    x = np.array([1.0, -30.0])
    assert p.logpdf(x) == pytest.approx(stats.norm(0, 1 / math.sqrt(0.001)).logpdf(x).sum())


def test_gamma_prior_shape_rate():
    p = Gamma(0.01, 0.01)
    assert p.logpdf(2.5) == pytest.approx(stats.gamma(0.01, scale=100).logpdf(2.5), rel=1e-12)
    assert p.logpdf(-1.0) == -math.inf


def test_uniform_prior_support():
    p = Uniform(0, 10)
    assert p.logpdf(3.0) == pytest.approx(-math.log(10))
    assert p.logpdf(10.5) == -math.inf
    assert p.logpdf(np.array([1.0, 2.0])) == pytest.approx(-2 * math.log(10))


def test_inverse_wishart_matches_scipy():
    p = InvWishart(((1.0, 0.0), (0.0, 1.0)), 2.0)
    S = np.array([[0.5, 0.1], [0.1, 0.2]])
    assert p.logpdf(S) == pytest.approx(stats.invwishart(df=2, scale=np.eye(2)).logpdf(S), rel=1e-12)
    assert p.logpdf(np.array([[1.0, 2.0], [2.0, 1.0]])) == -math.inf
    with pytest.raises(ValueError):
        InvWishart(((1.0, 0.0), (0.0, 1.0)), 0.5)


def test_prior_from_dict_and_log_prior():
    assert prior_from_dict({"dist": "gamma", "shape": 1, "rate": 0.1}) == Gamma(1, 0.1)
    assert prior_from_dict({"dist": "Uniform", "lower": 0, "upper": 5}) == Uniform(0, 5)
    with pytest.raises(ValueError):
        prior_from_dict({"dist": "cauchy"})
    spec = {"a": Normal(), "b": Gamma(2, 1)}
    assert log_prior({"a": 0.0, "b": -1.0}, spec) == -math.inf


def test_unknown_family_rejected():
    with pytest.raises(ValueError, match="unknown model family"):
        ModelSpec("weibull_mixture")


def test_default_priors_per_block():
    spec, data, _ = small_case("joint", 0)
    priors = {b.name: b.prior for b in spec.model.blocks(data)}
    assert priors["betaL"] == Normal(0, 0.001)
    assert priors["alpha"] == Uniform(0, 10)
    assert priors["sigma"] == Uniform(0, 100)
    assert isinstance(priors["Sigma"], InvWishart) and priors["Sigma"].df == 2
    spec, data, _ = small_case("ph", 0)
    priors = {b.name: b.prior for b in spec.model.blocks(data)}
    assert priors["lambda"] == Gamma(0.01, 0.01)


def test_prior_override():
    spec, data, _ = small_case("aft", 0)
    spec = ModelSpec("aft", priors={"alpha": Gamma(1, 1)})
    assert {b.name: b.prior for b in spec.model.blocks(data)}["alpha"] == Gamma(1, 1)


def test_matrix_labels_are_column_major():
    spec, data, _ = small_case("competing_risks", 0)
    beta = [b for b in spec.model.blocks(data) if b.name == "beta"][0]
    assert beta.labels[:3] == ["beta[1,1]", "beta[2,1]", "beta[1,2]"]
    value = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(beta.stored(value), [1.0, 3.0, 2.0, 4.0])


@pytest.mark.parametrize("family", FAMILIES)
def test_log_posterior_is_prior_plus_loglik(family):
    spec, data, sc = small_case(family, 1)
    values = random_values(family, sc, data, np.random.default_rng(1))
    lp = log_posterior(values, data, spec)
    expected = spec.model.log_prior(values, data) + spec.model.loglik(values, data)
    assert lp == pytest.approx(expected, rel=1e-13)


def test_log_posterior_outside_support():
    spec, data, sc = small_case("aft", 1)
    values = random_values("aft", sc, data, np.random.default_rng(1))
    values["alpha"] = 11.0
    assert log_posterior(values, data, spec) == -math.inf


def test_joint_shift_move_keeps_predictors():
    spec, data, sc = small_case("joint", 2)
    v = random_values("joint", sc, data, np.random.default_rng(2))
    d = 0.37
    moved = dict(v)
    moved["betaL"] = v["betaL"] + np.array([d, 0.0, 0.0])
    moved["betaS"] = v["betaS"] + np.array([v["gamma"] * d, 0.0])
    moved["b"] = v["b"] - np.array([d, 0.0])
    model = spec.model

    def data_terms(vals):
        return model.loglik(vals, data) - _mvn_logpdf_rows(vals["b"], vals["Sigma"]).sum()

    assert data_terms(moved) == pytest.approx(data_terms(v), rel=1e-12)
    assert model.shift_moves(data)[0] == ("betaL", 0, 0, ("betaS", 0, "gamma"))


def test_frailty_shift_move_keeps_rates():
    spec, data, sc = small_case("frailty", 2, mixed=False)
    v = random_values("frailty", sc, data, np.random.default_rng(2))
    spec = ModelSpec("frailty", structure={"variant": "normal"})
    v = {"beta": v["beta"], "alpha": v["alpha"], "tau": 1.5,
         "b": np.random.default_rng(3).normal(size=data.extras["n_groups"])}
    moved = dict(v, beta=v["beta"] + np.array([0.5, 0.0]), b=v["b"] - 0.5)
    tau = v["tau"]

    def data_terms(vals):
        latent = np.sum(0.5 * np.log(tau / (2 * math.pi)) - 0.5 * tau * vals["b"] ** 2)
        return spec.model.loglik(vals, data) - latent

    assert data_terms(moved) == pytest.approx(data_terms(v), rel=1e-12)


def test_ph_requires_partition():
    _, data, _ = small_case("ph", 0)
    with pytest.raises(ValueError, match="partition"):
        ModelSpec("ph").model.blocks(data)
    spec = ModelSpec("ph", structure={"partition": TimePartition([0, 1.5, 3.0])})
    assert [b.name for b in spec.model.blocks(data)] == ["beta", "lambda"]
