import numpy as np
import pytest
from scipy import optimize, stats

from bayesurv.core import CensorKind, TimePartition
from bayesurv.mcmc import ModelTarget
from bayesurv.models import FAMILIES, ModelSpec
from bayesurv.quantities import cif_per_draw, p11_single
from bayesurv.simulate import SimScenario, default_scenario, piecewise_inverse, simulate


@pytest.mark.parametrize("family", FAMILIES)
def test_simulation_is_deterministic(family):
    a = simulate(default_scenario(family, 50, seed=4))
    b = simulate(default_scenario(family, 50, seed=4))
    np.testing.assert_array_equal(a.lower, b.lower)
    np.testing.assert_array_equal(a.X, b.X)
    c = simulate(default_scenario(family, 50, seed=5))
    assert not np.array_equal(a.lower, c.lower)


def test_censoring_rate_is_met():
    sc = default_scenario("aft", 2000, seed=1)
    data = simulate(sc)
    assert np.mean(data.kinds == CensorKind.RIGHT) == pytest.approx(0.3, abs=0.01)


def test_piecewise_inverse_round_trip():
    knots = np.array([0.0, 1.0, 2.0, 3.0])
    lam = np.array([0.2, 0.4, 0.3])
    e = np.array([0.1, 0.2, 0.5, 0.85])
    t = piecewise_inverse(e, knots, lam)
    H = np.array([np.sum(lam * np.clip(ti - knots[:-1], 0, np.diff(knots))) for ti in t])
    np.testing.assert_allclose(H, e, rtol=1e-12)


def test_scenario_validation():
    with pytest.raises(ValueError):
        SimScenario("aft", {}, 0)
    with pytest.raises(ValueError):
        simulate(SimScenario("weird", {}, 5))


def _mle(family, n, seed, structure):
    sc = default_scenario(family, n, seed)
    data = simulate(sc)
    if family == "ph":
        structure = {"partition": TimePartition(sc.options["knots"])}
    target = ModelTarget(ModelSpec(family, structure=structure), data)
    z0 = target.central_z()
    res = optimize.minimize(lambda z: -target.log_density(z, None), z0, method="BFGS")
    vals, _ = target.layout.untransform(res.x)
    return sc.params, vals


@pytest.mark.parametrize("family,structure", [
    ("aft", {}), ("ph", {}), ("cure", {}), ("competing_risks", {}),
    ("illness_death", {"exposure": "state1"}),
])
def test_large_sample_mode_near_truth(family, structure):
    # with 20000 subjects the vague-prior mode sits within a few hundredths of the truth
    truth, est = _mle(family, 20000, 11, structure)
    for name, value in truth.items():
        np.testing.assert_allclose(np.asarray(est[name]), np.asarray(value), atol=0.08, err_msg=name)


def test_joint_visits_before_event():
    data = simulate(default_scenario("joint", 100, seed=2))
    ex = data.extras
    T = data.time
    assert np.all(ex["long_time"] < T[ex["long_subject"]])
    counts = np.bincount(ex["long_subject"], minlength=len(data))
    assert np.all(counts >= 1)
    np.testing.assert_allclose(np.unique(ex["long_time"]) % 1.0, 0.0)


def test_frailty_groups_of_two():
    data = simulate(default_scenario("frailty", 101, seed=0))
    assert data.extras["n_groups"] == 50
    assert np.all(np.bincount(data.extras["group"]) == 2)


def test_unit_exponential_survival_at_one():
    data = simulate(SimScenario("aft", {"beta": [0.0], "alpha": 1.0}, 100_000, {}, seed=21))
    assert data.delta.all()
    assert abs(np.mean(data.time > 1.0) - np.exp(-1.0)) < 0.005


def test_certain_cure_gives_no_events():
    sc = SimScenario("cure", {"betaC": [50.0, 0.0], "betaU": [0.3], "lambda": 0.5, "alpha": 1.0},
                     500, {"admin": 5.0}, seed=2)
    assert simulate(sc).delta.sum() == 0


def test_weibull_times_pass_ks():
    beta, alpha = 0.3, 1.4
    data = simulate(SimScenario("aft", {"beta": [beta], "alpha": alpha}, 10_000, {}, seed=22))
    rate = np.exp(-alpha * beta)
    res = stats.kstest(data.time, lambda t: -np.expm1(-rate * t ** alpha))
    assert res.statistic < 0.02


def test_competing_risks_fractions_match_cif():
    lam, alpha = np.array([0.2, 0.1]), np.array([1.2, 0.8])
    beta = np.zeros((2, 2))
    horizon = 3.0
    sc = SimScenario("competing_risks", {"beta": beta, "lambda": lam, "alpha": alpha}, 100_000,
                     {"admin": horizon}, seed=23)
    data = simulate(sc)
    labels = data.event_labels
    for k in (1, 2):
        F = cif_per_draw(k, horizon, np.zeros(2), beta[None], lam[None], alpha[None])[0]
        assert abs(np.mean(labels == k) - F) < 0.01


def test_illness_death_state1_fraction_matches_p11():
    lam, alpha = np.array([0.3, 0.15, 0.2]), np.array([0.9, 1.2, 1.1])
    sc = SimScenario("illness_death", {"beta": np.zeros((2, 3)), "lambda": lam, "alpha": alpha},
                     100_000, {"admin": 50.0}, seed=24)
    data = simulate(sc)
    t1 = data.extras["t1"]
    for t in (0.5, 1.5, 3.0):
        assert abs(np.mean(t1 > t) - p11_single(0.0, t, lam, alpha)) < 0.01
