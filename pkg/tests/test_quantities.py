import math

import numpy as np
import pytest
from scipy import integrate

from bayesurv.quantities import (
    CurveGrid,
    check_probability,
    cif,
    cif_per_draw,
    cure_fraction,
    hazard_ratio,
    overall_survival,
    p11_single,
    p12_single,
    p13_p23,
    p22_single,
    relative_median,
    subsample_indices,
    transition_curves,
    uncured_survival_curve,
)


def _id_draws(rng, n):
    return {"beta": rng.normal(scale=0.3, size=(n, 2, 3)),
            "lambda": rng.uniform(0.05, 0.4, size=(n, 3)),
            "alpha": rng.uniform(0.6, 1.6, size=(n, 3))}


def _rates(draws, x, i):
    return draws["lambda"][i] * np.exp(np.asarray(x) @ draws["beta"][i])


def test_contrasts():
    beta = np.array([[0.5, -1.0], [0.0, 2.0]])
    np.testing.assert_allclose(relative_median([1, 0], [0, 1], beta), np.exp([1.5, -2.0]))
    np.testing.assert_allclose(hazard_ratio([1, 1], [1, 1], beta), [1.0, 1.0])
    with pytest.raises(ValueError):
        hazard_ratio([1, 0, 0], [0, 1, 0], beta)


def test_cure_fraction_is_expit():
    b = np.array([[-1.0, 0.4]])
    assert cure_fraction([1.0, 1.0], b)[0] == pytest.approx(1 / (1 + math.exp(0.6)))


def test_uncured_survival_curve():
    curve = uncured_survival_curve([0.0, 1.0, 2.0], np.array([0.5]), np.array([1.2]),
                                   np.array([[0.3]]), [1.0])
    rate = 0.5 * math.exp(0.3)
    np.testing.assert_allclose(curve.values, np.exp(-rate * np.array([0.0, 1.0, 2.0 ** 1.2])))
    assert curve.quantity == "uncured_survival"


def test_p11_matches_numerical_hazard_integral():
    rng = np.random.default_rng(0)
    draws = _id_draws(rng, 50)
    x = np.array([0.7, 1.0])
    pairs = [(s, s + dt) for s, dt in zip(rng.uniform(0, 5, 10), rng.uniform(0.1, 10, 10))]
    worst = 0.0
    for i in range(50):
        r, a = _rates(draws, x, i), draws["alpha"][i]
        for s, t in pairs:
            haz = lambda u: r[0] * a[0] * u ** (a[0] - 1) + r[1] * a[1] * u ** (a[1] - 1)  # noqa: E731
            H, _ = integrate.quad(haz, s, t, epsabs=0, epsrel=1e-13, limit=200)
            ref = math.exp(-H)
            worst = max(worst, abs(p11_single(s, t, r, a) - ref) / ref)
    assert worst < 1e-8


def test_p12_and_p22_match_direct_quadrature():
    rng = np.random.default_rng(1)
    draws = _id_draws(rng, 10)
    x = np.array([0.2, 1.0])
    for i in range(10):
        r, a = _rates(draws, x, i), draws["alpha"][i]
        s, t = 3.0, 9.0

        def f12(u):
            stay = r[0] * (u ** a[0] - s ** a[0]) + r[1] * (u ** a[1] - s ** a[1])
            return r[0] * a[0] * u ** (a[0] - 1) * math.exp(-stay - r[2] * (t - u) ** a[2])

        ref12, _ = integrate.quad(f12, s, t, epsabs=0, epsrel=1e-12, limit=200)
        assert p12_single(s, t, r, a) == pytest.approx(ref12, rel=1e-7)

        def f22(u):
            dens = r[0] * a[0] * u ** (a[0] - 1) * math.exp(-r[0] * u ** a[0])
            return dens * math.exp(-r[2] * ((t - u) ** a[2] - (s - u) ** a[2]))

        ref22, _ = integrate.quad(f22, 0, s, epsabs=0, epsrel=1e-12, limit=200)
        ref22 /= -math.expm1(-r[0] * s ** a[0])
        assert p22_single(s, t, r, a) == pytest.approx(ref22, rel=1e-7)


def test_transition_identities():
    rng = np.random.default_rng(2)
    draws = _id_draws(rng, 40)
    curves = transition_curves(np.linspace(0, 6, 7), [0.5, 1.0], draws, s_state2=2.0,
                               s_state1=1.0, subsample=None)
    v = {k: c.values for k, c in curves.items()}
    # complements are exact; only the re-summation rounds
    eps = np.finfo(float).eps
    np.testing.assert_allclose(v["p11"] + v["p12"] + v["p13"], 1.0, rtol=0, atol=4 * eps)
    np.testing.assert_allclose(v["p22"] + v["p23"], 1.0, rtol=0, atol=4 * eps)
    assert np.all(np.diff(v["p11"]) <= 0) and np.all(np.diff(v["p22"]) <= 0)
    assert v["p11"][0] == 1.0 and v["p12"][0] == 0.0 and v["p22"][0] == pytest.approx(1.0)


def test_transition_argument_checks():
    r, a = np.array([0.1, 0.1, 0.1]), np.ones(3)
    with pytest.raises(ValueError):
        p11_single(3.0, 2.0, r, a)
    with pytest.raises(ValueError):
        p22_single(0.0, 2.0, r, a)
    with pytest.raises(ValueError):
        p13_p23(0.8, 0.5, 0.5)


def _cr_draws(rng, n, K=3):
    return {"beta": rng.normal(scale=0.3, size=(n, 2, K)),
            "lambda": rng.uniform(0.05, 0.5, size=(n, K)),
            "alpha": rng.uniform(0.5, 2.0, size=(n, K))}


def test_cif_matches_direct_quadrature():
    rng = np.random.default_rng(3)
    d = _cr_draws(rng, 5)
    x = np.array([1.0, 0.4])
    t = 4.0
    F = cif_per_draw(2, t, x, d["beta"], d["lambda"], d["alpha"])
    for i in range(5):
        r = d["lambda"][i] * np.exp(x @ d["beta"][i])
        a = d["alpha"][i]

        def f(u):
            return r[1] * a[1] * u ** (a[1] - 1) * math.exp(-np.sum(r * u ** a))

        ref, _ = integrate.quad(f, 0, t, epsabs=0, epsrel=1e-12, limit=200)
        assert F[i] == pytest.approx(ref, rel=1e-6)


def test_cif_sum_with_survival_is_one():
    rng = np.random.default_rng(4)
    d = _cr_draws(rng, 300)
    x = np.array([0.3, 1.0])
    for t in (0.5, 2.0, 7.0):
        total = sum(cif(k, t, x, d) for k in (1, 2, 3)) + overall_survival(t, x, {
            key: val[subsample_indices(300)] for key, val in d.items()})
        assert total == pytest.approx(1.0, abs=1e-4)
    assert cif(1, 0.0, x, d) == 0.0
    with pytest.raises(ValueError):
        cif(4, 1.0, x, d)


def test_subsample_is_seeded():
    a = subsample_indices(1000, 200, seed=3)
    assert len(a) == 200 and len(set(a)) == 200
    np.testing.assert_array_equal(a, subsample_indices(1000, 200, seed=3))
    np.testing.assert_array_equal(subsample_indices(50, 200), np.arange(50))


def test_probability_checks_and_curves():
    assert check_probability(1 + 1e-12) == 1.0
    with pytest.raises(ValueError):
        check_probability(1.01)
    with pytest.raises(ValueError):
        CurveGrid([1.0, 0.0], [0.5, 0.5])
    frame = CurveGrid([0.0, 1.0], [1.0, 0.5], "g", "p11").to_frame()
    assert list(frame.columns) == ["quantity", "label", "time", "value"]
