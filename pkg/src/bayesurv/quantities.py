"""Posterior derived quantities: contrasts, cure fractions, survival curves,
cumulative incidence and semi-Markov transition probabilities.

Every function takes draws as plain arrays (one row per posterior draw);
``*_draws`` helpers pull those arrays out of :class:`PosteriorSamples`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .mcmc import PosteriorSamples
from .quadrature import gauss_kronrod

PROB_SLACK = 1e-8
DEFAULT_SUBSAMPLE = 200
CIF_PANELS = 256
TP_REL_TOL = 1e-8


@dataclass
class CurveGrid:
    """Posterior-mean curve on a time grid."""

    times: np.ndarray
    values: np.ndarray
    label: str = ""
    quantity: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have the same length")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("curve times must be nondecreasing")

    def to_frame(self):
        import pandas as pd

        return pd.DataFrame({"quantity": self.quantity, "label": self.label,
                             "time": self.times, "value": self.values})


def check_probability(p, name="probability"):
    """Clip rounding excursions outside [0, 1]; larger excursions are errors."""
    p = np.asarray(p, dtype=float)
    if np.any(p < -PROB_SLACK) or np.any(p > 1 + PROB_SLACK) or np.any(~np.isfinite(p)):
        raise ValueError(f"{name} outside [0, 1]")
    out = np.clip(p, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def subsample_indices(n_draws, size=DEFAULT_SUBSAMPLE, seed=0):
    """Seeded draw subsample without replacement; all draws when ``size`` is None or too big."""
    if size is None or size >= n_draws:
        return np.arange(n_draws)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_draws, size=size, replace=False))


def _contrast(x1, x2, beta_draws):
    beta = np.atleast_2d(np.asarray(beta_draws, dtype=float))
    dx = np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)
    if dx.shape != (beta.shape[1],):
        raise ValueError(f"covariate vectors need length {beta.shape[1]}")
    return np.exp(beta @ dx)


def relative_median(x1, x2, beta_draws):
    """AFT relative median exp((x1 - x2)'beta), one value per draw."""
    return _contrast(x1, x2, beta_draws)


def hazard_ratio(x1, x2, beta_draws):
    """PH hazard ratio exp((x1 - x2)'beta), one value per draw."""
    return _contrast(x1, x2, beta_draws)


def cure_fraction(x_c, betaC_draws):
    """Inverse-logit of x_c'betaC per draw."""
    beta = np.atleast_2d(np.asarray(betaC_draws, dtype=float))
    return expit(beta @ np.asarray(x_c, dtype=float))


def _grid(times):
    t = np.asarray(times, dtype=float)
    if np.any(t < 0):
        raise ValueError("time grid must be nonnegative")
    return t


def uncured_survival_curve(times, lam, alpha, betaU_draws, x_u, label=""):
    """Posterior mean of exp(-lambda exp(x_u'betaU) t^alpha) on a grid."""
    t = _grid(times)
    lam, alpha = np.asarray(lam, float), np.asarray(alpha, float)
    bu = np.asarray(betaU_draws, dtype=float)
    if bu.ndim == 1:
        bu = bu[:, None]
    rate = lam * np.exp(bu @ np.atleast_1d(np.asarray(x_u, dtype=float)))
    S = np.exp(-rate[:, None] * t[None, :] ** alpha[:, None])
    return CurveGrid(t, check_probability(S.mean(axis=0), "uncured survival"), label, "uncured_survival")


def frailty_survival_curve(times, w_draws, beta_draws, alpha, x, label=""):
    """Posterior mean of exp(-w_i exp(x'beta) t^alpha); ``x`` includes the intercept."""
    t = _grid(times)
    rate = np.asarray(w_draws, float) * np.exp(np.atleast_2d(beta_draws) @ np.asarray(x, float))
    S = np.exp(-rate[:, None] * t[None, :] ** np.asarray(alpha, float)[:, None])
    return CurveGrid(t, check_probability(S.mean(axis=0), "frailty survival"), label, "survival")


# ---------------------------------------------------------------------------
# competing risks


def _cumhaz_at(t, x, beta, lambdas, alphas):
    """(S, K) cumulative hazards of every cause at time t."""
    eta = np.einsum("p,spk->sk", np.asarray(x, float), beta)
    with np.errstate(divide="ignore"):
        return lambdas * np.exp(eta) * np.power(t, alphas)


def cif_per_draw(k, t, x, beta, lambdas, alphas, n_panels=CIF_PANELS):
    """Cause-k cumulative incidence at time t for each draw.

    Uses u = t v^(2/alpha_k), under which h_k(u) du = 2 H_k(t) v dv and
    H_l(u) = H_l(t) v^(2 alpha_l / alpha_k); the Simpson integrand is then
    bounded on [0, 1] even when alpha_k < 1.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    beta = np.asarray(beta, float)
    lambdas = np.atleast_2d(np.asarray(lambdas, float))
    alphas = np.atleast_2d(np.asarray(alphas, float))
    K = lambdas.shape[1]
    if not 1 <= k <= K:
        raise ValueError(f"cause must be in 1..{K}")
    if t == 0:
        return np.zeros(lambdas.shape[0])
    if n_panels % 2:
        raise ValueError("Simpson panel count must be even")
    H = _cumhaz_at(t, x, beta, lambdas, alphas)
    v = np.linspace(0.0, 1.0, n_panels + 1)
    expo = 2 * alphas / alphas[:, [k - 1]]  # (S, K)
    total = np.einsum("sk,skv->sv", H, v[None, None, :] ** expo[:, :, None])
    f = 2 * H[:, [k - 1]] * v[None, :] * np.exp(-total)
    w = np.ones(n_panels + 1)
    w[1:-1:2], w[2:-1:2] = 4, 2
    return f @ w / (3 * n_panels)


def cif(k, t, x, draws: dict, subsample=DEFAULT_SUBSAMPLE, seed=0, n_panels=CIF_PANELS):
    """Posterior-mean cumulative incidence of cause k at time t."""
    idx = subsample_indices(draws["lambda"].shape[0], subsample, seed)
    F = cif_per_draw(k, t, x, draws["beta"][idx], draws["lambda"][idx], draws["alpha"][idx], n_panels)
    return check_probability(F.mean(), "cumulative incidence")


def cif_curve(k, times, x, draws: dict, subsample=DEFAULT_SUBSAMPLE, seed=0, label="",
              n_panels=CIF_PANELS):
    t = _grid(times)
    idx = subsample_indices(draws["lambda"].shape[0], subsample, seed)
    sub = {key: val[idx] for key, val in draws.items()}
    vals = [cif_per_draw(k, ti, x, sub["beta"], sub["lambda"], sub["alpha"], n_panels).mean()
            for ti in t]
    return CurveGrid(t, check_probability(vals, "cumulative incidence"), label, f"cif{k}")


def overall_survival(t, x, draws: dict):
    """Posterior mean of exp(-sum_k H_k(t))."""
    H = _cumhaz_at(t, x, draws["beta"], draws["lambda"], draws["alpha"])
    return check_probability(np.exp(-H.sum(axis=1)).mean(), "survival")


# ---------------------------------------------------------------------------
# illness-death transition probabilities (transitions 1: 1->2, 2: 1->3, 3: 2->3)


def _rates(x, beta, lambdas):
    """lambda_k * exp(x'beta_k) per draw, shape (S, 3)."""
    return lambdas * np.exp(np.einsum("p,spk->sk", np.asarray(x, float), beta))


def p11_single(s, t, r, a):
    """exp{-r1 (t^a1 - s^a1) - r2 (t^a2 - s^a2)} for one draw's rates and shapes."""
    if s > t:
        raise ValueError("p11 needs s <= t")
    return math.exp(-r[0] * (t ** a[0] - s ** a[0]) - r[1] * (t ** a[1] - s ** a[1]))


def p22_single(s, t, r, a, rel_tol=TP_REL_TOL):
    """Probability of still being in state 2 at t given state 2 at s (entered before s).

    The entry-time integral over (0, s) is taken in v = u^a1, which removes
    the u^(a1-1) endpoint singularity.
    """
    if s <= 0:
        raise ValueError("p22 needs s > 0")
    if s > t:
        raise ValueError("p22 needs s <= t")
    r1, r3 = r[0], r[2]
    a1, a3 = a[0], a[2]
    norm = -math.expm1(-r1 * s ** a1)
    if norm <= 0:
        raise ValueError("entry probability before s underflows")

    def g(v):
        u = np.minimum(np.power(v, 1 / a1), s)
        return np.exp(-r1 * v - r3 * ((t - u) ** a3 - (s - u) ** a3))

    val, _ = gauss_kronrod(g, 0.0, s ** a1, rel_tol=rel_tol)
    return r1 * val / norm


def p12_single(s, t, r, a, rel_tol=TP_REL_TOL):
    """Probability of being in state 2 at t given state 1 at s."""
    if s > t:
        raise ValueError("p12 needs s <= t")
    if s == t:
        return 0.0
    r1, r2, r3 = r
    a1, a2, a3 = a
    vs = s ** a1
    s2 = s ** a2

    def g(v):
        u = np.clip(np.power(v, 1 / a1), s, t)
        return np.exp(-r1 * (v - vs) - r2 * (u ** a2 - s2) - r3 * (t - u) ** a3)

    val, _ = gauss_kronrod(g, vs, t ** a1, rel_tol=rel_tol)
    return r1 * val


def _tp_mean(fn, s, t, x, draws, idx, **kw):
    r = _rates(x, draws["beta"][idx], draws["lambda"][idx])
    a = draws["alpha"][idx]
    return float(np.mean([fn(s, t, r[i], a[i], **kw) for i in range(len(idx))]))


def p11(s, t, x, draws: dict, subsample=DEFAULT_SUBSAMPLE, seed=0):
    idx = subsample_indices(draws["lambda"].shape[0], subsample, seed)
    return check_probability(_tp_mean(p11_single, s, t, x, draws, idx), "p11")


def p22(s, t, x, draws: dict, subsample=DEFAULT_SUBSAMPLE, seed=0, rel_tol=TP_REL_TOL):
    idx = subsample_indices(draws["lambda"].shape[0], subsample, seed)
    return check_probability(_tp_mean(p22_single, s, t, x, draws, idx, rel_tol=rel_tol), "p22")


def p12(s, t, x, draws: dict, subsample=DEFAULT_SUBSAMPLE, seed=0, rel_tol=TP_REL_TOL):
    idx = subsample_indices(draws["lambda"].shape[0], subsample, seed)
    return check_probability(_tp_mean(p12_single, s, t, x, draws, idx, rel_tol=rel_tol), "p12")


def p13_p23(p11_value, p12_value, p22_value):
    """Complements p13 = 1 - p11 - p12 and p23 = 1 - p22."""
    p11_value = check_probability(p11_value, "p11")
    p12_value = check_probability(p12_value, "p12")
    p22_value = check_probability(p22_value, "p22")
    p13 = 1.0 - p11_value - p12_value
    if np.any(np.asarray(p13) < -PROB_SLACK):
        raise ValueError("p11 + p12 exceeds 1")
    return np.maximum(p13, 0.0) if np.ndim(p13) else max(p13, 0.0), 1.0 - p22_value


def transition_curves(times, x, draws: dict, s_state2: float, s_state1: float = 0.0,
                      subsample=DEFAULT_SUBSAMPLE, seed=0, label="", rel_tol=TP_REL_TOL):
    """p11, p12, p13 from s_state1 and p22, p23 from s_state2 on a shared grid offset.

    Times are offsets: state-1 curves are evaluated at ``s_state1 + times``
    and state-2 curves at ``s_state2 + times``, as in the usual figure layout.
    """
    t = _grid(times)
    idx = subsample_indices(draws["lambda"].shape[0], subsample, seed)
    r = _rates(x, draws["beta"][idx], draws["lambda"][idx])
    a = draws["alpha"][idx]
    n = len(idx)
    out = {k: np.empty(t.size) for k in ("p11", "p12", "p13", "p22", "p23")}
    for j, dt in enumerate(t):
        t1, t2 = s_state1 + dt, s_state2 + dt
        v11 = np.mean([p11_single(s_state1, t1, r[i], a[i]) for i in range(n)])
        v12 = np.mean([p12_single(s_state1, t1, r[i], a[i], rel_tol) for i in range(n)])
        v22 = np.mean([p22_single(s_state2, t2, r[i], a[i], rel_tol) for i in range(n)])
        v11, v12, v22 = (check_probability(v, nm) for v, nm in ((v11, "p11"), (v12, "p12"), (v22, "p22")))
        v13, v23 = p13_p23(v11, v12, v22)
        for key, val in zip(out, (v11, v12, v13, v22, v23)):
            out[key][j] = val
    return {k: CurveGrid(t, v, label, k) for k, v in out.items()}


# ---------------------------------------------------------------------------
# extracting draw arrays


def _vector(samples, name, n=None):
    if n is None:
        n = 0
        while f"{name}[{n + 1}]" in samples.param_names:
            n += 1
    if n == 0 and name in samples.param_names:
        return samples.pooled(name)[:, None]
    return np.column_stack([samples.pooled(f"{name}[{j + 1}]") for j in range(n)])


def _matrix(samples, name):
    labels = [n for n in samples.param_names if n.startswith(f"{name}[") and "," in n]
    idx = [tuple(int(v) for v in lab[len(name) + 1:-1].split(",")) for lab in labels]
    p = max(i for i, _ in idx)
    K = max(k for _, k in idx)
    out = np.empty((samples.n_chains * samples.n_draws, p, K))
    for lab, (i, k) in zip(labels, idx):
        out[:, i - 1, k - 1] = samples.pooled(lab)
    return out


def vector_draws(samples: PosteriorSamples, name: str):
    """(S, n) matrix of ``name[1..n]`` draws."""
    return _vector(samples, name)


def multi_cause_draws(samples: PosteriorSamples) -> dict:
    """Arrays {beta: (S, p, K), lambda: (S, K), alpha: (S, K)} for competing risks / illness-death."""
    return {"beta": _matrix(samples, "beta"),
            "lambda": _vector(samples, "lambda"),
            "alpha": _vector(samples, "alpha")}
