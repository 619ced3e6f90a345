"""Synthetic data for every model family, used for parameter-recovery checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .core import CensoredObservation, DesignMatrix, SurvivalDataset, TimePartition
from .likelihoods import SOJOURN_EPS


@dataclass
class SimScenario:
    """Family, true parameter values, sample size, censoring rule and seed.

    ``censoring`` is ``{"admin": T}`` for administrative censoring at T,
    ``{"rate": r}`` to pick the administrative time giving censored
    fraction r, or ``{}`` for none. ``options`` holds family extras
    (partition knots, frailty group size, visit spacing, ...).
    """

    family: str
    params: dict
    n_subjects: int
    censoring: dict = field(default_factory=dict)
    seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be >= 1")


def _weibull_times(rng, log_rate, alpha):
    """Inversion of S(t) = exp(-rate t^alpha)."""
    e = rng.exponential(size=np.shape(log_rate))
    return np.exp((np.log(e) - log_rate) / alpha)


def _admin_time(times, rate, hi=None):
    """Administrative time giving censored fraction ``rate`` (bisection)."""
    finite = times[np.isfinite(times)]
    lo, hi = 0.0, float(hi if hi is not None else (finite.max() if finite.size else 1.0)) * 1.0001
    target = rate
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        frac = np.mean(times > mid)
        if frac > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * max(hi, 1.0):
            break
    return hi


def _censor_time(sc: SimScenario, latent_times):
    c = sc.censoring
    if "admin" in c:
        return float(c["admin"])
    if "rate" in c:
        if not 0 <= c["rate"] < 1:
            raise ValueError("censoring rate must lie in [0, 1)")
        return _admin_time(latent_times, c["rate"])
    return math.inf


def _observations(times, events, labels=None):
    out = []
    for i, (t, d) in enumerate(zip(times, events)):
        lab = None if labels is None else int(labels[i])
        out.append(CensoredObservation.exact(i, t, lab) if d
                   else CensoredObservation.right(i, t, lab))
    return tuple(out)


def _standard_design(rng, n, intercept):
    cols = [rng.normal(size=n), rng.binomial(1, 0.5, n).astype(float)]
    names = ["x1", "x2"]
    if intercept:
        cols.insert(0, np.ones(n))
        names.insert(0, "(Intercept)")
    return DesignMatrix(np.column_stack(cols), tuple(names))


def simulate(sc: SimScenario) -> SurvivalDataset:
    """Draw a dataset from the scenario's model; deterministic given ``seed``."""
    rng = np.random.default_rng(sc.seed)
    fn = {
        "aft": _sim_aft, "ph": _sim_ph, "cure": _sim_cure,
        "competing_risks": _sim_cr, "illness_death": _sim_id,
        "frailty": _sim_frailty, "joint": _sim_joint,
    }.get(sc.family)
    if fn is None:
        raise ValueError(f"unknown family {sc.family!r}")
    return fn(sc, rng)


def _finish(sc, latent, design, extras=None, labels=None):
    c = _censor_time(sc, latent)
    obs_t = np.minimum(latent, c)
    event = latent <= c
    if labels is not None:
        labels = np.where(event, labels, 0)
    return SurvivalDataset(_observations(obs_t, event, labels), design, extras or {})


def _sim_aft(sc, rng):
    p = sc.params
    beta, alpha = np.asarray(p["beta"], float), float(p["alpha"])
    X = _standard_design(rng, sc.n_subjects, True)
    X = DesignMatrix(X.values[:, : beta.size], X.column_names[: beta.size])
    t = _weibull_times(rng, -alpha * (X.values @ beta), alpha)
    return _finish(sc, t, X)


def piecewise_inverse(e, knots, lambdas):
    """Solve H0(t) = e for a step hazard; the last level extends past the end."""
    knots, lambdas = np.asarray(knots, float), np.asarray(lambdas, float)
    widths = np.diff(knots)
    cum = np.concatenate([[0.0], np.cumsum(widths * lambdas)])
    k = np.clip(np.searchsorted(cum, e, side="right") - 1, 0, lambdas.size - 1)
    return knots[k] + (e - cum[k]) / lambdas[k]


def _sim_ph(sc, rng):
    p = sc.params
    beta, lambdas = np.asarray(p["beta"], float), np.asarray(p["lambda"], float)
    knots = np.asarray(sc.options["knots"], float)
    X = _standard_design(rng, sc.n_subjects, False)
    e = rng.exponential(size=sc.n_subjects) / np.exp(X.values @ beta)
    t = piecewise_inverse(e, knots, lambdas)
    data = _finish(sc, t, X)
    if data.lower.max() > knots[-1]:
        raise ValueError("administrative time must not exceed the last knot")
    return data


def _sim_cure(sc, rng):
    p = sc.params
    bc, bu = np.asarray(p["betaC"], float), np.asarray(p["betaU"], float)
    lam, alpha = float(p["lambda"]), float(p["alpha"])
    n = sc.n_subjects
    trt = rng.binomial(1, 0.5, n).astype(float)
    XC = DesignMatrix(np.column_stack([np.ones(n), trt]), ("(Intercept)", "trt"))
    XU = trt[:, None]
    cured = rng.random(n) < expit(XC.values @ bc)
    t = _weibull_times(rng, math.log(lam) + XU @ bu, alpha)
    t = np.where(cured, np.inf, t)
    if not sc.censoring:
        raise ValueError("cure scenarios need a censoring rule")
    return _finish(sc, t, XC, {"XU": XU, "XU_names": ("trt",)})


def _sim_cr(sc, rng):
    p = sc.params
    beta = np.asarray(p["beta"], float)
    lam, alpha = np.asarray(p["lambda"], float), np.asarray(p["alpha"], float)
    X = _standard_design(rng, sc.n_subjects, False)
    log_rate = np.log(lam) + X.values @ beta
    tk = _weibull_times(rng, log_rate, alpha)
    t = tk.min(axis=1)
    cause = tk.argmin(axis=1) + 1
    data = _finish(sc, t, X, {"n_risks": lam.size}, labels=cause)
    return data


def _sim_id(sc, rng):
    p = sc.params
    beta = np.asarray(p["beta"], float)
    lam, alpha = np.asarray(p["lambda"], float), np.asarray(p["alpha"], float)
    n = sc.n_subjects
    X = _standard_design(rng, n, False)
    log_rate = np.log(lam) + X.values @ beta
    t12 = _weibull_times(rng, log_rate[:, 0], alpha[0])
    t13 = _weibull_times(rng, log_rate[:, 1], alpha[1])
    soj = _weibull_times(rng, log_rate[:, 2], alpha[2])
    trans = t12 < t13
    death = np.where(trans, t12 + soj, t13)
    c = _censor_time(sc, death)
    return illness_death_dataset(*_id_records(t12, t13, soj, c), X)


def _id_records(t12, t13, soj, c):
    n = t12.size
    t1 = np.empty(n)
    soj_obs = np.zeros(n)
    delta = np.zeros(n, dtype=int)
    status = np.zeros(n, dtype=int)
    for i in range(n):
        first = min(t12[i], t13[i])
        if first > c:
            t1[i] = c
        elif t13[i] < t12[i]:
            t1[i], status[i] = t13[i], 1
        else:
            t1[i], delta[i] = t12[i], 1
            if t12[i] + soj[i] <= c:
                soj_obs[i], status[i] = soj[i], 1
            else:
                soj_obs[i] = c - t12[i]
    return t1, soj_obs, delta, status


def illness_death_dataset(t1, sojourn, delta, status, X: DesignMatrix):
    """Build the three-clock layout from state-1 time, sojourn, transition and death flags."""
    t1 = np.asarray(t1, float)
    sojourn = np.asarray(sojourn, float)
    delta = np.asarray(delta, int)
    status = np.asarray(status, int)
    t2 = t1 + sojourn
    t3 = np.where(sojourn == 0, SOJOURN_EPS, sojourn)
    events = np.column_stack([delta, status * (1 - delta), delta * status]).astype(float)
    code = np.select([(delta == 0) & (status == 0), (delta == 1) & (status == 0),
                      (delta == 0) & (status == 1)], [0, 1, 2], 3)
    obs = tuple(CensoredObservation.exact(i, t2[i], int(code[i])) if status[i]
                else CensoredObservation.right(i, t2[i], int(code[i])) for i in range(t1.size))
    extras = {"t1": t1, "t2": t2, "t3": t3, "events": events, "sojourn": sojourn}
    return SurvivalDataset(obs, X, extras)


def _sim_frailty(sc, rng):
    p = sc.params
    beta, alpha = np.asarray(p["beta"], float), float(p["alpha"])
    J = int(sc.options.get("group_size", 2))
    G = max(1, sc.n_subjects // J)
    group = np.repeat(np.arange(G), J)
    x = rng.binomial(1, 0.5, G).astype(float)[group]
    X = DesignMatrix(np.column_stack([np.ones(G * J), x]), ("(Intercept)", "x"))
    if sc.options.get("variant", "gamma") == "gamma":
        psi = float(p["psi"])
        log_w = np.log(rng.gamma(psi, 1 / psi, G))
    else:
        log_w = rng.normal(0, 1 / math.sqrt(float(p["tau"])), G)
    t = _weibull_times(rng, X.values @ beta + log_w[group], alpha)
    return _finish(sc, t, X, {"group": group, "n_groups": G})


def _sim_joint(sc, rng):
    p = sc.params
    bl, bs = np.asarray(p["betaL"], float), np.asarray(p["betaS"], float)
    gamma, alpha, sigma = float(p["gamma"]), float(p["alpha"]), float(p["sigma"])
    Sigma = np.asarray(p["Sigma"], float)
    n = sc.n_subjects
    horizon = float(sc.options.get("horizon", sc.censoring.get("admin", 10.0)))
    spacing = float(sc.options.get("visit_spacing", 1.0))
    treat = rng.binomial(1, 0.5, n).astype(float)
    XS = DesignMatrix(np.column_stack([np.ones(n), treat]), ("(Intercept)", "treat"))
    b = rng.multivariate_normal(np.zeros(2), Sigma, size=n)
    lin = XS.values @ bs + gamma * b[:, 0]
    T = np.full(n, np.inf)
    for i in range(n):
        # Poisson thinning against c * M * alpha t^(alpha-1), M bounds exp(gamma b2 t) on [0, horizon]
        slope = gamma * b[i, 1]
        logM = max(0.0, slope * horizon)
        c = math.exp(lin[i] + logM)
        t_prev = 0.0
        while True:
            e = rng.exponential()
            t_new = (t_prev ** alpha + e / c) ** (1 / alpha)
            if t_new > horizon:
                break
            if math.log(rng.random()) < slope * t_new - logM:
                T[i] = t_new
                break
            t_prev = t_new
    cens = _censor_time(sc, T)
    cens = min(cens, horizon)
    obs_t = np.minimum(T, cens)
    event = T <= cens
    sid, tl, y = [], [], []
    for i in range(n):
        visits = np.arange(0.0, obs_t[i], spacing)
        mu = bl[0] + b[i, 0] + (bl[1] + b[i, 1]) * visits + bl[2] * treat[i]
        sid.append(np.full(visits.size, i))
        tl.append(visits)
        y.append(mu + sigma * rng.normal(size=visits.size))
    sid, tl, y = np.concatenate(sid), np.concatenate(tl), np.concatenate(y)
    XL = np.column_stack([np.ones(tl.size), tl, treat[sid]])
    extras = {"long_subject": sid, "long_time": tl, "long_y": y, "XL": XL,
              "XL_names": ("(Intercept)", "time", "treat")}
    return SurvivalDataset(_observations(obs_t, event), XS, extras)


def default_scenario(family: str, n_subjects=500, seed=0) -> SimScenario:
    """Fixed truths used by the recovery checks."""
    if family == "aft":
        return SimScenario("aft", {"beta": [2.0, -0.5, 0.7], "alpha": 1.3}, n_subjects,
                           {"rate": 0.3}, seed)
    if family == "ph":
        knots = [0.0, 1.0, 2.0, 3.0]
        return SimScenario("ph", {"beta": [0.5, -0.7], "lambda": [0.2, 0.4, 0.3]}, n_subjects,
                           {"admin": 3.0}, seed, {"knots": knots})
    if family == "cure":
        return SimScenario("cure", {"betaC": [-0.5, 0.8], "betaU": [0.6], "lambda": 0.3,
                                    "alpha": 1.4}, n_subjects, {"admin": 6.0}, seed)
    if family == "competing_risks":
        return SimScenario("competing_risks", {"beta": [[0.5, -0.3], [-0.4, 0.6]],
                                               "lambda": [0.2, 0.1], "alpha": [1.2, 0.8]},
                           n_subjects, {"rate": 0.25}, seed)
    if family == "illness_death":
        return SimScenario("illness_death", {"beta": [[0.4, -0.3, 0.2], [-0.5, 0.4, -0.6]],
                                             "lambda": [0.3, 0.15, 0.2], "alpha": [0.9, 1.2, 1.1]},
                           n_subjects, {"admin": 8.0}, seed)
    if family == "frailty":
        return SimScenario("frailty", {"beta": [-2.0, -1.0], "alpha": 1.2, "psi": 2.0},
                           n_subjects, {"rate": 0.2}, seed, {"group_size": 2})
    if family == "joint":
        return SimScenario("joint", {"betaL": [4.0, -0.1, -0.1], "betaS": [-2.0, 0.3],
                                     "gamma": -1.0, "alpha": 1.1, "sigma": 0.3,
                                     "Sigma": [[0.3, -0.02], [-0.02, 0.03]]},
                           n_subjects, {"admin": 10.0}, seed, {"visit_spacing": 1.0})
    raise ValueError(f"unknown family {family!r}")


def scenario_partition(sc: SimScenario):
    return TimePartition(sc.options["knots"]) if "knots" in sc.options else None
