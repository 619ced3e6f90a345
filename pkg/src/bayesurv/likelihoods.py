"""Log-likelihoods for the seven model families.

Each function evaluates the log-likelihood directly from hazards and
cumulative hazards; the latent-variable families (frailty, joint) add the
log-density of the current latent values so that the sum is the complete
data term the sampler needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, log_expit

from .core import (
    CensorKind,
    SurvivalDataset,
    TimePartition,
    censored_loglik_terms,
    log1mexp,
)
from .quadrature import gauss_legendre

SOJOURN_EPS = 1e-4


@dataclass
class AftParams:
    beta: np.ndarray
    alpha: float


@dataclass
class PhParams:
    beta: np.ndarray
    lambdas: np.ndarray


@dataclass
class CureParams:
    beta_c: np.ndarray
    beta_u: np.ndarray
    lam: float
    alpha: float


@dataclass
class CompetingRisksParams:
    beta: np.ndarray  # p x K
    lambdas: np.ndarray
    alphas: np.ndarray


@dataclass
class IllnessDeathParams:
    beta: np.ndarray  # p x 3, columns 1->2, 1->3, 2->3
    lambdas: np.ndarray
    alphas: np.ndarray


@dataclass
class FrailtyParams:
    beta: np.ndarray
    alpha: float
    psi: float | None = None
    w: np.ndarray | None = None
    variant: str = "gamma"
    tau: float | None = None
    b: np.ndarray | None = None


@dataclass
class JointParams:
    beta_l: np.ndarray
    beta_s: np.ndarray
    gamma: float
    alpha: float
    sigma: float
    Sigma: np.ndarray
    b: np.ndarray = field(default=None)


def _positive(name, value):
    if np.any(np.asarray(value) <= 0):
        raise ValueError(f"{name} must be positive")


def _log_t(data):
    return data.log_lower, data.log_upper


def weibull_terms(data: SurvivalDataset, log_rate, alpha):
    """Per-record log-likelihood for h(t) = rate * alpha * t^(alpha-1)."""
    log_lo, log_hi = _log_t(data)
    if data.only_exact_or_right:
        H = np.exp(log_rate + alpha * log_lo)
        return data.delta * (log_rate + math.log(alpha) + (alpha - 1) * log_lo) - H
    log_h = log_rate + np.log(alpha) + (alpha - 1) * log_lo
    log_S_lo = -np.exp(log_rate + alpha * log_lo)
    log_S_hi = -np.exp(log_rate + alpha * log_hi)
    return censored_loglik_terms(data.kinds, log_h, log_S_lo, log_S_hi)


def aft_loglik(params: AftParams, data: SurvivalDataset) -> float:
    """Weibull AFT: shape alpha, rate exp(-alpha * x'beta)."""
    _positive("alpha", params.alpha)
    alpha = float(params.alpha)
    mu = data.X @ np.asarray(params.beta, dtype=float)
    return float(np.sum(weibull_terms(data, -alpha * mu, alpha)))


def _exposures(t, partition):
    lo, hi = partition.knots[:-1], partition.knots[1:]
    return np.clip(t[:, None] - lo, 0.0, hi - lo)


def ph_piecewise_terms(params: PhParams, data: SurvivalDataset, partition: TimePartition):
    lambdas = np.asarray(params.lambdas, dtype=float)
    if lambdas.shape != (partition.n_intervals,):
        raise ValueError(f"need {partition.n_intervals} hazard levels")
    _positive("lambdas", lambdas)
    lo_t = np.nan_to_num(data.lower, nan=0.0)
    hi_t = np.nan_to_num(data.upper, nan=0.0)
    if np.any(lo_t > partition.end) or np.any(hi_t > partition.end):
        raise ValueError(f"observed times exceed the partition end {partition.end}")
    eta = data.X @ np.asarray(params.beta, dtype=float) if data.X.shape[1] else np.zeros(len(data))
    elin = np.exp(eta)
    H_lo = _exposures(lo_t, partition) @ lambdas * elin
    k = np.clip(np.searchsorted(partition.knots, lo_t, side="left"), 1, partition.n_intervals)
    log_h = np.log(lambdas[k - 1]) + eta
    if data.only_exact_or_right:
        return data.delta * log_h - H_lo
    H_hi = _exposures(hi_t, partition) @ lambdas * elin
    return censored_loglik_terms(data.kinds, log_h, -H_lo, -H_hi)


def ph_piecewise_loglik(params: PhParams, data: SurvivalDataset, partition: TimePartition) -> float:
    return float(np.sum(ph_piecewise_terms(params, data, partition)))


def cure_loglik(params: CureParams, data: SurvivalDataset) -> float:
    """Mixture cure: logistic incidence on ``data.X``, Weibull PH latency on
    ``data.extras['XU']``."""
    _positive("lambda", params.lam)
    _positive("alpha", params.alpha)
    alpha = float(params.alpha)
    lin_c = data.X @ np.asarray(params.beta_c, dtype=float)
    log_eta, log_1m_eta = log_expit(lin_c), log_expit(-lin_c)
    XU = data.extras["XU"]
    lin_u = XU @ np.asarray(params.beta_u, dtype=float) if XU.shape[1] else 0.0
    log_rate = math.log(params.lam) + lin_u
    log_lo, log_hi = _log_t(data)
    log_Su_lo = -np.exp(log_rate + alpha * log_lo)
    log_h = log_rate + math.log(alpha) + (alpha - 1) * log_lo
    kinds = data.kinds
    out = np.empty(len(data))
    m = kinds == CensorKind.EXACT
    out[m] = (log_1m_eta + log_h + log_Su_lo)[m]
    m = kinds == CensorKind.RIGHT
    with np.errstate(invalid="ignore"):
        out[m] = np.logaddexp(log_eta, log_1m_eta + log_Su_lo)[m]
    if not data.only_exact_or_right:
        log_Su_hi = -np.exp(log_rate + alpha * log_hi)
        m = kinds == CensorKind.LEFT
        out[m] = (log_1m_eta + log1mexp(-log_Su_hi))[m]
        m = kinds == CensorKind.INTERVAL
        if m.any():
            inner = censored_loglik_terms(
                np.full(m.sum(), CensorKind.INTERVAL), np.zeros(m.sum()), log_Su_lo[m], log_Su_hi[m])
            out[m] = log_1m_eta[m] + inner
    return float(np.sum(out))


def competing_risks_loglik(params: CompetingRisksParams, data: SurvivalDataset) -> float:
    """Cause-specific Weibull PH hazards; ``event_label`` 0 = censored, k = cause k."""
    lambdas = np.asarray(params.lambdas, dtype=float)
    alphas = np.asarray(params.alphas, dtype=float)
    _positive("lambdas", lambdas)
    _positive("alphas", alphas)
    K = lambdas.size
    labels = data.event_labels
    if np.any((labels < 0) | (labels > K)):
        raise ValueError(f"cause labels must lie in 0..{K}")
    if np.any((labels > 0) != (data.kinds == CensorKind.EXACT)):
        raise ValueError("events need a cause label and censored records label 0")
    t = data.time
    log_t = np.log(t)
    beta = np.asarray(params.beta, dtype=float).reshape(data.X.shape[1], K)
    eta = data.X @ beta  # n x K
    log_rate = np.log(lambdas) + eta
    H = np.exp(log_rate + alphas * log_t[:, None])
    total = -float(np.sum(H))
    ev = labels > 0
    k = labels[ev] - 1
    log_h = log_rate[ev, k] + np.log(alphas[k]) + (alphas[k] - 1) * log_t[ev]
    return total + float(np.sum(log_h))


def illness_death_loglik(params: IllnessDeathParams, data: SurvivalDataset,
                         exposure: str = "total") -> float:
    """Semi-Markov illness-death likelihood.

    Transition hazards 1->2 and 1->3 run on the clock since entry; 2->3 on
    the sojourn clock reset at transplant. ``exposure="total"`` charges the
    1->3 cumulative hazard over the whole follow-up ``t2``;
    ``exposure="state1"`` only over the time spent in state 1.
    """
    lambdas = np.asarray(params.lambdas, dtype=float)
    alphas = np.asarray(params.alphas, dtype=float)
    _positive("lambdas", lambdas)
    _positive("alphas", alphas)
    ev = illness_death_events(data)
    t1, t2, t3 = (np.asarray(data.extras[k], dtype=float) for k in ("t1", "t2", "t3"))
    beta = np.asarray(params.beta, dtype=float).reshape(data.X.shape[1], 3)
    eta = data.X @ beta
    log_t = np.log(np.column_stack([t1, t2, t3]))
    log_rate = np.log(lambdas) + eta
    log_h = log_rate + np.log(alphas) + (alphas - 1) * log_t
    if exposure == "total":
        log_tH = log_t
    elif exposure == "state1":
        log_tH = np.column_stack([log_t[:, 0], log_t[:, 0], log_t[:, 2]])
    else:
        raise ValueError(f"unknown exposure {exposure!r}")
    H = np.exp(log_rate + alphas * log_tH)
    return float(np.sum(ev * log_h) - np.sum(H))


def illness_death_events(data: SurvivalDataset):
    ev = np.asarray(data.extras["events"], dtype=float)
    if ev.ndim != 2 or ev.shape[1] != 3:
        raise ValueError("illness-death events must be an n x 3 matrix")
    if np.any((ev[:, 2] == 1) & (ev[:, 0] != 1)):
        raise ValueError("2->3 transition recorded without a 1->2 transition")
    if np.any((ev[:, 1] == 1) & (ev[:, 0] == 1)):
        raise ValueError("1->3 and 1->2 transitions recorded for the same subject")
    return ev


def _gamma_logpdf_shape_rate(w, shape, rate):
    return shape * np.log(rate) - gammaln(shape) + (shape - 1) * np.log(w) - rate * w


def frailty_group_terms(params: FrailtyParams, data: SurvivalDataset):
    """Per-group log-likelihood plus log-density of the group's frailty."""
    _positive("alpha", params.alpha)
    group = np.asarray(data.extras["group"], dtype=int)
    n_groups = int(data.extras.get("n_groups", group.max() + 1))
    eta = data.X @ np.asarray(params.beta, dtype=float)
    if params.variant == "gamma":
        w = np.asarray(params.w, dtype=float)
        _positive("w", w)
        _positive("psi", params.psi)
        log_rate = eta + np.log(w)[group]
        latent = _gamma_logpdf_shape_rate(w, params.psi, params.psi)
    elif params.variant == "normal":
        b = np.asarray(params.b, dtype=float)
        _positive("tau", params.tau)
        log_rate = eta + b[group]
        latent = 0.5 * np.log(params.tau / (2 * math.pi)) - 0.5 * params.tau * b ** 2
    else:
        raise ValueError(f"unknown frailty variant {params.variant!r}")
    terms = weibull_terms(data, log_rate, float(params.alpha))
    return np.bincount(group, weights=terms, minlength=n_groups) + latent


def frailty_loglik(params: FrailtyParams, data: SurvivalDataset) -> float:
    """Shared-frailty Weibull PH: h_ij(t) = w_i * alpha * t^(alpha-1) * exp(x_ij'beta),
    with the intercept carrying log(lambda)."""
    return float(np.sum(frailty_group_terms(params, data)))


@lru_cache(maxsize=None)
def _gl(order):
    rule = gauss_legendre(order)
    return rule.nodes, rule.weights


def _mvn_logpdf_rows(b, Sigma):
    d = Sigma.shape[0]
    L = np.linalg.cholesky(Sigma)
    z = np.linalg.solve(L, b.T)
    return -0.5 * np.sum(z ** 2, axis=0) - np.sum(np.log(np.diag(L))) - 0.5 * d * math.log(2 * math.pi)


def joint_subject_terms(params: JointParams, data: SurvivalDataset, gl_order: int = 15):
    """Per-subject longitudinal + survival log-likelihood plus random-effect log-density."""
    if gl_order < 2:
        raise ValueError("Gauss-Legendre order must be at least 2")
    _positive("alpha", params.alpha)
    _positive("sigma", params.sigma)
    Sigma = np.asarray(params.Sigma, dtype=float)
    try:
        np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise ValueError("random-effects covariance is not positive definite") from None
    b = np.asarray(params.b, dtype=float)
    n = len(data)
    ex = data.extras
    sid = np.asarray(ex["long_subject"], dtype=int)
    tl = np.asarray(ex["long_time"], dtype=float)
    y = np.asarray(ex["long_y"], dtype=float)
    XL = np.asarray(ex["XL"], dtype=float)
    sigma = float(params.sigma)
    mu = XL @ np.asarray(params.beta_l, dtype=float) + b[sid, 0] + b[sid, 1] * tl
    long_terms = -0.5 * ((y - mu) / sigma) ** 2 - math.log(sigma) - 0.5 * math.log(2 * math.pi)
    out = np.bincount(sid, weights=long_terms, minlength=n)

    alpha, gamma = float(params.alpha), float(params.gamma)
    T = data.time
    lin = data.X @ np.asarray(params.beta_s, dtype=float) + gamma * b[:, 0]
    xk, wk = _gl(gl_order)
    u = T[:, None] / 2 * (xk + 1)
    haz = alpha * np.exp((alpha - 1) * np.log(u) + lin[:, None] + gamma * b[:, 1:2] * u)
    log_surv = -T / 2 * (haz @ wk)
    log_h = math.log(alpha) + (alpha - 1) * np.log(T) + lin + gamma * b[:, 1] * T
    out += data.delta * log_h + log_surv
    out += _mvn_logpdf_rows(b, Sigma)
    return out


def joint_loglik(params: JointParams, data: SurvivalDataset, gl_order: int = 15) -> float:
    """Shared-parameter joint model with Gauss-Legendre survival integral."""
    return float(np.sum(joint_subject_terms(params, data, gl_order)))
