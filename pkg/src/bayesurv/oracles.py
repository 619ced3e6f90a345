"""Straight-line reference log-likelihoods.

Each oracle loops over records one at a time and writes every formula out
in full, sharing no code with :mod:`bayesurv.likelihoods`. All arithmetic
goes through numpy ufuncs on scalars, so complex parameter values work and
the oracles double as complex-step derivative engines.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import loggamma

from .core import CensorKind


def _row(X, i):
    return [X[i, j] for j in range(X.shape[1])]


def _dot(x, b):
    total = 0.0
    for xj, bj in zip(x, b):
        total = total + xj * bj
    return total


def _weibull_row(kind, lo, hi, log_rate, alpha):
    """Log contribution of one record under S(t) = exp(-exp(log_rate) t^alpha)."""
    rate = np.exp(log_rate)
    if kind == CensorKind.EXACT:
        h = rate * alpha * lo ** (alpha - 1)
        return np.log(h) - rate * lo ** alpha
    if kind == CensorKind.RIGHT:
        return -rate * lo ** alpha
    if kind == CensorKind.LEFT:
        return np.log(1 - np.exp(-rate * hi ** alpha))
    return np.log(np.exp(-rate * lo ** alpha) - np.exp(-rate * hi ** alpha))


def aft(params, data):
    beta, alpha = params["beta"], params["alpha"]
    total = 0.0
    for i in range(len(data)):
        mu = _dot(_row(data.X, i), beta)
        total = total + _weibull_row(data.kinds[i], data.lower[i], data.upper[i], -alpha * mu, alpha)
    return total


def _ph_cumhaz(t, knots, lambdas):
    H = 0.0
    for k in range(len(lambdas)):
        a0, a1 = knots[k], knots[k + 1]
        if t > a1:
            H = H + lambdas[k] * (a1 - a0)
        elif t > a0:
            H = H + lambdas[k] * (t - a0)
    return H


def ph(params, data, knots):
    beta = params.get("beta", [])
    lambdas = params["lambda"]
    total = 0.0
    for i in range(len(data)):
        lp = _dot(_row(data.X, i), beta) if data.X.shape[1] else 0.0
        kind, lo, hi = data.kinds[i], data.lower[i], data.upper[i]
        if kind == CensorKind.EXACT:
            k = 0
            while not (knots[k] < lo <= knots[k + 1]):
                k += 1
            total = total + np.log(lambdas[k]) + lp - _ph_cumhaz(lo, knots, lambdas) * np.exp(lp)
        elif kind == CensorKind.RIGHT:
            total = total - _ph_cumhaz(lo, knots, lambdas) * np.exp(lp)
        elif kind == CensorKind.LEFT:
            total = total + np.log(1 - np.exp(-_ph_cumhaz(hi, knots, lambdas) * np.exp(lp)))
        else:
            total = total + np.log(np.exp(-_ph_cumhaz(lo, knots, lambdas) * np.exp(lp))
                                   - np.exp(-_ph_cumhaz(hi, knots, lambdas) * np.exp(lp)))
    return total


def cure(params, data):
    bc, bu = params["betaC"], params.get("betaU", [])
    lam, alpha = params["lambda"], params["alpha"]
    XU = data.extras["XU"].values if hasattr(data.extras["XU"], "values") else data.extras["XU"]
    total = 0.0
    for i in range(len(data)):
        eta = 1 / (1 + np.exp(-_dot(_row(data.X, i), bc)))
        el = np.exp(_dot(_row(XU, i), bu)) if XU.shape[1] else 1.0
        kind, lo, hi = data.kinds[i], data.lower[i], data.upper[i]
        if kind == CensorKind.EXACT:
            h = lam * alpha * lo ** (alpha - 1) * el
            Su = np.exp(-lam * lo ** alpha * el)
            total = total + np.log(1 - eta) + np.log(h) + np.log(Su)
        elif kind == CensorKind.RIGHT:
            Su = np.exp(-lam * lo ** alpha * el)
            total = total + np.log(eta + (1 - eta) * Su)
        elif kind == CensorKind.LEFT:
            Su = np.exp(-lam * hi ** alpha * el)
            total = total + np.log((1 - eta) * (1 - Su))
        else:
            S1 = np.exp(-lam * lo ** alpha * el)
            S2 = np.exp(-lam * hi ** alpha * el)
            total = total + np.log((1 - eta) * (S1 - S2))
    return total


def competing_risks(params, data):
    beta, lam, alpha = params["beta"], params["lambda"], params["alpha"]
    K = len(lam)
    total = 0.0
    for i in range(len(data)):
        t = data.lower[i]
        x = _row(data.X, i)
        for k in range(K):
            el = np.exp(_dot(x, [beta[j][k] for j in range(len(x))]))
            if data.event_labels[i] == k + 1:
                total = total + np.log(lam[k] * alpha[k] * t ** (alpha[k] - 1) * el)
            total = total - lam[k] * t ** alpha[k] * el
    return total


def illness_death(params, data, exposure="total"):
    beta, lam, alpha = params["beta"], params["lambda"], params["alpha"]
    ex = data.extras
    total = 0.0
    for i in range(len(data)):
        x = _row(data.X, i)
        times = [ex["t1"][i], ex["t2"][i], ex["t3"][i]]
        exposure_times = list(times)
        if exposure == "state1":
            exposure_times[1] = times[0]
        for k in range(3):
            el = np.exp(_dot(x, [beta[j][k] for j in range(len(x))]))
            if ex["events"][i][k] == 1:
                total = total + np.log(lam[k] * alpha[k] * times[k] ** (alpha[k] - 1) * el)
            total = total - lam[k] * exposure_times[k] ** alpha[k] * el
    return total


def frailty(params, data, variant="gamma"):
    beta, alpha = params["beta"], params["alpha"]
    group = data.extras["group"]
    total = 0.0
    for i in range(len(data)):
        g = group[i]
        if variant == "gamma":
            log_rate = _dot(_row(data.X, i), beta) + np.log(params["w"][g])
        else:
            log_rate = _dot(_row(data.X, i), beta) + params["b"][g]
        total = total + _weibull_row(data.kinds[i], data.lower[i], data.upper[i], log_rate, alpha)
    if variant == "gamma":
        psi = params["psi"]
        for w in params["w"]:
            total = total + psi * np.log(psi) - loggamma(psi) + (psi - 1) * np.log(w) - psi * w
    else:
        tau = params["tau"]
        for b in params["b"]:
            total = total + 0.5 * np.log(tau / (2 * np.pi)) - 0.5 * tau * b * b
    return total


def joint(params, data, gl_order=15):
    bl, bs = params["betaL"], params["betaS"]
    gamma, alpha, sigma = params["gamma"], params["alpha"], params["sigma"]
    Sigma = params["Sigma"]
    b = params["b"]
    ex = data.extras
    xk, wk = leggauss(gl_order)
    total = 0.0
    for m in range(len(ex["long_y"])):
        i = ex["long_subject"][m]
        t = ex["long_time"][m]
        mu = _dot(list(ex["XL"][m]), bl) + b[i][0] + b[i][1] * t
        r = ex["long_y"][m] - mu
        total = total - 0.5 * np.log(2 * np.pi * sigma * sigma) - r * r / (2 * sigma * sigma)
    s11, s12, s22 = Sigma[0][0], Sigma[0][1], Sigma[1][1]
    det = s11 * s22 - s12 * s12
    for i in range(len(data)):
        T = data.lower[i]
        lp = _dot(_row(data.X, i), bs)
        cum = 0.0
        for j in range(gl_order):
            u = T / 2 * (xk[j] + 1)
            cum = cum + wk[j] * alpha * u ** (alpha - 1) * np.exp(lp + gamma * (b[i][0] + b[i][1] * u))
        total = total - T / 2 * cum
        if data.kinds[i] == CensorKind.EXACT:
            total = total + np.log(alpha) + (alpha - 1) * np.log(T) + lp + gamma * (b[i][0] + b[i][1] * T)
        q = (s22 * b[i][0] ** 2 - 2 * s12 * b[i][0] * b[i][1] + s11 * b[i][1] ** 2) / det
        total = total - np.log(2 * np.pi) - 0.5 * np.log(det) - 0.5 * q
    return total


def oracle_loglik(family, params, data, **structure):
    """Dispatch to the reference implementation of ``family``."""
    if family == "aft":
        return aft(params, data)
    if family == "ph":
        return ph(params, data, structure["partition"].knots)
    if family == "cure":
        return cure(params, data)
    if family == "competing_risks":
        return competing_risks(params, data)
    if family == "illness_death":
        return illness_death(params, data, structure.get("exposure", "total"))
    if family == "frailty":
        return frailty(params, data, structure.get("variant", "gamma"))
    if family == "joint":
        return joint(params, data, structure.get("gl_order", 15))
    raise ValueError(f"unknown family {family!r}")
