"""Gelman-Rubin PSRF, chain merging and posterior summary tables."""

from __future__ import annotations

import math

import numpy as np
import pandas as pd

from .mcmc import PosteriorSamples

QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)
SUMMARY_COLUMNS = ["mean", "sd", "naive_se", "ts_se", "q2.5", "q25", "q50", "q75", "q97.5", "p_gt_0"]


def gelman_rubin_psrf(chains) -> float:
    """Potential scale reduction factor of one parameter.

    Parameters
    ----------
    chains : array_like, shape (m, n)
        m >= 2 chains of n >= 4 draws.

    Returns
    -------
    float
        ``sqrt(((n-1)/n * W + B/n) / W)``.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected an (m chains, n draws) array")
    m, n = x.shape
    if m < 2 or n < 4:
        raise ValueError(f"need at least 2 chains of 4 draws, got {m} x {n}")
    W = np.mean(np.var(x, axis=1, ddof=1))
    if not W > 0:
        raise ValueError("zero within-chain variance; PSRF undefined")
    B = n * np.var(np.mean(x, axis=1), ddof=1)
    return float(math.sqrt(((n - 1) / n * W + B / n) / W))


def psrf_table(samples: PosteriorSamples, names=None) -> pd.Series:
    """PSRF per parameter (global parameters by default); NaN where undefined."""
    names = samples.global_names if names is None else names
    out = {}
    for name in names:
        try:
            out[name] = gelman_rubin_psrf(samples.chains(name))
        except ValueError:
            out[name] = float("nan")
    return pd.Series(out, name="psrf", dtype=float)


def merge_chains(samples: PosteriorSamples) -> np.ndarray:
    """Chains stacked row-wise, iteration order preserved within each chain."""
    if samples.n_chains < 1:
        raise ValueError("no chains to merge")
    return samples.draws.reshape(-1, samples.draws.shape[2]).copy()


def _levinson(acov, order_max):
    """Partial autocorrelations and innovation variances for AR orders 0..order_max."""
    var = np.empty(order_max + 1)
    var[0] = acov[0]
    phi = np.zeros(0)
    coefs = [phi]
    for p in range(1, order_max + 1):
        k = (acov[p] - np.dot(phi, acov[p - 1:0:-1])) / var[p - 1]
        phi = np.concatenate([phi - k * phi[::-1], [k]])
        var[p] = var[p - 1] * (1 - k * k)
        coefs.append(phi)
        if var[p] <= 0:
            return coefs, var[:p + 1]
    return coefs, var


def spectrum0_ar(x) -> float:
    """Spectral density at frequency zero from an AIC-selected Yule-Walker AR fit."""
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    order_max = int(min(n - 1, math.floor(10 * math.log10(n))))
    full = np.correlate(xc, xc, mode="full")[n - 1:n + order_max] / n
    if not full[0] > 0:
        return 0.0
    coefs, var = _levinson(full, order_max)
    aic = n * np.log(var) + 2 * np.arange(var.size)
    p = int(np.argmin(aic))
    phi = coefs[p]
    v = var[p] * n / (n - (p + 1))
    denom = (1 - np.sum(phi)) ** 2
    if not denom > 1e-12 or not math.isfinite(v):
        raise FloatingPointError("AR fit has a unit root")
    return float(v / denom)


def batch_means_var0(x, n_batches=None) -> float:
    """n * Var(mean) estimated from non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    n = x.size
    b = n_batches or max(2, int(math.sqrt(n)))
    size = n // b
    if size < 1:
        return float(np.var(x, ddof=1)) if n > 1 else 0.0
    means = x[: b * size].reshape(b, size).mean(axis=1)
    return float(size * np.var(means, ddof=1))


def _var0(x):
    try:
        return spectrum0_ar(x)
    except (FloatingPointError, ValueError, np.linalg.LinAlgError):
        return batch_means_var0(x)


def time_series_se(chains) -> float:
    """Monte-Carlo SE of the pooled mean accounting for autocorrelation.

    Each chain contributes its own spectral density at zero; the chain
    variances of the mean are combined, so the value does not depend on
    the order in which chains are listed.
    """
    x = np.atleast_2d(np.asarray(chains, dtype=float))
    m, n = x.shape
    s0 = math.fsum(sorted(_var0(row) for row in x))
    return math.sqrt(max(s0, 0.0) / n) / m


def summarize(samples: PosteriorSamples, names=None) -> pd.DataFrame:
    """Posterior summary table over pooled chains.

    Columns: mean, sd, naive_se (sd / sqrt(N)), ts_se, type-7 quantiles at
    2.5/25/50/75/97.5 % and P(> 0).
    """
    if samples.draws.size == 0 or samples.n_chains * samples.n_draws < 2:
        raise ValueError("need at least two draws to summarize")
    names = samples.global_names if names is None else list(names)
    rows = []
    for name in names:
        ch = samples.chains(name)
        x = np.sort(ch.reshape(-1))
        N = x.size
        mean = math.fsum(x) / N
        sd = math.sqrt(math.fsum((x - mean) ** 2) / (N - 1))
        q = np.quantile(x, QUANTILES, method="linear")
        q = np.maximum.accumulate(q)
        ts = 0.0 if sd == 0 else time_series_se(ch)
        rows.append([mean, sd, sd / math.sqrt(N), ts, *q, float(np.mean(x > 0))])
    return pd.DataFrame(rows, index=pd.Index(names, name="parameter"), columns=SUMMARY_COLUMNS)
