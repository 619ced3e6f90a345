"""Prior families in BUGS conventions: Normal(mean, precision),
Gamma(shape, rate), Uniform(lower, upper), InvWishart(scale, df)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, multigammaln


@dataclass(frozen=True)
class Normal:
    mean: float = 0.0
    precision: float = 0.001
    support = "real"

    def __post_init__(self):
        if not self.precision > 0:
            raise ValueError("precision must be positive")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return float(np.sum(0.5 * math.log(self.precision / (2 * math.pi))
                            - 0.5 * self.precision * (x - self.mean) ** 2))

    def sample(self, rng, size):
        return rng.normal(self.mean, 1 / math.sqrt(self.precision), size)


@dataclass(frozen=True)
class Gamma:
    shape: float = 0.01
    rate: float = 0.01
    support = "positive"

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("gamma shape and rate must be positive")

    def logpdf(self, x):
        a, b = self.shape, self.rate
        if isinstance(x, float):
            if not x > 0:
                return -math.inf
            return a * math.log(b) - float(gammaln(a)) + (a - 1) * math.log(x) - b * x
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            return -math.inf
        return float(np.sum(a * math.log(b) - gammaln(a) + (a - 1) * np.log(x) - b * x))

    def sample(self, rng, size):
        return rng.gamma(self.shape, 1 / self.rate, size)


@dataclass(frozen=True)
class Uniform:
    lower: float = 0.0
    upper: float = 10.0
    support = "interval"

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("uniform needs lower < upper")

    def logpdf(self, x):
        if isinstance(x, float):
            return -math.log(self.upper - self.lower) if self.lower < x < self.upper else -math.inf
        x = np.asarray(x, dtype=float)
        if np.any(x <= self.lower) or np.any(x >= self.upper):
            return -math.inf
        return -x.size * math.log(self.upper - self.lower)

    def sample(self, rng, size):
        return rng.uniform(self.lower, self.upper, size)


@dataclass(frozen=True)
class InvWishart:
    """Inverse-Wishart on a covariance matrix; equivalent to a BUGS
    ``dwish(scale, df)`` prior on its inverse."""

    scale: tuple = ((1.0, 0.0), (0.0, 1.0))
    df: float = 2.0
    support = "covariance"

    def __post_init__(self):
        S = np.asarray(self.scale, dtype=float)
        object.__setattr__(self, "scale", tuple(map(tuple, S)))
        if S.shape[0] != S.shape[1] or np.any(np.linalg.eigvalsh(S) <= 0):
            raise ValueError("inverse-Wishart scale must be positive definite")
        if not self.df > S.shape[0] - 1:
            raise ValueError("inverse-Wishart df must exceed dim - 1")

    @property
    def dim(self):
        return len(self.scale)

    def logpdf(self, Sigma):
        Sigma = np.asarray(Sigma, dtype=float)
        p, nu = self.dim, self.df
        Psi = np.asarray(self.scale)
        try:
            L = np.linalg.cholesky(Sigma)
        except np.linalg.LinAlgError:
            return -math.inf
        logdet_sigma = 2 * np.sum(np.log(np.diag(L)))
        logdet_psi = np.linalg.slogdet(Psi)[1]
        tr = np.trace(np.linalg.solve(Sigma, Psi))
        return float(0.5 * nu * logdet_psi - 0.5 * nu * p * math.log(2)
                     - multigammaln(0.5 * nu, p)
                     - 0.5 * (nu + p + 1) * logdet_sigma - 0.5 * tr)

    def sample(self, rng, size=None):
        from scipy.stats import invwishart

        return invwishart(df=self.df, scale=np.asarray(self.scale)).rvs(
            size=size, random_state=rng)


Prior = Normal | Gamma | Uniform | InvWishart


def prior_from_dict(d: dict):
    """Build a prior from a config mapping, e.g. ``{"dist": "gamma", "shape": 1, "rate": 0.1}``."""
    d = dict(d)
    kind = d.pop("dist").lower()
    table = {"normal": Normal, "gamma": Gamma, "uniform": Uniform,
             "invwishart": InvWishart, "inv-wishart": InvWishart}
    if kind not in table:
        raise ValueError(f"unknown prior family {kind!r}")
    return table[kind](**d)


def log_prior(params: dict, spec: dict) -> float:
    """Sum of independent prior log-densities; ``spec`` maps block name to prior.

    Returns -inf outside any prior's support.
    """
    total = 0.0
    for name, prior in spec.items():
        lp = prior.logpdf(params[name])
        if lp == -math.inf:
            return -math.inf
        total += lp
    return total
