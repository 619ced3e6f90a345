"""Adaptive random-walk Metropolis-within-Gibbs on an unconstrained scale.

Each iteration runs

1. one scalar random-walk update per global coordinate,
2. one joint random-walk update of all global coordinates whose proposal
   covariance is learned during burn-in,
3. for latent-variable models, one vectorised sweep per latent dimension in
   which every group (cluster or subject) accepts or rejects independently.

Proposal scales adapt only during burn-in and are frozen afterwards.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import log_expit

from .core import SurvivalDataset
from .models import Block, ModelSpec

log = logging.getLogger(__name__)

SCALAR_TARGET = 0.44
BLOCK_TARGET = 0.234
MAX_INIT_ATTEMPTS = 50


@dataclass(frozen=True)
class ChainConfig:
    n_chains: int = 3
    burn_in: int = 2000
    n_iter: int = 5000
    thin: int = 5
    seed: int = 20240601
    adapt_window: int = 50
    n_workers: int = 1
    save_latents: bool = True

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.n_iter < self.thin:
            raise ValueError(f"n_iter ({self.n_iter}) must be >= thin ({self.thin})")
        if self.adapt_window < 1:
            raise ValueError("adapt_window must be >= 1")

    @property
    def n_draws(self):
        return self.n_iter // self.thin


@dataclass
class PosteriorSamples:
    """Draws with shape (chain, iteration, parameter)."""

    param_names: list
    draws: np.ndarray
    config: ChainConfig | None = None
    latent_mask: np.ndarray | None = None
    acceptance: dict = field(default_factory=dict)
    family: str | None = None

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim != 3 or self.draws.shape[2] != len(self.param_names):
            raise ValueError("draws must be chains x iterations x parameters")
        if not np.all(np.isfinite(self.draws)):
            raise ValueError("posterior draws contain non-finite values")
        if self.latent_mask is None:
            self.latent_mask = np.zeros(len(self.param_names), dtype=bool)
        self._index = {n: j for j, n in enumerate(self.param_names)}

    @property
    def n_chains(self):
        return self.draws.shape[0]

    @property
    def n_draws(self):
        return self.draws.shape[1]

    def index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"no parameter named {name!r}") from None

    def chains(self, name):
        """(chain, draw) array of one parameter."""
        return self.draws[:, :, self.index(name)]

    def pooled(self, name=None):
        """Chains stacked in order; one column or the full matrix."""
        flat = self.draws.reshape(-1, self.draws.shape[2])
        return flat if name is None else flat[:, self.index(name)]

    def __getitem__(self, name):
        return self.pooled(name)

    @property
    def global_names(self):
        return [n for n, m in zip(self.param_names, self.latent_mask) if not m]

    def subset(self, names):
        idx = [self.index(n) for n in names]
        return PosteriorSamples(list(names), self.draws[:, :, idx], self.config,
                                self.latent_mask[idx], dict(self.acceptance), self.family)


# ---------------------------------------------------------------------------
# transforms


class ParamLayout:
    """Maps constrained block values to one unconstrained vector.

    Positive parameters use log, Uniform(a, b) parameters use a scaled logit
    and covariance matrices use the log-Cholesky map.
    """

    def __init__(self, blocks: list[Block]):
        self.blocks = blocks
        self.offsets = np.cumsum([0] + [b.size for b in blocks])
        self.dim = int(self.offsets[-1])
        self.hyper_mask = np.zeros(self.dim, dtype=bool)
        for b, o in zip(blocks, self.offsets):
            if b.hyper:
                self.hyper_mask[o:o + b.size] = True
        self.labels = [lab for b in blocks for lab in _coordinate_labels(b)]

    def transform(self, values: dict) -> np.ndarray:
        z = np.empty(self.dim)
        for b, o in zip(self.blocks, self.offsets):
            z[o:o + b.size] = _forward(b, values[b.name])
        return z

    def untransform(self, z) -> tuple[dict, float]:
        z = np.asarray(z, dtype=float)
        out, logjac = {}, 0.0
        for b, o in zip(self.blocks, self.offsets):
            v, lj = _inverse(b, z[o:o + b.size])
            out[b.name] = v
            logjac += lj
        return out, logjac


def _coordinate_labels(b):
    if b.prior.support == "covariance":
        d = b.shape[0]
        return [f"{b.name}_chol[{i + 1},{j + 1}]" for i, j in zip(*np.tril_indices(d))]
    return list(b.labels)


def _forward(b, value):
    sup = b.prior.support
    x = np.asarray(value, dtype=float)
    if sup == "real":
        return x.reshape(-1, order="F")
    if sup == "positive":
        if np.any(x <= 0):
            raise ValueError(f"{b.name} must be positive")
        return np.log(x).reshape(-1, order="F")
    if sup == "interval":
        lo, hi = b.prior.lower, b.prior.upper
        if np.any(x <= lo) or np.any(x >= hi):
            raise ValueError(f"{b.name} must lie strictly inside ({lo}, {hi})")
        u = (x - lo) / (hi - lo)
        return (np.log(u) - np.log1p(-u)).reshape(-1, order="F")
    L = np.linalg.cholesky(x)
    L = L.copy()
    L[np.diag_indices_from(L)] = np.log(np.diag(L))
    return L[np.tril_indices(x.shape[0])]


def _log_expit(x):
    return -math.log1p(math.exp(-x)) if x >= 0 else x - math.log1p(math.exp(x))


def _inverse_scalar(b, x):
    sup = b.prior.support
    if sup == "real":
        return x, 0.0
    if sup == "positive":
        return math.exp(x), x
    lo, hi = b.prior.lower, b.prior.upper
    s_pos, s_neg = _log_expit(x), _log_expit(-x)
    return lo + (hi - lo) * math.exp(s_pos), math.log(hi - lo) + s_pos + s_neg


def _inverse(b, z):
    sup = b.prior.support
    if not b.shape:
        return _inverse_scalar(b, float(z[0]))
    if sup == "real":
        v = z.reshape(b.shape, order="F") if b.shape else float(z[0])
        return v, 0.0
    if sup == "positive":
        v = np.exp(z)
        return (v.reshape(b.shape, order="F") if b.shape else float(v[0])), float(np.sum(z))
    if sup == "interval":
        lo, hi = b.prior.lower, b.prior.upper
        s_pos, s_neg = log_expit(z), log_expit(-z)
        v = lo + (hi - lo) * np.exp(s_pos)
        lj = float(np.sum(math.log(hi - lo) + s_pos + s_neg))
        return (v.reshape(b.shape, order="F") if b.shape else float(v[0])), lj
    d = b.shape[0]
    L = np.zeros((d, d))
    L[np.tril_indices(d)] = z
    diag = np.diag(L).copy()
    L[np.diag_indices(d)] = np.exp(diag)
    lj = d * math.log(2) + float(np.sum((d - np.arange(d) + 1) * diag))
    return L @ L.T, lj


def transform_to_unconstrained(values: dict, blocks: list[Block]) -> np.ndarray:
    return ParamLayout(blocks).transform(values)


def untransform(z, blocks: list[Block]):
    return ParamLayout(blocks).untransform(z)


# ---------------------------------------------------------------------------
# targets


class ModelTarget:
    """Log-density on the unconstrained scale for a model family and dataset."""

    def __init__(self, spec: ModelSpec, data: SurvivalDataset):
        self.spec = spec
        self.data = data
        self.model = spec.model
        self.blocks = self.model.blocks(data)
        self.layout = ParamLayout(self.blocks)
        self.dim = self.layout.dim
        self.hyper_mask = self.layout.hyper_mask
        self.latent = self.model.latent(data)
        names = [lab for b in self.blocks for lab in b.labels]
        self.derived_names = list(self.model.derived(self.model.central_init(data)))
        names += self.derived_names
        n_global = len(names)
        if self.latent is not None:
            names += self.latent.labels
        self.names = names
        self.latent_mask = np.arange(len(names)) >= n_global

    # latent helpers -----------------------------------------------------
    def latent_init(self):
        if self.latent is None:
            return None
        return np.zeros((self.latent.n_groups, self.latent.dim))

    def _latent_values(self, u):
        if self.latent is None:
            return {}
        x = np.exp(u) if self.latent.support == "positive" else u
        return {self.latent.name: x if self.latent.dim > 1 else x[:, 0]}

    def _latent_logjac(self, u):
        if self.latent is not None and self.latent.support == "positive":
            return u.sum(axis=1)
        return 0.0

    def values(self, z, u):
        vals, lj = self.layout.untransform(z)
        vals.update(self._latent_values(u))
        return vals, lj

    def _log_prior(self, vals):
        total = 0.0
        for b in self.blocks:
            lp = b.prior.logpdf(vals[b.name])
            if lp == -math.inf:
                return lp
            total += lp
        return total

    def log_density(self, z, u):
        vals, lj = self.values(z, u)
        lp = self._log_prior(vals)
        if lp == -math.inf:
            return -math.inf
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                ll = self.model.loglik(vals, self.data)
        except (ValueError, np.linalg.LinAlgError):
            return -math.inf
        total = lp + ll + lj + float(np.sum(self._latent_logjac(u)))
        return total if math.isfinite(total) else -math.inf

    def latent_log_terms(self, z, u):
        vals, _ = self.values(z, u)
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                t = self.model.latent_terms(vals, self.data) + self._latent_logjac(u)
        except (ValueError, np.linalg.LinAlgError):
            return np.full(self.latent.n_groups, -np.inf)
        return np.where(np.isfinite(t), t, -np.inf)

    def stored(self, z, u, save_latents=True):
        vals, _ = self.values(z, u)
        parts = [b.stored(vals[b.name]) for b in self.blocks]
        d = self.model.derived(vals)
        parts.append(np.array([d[k] for k in self.derived_names], dtype=float))
        if self.latent is not None and save_latents:
            x = self._latent_values(u)[self.latent.name]
            parts.append(np.asarray(x).reshape(-1, order="F"))
        return np.concatenate(parts)

    def central_z(self):
        return self.layout.transform(self.model.central_init(self.data))

    def shift_moves(self):
        """Shift moves as coordinate indices ``(coef, latent_dim, comp, scale)``."""
        if self.latent is None:
            return []
        offsets, pos = {}, 0
        for b in self.blocks:
            offsets[b.name] = (pos, b)
            pos += b.size
        out = []
        for name, idx, dim, comp in self.model.shift_moves(self.data):
            start, b = offsets[name]
            if b.prior.support != "real":
                raise ValueError(f"shift move on non-real block {name!r}")
            comp_idx = scale_idx = -1
            if comp is not None:
                cname, cidx, sname = comp
                comp_idx = offsets[cname][0] + cidx
                scale_idx = offsets[sname][0]
                if offsets[sname][1].prior.support != "real":
                    raise ValueError(f"shift scale {sname!r} must be real-valued")
            out.append((start + idx, dim, comp_idx, scale_idx))
        return out

    def random_z(self, rng):
        return self.layout.transform(self.model.random_init(rng, self.data))


class FunctionTarget:
    """Arbitrary log-density on R^dim (no latents), for testing the kernel."""

    latent = None

    def __init__(self, logpdf, dim, names=None, init=None):
        self.logpdf = logpdf
        self.dim = dim
        self.names = list(names or [f"x[{j + 1}]" for j in range(dim)])
        self.hyper_mask = np.zeros(dim, dtype=bool)
        self.latent_mask = np.zeros(dim, dtype=bool)
        self._init = np.zeros(dim) if init is None else np.asarray(init, dtype=float)
        self.layout = None
        self.spec = None

    def latent_init(self):
        return None

    def log_density(self, z, u):
        v = float(self.logpdf(z))
        return v if math.isfinite(v) else -math.inf

    def stored(self, z, u, save_latents=True):
        return np.asarray(z, dtype=float).copy()

    def central_z(self):
        return self._init.copy()

    def shift_moves(self):
        return []

    def random_z(self, rng):
        return self._init + rng.normal(size=self.dim)


# ---------------------------------------------------------------------------
# initialisation


@dataclass
class LaplaceStart:
    mode: np.ndarray
    cov: np.ndarray
    sd: np.ndarray
    scalar_scale: np.ndarray


def _numerical_hessian(f, x, h):
    d = x.size
    H = np.empty((d, d))
    f0 = f(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(d)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej)
                                 + f(x - ei - ej)) / (4 * h[i] * h[j])
    return H


def laplace_start(target) -> LaplaceStart:
    """Posterior-mode heuristic with hyperparameters held at central values.

    Latents stay at their central values (w = 1, b = 0) while the
    remaining global coordinates are optimised; the finite-difference
    Hessian at the mode seeds the proposal scales.
    """
    z0 = target.central_z()
    u0 = target.latent_init()
    free = ~target.hyper_mask
    d = target.dim

    def full(x):
        z = z0.copy()
        z[free] = x
        return z

    def nlp(x):
        v = target.log_density(full(x), u0)
        return -v if math.isfinite(v) else 1e300

    x0 = z0[free]
    if not math.isfinite(target.log_density(z0, u0)):
        raise RuntimeError("log-posterior is not finite at the central starting point")
    mode = x0
    if x0.size:
        best = None
        for method in ("BFGS", "Nelder-Mead"):
            opts = {"maxiter": 2000 * max(1, x0.size)} if method == "Nelder-Mead" else {"gtol": 1e-6}
            res = optimize.minimize(nlp, mode if best is None else best.x, method=method, options=opts)
            if best is None or res.fun < best.fun:
                best = res
            if method == "BFGS" and res.success:
                break
        mode = best.x
    h = 1e-3 * np.maximum(1.0, np.abs(mode))
    cov_free = np.eye(mode.size)
    if mode.size:
        H = _numerical_hessian(nlp, mode, h)
        H = 0.5 * (H + H.T)
        if np.all(np.isfinite(H)):
            # directions left flat by the fixed latents (e.g. an association
            # parameter while b = 0) get unit variance rather than a vast one
            w, V = np.linalg.eigh(H)
            w = np.maximum(w, 1.0)
            cov_free = (V / w) @ V.T
            cond_sd = 1 / np.sqrt(np.maximum(np.diag(H), 1.0))
        else:
            cond_sd = np.ones(mode.size)
    else:
        cond_sd = np.ones(0)
    cov = np.eye(d) * 0.25
    cov[np.ix_(free, free)] = cov_free
    sd = np.sqrt(np.diag(cov))
    scalar = np.full(d, 0.5)
    scalar[free] = 2.4 * np.minimum(cond_sd, np.sqrt(np.diag(cov_free)))
    return LaplaceStart(full(mode), cov, sd, scalar)


def _initial_state(target, start: LaplaceStart, rng):
    u = target.latent_init()
    for _ in range(MAX_INIT_ATTEMPTS):
        try:
            z = target.random_z(rng)
        except ValueError:
            continue
        z = np.clip(z, start.mode - 3 * start.sd, start.mode + 3 * start.sd)
        if math.isfinite(target.log_density(z, u)):
            return z, u
    z = start.mode.copy()
    if math.isfinite(target.log_density(z, u)):
        return z, u
    raise RuntimeError(f"no finite log-posterior after {MAX_INIT_ATTEMPTS} initialisation attempts")


# ---------------------------------------------------------------------------
# sampling


def _chain(target, start: LaplaceStart, config: ChainConfig, chain_index: int):
    rng = np.random.default_rng([config.seed, chain_index])
    z, u = _initial_state(target, start, rng)
    d = target.dim
    lp = target.log_density(z, u)

    log_s = np.log(np.maximum(start.scalar_scale, 1e-6))
    block_cov = start.cov.copy()
    block_chol = _safe_chol(block_cov)
    log_sb = 0.0
    block_base = 2.38 ** 2 / max(d, 1)
    latent = target.latent
    if latent is not None:
        lat_log_s = np.full(latent.dim, math.log(0.5))
        terms = target.latent_log_terms(z, u)
    moves = target.shift_moves()
    log_sm = np.array([math.log(max(start.sd[j], 1e-3)) for j, *_ in moves])
    acc_m = np.zeros(len(moves))
    acc_s = np.zeros(d)
    acc_b = 0
    acc_l = np.zeros(latent.dim if latent is not None else 0)
    post = {"scalar": np.zeros(d), "block": 0, "latent": np.zeros(acc_l.size), "n": 0}
    history = []
    total = config.burn_in + config.n_iter
    n_stored = len(target.names) if config.save_latents or latent is None else int(np.sum(~target.latent_mask))
    out = np.empty((config.n_draws, n_stored))
    k_window = 0
    saved = 0
    for it in range(total):
        burning = it < config.burn_in
        # scalar updates
        for j in range(d):
            zp = z.copy()
            zp[j] += math.exp(log_s[j]) * rng.standard_normal()
            lpp = target.log_density(zp, u)
            if math.log(rng.random()) < lpp - lp:
                z, lp = zp, lpp
                acc_s[j] += 1
                if not burning:
                    post["scalar"][j] += 1
        # joint block update
        if d > 1:
            zp = z + math.exp(log_sb) * math.sqrt(block_base) * (block_chol @ rng.standard_normal(d))
            lpp = target.log_density(zp, u)
            if math.log(rng.random()) < lpp - lp:
                z, lp = zp, lpp
                acc_b += 1
                if not burning:
                    post["block"] += 1
        # latent sweeps
        if latent is not None:
            terms = target.latent_log_terms(z, u)
            for k in range(latent.dim):
                up = u.copy()
                up[:, k] += math.exp(lat_log_s[k]) * rng.standard_normal(latent.n_groups)
                tp = target.latent_log_terms(z, up)
                accept = np.log(rng.random(latent.n_groups)) < tp - terms
                u[accept, k] = up[accept, k]
                terms = np.where(accept, tp, terms)
                rate = accept.mean()
                acc_l[k] += rate
                if not burning:
                    post["latent"][k] += rate
            lp = target.log_density(z, u)
        # fixed effect / latent column translations
        for m, (j, k, jc, js) in enumerate(moves):
            delta = math.exp(log_sm[m]) * rng.standard_normal()
            zp = z.copy()
            zp[j] += delta
            if jc >= 0:
                zp[jc] += z[js] * delta
            up = u.copy()
            up[:, k] -= delta
            lpp = target.log_density(zp, up)
            if math.log(rng.random()) < lpp - lp:
                z, u, lp = zp, up, lpp
                acc_m[m] += 1
        if not burning:
            post["n"] += 1
        # adaptation
        if burning:
            history.append(z.copy())
            if (it + 1) % config.adapt_window == 0:
                k_window += 1
                gain = 2.0 / math.sqrt(k_window)
                w = config.adapt_window
                log_s += gain * (acc_s / w - SCALAR_TARGET)
                log_sb += gain * (acc_b / w - BLOCK_TARGET)
                if latent is not None:
                    lat_log_s += gain * (acc_l / w - SCALAR_TARGET)
                log_sm += gain * (acc_m / w - SCALAR_TARGET)
                acc_m[:] = 0
                acc_s[:] = 0
                acc_b = 0
                acc_l[:] = 0
                n_hist = len(history)
                if d > 1 and n_hist >= 4 * config.adapt_window:
                    recent = np.asarray(history[n_hist // 2:])
                    weight = min(1.0, recent.shape[0] / (10.0 * d))
                    emp = np.cov(recent, rowvar=False) if d > 1 else np.var(recent)
                    new_cov = weight * emp + (1 - weight) * start.cov + 1e-10 * np.eye(d)
                    chol = _safe_chol(new_cov)
                    if chol is not None:
                        block_cov, block_chol = new_cov, chol
        elif (it - config.burn_in + 1) % config.thin == 0:
            out[saved] = target.stored(z, u, config.save_latents)
            saved += 1
    n_post = max(post["n"], 1)
    acceptance = {"scalar": post["scalar"] / n_post, "block": post["block"] / n_post,
                  "latent": post["latent"] / n_post,
                  "scales": np.exp(log_s), "block_scale": math.exp(log_sb)}
    return out, acceptance


def _safe_chol(C):
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        return np.diag(np.sqrt(np.maximum(np.diag(C), 1e-12)))


def _run_one(args):
    target, start, config, index = args
    return _chain(target, start, config, index)


def sample_target(target, config: ChainConfig, family=None) -> PosteriorSamples:
    """Run ``config.n_chains`` chains on any target exposing the target protocol."""
    start = laplace_start(target)
    jobs = [(target, start, config, c) for c in range(config.n_chains)]
    if config.n_workers > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.n_workers, config.n_chains)) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    draws = np.stack([r[0] for r in results])
    names = list(target.names)
    mask = np.asarray(target.latent_mask)
    if not config.save_latents:
        names = [n for n, m in zip(names, mask) if not m]
        mask = np.zeros(len(names), dtype=bool)
    coord_labels = target.layout.labels if target.layout is not None else names
    acceptance = {
        "scalar": {lab: [float(r[1]["scalar"][j]) for r in results] for j, lab in enumerate(coord_labels)},
        "block": [float(r[1]["block"]) for r in results],
        "latent": [r[1]["latent"].tolist() for r in results],
    }
    return PosteriorSamples(names, draws, config, mask, acceptance, family)


def run_chains(model: ModelSpec, data: SurvivalDataset, config: ChainConfig) -> PosteriorSamples:
    """Sample the posterior of ``model`` given ``data``."""
    target = ModelTarget(model, data)
    return sample_target(target, config, family=model.family)
