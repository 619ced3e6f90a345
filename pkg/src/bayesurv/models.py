"""Model families: parameter blocks, default priors, labels, latent
variables and derived quantities, plus the log-posterior they define."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import likelihoods as lk
from .core import SurvivalDataset, TimePartition
from .priors import Gamma, InvWishart, Normal, Uniform, log_prior

FAMILIES = ("aft", "ph", "cure", "competing_risks", "illness_death", "frailty", "joint")


@dataclass
class Block:
    """A named group of parameters sharing one prior."""

    name: str
    shape: tuple
    prior: object
    labels: list
    hyper: bool = False

    @property
    def size(self):
        """Number of unconstrained coordinates."""
        if self.prior.support == "covariance":
            d = self.shape[0]
            return d * (d + 1) // 2
        return int(np.prod(self.shape)) if self.shape else 1

    def stored(self, value):
        """Values written to the draw table, aligned with ``labels``."""
        value = np.asarray(value, dtype=float)
        if self.prior.support == "covariance":
            return value[np.triu_indices(self.shape[0])]
        return value.reshape(-1, order="F")


@dataclass
class LatentSpec:
    name: str
    n_groups: int
    dim: int
    support: str  # "positive" or "real"
    labels: list


@dataclass
class ModelSpec:
    """Family tag plus prior overrides and family-specific structure.

    ``structure`` keys: ``partition`` (PH), ``gl_order`` (joint),
    ``exposure`` (illness-death), ``variant`` (frailty).
    """

    family: str
    priors: dict = field(default_factory=dict)
    structure: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}; choose from {FAMILIES}")

    @property
    def model(self):
        return FAMILY_MODELS[self.family](self)


def _vec_labels(name, n):
    return [f"{name}[{j + 1}]" for j in range(n)]


def _mat_labels(name, p, k):
    # column-major, matching BUGS monitor order beta[1,1], beta[2,1], ...
    return [f"{name}[{i + 1},{j + 1}]" for j in range(k) for i in range(p)]


class FamilyModel:
    """Base class; subclasses fill in blocks and likelihood glue."""

    latent_name = None

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.structure = spec.structure

    def _prior(self, name, default):
        return self.spec.priors.get(name, default)

    def blocks(self, data: SurvivalDataset) -> list[Block]:
        raise NotImplementedError

    def loglik(self, values: dict, data: SurvivalDataset) -> float:
        raise NotImplementedError

    def latent(self, data):
        return None

    def latent_terms(self, values, data):
        raise NotImplementedError

    def derived(self, values) -> dict:
        return {}

    def shift_moves(self, data) -> list:
        """Location moves pairing a fixed effect with one latent column.

        Each entry is ``(block, index, latent_dim, compensation)``: the
        coefficient moves by +d, the latent column by -d, and an optional
        ``(block, index, scale_block)`` moves by ``scale * d`` so that a
        linear predictor elsewhere stays put.
        """
        return []

    def central_init(self, data) -> dict:
        out = {}
        for b in self.blocks(data):
            out[b.name] = _central_value(b)
        return out

    def random_init(self, rng, data) -> dict:
        """Prior-scale random starting values in the spirit of ``rnorm``/``runif`` inits."""
        out = {}
        for b in self.blocks(data):
            sup = b.prior.support
            if sup == "real":
                out[b.name] = rng.normal(size=b.shape) if b.shape else float(rng.normal())
            elif sup == "positive" or sup == "interval":
                lo = getattr(b.prior, "lower", 0.0)
                hi = min(getattr(b.prior, "upper", 1.0), lo + 1.0)
                u = rng.uniform(lo, hi, size=b.shape) if b.shape else float(rng.uniform(lo, hi))
                out[b.name] = np.maximum(u, lo + 0.05 * (hi - lo))
            else:
                out[b.name] = np.diag(rng.uniform(0.05, 1.0, b.shape[0]))
        return out

    def log_prior(self, values, data):
        return log_prior(values, {b.name: b.prior for b in self.blocks(data)})

    def log_posterior(self, values, data):
        lp = self.log_prior(values, data)
        if lp == -math.inf:
            return lp
        try:
            ll = self.loglik(values, data)
        except (ValueError, FloatingPointError, np.linalg.LinAlgError):
            return -math.inf
        return lp + ll if math.isfinite(ll) else -math.inf


def _central_value(block):
    sup = block.prior.support
    if sup == "real":
        return np.zeros(block.shape) if block.shape else 0.0
    if sup == "positive":
        return np.ones(block.shape) if block.shape else 1.0
    if sup == "interval":
        lo, hi = block.prior.lower, block.prior.upper
        v = min(1.0, lo + 0.5 * (hi - lo)) if lo < 1.0 < hi else lo + 0.5 * (hi - lo)
        return np.full(block.shape, v) if block.shape else v
    return np.eye(block.shape[0])


class AftModel(FamilyModel):
    def blocks(self, data):
        p = data.X.shape[1]
        return [
            Block("beta", (p,), self._prior("beta", Normal()), _vec_labels("beta", p)),
            Block("alpha", (), self._prior("alpha", Uniform(0, 10)), ["alpha"]),
        ]

    def params(self, v):
        return lk.AftParams(np.asarray(v["beta"]), float(v["alpha"]))

    def loglik(self, values, data):
        return lk.aft_loglik(self.params(values), data)


class PhModel(FamilyModel):
    @property
    def partition(self) -> TimePartition:
        part = self.structure.get("partition")
        if part is None:
            raise ValueError("the piecewise PH family needs a time partition")
        return part

    def blocks(self, data):
        p = data.X.shape[1]
        K = self.partition.n_intervals
        out = []
        if p:
            out.append(Block("beta", (p,), self._prior("beta", Normal()), _vec_labels("beta", p)))
        out.append(Block("lambda", (K,), self._prior("lambda", Gamma()), _vec_labels("lambda", K)))
        return out

    def params(self, v):
        return lk.PhParams(np.asarray(v.get("beta", np.zeros(0))), np.asarray(v["lambda"]))

    def loglik(self, values, data):
        return lk.ph_piecewise_loglik(self.params(values), data, self.partition)

    def random_init(self, rng, data):
        out = super().random_init(rng, data)
        out["lambda"] = rng.uniform(0.1, 1.0, self.partition.n_intervals)
        return out


class CureModel(FamilyModel):
    def blocks(self, data):
        pc, pu = data.X.shape[1], data.extras["XU"].shape[1]
        out = [Block("betaC", (pc,), self._prior("betaC", Normal()), _vec_labels("betaC", pc))]
        if pu:
            out.append(Block("betaU", (pu,), self._prior("betaU", Normal()), _vec_labels("betaU", pu)))
        out += [
            Block("lambda", (), self._prior("lambda", Gamma()), ["lambda"]),
            Block("alpha", (), self._prior("alpha", Uniform(0, 10)), ["alpha"]),
        ]
        return out

    def params(self, v):
        return lk.CureParams(np.asarray(v["betaC"]), np.asarray(v.get("betaU", np.zeros(0))),
                             float(v["lambda"]), float(v["alpha"]))

    def loglik(self, values, data):
        return lk.cure_loglik(self.params(values), data)


class CompetingRisksModel(FamilyModel):
    def n_risks(self, data):
        return int(self.structure.get("n_risks", data.extras.get("n_risks", data.event_labels.max())))

    def blocks(self, data):
        p, K = data.X.shape[1], self.n_risks(data)
        return [
            Block("beta", (p, K), self._prior("beta", Normal()), _mat_labels("beta", p, K)),
            Block("lambda", (K,), self._prior("lambda", Gamma()), _vec_labels("lambda", K)),
            Block("alpha", (K,), self._prior("alpha", Uniform(0, 10)), _vec_labels("alpha", K)),
        ]

    def params(self, v):
        return lk.CompetingRisksParams(np.asarray(v["beta"]), np.asarray(v["lambda"]),
                                       np.asarray(v["alpha"]))

    def loglik(self, values, data):
        return lk.competing_risks_loglik(self.params(values), data)


class IllnessDeathModel(CompetingRisksModel):
    def n_risks(self, data):
        return 3

    def params(self, v):
        return lk.IllnessDeathParams(np.asarray(v["beta"]), np.asarray(v["lambda"]),
                                     np.asarray(v["alpha"]))

    def loglik(self, values, data):
        return lk.illness_death_loglik(self.params(values), data,
                                       exposure=self.structure.get("exposure", "total"))


class FrailtyModel(FamilyModel):
    @property
    def variant(self):
        return self.structure.get("variant", "gamma")

    def n_groups(self, data):
        return int(data.extras.get("n_groups", np.max(data.extras["group"]) + 1))

    def blocks(self, data):
        p = data.X.shape[1]
        out = [
            Block("beta", (p,), self._prior("beta", Normal()), _vec_labels("beta", p)),
            Block("alpha", (), self._prior("alpha", Uniform(0, 10)), ["alpha"]),
        ]
        if self.variant == "gamma":
            out.append(Block("psi", (), self._prior("psi", Gamma()), ["psi"], hyper=True))
        else:
            out.append(Block("tau", (), self._prior("tau", Gamma()), ["tau"], hyper=True))
        return out

    def latent(self, data):
        G = self.n_groups(data)
        if self.variant == "gamma":
            return LatentSpec("w", G, 1, "positive", _vec_labels("w", G))
        return LatentSpec("b", G, 1, "real", _vec_labels("b", G))

    def params(self, v):
        if self.variant == "gamma":
            return lk.FrailtyParams(np.asarray(v["beta"]), float(v["alpha"]), psi=float(v["psi"]),
                                    w=np.asarray(v["w"]).reshape(-1))
        return lk.FrailtyParams(np.asarray(v["beta"]), float(v["alpha"]), variant="normal",
                                tau=float(v["tau"]), b=np.asarray(v["b"]).reshape(-1))

    def latent_terms(self, values, data):
        return lk.frailty_group_terms(self.params(values), data)

    def loglik(self, values, data):
        return float(np.sum(self.latent_terms(values, data)))

    def derived(self, values):
        return {"lambda": math.exp(float(np.asarray(values["beta"])[0]))}

    def shift_moves(self, data):
        # log w or b absorbs a common offset with the first coefficient
        return [("beta", 0, 0, None)] if data.X.shape[1] else []


class JointModel(FamilyModel):
    def blocks(self, data):
        pl, ps = data.extras["XL"].shape[1], data.X.shape[1]
        return [
            Block("betaL", (pl,), self._prior("betaL", Normal()), _vec_labels("betaL", pl)),
            Block("betaS", (ps,), self._prior("betaS", Normal()), _vec_labels("betaS", ps)),
            Block("gamma", (), self._prior("gamma", Normal()), ["gamma"]),
            Block("alpha", (), self._prior("alpha", Uniform(0, 10)), ["alpha"]),
            Block("sigma", (), self._prior("sigma", Uniform(0, 100)), ["sigma"]),
            Block("Sigma", (2, 2), self._prior("Sigma", InvWishart()),
                  ["Sigma[1,1]", "Sigma[1,2]", "Sigma[2,2]"], hyper=True),
        ]

    def latent(self, data):
        n = len(data)
        labels = [f"b[{i + 1},{j + 1}]" for j in range(2) for i in range(n)]
        return LatentSpec("b", n, 2, "real", labels)

    def params(self, v):
        return lk.JointParams(np.asarray(v["betaL"]), np.asarray(v["betaS"]), float(v["gamma"]),
                              float(v["alpha"]), float(v["sigma"]), np.asarray(v["Sigma"]),
                              np.asarray(v["b"]).reshape(-1, 2))

    def latent_terms(self, values, data):
        return lk.joint_subject_terms(self.params(values), data,
                                      self.structure.get("gl_order", 15))

    def loglik(self, values, data):
        return float(np.sum(self.latent_terms(values, data)))

    def derived(self, values):
        return {"lambda": math.exp(float(np.asarray(values["betaS"])[0]))}

    def shift_moves(self, data):
        moves = [("betaL", 0, 0, ("betaS", 0, "gamma") if data.X.shape[1] else None)]
        if data.extras["XL"].shape[1] > 1:
            moves.append(("betaL", 1, 1, None))
        return moves

    def central_init(self, data):
        out = super().central_init(data)
        y = np.asarray(data.extras["long_y"], dtype=float)
        out["betaL"] = np.zeros(data.extras["XL"].shape[1])
        out["betaL"][0] = float(np.mean(y))
        out["sigma"] = max(float(np.std(y)), 1e-3)
        out["Sigma"] = np.diag([max(np.var(y), 1e-3), 0.1 * max(np.var(y), 1e-3)])
        return out


FAMILY_MODELS = {
    "aft": AftModel,
    "ph": PhModel,
    "cure": CureModel,
    "competing_risks": CompetingRisksModel,
    "illness_death": IllnessDeathModel,
    "frailty": FrailtyModel,
    "joint": JointModel,
}


def log_posterior(values: dict, data: SurvivalDataset, spec: ModelSpec) -> float:
    """Log-likelihood plus log-prior; -inf when any prior support is violated."""
    return spec.model.log_posterior(values, data)
