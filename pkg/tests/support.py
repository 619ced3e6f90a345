"""Shared builders for the test suite: small datasets with mixed censoring
and random parameter values around the simulation truths."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from bayesurv.core import CensoredObservation, CensorKind, SurvivalDataset, TimePartition
from bayesurv.models import FAMILIES, ModelSpec
from bayesurv.simulate import default_scenario, simulate

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"

# criterion number -> (PASS | FAIL | SKIP, one-line detail); printed by conftest
ACCEPTANCE: dict = {}


def record(number, ok, text):
    ACCEPTANCE[number] = ("PASS" if ok else "FAIL", text)


def record_skip(number, text):
    ACCEPTANCE[number] = ("SKIP", text)


def fixture_path(name):
    return FIXTURES / name


def with_mixed_censoring(data: SurvivalDataset, rng, end=None) -> SurvivalDataset:
    """Turn about a third of the exact records into left- or interval-censored ones."""
    obs = []
    for o in data.observations:
        u = rng.random()
        if o.kind is CensorKind.EXACT and u < 0.15:
            hi = o.t * 1.2 if end is None else min(o.t * 1.2, end)
            obs.append(CensoredObservation.left(o.subject_id, hi))
        elif o.kind is CensorKind.EXACT and u < 0.35:
            hi = o.t * 1.3 if end is None else min(o.t * 1.3, end)
            obs.append(CensoredObservation.interval(o.subject_id, 0.8 * o.t, hi))
        else:
            obs.append(o)
    return SurvivalDataset(tuple(obs), data.design, data.extras)


def small_case(family, seed, n=40, mixed=True):
    """(ModelSpec, dataset, scenario) for a quick likelihood check."""
    sc = default_scenario(family, n, seed)
    data = simulate(sc)
    structure = {}
    if family == "ph":
        structure["partition"] = TimePartition(sc.options["knots"])
    if family == "illness_death":
        structure["exposure"] = "total" if seed % 2 else "state1"
    if mixed and family in ("aft", "ph", "cure", "frailty"):
        end = sc.options["knots"][-1] if family == "ph" else None
        data = with_mixed_censoring(data, np.random.default_rng(seed + 1000), end)
    return ModelSpec(family, structure=structure), data, sc


def _jitter(rng, value, positive):
    v = np.asarray(value, dtype=float)
    z = rng.normal(scale=0.2, size=v.shape)
    out = v * np.exp(z) if positive else v + z
    return float(out) if out.ndim == 0 else out


def random_values(family, sc, data, rng) -> dict:
    """Parameter (and latent) values near the scenario truth."""
    p = sc.params
    out = {}
    for name, value in p.items():
        if name == "Sigma":
            L = np.linalg.cholesky(np.asarray(value))
            L = L * np.exp(rng.normal(scale=0.1, size=L.shape))
            out[name] = np.tril(L) @ np.tril(L).T
            continue
        positive = name in ("alpha", "lambda", "psi", "tau", "sigma")
        out[name] = _jitter(rng, value, positive)
    if family == "cure" and data.extras["XU"].shape[1] == 0:
        out.pop("betaU", None)
    if family == "frailty":
        G = int(data.extras["n_groups"])
        out["w"] = rng.gamma(out["psi"], 1 / out["psi"], G)
    if family == "joint":
        out["b"] = rng.multivariate_normal(np.zeros(2), out["Sigma"], size=len(data))
    return out


def oracle_structure(spec: ModelSpec) -> dict:
    return dict(spec.structure)


__all__ = ["ACCEPTANCE", "record", "record_skip", "FAMILIES", "fixture_path", "small_case", "random_values", "with_mixed_censoring",
           "oracle_structure"]
