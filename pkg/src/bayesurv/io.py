"""Dataset ingestion, fit configuration and on-disk fit artifacts.

A fit is described by one JSON document::

    {
      "family": "aft",
      "data": "larynx.csv",
      "bindings": {"time": "time", "status": "delta",
                   "covariates": ["stage", "age", "diagyr"],
                   "factors": {"stage": {"reference": 1}},
                   "standardize": ["age", "diagyr"]},
      "priors": {"alpha": {"dist": "uniform", "lower": 0, "upper": 10}},
      "structure": {"partition": {"K": 3, "pad": 0.001}},
      "chains": {"n_chains": 3, "burn_in": 1000, "n_iter": 50000, "thin": 10, "seed": 1},
      "derive": [{"quantity": "relative_median", "x1": {"stage3": 1}, "x2": {"stage4": 1}}]
    }

Relative paths resolve against the directory of the config file.
Command-line flags override the ``chains`` section.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd

from .core import CensoredObservation, DesignMatrix, SurvivalDataset, TimePartition
from .diagnostics import psrf_table, summarize
from .mcmc import ChainConfig, PosteriorSamples, run_chains
from .models import FAMILIES, ModelSpec
from .priors import prior_from_dict
from . import quantities as q
from .simulate import illness_death_dataset

FLOAT_FORMAT = "%.17g"
SAMPLES_FILE = "samples.csv"
SUMMARY_FILE = "summary.csv"
DIAGNOSTICS_FILE = "diagnostics.csv"
CURVES_FILE = "curves.csv"
DERIVED_FILE = "derived.csv"
RUN_FILE = "run.json"
DEFAULT_PSRF_THRESHOLD = 1.1


class ConfigError(ValueError):
    """Invalid fit configuration or column binding."""


# ---------------------------------------------------------------------------
# ingestion


def read_csv(path) -> pd.DataFrame:
    """CSV with a header row; empty files and unnamed row-name columns handled."""
    path = Path(path)
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise ValueError(f"{path}: file is empty") from None
    if df.empty:
        raise ValueError(f"{path}: no data rows")
    return df.drop(columns=[c for c in df.columns if str(c).startswith("Unnamed:")])


def _require(df, cols, where):
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise ConfigError(f"{where}: missing column(s) {missing}; have {list(df.columns)}")


def _numeric(df, col, where):
    vals = pd.to_numeric(df[col], errors="coerce")
    bad = vals.isna() & df[col].notna()
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise ValueError(f"{where}: non-numeric value {df[col].iloc[row]!r} in column "
                         f"{col!r} (data row {row + 1})")
    return vals.to_numpy(dtype=float)


def _times(df, col, where, allow_missing=False):
    t = _numeric(df, col, where)
    if not allow_missing and np.any(np.isnan(t)):
        row = int(np.flatnonzero(np.isnan(t))[0])
        raise ValueError(f"{where}: missing time in column {col!r} (data row {row + 1})")
    if np.any(t[~np.isnan(t)] < 0):
        row = int(np.flatnonzero(np.nan_to_num(t) < 0)[0])
        raise ValueError(f"{where}: negative time {t[row]} in column {col!r} (data row {row + 1})")
    return t


def _same_level(a, b):
    try:
        return float(a) == float(b)
    except (TypeError, ValueError):
        return str(a) == str(b)


def _level_name(v):
    if isinstance(v, float) and v.is_integer():
        v = int(v)
    return str(v)


def build_design(df: pd.DataFrame, spec: dict, where="data") -> DesignMatrix:
    """Design matrix from ``covariates``, ``factors``, ``standardize``,
    ``transforms`` and ``intercept`` (default True) keys of ``spec``.

    Factors expand to one indicator per non-reference level in sorted order,
    named ``<column><level>``; standardisation uses the sample SD (ddof=1).
    """
    covs = list(spec.get("covariates", []))
    factors = spec.get("factors", {}) or {}
    standardize = set(spec.get("standardize", []))
    transforms = spec.get("transforms", {}) or {}
    _require(df, covs, where)
    unknown = (set(factors) | standardize | set(transforms)) - set(covs)
    if unknown:
        raise ConfigError(f"{where}: {sorted(unknown)} are not listed under covariates")
    cols, names = [], []
    if spec.get("intercept", True):
        cols.append(np.ones(len(df)))
        names.append("(Intercept)")
    for c in covs:
        if c in factors:
            series = df[c]
            if series.isna().any():
                raise ValueError(f"{where}: missing value in factor column {c!r}")
            levels = sorted(series.unique(), key=lambda v: (isinstance(v, str), v))
            ref = factors[c].get("reference", levels[0]) if isinstance(factors[c], dict) else factors[c]
            if not any(_same_level(lv, ref) for lv in levels):
                raise ConfigError(f"{where}: reference level {ref!r} not found in column {c!r}")
            for lv in levels:
                if _same_level(lv, ref):
                    continue
                cols.append((series == lv).to_numpy(dtype=float))
                names.append(f"{c}{_level_name(lv)}")
            continue
        x = _numeric(df, c, where)
        if np.any(np.isnan(x)):
            raise ValueError(f"{where}: missing value in covariate {c!r}")
        tf = transforms.get(c)
        if tf == "log":
            if np.any(x <= 0):
                raise ValueError(f"{where}: log transform of non-positive values in {c!r}")
            x = np.log(x)
        elif tf is not None:
            raise ConfigError(f"{where}: unknown transform {tf!r} for {c!r}")
        if c in standardize:
            sd = np.std(x, ddof=1)
            if not sd > 0:
                raise ValueError(f"{where}: cannot standardise constant column {c!r}")
            x = (x - x.mean()) / sd
        cols.append(x)
        names.append(c)
    values = np.column_stack(cols) if cols else np.zeros((len(df), 0))
    return DesignMatrix(values, tuple(names))


def _status(df, col, where):
    s = _numeric(df, col, where)
    if np.any(np.isnan(s)) or not np.all(np.isin(s, (0, 1))):
        raise ValueError(f"{where}: status column {col!r} must hold 0/1")
    return s.astype(int)


def _observations(df, b, where):
    n = len(df)
    if "lower" in b or "upper" in b:
        lo = _times(df, b["lower"], where, True) if "lower" in b else np.full(n, np.nan)
        hi = _times(df, b["upper"], where, True) if "upper" in b else np.full(n, np.nan)
        out = []
        for i in range(n):
            a, c = lo[i], hi[i]
            if np.isnan(a) and np.isnan(c):
                raise ValueError(f"{where}: data row {i + 1} has neither bound")
            if np.isnan(c) or math.isinf(c):
                out.append(CensoredObservation.right(i, a))
            elif np.isnan(a) or a == 0:
                out.append(CensoredObservation.left(i, c))
            elif a == c:
                out.append(CensoredObservation.exact(i, a))
            else:
                out.append(CensoredObservation.interval(i, a, c))
        return tuple(out), None
    _require(df, [b["time"]], where)
    t = _times(df, b["time"], where)
    labels = None
    if "cause" in b:
        labels = _causes(df, b, where)
        status = (labels > 0).astype(int)
    else:
        _require(df, [b["status"]], where)
        status = _status(df, b["status"], where)
    obs = tuple(CensoredObservation.from_status(i, t[i], status[i],
                                                None if labels is None else int(labels[i]))
                for i in range(n))
    return obs, labels


def _causes(df, b, where):
    col = b["cause"]
    _require(df, [col], where)
    mapping = b.get("cause_map")
    raw = df[col]
    if mapping:
        table = {str(k): int(v) for k, v in mapping.items()}
        return np.array([table.get(_level_name(v), 0) for v in raw], dtype=int)
    vals = _numeric(df, col, where)
    if np.any(np.isnan(vals)) or np.any(vals < 0) or np.any(vals != np.round(vals)):
        raise ValueError(f"{where}: cause column {col!r} must hold nonnegative integers")
    return vals.astype(int)


def _group_codes(df, col, where):
    _require(df, [col], where)
    codes, uniques = pd.factorize(df[col], sort=False)
    if np.any(codes < 0):
        raise ValueError(f"{where}: missing group label in {col!r}")
    return codes.astype(int), len(uniques)


def load_dataset(path, bindings: dict, family: str | None = None) -> SurvivalDataset:
    """Read a CSV and bind its columns into a :class:`SurvivalDataset`.

    Row order is preserved. ``status`` 1 marks an exact time and 0 a
    right-censored one; ``lower``/``upper`` give interval bounds instead.
    Family-specific keys: ``cause`` (+ ``cause_map``), ``illness_death``,
    ``group``, ``latency`` and ``longitudinal``.
    """
    path = Path(path)
    where = str(path)
    df = read_csv(path)
    b = dict(bindings)
    X = build_design(df, b, where)
    if "illness_death" in b:
        idb = b["illness_death"]
        cols = [idb[k] for k in ("t1", "sojourn", "delta", "status")]
        _require(df, cols, where)
        t1 = _times(df, idb["t1"], where)
        soj = _times(df, idb["sojourn"], where)
        delta = _status(df, idb["delta"], where)
        status = _status(df, idb["status"], where)
        if np.any((delta == 0) & (soj > 0)):
            raise ValueError(f"{where}: positive sojourn for a record without transition")
        return illness_death_dataset(t1, soj, delta, status, X)
    obs, labels = _observations(df, b, where)
    extras = {}
    if labels is not None:
        extras["n_risks"] = int(b.get("n_risks", labels.max()))
    if "group" in b:
        extras["group"], extras["n_groups"] = _group_codes(df, b["group"], where)
    if "latency" in b:
        XU = build_design(df, {"intercept": False, **b["latency"]}, where)
        extras["XU"] = np.asarray(XU.values)
        extras["XU_names"] = XU.column_names
    if "longitudinal" in b:
        extras.update(_longitudinal(df, b, path.parent, where))
    if family == "joint" and "long_y" not in extras:
        raise ConfigError(f"{where}: the joint family needs a longitudinal binding")
    return SurvivalDataset(obs, X, extras)


def _longitudinal(df, b, base, where):
    lb = b["longitudinal"]
    lpath = Path(lb["path"])
    if not lpath.is_absolute():
        lpath = base / lpath
    lwhere = str(lpath)
    long = read_csv(lpath)
    subj = b.get("subject")
    if subj is None:
        raise ConfigError(f"{where}: a longitudinal binding needs a 'subject' column")
    _require(df, [subj], where)
    _require(long, [lb["subject"], lb["time"], lb["y"]], lwhere)
    ids = {(_level_name(v)): i for i, v in enumerate(df[subj])}
    if len(ids) != len(df):
        raise ValueError(f"{where}: duplicate subject ids in {subj!r}")
    sid = []
    for r, v in enumerate(long[lb["subject"]]):
        key = _level_name(v)
        if key not in ids:
            raise ValueError(f"{lwhere}: subject {v!r} (data row {r + 1}) absent from {where}")
        sid.append(ids[key])
    tl = _times(long, lb["time"], lwhere)
    y = _numeric(long, lb["y"], lwhere)
    if np.any(np.isnan(y)):
        raise ValueError(f"{lwhere}: missing response values")
    if lb.get("transform") == "log":
        if np.any(y <= 0):
            raise ValueError(f"{lwhere}: log transform of non-positive responses")
        y = np.log(y)
    elif lb.get("transform") is not None:
        raise ConfigError(f"{lwhere}: unknown response transform {lb['transform']!r}")
    spec = {"intercept": lb.get("intercept", True), "covariates": lb.get("covariates", []),
            "factors": lb.get("factors", {}), "standardize": lb.get("standardize", [])}
    Xc = build_design(long, spec, lwhere)
    cols = [Xc.values[:, :1]] if spec["intercept"] else []
    names = ["(Intercept)"] if spec["intercept"] else []
    cols.append(tl[:, None])
    names.append(lb["time"])
    start = 1 if spec["intercept"] else 0
    cols.append(Xc.values[:, start:])
    names += list(Xc.column_names[start:])
    sid = np.asarray(sid, dtype=int)
    return {"long_subject": sid, "long_time": tl, "long_y": y,
            "XL": np.column_stack(cols), "XL_names": tuple(names)}


# ---------------------------------------------------------------------------
# configuration


CHAIN_KEYS = {f.name for f in fields(ChainConfig)}


@dataclass
class FitConfig:
    family: str
    data: str
    bindings: dict
    priors: dict = field(default_factory=dict)
    structure: dict = field(default_factory=dict)
    chains: dict = field(default_factory=dict)
    derive: list = field(default_factory=list)
    base_dir: str = "."

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}; choose from {FAMILIES}")
        unknown = set(self.chains) - CHAIN_KEYS
        if unknown:
            raise ConfigError(f"unknown chain settings {sorted(unknown)}")
        if self.family == "ph" and "partition" not in self.structure:
            raise ConfigError("the ph family needs structure.partition (K or knots)")
        for req in self.derive:
            if "quantity" not in req:
                raise ConfigError("every derive request needs a 'quantity'")

    @classmethod
    def from_dict(cls, d: dict, base_dir="."):
        d = copy.deepcopy(d)
        allowed = {f.name for f in fields(cls)}
        extra = set(d) - allowed
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        for key in ("family", "data", "bindings"):
            if key not in d:
                raise ConfigError(f"config is missing required key {key!r}")
        d.setdefault("base_dir", str(base_dir))
        return cls(**d)

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d, base_dir=path.resolve().parent)

    def to_dict(self):
        return {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self)}

    def with_overrides(self, **chain_overrides):
        """Copy with chain settings replaced by the non-None overrides."""
        new = copy.deepcopy(self)
        new.chains.update({k: v for k, v in chain_overrides.items() if v is not None})
        new.__post_init__()
        return new

    def data_path(self):
        p = Path(self.data)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def chain_config(self) -> ChainConfig:
        return ChainConfig(**self.chains)

    def load_data(self) -> SurvivalDataset:
        return load_dataset(self.data_path(), self.bindings, self.family)

    def model_spec(self, data: SurvivalDataset) -> ModelSpec:
        structure = dict(self.structure)
        if "partition" in structure:
            structure["partition"] = _partition(structure["partition"], data)
        priors = {k: prior_from_dict(v) for k, v in self.priors.items()}
        return ModelSpec(self.family, priors, structure)


def _partition(spec, data):
    if isinstance(spec, TimePartition):
        return spec
    if "knots" in spec:
        return TimePartition(spec["knots"])
    if "K" not in spec:
        raise ConfigError("partition needs 'K' or 'knots'")
    return TimePartition.equally_spaced(float(np.nanmax(data.lower)), int(spec["K"]),
                                        float(spec.get("pad", 0.001)))


# ---------------------------------------------------------------------------
# artifacts


def samples_to_frame(samples: PosteriorSamples) -> pd.DataFrame:
    """Long format: chain, iteration, parameter, value."""
    C, D, P = samples.draws.shape
    cfg = samples.config
    burn, thin = (cfg.burn_in, cfg.thin) if cfg is not None else (0, 1)
    iters = burn + thin * np.arange(1, D + 1)
    return pd.DataFrame({
        "chain": np.repeat(np.arange(1, C + 1), D * P),
        "iteration": np.tile(np.repeat(iters, P), C),
        "parameter": np.tile(np.asarray(samples.param_names, dtype=object), C * D),
        "value": samples.draws.reshape(-1),
    })


def samples_from_frame(df: pd.DataFrame, names=None, latent=None, config=None,
                       family=None) -> PosteriorSamples:
    """Inverse of :func:`samples_to_frame`."""
    _require(df, ["chain", "iteration", "parameter", "value"], "samples")
    if names is None:
        names = list(pd.unique(df["parameter"]))
    pidx = {n: j for j, n in enumerate(names)}
    chains = np.sort(df["chain"].unique())
    iters = np.sort(df["iteration"].unique())
    draws = np.full((chains.size, iters.size, len(names)), np.nan)
    ci = np.searchsorted(chains, df["chain"].to_numpy())
    ii = np.searchsorted(iters, df["iteration"].to_numpy())
    try:
        pj = np.array([pidx[p] for p in df["parameter"]])
    except KeyError as exc:
        raise ValueError(f"samples file has unexpected parameter {exc.args[0]!r}") from None
    draws[ci, ii, pj] = df["value"].to_numpy(dtype=float)
    if np.any(np.isnan(draws)):
        raise ValueError("samples file is not a complete chain x iteration x parameter grid")
    mask = None if latent is None else np.asarray(latent, dtype=bool)
    return PosteriorSamples(list(names), draws, config, mask, {}, family)


def write_samples(samples, path):
    samples_to_frame(samples).to_csv(path, index=False, float_format=FLOAT_FORMAT)


def read_run(run_dir) -> tuple[dict, PosteriorSamples]:
    """Metadata and samples of a fit directory written by :func:`run_fit`."""
    run_dir = Path(run_dir)
    meta_path = run_dir / RUN_FILE
    if not meta_path.exists():
        raise FileNotFoundError(f"{meta_path} not found; is {run_dir} a fit directory?")
    meta = json.loads(meta_path.read_text())
    df = pd.read_csv(run_dir / SAMPLES_FILE, float_precision="round_trip")
    cfg = ChainConfig(**meta["chain_config"]) if meta.get("chain_config") else None
    samples = samples_from_frame(df, meta["param_names"], meta["latent_mask"], cfg, meta["family"])
    samples.acceptance = meta.get("acceptance", {})
    return meta, samples


def diagnostics_frame(samples: PosteriorSamples) -> pd.DataFrame:
    names = samples.global_names
    psrf = psrf_table(samples, names)
    scal = samples.acceptance.get("scalar", {}) if samples.acceptance else {}
    acc = [float(np.mean(scal[n])) if n in scal else np.nan for n in names]
    return pd.DataFrame({"parameter": names, "psrf": psrf.to_numpy(), "acceptance": acc})


def write_table(df, path):
    df.to_csv(path, float_format=FLOAT_FORMAT, index=df.index.name is not None)


def run_fit(config: FitConfig, out_dir, data: SurvivalDataset | None = None) -> dict:
    """Fit ``config`` and write samples, summary, diagnostics and derived outputs.

    Returns a dict with the samples, summary, diagnostics, the largest PSRF
    and the written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = config.load_data() if data is None else data
    spec = config.model_spec(data)
    chain_cfg = config.chain_config()
    samples = run_chains(spec, data, chain_cfg)
    summary = summarize(samples)
    diag = diagnostics_frame(samples)
    write_samples(samples, out_dir / SAMPLES_FILE)
    write_table(summary, out_dir / SUMMARY_FILE)
    write_table(diag, out_dir / DIAGNOSTICS_FILE)
    meta = {
        "family": config.family,
        "param_names": list(samples.param_names),
        "latent_mask": [bool(m) for m in samples.latent_mask],
        "chain_config": {f.name: getattr(chain_cfg, f.name) for f in fields(ChainConfig)},
        "acceptance": _jsonable(samples.acceptance),
        "config": config.to_dict(),
    }
    (out_dir / RUN_FILE).write_text(json.dumps(meta, indent=2))
    paths = {"samples": out_dir / SAMPLES_FILE, "summary": out_dir / SUMMARY_FILE,
             "diagnostics": out_dir / DIAGNOSTICS_FILE, "run": out_dir / RUN_FILE}
    result = {"samples": samples, "summary": summary, "diagnostics": diag,
              "max_psrf": float(np.nanmax(diag["psrf"])) if diag["psrf"].notna().any() else math.nan,
              "paths": paths, "data": data}
    if config.derive:
        derived, curves = derive_all(samples, config.derive, data, config.family)
        result.update(derived=derived, curves=curves)
        paths.update(_write_derived(derived, curves, out_dir))
    return result


def _write_derived(derived, curves, out_dir):
    out = {}
    if derived is not None and len(derived):
        write_table(derived, out_dir / DERIVED_FILE)
        out["derived"] = out_dir / DERIVED_FILE
    if curves is not None and len(curves):
        write_table(curves, out_dir / CURVES_FILE)
        out["curves"] = out_dir / CURVES_FILE
    return out


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


# ---------------------------------------------------------------------------
# derived quantities


REQUEST_FAMILIES = {
    "relative_median": ("aft",),
    "hazard_ratio": ("ph",),
    "cure_fraction": ("cure",),
    "uncured_survival": ("cure",),
    "cif": ("competing_risks",),
    "transitions": ("illness_death",),
}


def _times_grid(spec, data=None):
    """Explicit list or ``{"from", "to", "num"}``; ``"to": "max"`` is the largest observed time."""
    if isinstance(spec, dict):
        to = spec["to"]
        if to == "max":
            if data is None:
                raise ValueError("'to': 'max' needs the fitted data")
            to = float(np.nanmax(data.lower))
        return np.linspace(float(spec["from"]), float(to), int(spec["num"]))
    return np.asarray(spec, dtype=float)


def covariate_vector(spec, names, X=None):
    """Covariate vector in design-column order.

    ``spec`` is a list in column order or a mapping column -> value; missing
    columns are 0 except the intercept (1). The values ``"median"`` and
    ``"mean"`` summarise that design column over the data rows.
    """
    names = list(names)
    if not isinstance(spec, dict):
        x = np.asarray(spec, dtype=float)
        if x.shape != (len(names),):
            raise ValueError(f"covariate vector needs {len(names)} entries ({names})")
        return x
    unknown = set(spec) - set(names)
    if unknown:
        raise ValueError(f"unknown design column(s) {sorted(unknown)}; have {names}")
    x = np.array([1.0 if n == "(Intercept)" else 0.0 for n in names])
    for n, v in spec.items():
        j = names.index(n)
        if isinstance(v, str):
            if X is None:
                raise ValueError(f"{v!r} for {n!r} needs the fitted data")
            stat = {"median": np.median, "mean": np.mean}.get(v)
            if stat is None:
                raise ValueError(f"unknown covariate summary {v!r}")
            x[j] = float(stat(X[:, j]))
        else:
            x[j] = float(v)
    return x


def _draw_summary(name, quantity, values):
    v = np.sort(np.asarray(values, dtype=float))
    qs = np.quantile(v, [0.025, 0.5, 0.975])
    return {"name": name, "quantity": quantity, "mean": math.fsum(v) / v.size,
            "sd": float(np.std(v, ddof=1)) if v.size > 1 else 0.0,
            "q2.5": qs[0], "q50": qs[1], "q97.5": qs[2], "p_gt_0": float(np.mean(v > 0))}


def _state2_entry_median(data):
    ev = data.extras["events"]
    t1 = data.extras["t1"][ev[:, 0] == 1]
    if t1.size == 0:
        raise ValueError("no observed 1->2 transitions to take a median entry time from")
    return float(np.median(t1))


def derive_one(samples: PosteriorSamples, request: dict, data: SurvivalDataset | None,
               family: str):
    """Evaluate one derived-quantity request; returns (summary rows, curve frames)."""
    quantity = request["quantity"]
    if quantity not in REQUEST_FAMILIES:
        raise ValueError(f"unknown derived quantity {quantity!r}; choose from {sorted(REQUEST_FAMILIES)}")
    if family not in REQUEST_FAMILIES[quantity]:
        raise ValueError(f"{quantity} needs a {'/'.join(REQUEST_FAMILIES[quantity])} fit, "
                         f"not {family}")
    name = request.get("name", quantity)
    label = request.get("label", name)
    X = data.X if data is not None else None
    names = list(data.design.column_names) if data is not None else None
    sub = request.get("subsample", q.DEFAULT_SUBSAMPLE)
    seed = int(request.get("seed", 0))
    if quantity in ("relative_median", "hazard_ratio"):
        beta = q.vector_draws(samples, "beta")
        names = names or [f"x{j + 1}" for j in range(beta.shape[1])]
        if data is not None and family == "ph" and names and names[0] == "(Intercept)":
            raise ValueError("PH designs carry no intercept")
        x1 = covariate_vector(request["x1"], names, X)
        x2 = covariate_vector(request["x2"], names, X)
        fn = q.relative_median if quantity == "relative_median" else q.hazard_ratio
        return [_draw_summary(name, quantity, fn(x1, x2, beta))], []
    if quantity == "cure_fraction":
        x = covariate_vector(request["x"], names or _draw_names(samples, "betaC"), X)
        return [_draw_summary(name, quantity, q.cure_fraction(x, q.vector_draws(samples, "betaC")))], []
    if quantity == "uncured_survival":
        unames = list(data.extras.get("XU_names", ())) if data is not None else _draw_names(samples, "betaU")
        XU = data.extras["XU"] if data is not None else None
        xu = covariate_vector(request.get("x", {}), unames, XU)
        bu = q.vector_draws(samples, "betaU") if unames else np.zeros((samples.pooled("lambda").size, 0))
        idx = q.subsample_indices(bu.shape[0], sub, seed)
        curve = q.uncured_survival_curve(_times_grid(request["times"], data), samples["lambda"][idx],
                                         samples["alpha"][idx], bu[idx], xu, label)
        return [], [curve.to_frame()]
    if quantity == "cif":
        draws = q.multi_cause_draws(samples)
        x = covariate_vector(request["x"], names or [f"x{j + 1}" for j in range(draws["beta"].shape[1])], X)
        causes = request.get("causes", [request["cause"]] if "cause" in request else
                             list(range(1, draws["lambda"].shape[1] + 1)))
        frames = [q.cif_curve(int(k), _times_grid(request["times"], data), x, draws, sub, seed, label).to_frame()
                  for k in causes]
        return [], frames
    # transitions
    draws = q.multi_cause_draws(samples)
    x = covariate_vector(request["x"], names or [f"x{j + 1}" for j in range(draws["beta"].shape[1])], X)
    s = request.get("s", "median_entry")
    if s == "median_entry":
        if data is None:
            raise ValueError("s='median_entry' needs the fitted data")
        s = _state2_entry_median(data)
    curves = q.transition_curves(_times_grid(request["times"], data), x, draws, float(s),
                                 float(request.get("s_state1", 0.0)), sub, seed, label)
    return [], [c.to_frame() for c in curves.values()]


def _draw_names(samples, block):
    return [n for n in samples.param_names if n.startswith(f"{block}[")]


def derive_all(samples, requests, data, family):
    rows, frames = [], []
    for req in requests:
        r, f = derive_one(samples, req, data, family)
        rows += r
        frames += f
    derived = pd.DataFrame(rows) if rows else None
    curves = pd.concat(frames, ignore_index=True) if frames else None
    return derived, curves


def derive(run_dir, requests=None, out_dir=None):
    """Derived quantities from a fit directory; ``requests`` default to the config's."""
    meta, samples = read_run(run_dir)
    config = FitConfig.from_dict(meta["config"])
    requests = config.derive if requests is None else requests
    if not requests:
        raise ValueError("no derived-quantity requests given")
    for req in requests:
        qty = req.get("quantity")
        if qty in REQUEST_FAMILIES and config.family not in REQUEST_FAMILIES[qty]:
            raise ValueError(f"{qty} needs a {'/'.join(REQUEST_FAMILIES[qty])} fit, not {config.family}")
    data = config.load_data()
    derived, curves = derive_all(samples, requests, data, config.family)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_derived(derived, curves, out_dir)
    return derived, curves
