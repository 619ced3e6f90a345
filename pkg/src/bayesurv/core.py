"""Censored observations, design matrices, time partitions and the basic
hazard / survival / density identities shared by every model family."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np


class CensorKind(enum.IntEnum):
    EXACT = 0
    RIGHT = 1
    LEFT = 2
    INTERVAL = 3


class DegenerateIntervalError(ValueError):
    """Interval-censored record whose survival values coincide at both bounds."""


@dataclass(frozen=True)
class CensoredObservation:
    """One time record.

    Exact records carry ``t``; right-censored records carry ``c_lower``;
    left-censored records carry ``c_upper``; interval records carry both
    bounds. ``event_label`` holds a cause index (competing risks) or a
    transition code (multi-state); 0 means censored.
    """

    subject_id: int
    kind: CensorKind
    t: float | None = None
    c_lower: float | None = None
    c_upper: float | None = None
    event_label: int | None = None

    def __post_init__(self):
        kind = CensorKind(self.kind)
        object.__setattr__(self, "kind", kind)
        need = {
            CensorKind.EXACT: ("t",),
            CensorKind.RIGHT: ("c_lower",),
            CensorKind.LEFT: ("c_upper",),
            CensorKind.INTERVAL: ("c_lower", "c_upper"),
        }[kind]
        for name in ("t", "c_lower", "c_upper"):
            value = getattr(self, name)
            if name in need:
                if value is None or not math.isfinite(value):
                    raise ValueError(f"{kind.name} observation needs a finite {name}")
                if value < 0:
                    raise ValueError(f"{name} must be nonnegative, got {value}")
            elif value is not None:
                raise ValueError(f"{kind.name} observation must not set {name}")
        if kind is CensorKind.EXACT and self.t == 0:
            raise ValueError("exact event time of 0 is not allowed")
        if kind is CensorKind.INTERVAL and not self.c_lower < self.c_upper:
            raise ValueError("interval censoring needs c_lower < c_upper")

    @classmethod
    def exact(cls, subject_id, t, event_label=None):
        return cls(subject_id, CensorKind.EXACT, t=float(t), event_label=event_label)

    @classmethod
    def right(cls, subject_id, c, event_label=None):
        return cls(subject_id, CensorKind.RIGHT, c_lower=float(c), event_label=event_label)

    @classmethod
    def left(cls, subject_id, c):
        return cls(subject_id, CensorKind.LEFT, c_upper=float(c))

    @classmethod
    def interval(cls, subject_id, lower, upper):
        return cls(subject_id, CensorKind.INTERVAL, c_lower=float(lower), c_upper=float(upper))

    @classmethod
    def from_status(cls, subject_id, time, status, event_label=None):
        """``status`` 1 gives an exact record, 0 a right-censored one."""
        if status:
            return cls.exact(subject_id, time, event_label)
        return cls.right(subject_id, time, event_label)


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray
    column_names: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1) if values.size else values.reshape(0, 0)
        if values.ndim != 2:
            raise ValueError("design matrix must be two-dimensional")
        if not np.all(np.isfinite(values)):
            raise ValueError("design matrix has non-finite entries")
        names = tuple(self.column_names) or tuple(f"x{j + 1}" for j in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise ValueError(f"{len(names)} column names for {values.shape[1]} columns")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_names", names)

    @classmethod
    def empty(cls, n_rows):
        return cls(np.zeros((n_rows, 0)), ())

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_cols(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class TimePartition:
    """Knots 0 = a_0 < a_1 < ... < a_K of a piecewise-constant hazard."""

    knots: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        if knots.ndim != 1 or knots.size < 2:
            raise ValueError("a partition needs at least two knots")
        if knots[0] != 0.0:
            raise ValueError("first knot must be 0")
        if not np.all(np.diff(knots) > 0):
            raise ValueError("knots must be strictly increasing")
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @classmethod
    def equally_spaced(cls, t_max, n_intervals, pad=0.001):
        """Mirror of ``seq(0, t_max + pad, length.out = K + 1)``."""
        return cls(np.linspace(0.0, t_max + pad, n_intervals + 1))

    @property
    def n_intervals(self):
        return self.knots.size - 1

    @property
    def end(self):
        return float(self.knots[-1])


@dataclass(frozen=True)
class SurvivalDataset:
    """Observations plus design; ``extras`` holds family-specific arrays
    (groups, longitudinal records, illness-death time triplets, ...)."""

    observations: tuple[CensoredObservation, ...]
    design: DesignMatrix
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        obs = tuple(self.observations)
        object.__setattr__(self, "observations", obs)
        if len(obs) != self.design.n_rows:
            raise ValueError(
                f"{len(obs)} observations but design has {self.design.n_rows} rows"
            )

    def __len__(self):
        return len(self.observations)

    @property
    def X(self):
        return self.design.values

    @cached_property
    def kinds(self):
        return np.array([o.kind for o in self.observations], dtype=int)

    @cached_property
    def lower(self):
        """Event time for exact rows, lower bound for right/interval, NaN otherwise."""
        out = np.full(len(self), np.nan)
        for i, o in enumerate(self.observations):
            if o.kind is CensorKind.EXACT:
                out[i] = o.t
            elif o.c_lower is not None:
                out[i] = o.c_lower
        return out

    @cached_property
    def upper(self):
        """Event time for exact rows, upper bound for left/interval, NaN otherwise."""
        out = np.full(len(self), np.nan)
        for i, o in enumerate(self.observations):
            if o.kind is CensorKind.EXACT:
                out[i] = o.t
            elif o.c_upper is not None:
                out[i] = o.c_upper
        return out

    @cached_property
    def log_lower(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(self.lower)

    @cached_property
    def log_upper(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(self.upper)

    @cached_property
    def only_exact_or_right(self):
        return bool(np.all((self.kinds == CensorKind.EXACT) | (self.kinds == CensorKind.RIGHT)))

    @cached_property
    def time(self):
        """Observed time for exact / right-censored records."""
        if not self.only_exact_or_right:
            raise ValueError("this family supports exact and right-censored records only")
        return self.lower.copy()

    @cached_property
    def delta(self):
        return (self.kinds == CensorKind.EXACT).astype(float)

    @cached_property
    def event_labels(self):
        return np.array([o.event_label or 0 for o in self.observations], dtype=int)

    @cached_property
    def subject_ids(self):
        return np.array([o.subject_id for o in self.observations], dtype=int)


def survival_from_cumhaz(H):
    """S = exp(-H)."""
    H = np.asarray(H, dtype=float)
    if np.any(H < 0):
        raise ValueError("cumulative hazard must be nonnegative")
    out = np.exp(-H)
    return float(out) if out.ndim == 0 else out


def log_density_from_hazard(log_h, H):
    return log_h - H


def censoring_loglik_contribution(
    obs: CensoredObservation, log_f: float, log_S_at: Callable[[float], float]
) -> float:
    """Log-likelihood contribution of one record.

    ``log_f`` is the log density at the exact time (ignored otherwise) and
    ``log_S_at`` evaluates the log survival function.
    """
    kind = obs.kind
    if kind is CensorKind.EXACT:
        return float(log_f)
    if kind is CensorKind.RIGHT:
        return float(log_S_at(obs.c_lower))
    if kind is CensorKind.LEFT:
        return _log1mexp(-float(log_S_at(obs.c_upper)))
    lo = float(log_S_at(obs.c_lower))
    hi = float(log_S_at(obs.c_upper))
    return _log_interval(lo, hi)


def _log1mexp(x):
    """log(1 - exp(-x)) for x >= 0."""
    if x <= 0:
        return -math.inf
    if x < math.log(2):
        return math.log(-math.expm1(-x))
    return math.log1p(-math.exp(-x))


def _log_interval(log_s_lo, log_s_hi):
    gap = log_s_lo - log_s_hi
    if gap <= 1e-14 * max(1.0, abs(log_s_lo)):
        raise DegenerateIntervalError(
            f"S(lower)={math.exp(log_s_lo):.6g} <= S(upper)={math.exp(log_s_hi):.6g}"
        )
    return log_s_lo + _log1mexp(gap)


def log1mexp(x):
    """Vectorised log(1 - exp(-x)), x >= 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x < math.log(2), np.log(-np.expm1(-x)), np.log1p(-np.exp(-x)))


def censored_loglik_terms(kinds, log_h_event, log_S_lower, log_S_upper):
    """Per-record log-likelihood under mixed censoring.

    ``log_h_event`` and ``log_S_lower`` are evaluated at ``lower``
    (the exact time for exact rows); ``log_S_upper`` at ``upper``. Entries
    irrelevant for a row's kind are ignored, NaNs included.
    """
    kinds = np.asarray(kinds)
    out = np.empty(kinds.shape)
    m = kinds == CensorKind.EXACT
    out[m] = log_h_event[m] + log_S_lower[m]
    m = kinds == CensorKind.RIGHT
    out[m] = log_S_lower[m]
    m = kinds == CensorKind.LEFT
    if m.any():
        out[m] = log1mexp(-log_S_upper[m])
    m = kinds == CensorKind.INTERVAL
    if m.any():
        gap = log_S_lower[m] - log_S_upper[m]
        if np.any(gap <= 1e-14 * np.maximum(1.0, np.abs(log_S_lower[m]))):
            raise DegenerateIntervalError("interval record with equal survival at both bounds")
        out[m] = log_S_lower[m] + log1mexp(gap)
    return out


def interval_index(t, partition: TimePartition):
    """1-based k with t in (a_{k-1}, a_k]."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0) or np.any(t_arr > partition.end):
        raise ValueError(f"time outside partition range (0, {partition.end}]")
    k = np.searchsorted(partition.knots, t_arr, side="left")
    return int(k) if k.ndim == 0 else k


def piecewise_cumhaz(t, partition: TimePartition, lambdas):
    """Cumulative hazard of a step hazard with levels ``lambdas`` on the partition."""
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.shape != (partition.n_intervals,):
        raise ValueError(f"need {partition.n_intervals} hazard levels")
    if np.any(lambdas <= 0):
        raise ValueError("hazard levels must be positive")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > partition.end):
        raise ValueError(f"time outside partition range [0, {partition.end}]")
    lo, hi = partition.knots[:-1], partition.knots[1:]
    exposure = np.clip(t_arr[..., None] - lo, 0.0, hi - lo)
    H = exposure @ lambdas
    return float(H) if H.ndim == 0 else H


def as_observations(times: Sequence[float], status: Sequence[int], labels=None):
    labels = labels if labels is not None else [None] * len(times)
    return tuple(
        CensoredObservation.from_status(i, t, s, lab)
        for i, (t, s, lab) in enumerate(zip(times, status, labels))
    )
