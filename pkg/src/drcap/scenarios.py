"""Traces, prediction errors and scenario sets.

A scenario is one timeslot realisation of the per-customer demand errors,
the renewable error and the customers' realised cost coefficients.  A
``ScenarioSet`` stores a batch of them as arrays together with the first and
second moments and support bounds consumed by the policies.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from functools import cached_property
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.signal import lfilter

SECONDS_PER_DAY = 86400
DEFAULT_RESOLUTION = 300
MAX_REJECTION_ROUNDS = 1000


class DataError(ValueError):
    """Malformed, misaligned or insufficient input data."""


class InsufficientDataError(DataError):
    pass


@dataclass(frozen=True)
class Trace:
    series: np.ndarray
    resolution: int = DEFAULT_RESOLUTION
    source_id: str = ""
    start: datetime | None = None

    def __post_init__(self):
        series = np.asarray(self.series, dtype=float)
        if series.ndim != 1:
            raise DataError(f"trace {self.source_id!r}: series must be one-dimensional")
        if not np.all(np.isfinite(series)):
            raise DataError(f"trace {self.source_id!r}: non-finite sample")
        if np.any(series < 0):
            raise DataError(f"trace {self.source_id!r}: negative sample")
        if self.resolution <= 0:
            raise DataError("resolution must be positive")
        object.__setattr__(self, "series", series)

    def __len__(self):
        return self.series.size

    @property
    def slots_per_day(self) -> int:
        return SECONDS_PER_DAY // self.resolution


@dataclass(frozen=True)
class PredictionErrors:
    delta: np.ndarray
    predicted: np.ndarray
    lower: float
    upper: float


def _periodic_profile(series: np.ndarray, period: int) -> np.ndarray:
    if series.size < period:
        raise InsufficientDataError(
            f"periodic predictor needs at least {period} slots, got {series.size}"
        )
    n = series.size // period * period
    return series[:n].reshape(-1, period).mean(axis=0)


def build_prediction_errors(
    trace: Trace, predictor: str = "periodic", reference: Trace | None = None
) -> PredictionErrors:
    """Actual minus predicted samples for ``trace``.

    ``predictor`` is ``"periodic"`` (mean per slot-of-day) or ``"mean"``
    (global mean).  The predictor is fitted on ``reference`` when given, else
    on ``trace`` itself.
    """
    if len(trace) == 0:
        raise InsufficientDataError("empty trace")
    ref = trace if reference is None else reference
    if len(ref) == 0:
        raise InsufficientDataError("empty reference trace")
    if predictor == "mean":
        predicted = np.full(len(trace), ref.series.mean())
    elif predictor == "periodic":
        period = ref.slots_per_day
        profile = _periodic_profile(ref.series, period)
        predicted = np.resize(profile, len(trace))
    else:
        raise ValueError(f"unknown predictor {predictor!r}")
    delta = trace.series - predicted
    return PredictionErrors(delta, predicted, float(delta.min()), float(delta.max()))


def bootstrap_customers(
    base_traces: Sequence[Trace], count_per_base: int, seed: int, block: int | None = None
) -> list[Trace]:
    """Block-bootstrap ``count_per_base`` synthetic customers from each base.

    Blocks default to one day and are drawn with replacement; each synthetic
    trace has the same length as its base.
    """
    if not base_traces:
        raise ValueError("need at least one base trace")
    if count_per_base < 1:
        raise ValueError("count_per_base must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for base in base_traces:
        size = block or base.slots_per_day
        n_blocks = math.ceil(len(base) / size)
        full = len(base) // size
        if full == 0:
            raise InsufficientDataError(f"trace {base.source_id!r} shorter than one block")
        blocks = base.series[: full * size].reshape(full, size)
        for j in range(count_per_base):
            pick = rng.integers(0, full, size=n_blocks)
            series = blocks[pick].ravel()[: len(base)]
            out.append(Trace(series, base.resolution, f"{base.source_id}#{j}", base.start))
    return out


def truncated_normal(rng: np.random.Generator, mean, sd, lo, hi, size=None) -> np.ndarray:
    """Rejection sampling from a normal truncated to ``[lo, hi]``."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    shape = np.broadcast_shapes(mean.shape, sd.shape) if size is None else size
    mean = np.broadcast_to(mean, shape)
    sd = np.broadcast_to(sd, shape)
    out = rng.normal(mean, sd)
    bad = (out < lo) | (out > hi)
    rounds = 0
    while bad.any():
        rounds += 1
        if rounds > MAX_REJECTION_ROUNDS:
            raise RuntimeError("truncated normal rejection sampling did not terminate")
        out[bad] = rng.normal(mean[bad], sd[bad])
        bad = (out < lo) | (out > hi)
    return out


@dataclass(frozen=True)
class CostDraws:
    a_tilde: np.ndarray
    train: np.ndarray
    test: np.ndarray

    @property
    def a_hat(self) -> np.ndarray:
        # exact for constant draws, where a float mean may be off by an ulp
        const = self.train.min(axis=0) == self.train.max(axis=0)
        return np.where(const, self.train[0], self.train.mean(axis=0))


def sample_cost_coeffs(
    n: int,
    mean_range: tuple[float, float],
    rsd: float,
    set_size: int,
    seed: int,
    test_size: int | None = None,
    spread: float = 0.25,
) -> CostDraws:
    """Latent means and per-slot coefficient draws for ``n`` customers.

    Latent means come from a normal centred on the range midpoint with
    standard deviation ``spread * (hi - lo)``, truncated to the range.  Per-slot
    draws are ``N(a_tilde, rsd * a_tilde)`` truncated to the same range.
    Training and test draws use independent child seeds.
    """
    lo, hi = mean_range
    if not hi > lo:
        raise ValueError(f"empty cost range [{lo}, {hi}]")
    if not lo > 0:
        raise ValueError("cost range must be positive")
    if rsd < 0:
        raise ValueError("rsd must be >= 0")
    test_size = set_size if test_size is None else test_size
    s_mean, s_train, s_test = np.random.SeedSequence(seed).spawn(3)
    mid = 0.5 * (lo + hi)
    a_tilde = truncated_normal(np.random.default_rng(s_mean), mid, spread * (hi - lo), lo, hi, (n,))

    def draws(ss, size):
        if rsd == 0:
            return np.tile(a_tilde, (size, 1))
        return truncated_normal(
            np.random.default_rng(ss), a_tilde, rsd * a_tilde, lo, hi, (size, n)
        )

    return CostDraws(a_tilde, draws(s_train, set_size), draws(s_test, test_size))


@dataclass(frozen=True)
class Scenario:
    delta: np.ndarray
    delta_r: float
    a: np.ndarray

    @property
    def D(self) -> float:
        return float(self.delta.sum() - self.delta_r)


@dataclass(frozen=True)
class Moments:
    """Moments of ``z = (delta_1, ..., delta_N, delta_r)``."""

    mean: np.ndarray
    second: np.ndarray

    @property
    def n(self) -> int:
        return self.mean.size - 1

    @property
    def d(self) -> np.ndarray:
        d = np.ones(self.n + 1)
        d[-1] = -1.0
        return d

    @property
    def augmented(self) -> np.ndarray:
        """Second moments of ``(z, 1)``."""
        m = self.n + 2
        out = np.empty((m, m))
        out[:-1, :-1] = self.second
        out[:-1, -1] = out[-1, :-1] = self.mean
        out[-1, -1] = 1.0
        return out

    @property
    def ED(self) -> float:
        return float(self.d @ self.mean)

    @property
    def ED2(self) -> float:
        return float(self.d @ self.second @ self.d)

    @property
    def ED_delta(self) -> np.ndarray:
        return (self.second @ self.d)[:-1]


@dataclass(frozen=True)
class Bounds:
    delta_lo: np.ndarray
    delta_hi: np.ndarray
    delta_r_lo: float
    delta_r_hi: float
    D_lo: float
    D_hi: float


@dataclass(frozen=True)
class ScenarioSet:
    """Aligned arrays: ``delta`` and ``a`` are (T, N), ``delta_r`` is (T,)."""

    delta: np.ndarray
    delta_r: np.ndarray
    a: np.ndarray
    a_hat: np.ndarray
    a_tilde: np.ndarray | None = None
    D: np.ndarray = field(init=False)

    def __post_init__(self):
        delta = np.atleast_2d(np.asarray(self.delta, dtype=float))
        delta_r = np.asarray(self.delta_r, dtype=float).reshape(-1)
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        a_hat = np.asarray(self.a_hat, dtype=float).reshape(-1)
        if delta.shape[0] == 0:
            raise DataError("empty scenario set")
        if delta.shape != a.shape or delta_r.size != delta.shape[0]:
            raise DataError(
                f"misaligned scenario arrays: delta {delta.shape}, a {a.shape}, "
                f"delta_r {delta_r.shape}"
            )
        if a_hat.size != delta.shape[1]:
            raise DataError("a_hat length does not match customer count")
        if not np.all(a_hat > 0) or not np.all(a > 0):
            raise DataError("cost coefficients must be positive")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "delta_r", delta_r)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "a_hat", a_hat)
        object.__setattr__(self, "D", delta.sum(axis=1) - delta_r)

    @property
    def n_slots(self) -> int:
        return self.delta.shape[0]

    @property
    def n_customers(self) -> int:
        return self.delta.shape[1]

    def __len__(self):
        return self.n_slots

    def __getitem__(self, t) -> Scenario:
        return Scenario(self.delta[t], float(self.delta_r[t]), self.a[t])

    def __iter__(self) -> Iterator[Scenario]:
        return (self[t] for t in range(self.n_slots))

    @cached_property
    def H(self) -> np.ndarray:
        """Per-slot ``sum_i 1/a_i(t)``."""
        return np.sum(1.0 / self.a, axis=1)

    @cached_property
    def moments(self) -> Moments:
        z = np.column_stack([self.delta, self.delta_r])
        return Moments(z.mean(axis=0), z.T @ z / self.n_slots)

    @cached_property
    def bounds(self) -> Bounds:
        return Bounds(
            self.delta.min(axis=0),
            self.delta.max(axis=0),
            float(self.delta_r.min()),
            float(self.delta_r.max()),
            float(self.D.min()),
            float(self.D.max()),
        )

    def with_costs(self, a: np.ndarray) -> ScenarioSet:
        return ScenarioSet(self.delta, self.delta_r, a, self.a_hat, self.a_tilde)


def assemble_scenarios(
    customer_errors: np.ndarray,
    renewable_errors: np.ndarray,
    cost_draws: np.ndarray,
    wind_capacity: float,
    a_hat: np.ndarray | None = None,
    a_tilde: np.ndarray | None = None,
) -> ScenarioSet:
    """Build a scenario set; ``renewable_errors`` are in units of rated output."""
    customer_errors = np.atleast_2d(np.asarray(customer_errors, dtype=float))
    renewable_errors = np.asarray(renewable_errors, dtype=float).reshape(-1)
    cost_draws = np.atleast_2d(np.asarray(cost_draws, dtype=float))
    t = customer_errors.shape[0]
    if renewable_errors.size != t or cost_draws.shape != customer_errors.shape:
        raise ValueError(
            f"misaligned inputs: errors {customer_errors.shape}, renewable "
            f"{renewable_errors.shape}, costs {cost_draws.shape}"
        )
    if a_hat is None:
        a_hat = cost_draws.mean(axis=0)
    return ScenarioSet(
        customer_errors, wind_capacity * renewable_errors, cost_draws, a_hat, a_tilde
    )


def symmetrized(scenarios: ScenarioSet) -> ScenarioSet:
    """Append the mirrored errors of every slot; the result has zero mean and
    support symmetric about zero."""
    return ScenarioSet(
        np.vstack([scenarios.delta, -scenarios.delta]),
        np.concatenate([scenarios.delta_r, -scenarios.delta_r]),
        np.vstack([scenarios.a, scenarios.a]),
        scenarios.a_hat,
        scenarios.a_tilde,
    )


# Synthetic traces used when no recorded data are supplied.


def synthetic_load_traces(
    n_homes: int,
    days: int,
    seed: int,
    resolution: int = DEFAULT_RESOLUTION,
    base_kw: float = 0.8,
    daily_kw: float = 0.6,
    noise_kw: float = 0.35,
    ar: float = 0.9,
) -> list[Trace]:
    """Household-like loads: a daily double-peak profile plus AR(1) noise."""
    rng = np.random.default_rng(seed)
    per_day = SECONDS_PER_DAY // resolution
    hours = np.arange(days * per_day) * resolution / 3600.0 % 24
    start = datetime(2017, 1, 1, tzinfo=timezone.utc)
    traces = []
    for h in range(n_homes):
        phase = rng.uniform(-1.5, 1.5)
        scale = rng.uniform(0.7, 1.3)
        shape = (
            np.exp(-0.5 * ((hours - 7.5 - phase) / 1.5) ** 2)
            + 1.4 * np.exp(-0.5 * ((hours - 19.0 - phase) / 2.5) ** 2)
        )
        noise = _ar1(rng, hours.size, ar, noise_kw * scale)
        load = scale * (base_kw + daily_kw * shape) + noise
        traces.append(Trace(np.maximum(load, 0.0), resolution, f"home{h}", start))
    return traces


def synthetic_wind_trace(
    days: int, seed: int, resolution: int = DEFAULT_RESOLUTION, ar: float = 0.995
) -> Trace:
    """Normalised wind output in [0, 1]: a logistic transform of an AR(1)."""
    rng = np.random.default_rng(seed)
    n = days * (SECONDS_PER_DAY // resolution)
    latent = _ar1(rng, n, ar, 1.0)
    power = 1.0 / (1.0 + np.exp(-(latent - 0.3)))
    power = power / power.max()
    return Trace(power, resolution, "wind", datetime(2017, 1, 1, tzinfo=timezone.utc))


def _ar1(rng, n, phi, sd):
    """Stationary AR(1) with marginal standard deviation ``sd``."""
    eps = rng.normal(0.0, sd * math.sqrt(1.0 - phi * phi), n)
    eps[0] = rng.normal(0.0, sd)
    return lfilter([1.0], [1.0, -phi], eps)


def split_days(trace: Trace, train_days: Sequence[int], test_days: Sequence[int]) -> tuple[Trace, Trace]:
    per = trace.slots_per_day
    days = trace.series[: len(trace) // per * per].reshape(-1, per)
    pick = lambda idx, tag: Trace(days[list(idx)].ravel(), trace.resolution, f"{trace.source_id}{tag}", trace.start)
    return pick(train_days, ""), pick(test_days, "")


# CSV formats.

TRACE_HEADER = ["timestamp", "source_id", "kw"]
SCENARIO_HEADER = ["slot", "customer_id", "delta_kw", "a_coeff", "delta_r_kw", "D_kw"]


def read_trace_csv(path: str | Path) -> list[Trace]:
    """Parse ``timestamp,source_id,kw`` rows into one trace per source.

    Rows of a source must be consecutive in time with uniform spacing; gaps
    are rejected.
    """
    path = Path(path)
    rows: dict[str, list[tuple[int, datetime, float]]] = {}
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRACE_HEADER:
            raise DataError(f"{path}:1: expected header {','.join(TRACE_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                ts = datetime.fromisoformat(row[0].strip().replace("Z", "+00:00"))
                kw = float(row[2])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if ts.tzinfo is None:
                ts = ts.replace(tzinfo=timezone.utc)
            if not math.isfinite(kw) or kw < 0:
                raise DataError(f"{path}:{lineno}: invalid kW value {row[2]!r}")
            rows.setdefault(row[1].strip(), []).append((lineno, ts, kw))
    traces = []
    for source, items in rows.items():
        items.sort(key=lambda r: r[1])
        if len(items) < 2:
            raise DataError(f"{path}: source {source!r} has fewer than two samples")
        step = items[1][1] - items[0][1]
        if step <= timedelta(0):
            raise DataError(f"{path}:{items[1][0]}: duplicate timestamp for {source!r}")
        for (_, prev, _), (lineno, ts, _) in zip(items, items[1:]):
            if ts - prev != step:
                raise DataError(
                    f"{path}:{lineno}: gap or irregular spacing in {source!r} "
                    f"({ts - prev} vs {step})"
                )
        series = np.array([r[2] for r in items])
        traces.append(Trace(series, int(step.total_seconds()), source, items[0][1]))
    return traces


def write_trace_csv(traces: Sequence[Trace], path: str | Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for tr in traces:
            start = tr.start or datetime(2017, 1, 1, tzinfo=timezone.utc)
            for k, v in enumerate(tr.series):
                ts = start + timedelta(seconds=k * tr.resolution)
                w.writerow([ts.isoformat(), tr.source_id, repr(float(v))])


def write_scenarios_csv(scenarios: ScenarioSet, path: str | Path):
    """One row per (slot, customer) plus a ``_system`` row per slot."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCENARIO_HEADER)
        for t in range(scenarios.n_slots):
            for i in range(scenarios.n_customers):
                w.writerow([t, i, repr(float(scenarios.delta[t, i])), repr(float(scenarios.a[t, i])), "", ""])
            w.writerow([t, "_system", "", "", repr(float(scenarios.delta_r[t])), repr(float(scenarios.D[t]))])


def read_scenarios_csv(path: str | Path, a_hat: np.ndarray | None = None) -> ScenarioSet:
    path = Path(path)
    delta: dict[int, dict[int, float]] = {}
    a: dict[int, dict[int, float]] = {}
    delta_r: dict[int, float] = {}
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    with fh:
        reader = csv.reader(fh)
        if next(reader, None) != SCENARIO_HEADER:
            raise DataError(f"{path}:1: expected header {','.join(SCENARIO_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                t = int(row[0])
                if row[1] == "_system":
                    delta_r[t] = float(row[4])
                else:
                    i = int(row[1])
                    delta.setdefault(t, {})[i] = float(row[2])
                    a.setdefault(t, {})[i] = float(row[3])
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    slots = sorted(delta)
    if not slots:
        raise DataError(f"{path}: no scenario rows")
    if slots != sorted(delta_r):
        raise DataError(f"{path}: customer and _system rows cover different slots")
    n = len(delta[slots[0]])
    dmat = np.array([[delta[t][i] for i in range(n)] for t in slots])
    amat = np.array([[a[t][i] for i in range(n)] for t in slots])
    return ScenarioSet(dmat, np.array([delta_r[t] for t in slots]), amat,
                       amat.mean(axis=0) if a_hat is None else a_hat)
