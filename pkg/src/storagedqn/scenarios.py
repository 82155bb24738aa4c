"""Aligned load / PV / price scenarios.

CSV schema (header required, one row per slot, positional slot index)::

    timestamp,load_kw,pv_kw,price_per_kwh

The timestamp column is ISO-8601 and informational only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

CSV_COLUMNS = ("timestamp", "load_kw", "pv_kw", "price_per_kwh")
DEFAULT_START = datetime(2012, 7, 1)


class ScenarioFormatError(ValueError):
    """Base class for scenario CSV problems."""


class MissingColumnError(ScenarioFormatError):
    pass


class NonNumericError(ScenarioFormatError):
    pass


class LengthMismatchError(ScenarioFormatError):
    pass


class NegativeValueError(ScenarioFormatError):
    pass


@dataclass(frozen=True)
class TimeSeries:
    values: np.ndarray
    resolution_seconds: float

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("time series values must be one-dimensional")
        if not np.all(np.isfinite(values)):
            raise ValueError("time series contains non-finite values")
        if not self.resolution_seconds > 0:
            raise ValueError(
                f"resolution_seconds must be > 0, got {self.resolution_seconds}"
            )
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Load ``d_t``, renewable generation ``r_t`` and price ``p_t`` per slot."""

    load_kw: np.ndarray
    pv_kw: np.ndarray
    price_per_kwh: np.ndarray
    slot_hours: float = 5.0 / 60.0

    def __post_init__(self) -> None:
        arrays = {}
        for name in ("load_kw", "pv_kw", "price_per_kwh"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be one-dimensional")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains NaN or infinite values")
            arr.setflags(write=False)
            arrays[name] = arr
        lengths = {len(a) for a in arrays.values()}
        if len(lengths) != 1:
            raise LengthMismatchError(
                "load_kw, pv_kw and price_per_kwh lengths differ: "
                + ", ".join(f"{k}={len(v)}" for k, v in arrays.items())
            )
        if len(arrays["load_kw"]) == 0:
            raise ValueError("scenario must contain at least one slot")
        for name in ("load_kw", "pv_kw"):
            bad = np.flatnonzero(arrays[name] < 0)
            if bad.size:
                raise NegativeValueError(
                    f"{name} is negative at slot {bad[0]}: {arrays[name][bad[0]]}"
                )
        if not self.slot_hours > 0:
            raise ValueError(f"slot_hours must be > 0, got {self.slot_hours}")
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    @property
    def horizon(self) -> int:
        return len(self.load_kw)

    @property
    def net_demand_kw(self) -> np.ndarray:
        return self.load_kw - self.pv_kw

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.slot_hours == other.slot_hours
            and np.array_equal(self.load_kw, other.load_kw)
            and np.array_equal(self.pv_kw, other.pv_kw)
            and np.array_equal(self.price_per_kwh, other.price_per_kwh)
        )

    def window(self, start: int, length: int) -> "Scenario":
        stop = start + length
        if start < 0 or length < 1 or stop > self.horizon:
            raise ValueError(
                f"window [{start}, {stop}) outside scenario of horizon {self.horizon}"
            )
        return Scenario(
            self.load_kw[start:stop],
            self.pv_kw[start:stop],
            self.price_per_kwh[start:stop],
            self.slot_hours,
        )

    def windows(self, length: int) -> list["Scenario"]:
        """Consecutive non-overlapping windows; a trailing remainder is dropped."""
        return [self.window(i * length, length) for i in range(self.horizon // length)]


def resample_interleaved(
    raw: TimeSeries, slot_seconds: float, n_sequences: int
) -> list[TimeSeries]:
    """Split a fine-resolution series into ``n_sequences`` slot-resolution series.

    Each slot holds ``slot_seconds / resolution`` raw samples. Sequence ``k``
    takes, for every slot, the mean of the k-th consecutive sub-block of
    ``samples_per_slot // n_sequences`` samples within that slot. With 1 s data,
    300 s slots and 25 sequences each sub-block is 12 seconds long.
    """
    ratio = slot_seconds / raw.resolution_seconds
    samples_per_slot = round(ratio)
    if samples_per_slot < 1 or not math.isclose(ratio, samples_per_slot, abs_tol=1e-9):
        raise ValueError(
            f"slot of {slot_seconds} s is not a whole multiple of the "
            f"{raw.resolution_seconds} s resolution"
        )
    if n_sequences < 1:
        raise ValueError(f"n_sequences must be >= 1, got {n_sequences}")
    sub_block = samples_per_slot // n_sequences
    if sub_block < 1:
        raise ValueError(
            f"{n_sequences} sequences do not fit into {samples_per_slot} samples per slot"
        )
    n_slots = len(raw) // samples_per_slot
    blocks = raw.values[: n_slots * samples_per_slot].reshape(n_slots, samples_per_slot)
    used = blocks[:, : n_sequences * sub_block].reshape(n_slots, n_sequences, sub_block)
    means = used.mean(axis=2)
    return [TimeSeries(means[:, k].copy(), float(slot_seconds)) for k in range(n_sequences)]


def _hour_of_day(horizon_slots: int, slot_hours: float) -> np.ndarray:
    slots_per_day = 24.0 / slot_hours
    idx = np.arange(horizon_slots)
    if math.isclose(slots_per_day, round(slots_per_day), abs_tol=1e-9):
        # integer slot-of-day keeps the profile exactly periodic
        return (idx % round(slots_per_day)) * slot_hours
    return (idx * slot_hours) % 24.0


def _bump(hour: np.ndarray, center: float, width: float) -> np.ndarray:
    d = np.abs(hour - center)
    d = np.minimum(d, 24.0 - d)
    return np.exp(-0.5 * (d / width) ** 2)


def synth_load(
    horizon_slots: int,
    slot_hours: float,
    seed: int,
    *,
    base_kw: float = 50.0,
    morning_kw: float = 25.0,
    evening_kw: float = 40.0,
    noise_kw: float = 5.0,
) -> np.ndarray:
    """Daily load with morning (08:00) and evening (19:00) peaks plus Gaussian noise."""
    if horizon_slots < 1:
        raise ValueError(f"horizon_slots must be >= 1, got {horizon_slots}")
    hour = _hour_of_day(horizon_slots, slot_hours)
    profile = base_kw + morning_kw * _bump(hour, 8.0, 1.5) + evening_kw * _bump(hour, 19.0, 2.0)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, 1.0, horizon_slots) * noise_kw
    return np.maximum(profile + noise, 0.0)


def synth_pv(
    horizon_slots: int,
    slot_hours: float,
    seed: int,
    *,
    peak_kw: float = 40.0,
    sunrise: float = 6.0,
    sunset: float = 18.0,
    cloud_noise: float = 0.2,
) -> np.ndarray:
    """Daytime bell profile peaking at solar noon, zero at night.

    Noise is multiplicative (a cloudiness factor ``1 + cloud_noise * N(0, 1)``
    floored at zero), so night slots stay exactly zero.
    """
    if horizon_slots < 1:
        raise ValueError(f"horizon_slots must be >= 1, got {horizon_slots}")
    hour = _hour_of_day(horizon_slots, slot_hours)
    phase = (hour - sunrise) / (sunset - sunrise)
    bell = np.where((phase > 0) & (phase < 1), np.sin(np.pi * np.clip(phase, 0, 1)) ** 2, 0.0)
    rng = np.random.default_rng(seed)
    factor = np.maximum(1.0 + cloud_noise * rng.normal(0.0, 1.0, horizon_slots), 0.0)
    return peak_kw * bell * factor


def split_train_test(
    scenarios: Sequence, n_test: int, seed: int
) -> tuple[list, list]:
    """Seeded disjoint partition; both parts keep the input order."""
    n = len(scenarios)
    if not 0 <= n_test < n:
        raise ValueError(f"n_test must lie in [0, {n}), got {n_test}")
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = set(perm[:n_test].tolist())
    train = [s for i, s in enumerate(scenarios) if i not in test_idx]
    test = [s for i, s in enumerate(scenarios) if i in test_idx]
    return train, test


def load_scenario_csv(path, slot_hours: float = 5.0 / 60.0) -> Scenario:
    """Parse and validate a scenario file."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumnError(f"{path}: empty file, expected header {CSV_COLUMNS}")
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise MissingColumnError(f"{path}: missing column(s) {', '.join(missing)}")
        col = {name: header.index(name) for name in CSV_COLUMNS[1:]}
        series: dict[str, list[float]] = {name: [] for name in col}
        rowno = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            rowno += 1
            for name, j in col.items():
                if j >= len(row) or not row[j].strip():
                    continue
                cell = row[j].strip()
                try:
                    value = float(cell)
                except ValueError:
                    raise NonNumericError(
                        f"{path}: row {rowno} (line {lineno}), column {name}: non-numeric value {cell!r}"
                    ) from None
                if not math.isfinite(value):
                    raise NonNumericError(
                        f"{path}: row {rowno} (line {lineno}), column {name}: non-finite value {cell!r}"
                    )
                if value < 0 and name in ("load_kw", "pv_kw"):
                    raise NegativeValueError(
                        f"{path}: row {rowno} (line {lineno}), column {name}: negative value {value}"
                    )
                series[name].append(value)
    lengths = {name: len(v) for name, v in series.items()}
    if len(set(lengths.values())) != 1:
        raise LengthMismatchError(
            f"{path}: series lengths differ: "
            + ", ".join(f"{k}={v}" for k, v in lengths.items())
        )
    if lengths["load_kw"] == 0:
        raise ScenarioFormatError(f"{path}: no data rows")
    return Scenario(series["load_kw"], series["pv_kw"], series["price_per_kwh"], slot_hours)


def write_scenario_csv(path, scenario: Scenario, start: datetime = DEFAULT_START) -> None:
    path = Path(path)
    step = timedelta(hours=scenario.slot_hours)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for t in range(scenario.horizon):
            writer.writerow(
                [
                    (start + t * step).isoformat(),
                    repr(float(scenario.load_kw[t])),
                    repr(float(scenario.pv_kw[t])),
                    repr(float(scenario.price_per_kwh[t])),
                ]
            )


def synthetic_scenarios(
    n_scenarios: int,
    horizon_slots: int,
    slot_hours: float,
    chain,
    seed: int,
    load_kwargs: dict | None = None,
    pv_kwargs: dict | None = None,
) -> list[Scenario]:
    """Independent synthetic scenarios; each series gets its own spawned seed.

    ``chain`` is a :class:`storagedqn.pricing.PriceChain`.
    """
    from .pricing import sample_sequence

    children = np.random.SeedSequence(seed).spawn(n_scenarios)
    out = []
    for child in children:
        s_load, s_pv, s_price = (int(x) for x in child.generate_state(3))
        out.append(
            Scenario(
                synth_load(horizon_slots, slot_hours, s_load, **(load_kwargs or {})),
                synth_pv(horizon_slots, slot_hours, s_pv, **(pv_kwargs or {})),
                sample_sequence(chain, horizon_slots, s_price),
                slot_hours,
            )
        )
    return out
