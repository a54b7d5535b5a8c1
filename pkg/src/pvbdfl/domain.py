"""Core data types shared by every other module.

All values are immutable after construction; invariants are checked at
construction time and violations raise typed errors from
:mod:`pvbdfl.errors`. Energies are kWh per hour slot, so power and energy
coincide numerically at the hourly resolution used throughout.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    InvalidSpec,
    LengthMismatch,
    NegativeEnergy,
    ParseError,
    PriceInversion,
    SchemaError,
)

HOURS_PER_DAY = 24

#: Fixed 365-day calendar used for all synthetic timelines (no leap days,
#: no DST; hour 0 is midnight January 1st of year 0, a Monday).
MONTH_LENGTHS = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
_MONTH_STARTS = np.concatenate(([0], np.cumsum(MONTH_LENGTHS)))


def month_of_day(day_index) -> np.ndarray:
    """Month (1..12) for a day index on the fixed 365-day calendar."""
    doy = np.asarray(day_index) % 365
    return np.searchsorted(_MONTH_STARTS, doy, side="right").astype(int)


class Unit(Enum):
    KWH = "kWh"
    EUR_PER_KWH = "EUR_per_kWh"
    W_PER_M2 = "W_per_m2"
    DIMENSIONLESS = "dimensionless"


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HourlySeries:
    """A contiguous hourly series of real values.

    ``start_hour`` is an integer hour index since the epoch of the fixed
    calendar. Energy series must be finite; sign constraints (e.g. PV >= 0)
    are enforced by the owning container, which knows the series' role.
    """

    start_hour: int
    values: np.ndarray
    unit: Unit

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))
        if self.values.ndim != 1 or self.values.size == 0:
            raise LengthMismatch("series must be a non-empty 1-D sequence")
        if self.unit is Unit.KWH and not np.isfinite(self.values).all():
            raise InvalidSpec("energy series must be finite")

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def end_hour(self) -> int:
        return self.start_hour + len(self)

    def day_count(self) -> int:
        if len(self) % HOURS_PER_DAY:
            raise LengthMismatch(
                f"series length {len(self)} is not a whole number of days"
            )
        return len(self) // HOURS_PER_DAY

    def day(self, day_index: int) -> np.ndarray:
        """Values of one 24-hour day, counted from the series start."""
        lo = day_index * HOURS_PER_DAY
        if lo < 0 or lo + HOURS_PER_DAY > len(self):
            raise IndexError(f"day {day_index} out of range")
        return self.values[lo : lo + HOURS_PER_DAY]


@dataclass(frozen=True)
class BatterySpec:
    """Battery parameters: capacity, hourly power limit and SoC window.

    The hourly (dis)charge limit is ``capacity_kwh / c_rate_divisor``.
    """

    capacity_kwh: float
    c_rate_divisor: float
    soc_min_frac: float
    soc_max_frac: float
    soc_init_frac: float

    def __post_init__(self):
        if not (self.capacity_kwh > 0 and np.isfinite(self.capacity_kwh)):
            raise InvalidSpec("capacity_kwh must be positive and finite")
        if not (self.c_rate_divisor > 0):
            raise InvalidSpec("c_rate_divisor must be positive")
        if not (0 <= self.soc_min_frac < self.soc_max_frac <= 1):
            raise InvalidSpec("need 0 <= soc_min_frac < soc_max_frac <= 1")
        if not (self.soc_min_frac < self.soc_init_frac < self.soc_max_frac):
            raise InvalidSpec("soc_init_frac must lie strictly inside the SoC window")

    @property
    def max_power_kwh(self) -> float:
        return self.capacity_kwh / self.c_rate_divisor

    @property
    def soc_init_kwh(self) -> float:
        return self.soc_init_frac * self.capacity_kwh

    def to_json(self) -> str:
        return json.dumps(
            {
                "capacity_kwh": self.capacity_kwh,
                "c_rate_divisor": self.c_rate_divisor,
                "soc_min_frac": self.soc_min_frac,
                "soc_max_frac": self.soc_max_frac,
                "soc_init_frac": self.soc_init_frac,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "BatterySpec":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid battery JSON: {exc}") from exc
        required = {
            "capacity_kwh",
            "c_rate_divisor",
            "soc_min_frac",
            "soc_max_frac",
            "soc_init_frac",
        }
        if set(raw) != required:
            raise SchemaError(f"battery JSON must have exactly the fields {sorted(required)}")
        return cls(**{k: float(v) for k, v in raw.items()})


@dataclass(frozen=True)
class DayInstance:
    """One 24-hour scheduling problem."""

    pv: np.ndarray
    load: np.ndarray
    price_import: np.ndarray
    price_export: np.ndarray
    battery: BatterySpec

    def __post_init__(self):
        for name in ("pv", "load", "price_import", "price_export"):
            arr = _readonly(getattr(self, name))
            object.__setattr__(self, name, arr)
            if arr.shape != (HOURS_PER_DAY,):
                raise LengthMismatch(f"{name} must have exactly {HOURS_PER_DAY} entries")
            if not np.isfinite(arr).all():
                raise InvalidSpec(f"{name} must be finite")
        if (self.pv < 0).any() or (self.load < 0).any():
            raise NegativeEnergy("pv and load must be non-negative")
        bad = np.nonzero(self.price_export > self.price_import)[0]
        if bad.size:
            raise PriceInversion(
                f"price_export exceeds price_import at hour(s) {bad.tolist()}"
            )


def validate_day_instance(instance: DayInstance) -> DayInstance:
    """Re-run all construction checks on an instance and return it.

    Useful when an instance was produced by code that bypassed the
    dataclass constructor (e.g. deserialization of trusted data).
    """
    return DayInstance(
        pv=instance.pv,
        load=instance.load,
        price_import=instance.price_import,
        price_export=instance.price_export,
        battery=instance.battery,
    )


@dataclass(frozen=True)
class Schedule:
    """Solver output for one day: decisions, SoC trajectory and cost.

    Instances are produced by the scheduling module; ``validate_against``
    checks the physical invariants with respect to the day they solve.
    """

    p_ch: np.ndarray
    p_dis: np.ndarray
    p_im: np.ndarray
    p_ex: np.ndarray
    mode: np.ndarray
    soc: np.ndarray
    cost: float

    def __post_init__(self):
        for name in ("p_ch", "p_dis", "p_im", "p_ex", "mode", "soc"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        T = self.p_ch.size
        for name in ("p_dis", "p_im", "p_ex", "mode"):
            if getattr(self, name).size != T:
                raise LengthMismatch(f"{name} must match p_ch length {T}")
        if self.soc.size != T + 1:
            raise LengthMismatch("soc must have one more entry than the decisions")

    @property
    def horizon(self) -> int:
        return int(self.p_ch.size)

    def validate_against(self, instance: DayInstance, tol: float = 1e-6) -> None:
        """Raise InvalidSpec unless all schedule invariants hold for ``instance``."""
        bat = instance.battery
        pmax = bat.max_power_kwh
        supply = instance.pv + self.p_im + self.p_dis
        use = self.p_ex + instance.load + self.p_ch
        if np.abs(supply - use).max() > tol:
            raise InvalidSpec("energy balance violated")
        for name in ("p_ch", "p_dis", "p_im", "p_ex"):
            if getattr(self, name).min() < -tol:
                raise InvalidSpec(f"{name} must be non-negative")
        if self.mode.min() < -tol or self.mode.max() > 1 + tol:
            raise InvalidSpec("mode must lie in [0, 1]")
        if (self.p_ch > pmax * self.mode + tol).any():
            raise InvalidSpec("charge exceeds mode-weighted power limit")
        if (self.p_dis > pmax * (1.0 - self.mode) + tol).any():
            raise InvalidSpec("discharge exceeds mode-weighted power limit")
        init = bat.soc_init_kwh
        if abs(self.soc[0] - init) > tol or abs(self.soc[-1] - init) > tol:
            raise InvalidSpec("SoC must start and end at the initial state")
        steps = self.soc[1:] - self.soc[:-1] - (self.p_ch - self.p_dis)
        if np.abs(steps).max() > tol:
            raise InvalidSpec("SoC trajectory inconsistent with charge/discharge")


@dataclass(frozen=True)
class Building:
    """A building's metered series plus its simulated battery."""

    id: str
    yearly_load_mwh: float
    load_series: HourlySeries
    pv_series: HourlySeries
    battery: BatterySpec

    def __post_init__(self):
        if self.yearly_load_mwh <= 0:
            raise InvalidSpec("yearly_load_mwh must be positive")
        if (
            self.load_series.start_hour != self.pv_series.start_hour
            or len(self.load_series) != len(self.pv_series)
        ):
            raise LengthMismatch("load and pv series must cover the same hour range")
        if (self.pv_series.values < 0).any():
            raise NegativeEnergy(f"building {self.id}: pv values must be non-negative")
        if (self.load_series.values < 0).any():
            raise NegativeEnergy(f"building {self.id}: load values must be non-negative")


BUILDING_CSV_HEADER = ["hour", "load_kwh", "pv_kwh"]


def write_building_csv(path, load_series: HourlySeries, pv_series: HourlySeries) -> None:
    """Write the hourly building schema: hour,load_kwh,pv_kwh."""
    if len(load_series) != len(pv_series) or load_series.start_hour != pv_series.start_hour:
        raise LengthMismatch("load and pv series must cover the same hour range")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BUILDING_CSV_HEADER)
        start = load_series.start_hour
        for i, (load, pv) in enumerate(zip(load_series.values, pv_series.values)):
            writer.writerow([start + i, repr(float(load)), repr(float(pv))])


def read_building_csv(path) -> tuple[HourlySeries, HourlySeries]:
    """Read the hour,load_kwh,pv_kwh schema back into two series."""
    path = Path(path)
    hours: list[int] = []
    loads: list[float] = []
    pvs: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != BUILDING_CSV_HEADER:
            raise SchemaError(f"{path}: expected header {BUILDING_CSV_HEADER}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                hours.append(int(row[0]))
                loads.append(float(row[1]))
                pvs.append(float(row[2]))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            if pvs[-1] < 0:
                raise SchemaError(f"{path}:{lineno}: negative pv value {pvs[-1]}")
            if loads[-1] < 0:
                raise SchemaError(f"{path}:{lineno}: negative load value {loads[-1]}")
    if not hours:
        raise SchemaError(f"{path}: no data rows")
    start = hours[0]
    if hours != list(range(start, start + len(hours))):
        raise SchemaError(f"{path}: hour column must be contiguous")
    return (
        HourlySeries(start, loads, Unit.KWH),
        HourlySeries(start, pvs, Unit.KWH),
    )
