"""Synthetic data: forecast degradation, tariffs, weather, households.

Forecasts are manufactured from actuals by a compound error process:
multiplicative skew-normal noise, clipping to physical bounds, random
timing shifts, and Gaussian smoothing for realistic error
autocorrelation, applied in exactly that order. Household load and PV
come from parametric profile generators; everything is reproducible from
integer seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .domain import (
    BatterySpec,
    Building,
    HourlySeries,
    Unit,
    read_building_csv,
)
from .errors import ConfigInvalid, InvalidSpec, SchemaError
from .seeding import derive_seed

HOURS_PER_YEAR = 365 * 24


@dataclass(frozen=True)
class NoiseSpec:
    """Parameters of the forecast-degradation process."""

    alpha: float
    beta: float
    shift_prob: float
    shift_max: int
    smooth_sigma: float
    seed: int

    def __post_init__(self):
        if self.beta < 0:
            raise InvalidSpec("beta must be non-negative")
        if not 0 <= self.shift_prob <= 1:
            raise InvalidSpec("shift_prob must lie in [0, 1]")
        if self.shift_max < 0:
            raise InvalidSpec("shift_max must be non-negative")
        if self.smooth_sigma < 0:
            raise InvalidSpec("smooth_sigma must be non-negative")


#: Degradation applied to irradiance actuals to fake day-ahead forecasts.
DNI_NOISE = NoiseSpec(alpha=-1.0, beta=0.20, shift_prob=0.02, shift_max=5,
                      smooth_sigma=1.0, seed=0)

#: Baseline degradation of the load forecast (the level-2 setting).
LOAD_NOISE = NoiseSpec(alpha=-0.5, beta=0.50, shift_prob=0.05, shift_max=5,
                       smooth_sigma=0.5, seed=0)

#: Noise levels scale beta in steps of 0.25; the baseline above is level 2.
BETA_PER_LEVEL = 0.25


def skew_normal_sample(alpha: float, rng: np.random.Generator, size=None):
    """Standard skew-normal draw(s): delta*|u0| + sqrt(1-delta^2)*u1."""
    delta = alpha / math.sqrt(1.0 + alpha * alpha)
    u0 = rng.standard_normal(size)
    u1 = rng.standard_normal(size)
    return delta * np.abs(u0) + math.sqrt(1.0 - delta * delta) * u1


def gaussian_smooth(values: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian kernel smoothing, truncated at 4 sigma and renormalized
    everywhere so constants (and boundaries) are preserved."""
    if sigma <= 0:
        return values.copy()
    radius = int(math.ceil(4.0 * sigma))
    offsets = np.arange(-radius, radius + 1)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    num = np.convolve(values, kernel, mode="same")
    den = np.convolve(np.ones_like(values), kernel, mode="same")
    return num / den


def _apply_time_shifts(values: np.ndarray, spec: NoiseSpec, rng) -> np.ndarray:
    """Move each value to t + U(-k, k) with probability p.

    Values landing on the same hour are averaged; hours left without any
    value keep their pre-shift value. Shifts beyond the series edge drop.
    """
    n = values.size
    move = rng.random(n) < spec.shift_prob
    offsets = rng.integers(-spec.shift_max, spec.shift_max + 1, size=n)
    if spec.shift_max == 0 or not move.any():
        return values.copy()
    offsets = np.where(move, offsets, 0)
    targets = np.arange(n) + offsets
    valid = (targets >= 0) & (targets < n)
    sums = np.bincount(targets[valid], weights=values[valid], minlength=n)
    counts = np.bincount(targets[valid], minlength=n)
    return np.where(counts > 0, sums / np.maximum(counts, 1), values)


def apply_forecast_noise(actuals: HourlySeries, spec: NoiseSpec) -> HourlySeries:
    """Degrade an actuals series into a synthetic forecast.

    Steps, in order: multiplicative skew-normal noise, clip to
    [0, max(actuals)], random timing shifts, Gaussian smoothing. The
    output stays inside the clip bounds (smoothing is an average) and is
    a deterministic function of (actuals, spec).
    """
    y = np.asarray(actuals.values, float)
    if y.min() < 0:
        raise InvalidSpec("forecast noise expects non-negative actuals")
    rng = np.random.default_rng(spec.seed)
    z = skew_normal_sample(spec.alpha, rng, size=y.size)
    noisy = y * (1.0 + spec.beta * z)
    noisy = np.clip(noisy, 0.0, y.max())
    shifted = _apply_time_shifts(noisy, spec, rng)
    smoothed = gaussian_smooth(shifted, spec.smooth_sigma)
    return HourlySeries(actuals.start_hour, smoothed, actuals.unit)


def noise_level_to_spec(level: int, base: NoiseSpec) -> NoiseSpec:
    """Map a sweep level (0..6) to a spec; level 0 is a perfect forecast."""
    if not 0 <= level <= 6:
        raise ConfigInvalid(f"noise level must be in 0..6, got {level}")
    beta = BETA_PER_LEVEL * level
    if level == 0:
        return replace(base, beta=0.0, shift_prob=0.0, smooth_sigma=0.0)
    return replace(base, beta=beta)


# ---------------------------------------------------------------------------
# tariff


@dataclass(frozen=True)
class TariffConfig:
    """Dynamic-contract price generator parameters (EUR/kWh)."""

    base_level: float = 0.16
    daily_amplitude: float = 0.05
    weekly_amplitude: float = 0.01
    trend_per_year: float = 0.05
    noise_std: float = 0.03
    offtake_tax: float = 0.13
    export_discount_frac: float = 0.90
    seed: int = 0

    def __post_init__(self):
        if self.offtake_tax < 0 or not 0 <= self.export_discount_frac <= 1:
            raise ConfigInvalid(
                "offtake_tax must be >= 0 and export_discount_frac in [0, 1]"
            )


def generate_tariff(config: TariffConfig, hours: int) -> tuple[HourlySeries, HourlySeries]:
    """Hourly import/export prices: sinusoidal day/week shape, a slow
    upward trend, AR(1) market noise, taxes on off-take only."""
    if hours <= 0 or hours % 24:
        raise ConfigInvalid("hours must be a positive multiple of 24")
    t = np.arange(hours)
    hod = t % 24
    how = t % (24 * 7)
    wholesale = (
        config.base_level
        + config.daily_amplitude * np.sin(2.0 * np.pi * (hod - 13) / 24.0)
        + config.weekly_amplitude * np.sin(2.0 * np.pi * how / (24.0 * 7.0))
        + config.trend_per_year * (t / HOURS_PER_YEAR)
    )
    rng = np.random.default_rng(config.seed)
    phi = 0.97
    innov = rng.standard_normal(hours) * config.noise_std * math.sqrt(1 - phi * phi)
    ar = np.empty(hours)
    prev = 0.0
    for i in range(hours):
        prev = phi * prev + innov[i]
        ar[i] = prev
    wholesale = np.maximum(wholesale + ar, 0.0)
    price_import = wholesale + config.offtake_tax
    price_export = wholesale * config.export_discount_frac
    if (price_export > price_import).any():
        raise ConfigInvalid("generated export price exceeds import price")
    return (
        HourlySeries(0, price_import, Unit.EUR_PER_KWH),
        HourlySeries(0, price_export, Unit.EUR_PER_KWH),
    )


# ---------------------------------------------------------------------------
# battery sizing


def size_battery(yearly_load_mwh: float) -> BatterySpec:
    """Capacity at 1.1 kWh per MWh of yearly load; hourly power cap at
    capacity/2.7; SoC window 20-80% starting from 50%."""
    if not yearly_load_mwh > 0:
        raise InvalidSpec("yearly_load_mwh must be positive")
    return BatterySpec(
        capacity_kwh=1.1 * yearly_load_mwh,
        c_rate_divisor=2.7,
        soc_min_frac=0.2,
        soc_max_frac=0.8,
        soc_init_frac=0.5,
    )


# ---------------------------------------------------------------------------
# weather and households

_LATITUDE_RAD = math.radians(52.1)  # Utrecht-ish
_PV_KWP = 6.0
_PV_YIELD = 0.80  # plane-of-array/system factor, calibrated for NL yields


def _solar_elevation_sin(hours: np.ndarray) -> np.ndarray:
    doy = (hours // 24) % 365
    hod = hours % 24
    decl = np.radians(-23.44) * np.cos(2.0 * np.pi * (doy + 10) / 365.0)
    hour_angle = np.radians(15.0 * (hod - 12.5))
    elev = np.sin(_LATITUDE_RAD) * np.sin(decl) + np.cos(_LATITUDE_RAD) * np.cos(
        decl
    ) * np.cos(hour_angle)
    return np.maximum(elev, 0.0)


@dataclass(frozen=True)
class Weather:
    """Shared weather for one dataset: irradiance actuals and cloud field."""

    dni_actual: HourlySeries
    cloud: np.ndarray
    pv_base: np.ndarray  # per-kWp generation before panel-to-panel variation


def synth_weather(seed: int, years: int) -> Weather:
    """One shared weather realization: clear-sky curves times a cloud
    process with daily persistence and a winter bias."""
    hours = years * HOURS_PER_YEAR
    t = np.arange(hours)
    rng = np.random.default_rng(derive_seed(seed, "weather"))
    n_days = hours // 24
    daily = np.empty(n_days)
    prev = 0.0
    innov = rng.standard_normal(n_days)
    for i in range(n_days):
        prev = 0.7 * prev + innov[i] * math.sqrt(1 - 0.7**2)
        daily[i] = prev
    doy = np.arange(n_days) % 365
    winter_bias = 0.35 * np.cos(2.0 * np.pi * (doy - 10) / 365.0)
    cloud_daily = 1.0 / (1.0 + np.exp(-(0.25 + winter_bias + 0.9 * daily)))
    cloud = np.repeat(cloud_daily, 24)
    # intra-day cloud flicker: broken-sky hours matter for forecast errors
    wiggle = gaussian_smooth(rng.standard_normal(hours), 0.8) * 0.5
    cloud = np.clip(cloud + wiggle, 0.0, 1.0)

    elev = _solar_elevation_sin(t)
    sun_up = elev > 0
    dni_clear = np.zeros(hours)
    dni_clear[sun_up] = 950.0 * np.exp(-0.10 / np.maximum(elev[sun_up], 1e-6))
    dni = dni_clear * np.clip(1.0 - 1.15 * cloud, 0.0, 1.0)
    pv_base = _PV_YIELD * elev * np.clip(1.0 - 0.80 * cloud**1.3, 0.0, 1.0)
    return Weather(
        dni_actual=HourlySeries(0, dni, Unit.W_PER_M2),
        cloud=cloud,
        pv_base=pv_base,
    )


def _load_shape(hod: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Double-peak daily profile with building-specific peak placement.

    Night hours sit at a small standby floor, like metered households;
    the small denominators there dominate percentage error metrics."""
    standby = rng.uniform(0.05, 0.09)
    daytime = rng.uniform(0.2, 0.4)
    awake = 1.0 / (1.0 + np.exp(-(hod - 6.5))) * (1.0 / (1.0 + np.exp(hod - 23.0)))
    base = standby + daytime * awake
    morning = (rng.uniform(6.5, 9.5), rng.uniform(1.2, 2.2), rng.uniform(0.3, 0.9))
    evening = (rng.uniform(17.5, 21.0), rng.uniform(1.6, 3.0), rng.uniform(0.7, 1.4))
    for center, width, amp in (morning, evening):
        base += amp * np.exp(-0.5 * ((hod - center) / width) ** 2)
    return base


def synth_household(
    profile_seed: int,
    years: int,
    weather: Weather | None = None,
    building_id: str | None = None,
) -> Building:
    """One synthetic building: double-peak load scaled to a 3.5-8 MWh/yr
    total, PV from the shared weather with small panel-level variation,
    battery sized from the yearly load."""
    if years < 1:
        raise ConfigInvalid("years must be >= 1")
    if weather is None:
        weather = synth_weather(derive_seed(profile_seed, "standalone-weather"), years)
    hours = years * HOURS_PER_YEAR
    t = np.arange(hours)
    hod = t % 24
    day = t // 24
    doy = day % 365
    rng = np.random.default_rng(derive_seed(profile_seed, "household"))

    yearly_target_mwh = rng.uniform(3.5, 8.0)
    shape = _load_shape(hod.astype(float), rng)
    weekend = (day % 7) >= 5
    shape = shape * np.where(weekend & (hod >= 9) & (hod <= 17), 1.2, 1.0)
    seasonal = 1.0 + rng.uniform(0.12, 0.3) * np.cos(2.0 * np.pi * (doy - 15) / 365.0)
    habit = 1.0 + 0.25 * gaussian_smooth(rng.standard_normal(hours), 24.0)
    noise = np.exp(rng.normal(0.0, 0.5, size=hours))
    # additive appliance bursts (kettle/oven-sized) at any hour of the day;
    # they give metered-data-like cliffs next to the standby floor
    spikes = np.where(rng.random(hours) < 0.035,
                      rng.uniform(0.6, 2.2, size=hours), 0.0)
    load = (shape * seasonal * np.maximum(habit, 0.1) + spikes) * noise
    load *= yearly_target_mwh * 1000.0 * years / load.sum()

    panel = 1.0 + 0.04 * gaussian_smooth(rng.standard_normal(hours), 6.0)
    pv = np.maximum(_PV_KWP * weather.pv_base * np.maximum(panel, 0.0), 0.0)

    if building_id is None:
        building_id = f"b{profile_seed:03d}"
    return Building(
        id=building_id,
        yearly_load_mwh=yearly_target_mwh,
        load_series=HourlySeries(0, load, Unit.KWH),
        pv_series=HourlySeries(0, pv, Unit.KWH),
        battery=size_battery(yearly_target_mwh),
    )


# ---------------------------------------------------------------------------
# ingestion


def load_buildings(directory_path) -> list[Building]:
    """Read every ``*.csv`` building file in a directory (sorted by name).

    Batteries are sized from each building's mean yearly load, so plain
    metered data is enough to reconstruct the full simulation setup.
    """
    directory = Path(directory_path)
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise SchemaError(f"no building CSV files in {directory}")
    buildings = []
    for path in files:
        load_series, pv_series = read_building_csv(path)
        years = len(load_series) / HOURS_PER_YEAR
        yearly_mwh = load_series.values.sum() / 1000.0 / years
        buildings.append(
            Building(
                id=path.stem,
                yearly_load_mwh=yearly_mwh,
                load_series=load_series,
                pv_series=pv_series,
                battery=size_battery(yearly_mwh),
            )
        )
    return buildings
