"""Metrics, significance tests and report files.

Costs are compared on a relative scale anchored at the perfect-information
solve (0%) and the no-battery baseline (100%). Cost and forecast-error
differences between models are tested with the Diebold-Mariano statistic
using the long-run (HAC) variance of the loss differential.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .domain import month_of_day
from .errors import DegenerateScale, InvalidSpec, ZeroMaxPv, ZeroVariance

SEASONS = {
    "winter": (11, 12, 1, 2),
    "summer": (5, 6, 7, 8),
    "shoulder": (3, 4, 9, 10),
}

MODEL_ORDER = ["No-opt", "Naive", "LSTM", "DFL", "DFL-WS", "Perfect"]


def season_of_day(day_index) -> np.ndarray:
    """Season label per day index (winter: Nov-Feb, summer: May-Aug)."""
    months = month_of_day(day_index)
    out = np.empty(np.shape(months), dtype=object)
    for name, month_set in SEASONS.items():
        out[np.isin(months, month_set)] = name
    return out


def s_rmse(preds, actuals) -> float:
    """RMSE as a percentage of the peak actual value."""
    preds = np.asarray(preds, float).ravel()
    actuals = np.asarray(actuals, float).ravel()
    if preds.size != actuals.size:
        raise InvalidSpec("prediction and actual series must have equal length")
    peak = actuals.max(initial=0.0)
    if peak <= 0:
        raise ZeroMaxPv("cannot scale RMSE: actual peak is zero")
    return 100.0 * float(np.sqrt(np.mean((preds - actuals) ** 2))) / peak


def relative_cost(cost: float, perfect_cost: float, noopt_cost: float) -> float:
    """Position of a cost between the perfect (0%) and no-opt (100%) anchors."""
    if noopt_cost <= perfect_cost + 1e-9:
        raise DegenerateScale(
            f"no-opt cost {noopt_cost} does not exceed perfect cost {perfect_cost}"
        )
    return float(100.0 * (cost - perfect_cost) / (noopt_cost - perfect_cost))


@dataclass(frozen=True)
class DmResult:
    comparison: tuple[str, str]
    dm_stat: float
    p_value: float
    per_building_significant: int = 0
    total_buildings: int = 0


def dm_test(costs_a, costs_b, h: int = 1) -> DmResult:
    """Diebold-Mariano test on the loss differential a - b.

    The long-run variance is gamma_0 + 2*sum_{k=1}^{h-1} gamma_k, so with
    one-step-ahead forecasts (h=1) it is just the sample variance of the
    differential; the statistic is asymptotically standard normal.
    """
    a = np.asarray(costs_a, float).ravel()
    b = np.asarray(costs_b, float).ravel()
    if a.size != b.size:
        raise InvalidSpec("cost series must have equal length")
    T = a.size
    if T < 10:
        raise InvalidSpec(f"need at least 10 observations, got {T}")
    d = a - b
    d_bar = d.mean()
    centered = d - d_bar
    var = float(centered @ centered) / T
    for k in range(1, h):
        gamma_k = float(centered[k:] @ centered[:-k]) / T
        var += 2.0 * gamma_k
    if var <= 1e-15:
        raise ZeroVariance("loss differential has (near-)zero variance")
    stat = d_bar / np.sqrt(var / T)
    p = 2.0 * float(norm.sf(abs(stat)))
    return DmResult(comparison=("a", "b"), dm_stat=float(stat), p_value=p)


def pooled_dm(per_building_costs: dict, comparison: tuple[str, str], h: int = 1) -> DmResult:
    """DM test pooled across buildings plus a per-building significance count.

    ``per_building_costs`` maps building id -> {model name -> daily cost
    array}. The loss differential is model_b minus model_a, so a negative
    statistic means model_a incurs the higher costs.
    """
    if len(per_building_costs) < 2:
        raise InvalidSpec("pooled test needs at least 2 buildings")
    model_a, model_b = comparison
    chunks_a, chunks_b = [], []
    significant = 0
    for building in sorted(per_building_costs):
        series = per_building_costs[building]
        a = np.asarray(series[model_a], float)
        b = np.asarray(series[model_b], float)
        chunks_a.append(a)
        chunks_b.append(b)
        try:
            if dm_test(b, a, h=h).p_value < 0.05:
                significant += 1
        except ZeroVariance:
            pass
    pooled = dm_test(np.concatenate(chunks_b), np.concatenate(chunks_a), h=h)
    return DmResult(
        comparison=comparison,
        dm_stat=pooled.dm_stat,
        p_value=pooled.p_value,
        per_building_significant=significant,
        total_buildings=len(per_building_costs),
    )


# ---------------------------------------------------------------------------
# report container


@dataclass
class BuildingEval:
    """Per-building test-split artifacts for one model."""

    s_rmse: float
    real_cost: float
    relative_cost: float
    daily_costs: np.ndarray
    daily_regrets: np.ndarray


@dataclass
class EvalReport:
    """Everything the report files are generated from."""

    per_building: dict  # building id -> {model -> BuildingEval}
    pooled: dict  # model -> {"s_rmse", "real_cost", "relative_cost"}
    dm_cost: list = field(default_factory=list)
    dm_error: list = field(default_factory=list)
    # hourly forecast stats: {season -> {model -> (mean, p10, p25, p75, p90) x 24}}
    forecast_profiles: dict = field(default_factory=dict)
    # hourly battery stats: {season -> {model -> (mean_charge, mean_discharge) x 24}}
    battery_profiles: dict = field(default_factory=dict)
    sweep_rows: list = field(default_factory=list)
    timing_rows: list = field(default_factory=list)


def pool_report(per_building: dict) -> dict:
    """Across-building averages; relative cost is recomputed from the
    averaged costs so the anchors stay exactly at 0 and 100."""
    models = next(iter(per_building.values())).keys()
    pooled = {}
    mean_perfect = np.mean([per_building[b]["Perfect"].real_cost for b in per_building])
    mean_noopt = np.mean([per_building[b]["No-opt"].real_cost for b in per_building])
    for model in models:
        costs = [per_building[b][model].real_cost for b in per_building]
        rmses = [
            per_building[b][model].s_rmse
            for b in per_building
            if not np.isnan(per_building[b][model].s_rmse)
        ]
        mean_cost = float(np.mean(costs))
        pooled[model] = {
            "s_rmse": float(np.mean(rmses)) if rmses else float("nan"),
            "real_cost": mean_cost,
            "relative_cost": relative_cost(mean_cost, mean_perfect, mean_noopt),
        }
    return pooled


def _write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def emit_report(report: EvalReport, out_dir) -> list:
    """Write all report CSVs; returns the written paths."""
    if not report.per_building:
        raise InvalidSpec("report has no buildings")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    rows = []
    for model in MODEL_ORDER:
        if model not in report.pooled:
            continue
        entry = report.pooled[model]
        rows.append([model, repr(float(entry["s_rmse"])), repr(float(entry["real_cost"])),
                     repr(float(entry["relative_cost"]))])
    path = out / "results_table.csv"
    _write_csv(path, ["model", "s_rmse_pct", "real_cost_eur", "relative_cost_pct"], rows)
    written.append(path)

    rows = []
    for building in sorted(report.per_building):
        for model in MODEL_ORDER:
            if model not in report.per_building[building]:
                continue
            ev = report.per_building[building][model]
            rows.append([building, model, repr(float(ev.s_rmse)), repr(float(ev.real_cost)),
                         repr(float(ev.relative_cost))])
    path = out / "per_building.csv"
    _write_csv(path, ["building", "model", "s_rmse_pct", "real_cost_eur",
                      "relative_cost_pct"], rows)
    written.append(path)

    rows = []
    for building in sorted(report.per_building):
        for model in MODEL_ORDER:
            if model not in report.per_building[building]:
                continue
            ev = report.per_building[building][model]
            for day, (cost, regret) in enumerate(zip(ev.daily_costs, ev.daily_regrets)):
                rows.append([building, model, day, repr(float(cost)), repr(float(regret))])
    path = out / "daily_costs.csv"
    _write_csv(path, ["building", "model", "test_day", "cost_eur", "regret_eur"], rows)
    written.append(path)

    for name, results in (("dm_cost.csv", report.dm_cost), ("dm_error.csv", report.dm_error)):
        rows = [
            [f"{r.comparison[0]} vs {r.comparison[1]}", repr(float(r.dm_stat)), repr(float(r.p_value)),
             r.per_building_significant, r.total_buildings]
            for r in results
        ]
        path = out / name
        _write_csv(path, ["comparison", "dm_stat", "p_value",
                          "significant_buildings", "total_buildings"], rows)
        written.append(path)

    rows = []
    for season in sorted(report.forecast_profiles):
        for model in sorted(report.forecast_profiles[season]):
            stats = report.forecast_profiles[season][model]
            for hour in range(24):
                rows.append([season, model, hour] +
                            [repr(float(stats[key][hour]))
                             for key in ("mean", "p10", "p25", "p75", "p90")])
    path = out / "forecast_profiles.csv"
    _write_csv(path, ["season", "model", "hour", "mean_kwh", "p10", "p25", "p75", "p90"], rows)
    written.append(path)

    rows = []
    for season in sorted(report.battery_profiles):
        for model in sorted(report.battery_profiles[season]):
            stats = report.battery_profiles[season][model]
            for hour in range(24):
                rows.append([season, model, hour,
                             repr(float(stats["charge"][hour])),
                             repr(float(stats["discharge"][hour]))])
    path = out / "battery_profiles.csv"
    _write_csv(path, ["season", "model", "hour", "mean_charge_kwh",
                      "mean_discharge_kwh"], rows)
    written.append(path)

    if report.sweep_rows:
        path = out / "sweep.csv"
        _write_csv(path, ["level", "beta", "model", "s_rmse_pct", "scaled_cost"],
                   report.sweep_rows)
        written.append(path)

    if report.timing_rows:
        path = out / "timing.csv"
        _write_csv(path, ["building", "regime", "wall_clock_s", "epochs_run",
                          "best_epoch"], report.timing_rows)
        written.append(path)

    return written
