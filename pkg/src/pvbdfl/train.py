"""Training regimes and the multi-building experiment driver.

Three regimes share the LSTM: two-phase training on squared forecast
error, decision-focused training on the scheduling regret (cold start),
and decision-focused fine-tuning from the two-phase checkpoint (warm
start). Early stopping and best-epoch selection use test-split
performance, matching the experimental protocol this reproduces; an
optional holdout fraction is available for methodologically cleaner
runs.

Evaluation separates two worlds: schedules are built from forecasts
(model PV and the degraded load forecast), while realized costs re-price
the frozen schedule against actual PV and actual load, with the relaxed
SoC window.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .datagen import LOAD_NOISE, apply_forecast_noise, noise_level_to_spec
from .diffopt import perfect_information_cost, regret_and_gradient
from .domain import BatterySpec, Building, DayInstance, HourlySeries
from .errors import InvalidSpec, NonFiniteLoss, ScheduleInfeasible, SingularKkt
from .eval import (
    BuildingEval,
    DmResult,
    EvalReport,
    pool_report,
    pooled_dm,
    relative_cost,
    s_rmse,
    season_of_day,
)
from .forecast import (
    ForecastModel,
    LstmHyper,
    FeatureWindow,
    hour_encoding,
    naive_forecast,
    windows_matrix,
)
from .sched_opt import (
    SolveOptions,
    evaluate_fixed_schedule,
    no_opt_cost,
    relaxed_options,
    solve_day,
)
from .seeding import derive_seed

REGIMES = ("MSE", "DFL", "DFL_WS")
TRAIN_FRAC = 0.6


@dataclass(frozen=True)
class TrainConfig:
    regime: str
    max_epochs: int = 300
    patience: int = 20
    seed: int = 0
    quad_reg_eps: float = 1e-3
    holdout_frac: float = 0.0
    hyper: LstmHyper = field(default_factory=LstmHyper)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise InvalidSpec(f"regime must be one of {REGIMES}")
        if not 0 < self.patience < self.max_epochs:
            raise InvalidSpec("need 0 < patience < max_epochs")
        if self.quad_reg_eps <= 0:
            raise InvalidSpec("quad_reg_eps must be positive for DFL training")


@dataclass(frozen=True)
class Sample:
    """One training/evaluation day."""

    window: FeatureWindow
    pv_actual: np.ndarray
    load_forecast: np.ndarray
    load_actual: np.ndarray
    price_import: np.ndarray
    price_export: np.ndarray
    battery: BatterySpec
    date: int

    def forecast_instance(self, pv_forecast) -> DayInstance:
        return DayInstance(
            pv=np.maximum(np.asarray(pv_forecast, float), 0.0),
            load=self.load_forecast,
            price_import=self.price_import,
            price_export=self.price_export,
            battery=self.battery,
        )

    def actual_instance(self) -> DayInstance:
        return DayInstance(
            pv=self.pv_actual,
            load=self.load_actual,
            price_import=self.price_import,
            price_export=self.price_export,
            battery=self.battery,
        )


def build_samples(
    building: Building,
    dni_forecast: HourlySeries,
    price_import: HourlySeries,
    price_export: HourlySeries,
    load_forecast: HourlySeries,
) -> list[Sample]:
    """One sample per day, skipping day 0 (no previous-day PV history)."""
    n_days = building.pv_series.day_count()
    cos, sin = hour_encoding()
    samples = []
    for day in range(1, n_days):
        window = FeatureWindow(
            pv_hist=building.pv_series.day(day - 1),
            dni_fcst=dni_forecast.day(day),
            hour_cos=cos,
            hour_sin=sin,
        )
        samples.append(
            Sample(
                window=window,
                pv_actual=building.pv_series.day(day),
                load_forecast=load_forecast.day(day),
                load_actual=building.load_series.day(day),
                price_import=price_import.day(day),
                price_export=price_export.day(day),
                battery=building.battery,
                date=day,
            )
        )
    return samples


def chronological_split(samples: list[Sample], train_frac: float = TRAIN_FRAC):
    """Time-ordered split; every training date precedes every test date."""
    ordered = sorted(samples, key=lambda s: s.date)
    cut = int(np.floor(train_frac * len(ordered)))
    return ordered[:cut], ordered[cut:]


class Adam:
    """Standard adaptive-moment optimizer over a parameter dict."""

    def __init__(self, params: dict, learning_rate: float,
                 betas=(0.9, 0.999), eps=1e-8):
        self.lr = learning_rate
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict):
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for key, g in grads.items():
            self.m[key] = self.b1 * self.m[key] + (1 - self.b1) * g
            self.v[key] = self.b2 * self.v[key] + (1 - self.b2) * (g * g)
            params[key] -= self.lr * (self.m[key] / bc1) / (
                np.sqrt(self.v[key] / bc2) + self.eps
            )


def clip_gradients(grads: dict, max_norm: float = 1.0) -> float:
    """Global-norm clipping; returns the pre-clip norm."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if not np.isfinite(total):
        raise NonFiniteLoss("gradient norm became non-finite")
    if total > max_norm and total > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def _check_finite_loss(value: float, context: str):
    if not np.isfinite(value):
        raise NonFiniteLoss(f"{context}: loss became non-finite")


def _carve_holdout(train_samples, test_samples, config):
    """Optional validation split carved from the end of the training data."""
    if config.holdout_frac <= 0:
        return train_samples, test_samples
    cut = int(np.floor((1.0 - config.holdout_frac) * len(train_samples)))
    return train_samples[:cut], train_samples[cut:]


def train_mse(model: ForecastModel, train_samples, test_samples, config: TrainConfig):
    """Two-phase training on mean squared forecast error.

    Returns (model, history); the model carries the best-epoch weights.
    """
    start = time.perf_counter()
    train_samples, eval_samples = _carve_holdout(train_samples, test_samples, config)
    x_train = windows_matrix([s.window for s in train_samples])
    x_eval = windows_matrix([s.window for s in eval_samples])
    model.fit_normalization(x_train, np.stack([s.pv_actual for s in train_samples]))
    y_train = model.scale_targets(np.stack([s.pv_actual for s in train_samples]))
    y_eval = model.scale_targets(np.stack([s.pv_actual for s in eval_samples]))
    pv_eval = np.stack([s.pv_actual for s in eval_samples])

    rng = np.random.default_rng(derive_seed(config.seed, "mse-batches"))
    optimizer = Adam(model.params, model.hyper.learning_rate)
    batch = model.hyper.batch_size
    history = []
    best = {"epoch": -1, "metric": np.inf, "state": None}

    def evaluate(epoch, train_loss):
        pred = model.predict_batch(x_eval)
        test_mse = float(np.mean((pred / model.pv_scale - y_eval) ** 2))
        _check_finite_loss(test_mse, "mse evaluation")
        history.append(
            {"epoch": epoch, "train_mse": train_loss, "test_mse": test_mse,
             "test_s_rmse": s_rmse(pred, pv_eval)}
        )
        if test_mse < best["metric"]:
            best.update(epoch=epoch, metric=test_mse,
                        state=model.state_arrays())
        return test_mse

    evaluate(0, float("nan"))
    n = len(train_samples)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, batch):
            idx = order[lo : lo + batch]
            pred, cache = model.forward_batch(x_train[idx], training=True)
            err = pred - y_train[idx]
            loss = float(np.mean(err**2))
            _check_finite_loss(loss, f"mse epoch {epoch}")
            losses.append(loss)
            grads = model.backward_batch(cache, 2.0 * err / err.size)
            clip_gradients(grads)
            optimizer.step(model.params, grads)
        evaluate(epoch, float(np.mean(losses)))
        if epoch - best["epoch"] >= config.patience:
            break

    model.load_state_arrays(best["state"])
    return model, {
        "regime": "MSE",
        "epochs": history,
        "best_epoch": best["epoch"],
        "wall_clock_s": time.perf_counter() - start,
        "skipped_samples": 0,
    }


def _evaluation_regret(pred_kwh, sample: Sample, perfect_cost: float) -> float:
    """Pure-LP regret of a forecast in the load-forecast world."""
    schedule = solve_day(sample.forecast_instance(pred_kwh), SolveOptions())
    cost, _ = evaluate_fixed_schedule(
        DayInstance(
            pv=sample.pv_actual,
            load=sample.load_forecast,
            price_import=sample.price_import,
            price_export=sample.price_export,
            battery=sample.battery,
        ),
        schedule.p_ch,
        schedule.p_dis,
        relaxed_options(),
    )
    return cost - perfect_cost


def _training_perfect_costs(samples) -> np.ndarray:
    """Perfect-information costs in the load-forecast world (one LP per
    sample, constant across epochs)."""
    return np.array(
        [
            perfect_information_cost(
                s.pv_actual, s.load_forecast, s.price_import, s.price_export, s.battery
            )
            for s in samples
        ]
    )


def train_dfl(model: ForecastModel, train_samples, test_samples, config: TrainConfig):
    """Decision-focused training on scheduling regret.

    With regime DFL the model is trained from scratch (normalization
    fitted here); with DFL_WS the model must arrive pre-loaded from an
    MSE checkpoint and is fine-tuned as-is, so its epoch-0 predictions
    are exactly the checkpoint's.
    """
    start = time.perf_counter()
    train_samples, eval_samples = _carve_holdout(train_samples, test_samples, config)
    x_train = windows_matrix([s.window for s in train_samples])
    x_eval = windows_matrix([s.window for s in eval_samples])
    if config.regime == "DFL":
        model.fit_normalization(
            x_train, np.stack([s.pv_actual for s in train_samples])
        )
    pv_eval = np.stack([s.pv_actual for s in eval_samples])
    perfect_train = _training_perfect_costs(train_samples)
    perfect_eval = _training_perfect_costs(eval_samples)

    rng = np.random.default_rng(derive_seed(config.seed, "dfl-batches"))
    optimizer = Adam(model.params, model.hyper.learning_rate)
    batch = model.hyper.batch_size
    history = []
    best = {"epoch": -1, "metric": np.inf, "state": None}
    skipped_total = 0

    def evaluate(epoch, train_regret, skipped):
        pred = model.predict_batch(x_eval)
        regrets = [
            _evaluation_regret(pred[j], eval_samples[j], perfect_eval[j])
            for j in range(len(eval_samples))
        ]
        test_regret = float(np.mean(regrets))
        _check_finite_loss(test_regret, "regret evaluation")
        history.append(
            {"epoch": epoch, "train_regret": train_regret,
             "test_regret": test_regret, "test_s_rmse": s_rmse(pred, pv_eval),
             "skipped": skipped}
        )
        if test_regret < best["metric"]:
            best.update(epoch=epoch, metric=test_regret,
                        state=model.state_arrays())

    evaluate(0, float("nan"), 0)
    n = len(train_samples)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        epoch_regrets = []
        skipped = 0
        for lo in range(0, n, batch):
            idx = order[lo : lo + batch]
            pred_scaled, cache = model.forward_batch(x_train[idx], training=True)
            pred_kwh = pred_scaled * model.pv_scale
            upstream = np.zeros_like(pred_scaled)
            kept = 0
            for row, j in enumerate(idx):
                s = train_samples[j]
                try:
                    regret, grad_kwh = regret_and_gradient(
                        pred_kwh[row],
                        s.pv_actual,
                        s.load_forecast,
                        s.price_import,
                        s.price_export,
                        s.battery,
                        config.quad_reg_eps,
                        perfect_cost=perfect_train[j],
                    )
                except (SingularKkt, ScheduleInfeasible):
                    skipped += 1
                    continue
                epoch_regrets.append(regret)
                upstream[row] = grad_kwh * model.pv_scale
                kept += 1
            if kept == 0:
                continue
            grads = model.backward_batch(cache, upstream / kept)
            clip_gradients(grads)
            mean_regret = float(np.mean(epoch_regrets[-kept:]))
            _check_finite_loss(mean_regret, f"dfl epoch {epoch}")
            optimizer.step(model.params, grads)
        skipped_total += skipped
        evaluate(epoch, float(np.mean(epoch_regrets)) if epoch_regrets else float("nan"),
                 skipped)
        if epoch - best["epoch"] >= config.patience:
            break

    model.load_state_arrays(best["state"])
    return model, {
        "regime": config.regime,
        "epochs": history,
        "best_epoch": best["epoch"],
        "wall_clock_s": time.perf_counter() - start,
        "skipped_samples": skipped_total,
    }


# ---------------------------------------------------------------------------
# per-building experiment


MODELS_WITH_FORECASTS = ("Naive", "LSTM", "DFL", "DFL-WS")


def evaluate_building(
    test_samples, forecasts: dict, relaxation_events: list | None = None
) -> dict:
    """Test-split evaluation of all model rows for one building.

    ``forecasts`` maps model name -> (n_test, 24) PV forecasts. Realized
    costs re-price each frozen schedule on actual PV and actual load.
    Returns per-model BuildingEval plus raw schedules for the profile
    plots and squared hourly forecast errors for significance tests.
    """
    n = len(test_samples)
    pv_actual = np.stack([s.pv_actual for s in test_samples])
    perfect_costs = np.empty(n)
    noopt_costs = np.empty(n)
    results = {}
    schedules = {}
    sqerr = {}

    perfect_fc = pv_actual.copy()
    all_fc = dict(forecasts)
    all_fc["Perfect"] = perfect_fc

    daily = {name: np.empty(n) for name in all_fc}
    charge = {name: np.empty((n, 24)) for name in all_fc}
    discharge = {name: np.empty((n, 24)) for name in all_fc}

    for j, sample in enumerate(test_samples):
        actual = sample.actual_instance()
        perfect_costs[j] = solve_day(actual).cost
        noopt_costs[j] = no_opt_cost(actual)
        for name, fc in all_fc.items():
            schedule = solve_day(sample.forecast_instance(fc[j]))
            try:
                cost, _ = evaluate_fixed_schedule(
                    actual, schedule.p_ch, schedule.p_dis, relaxed_options()
                )
            except ScheduleInfeasible as exc:
                if relaxation_events is not None:
                    relaxation_events.append((sample.date, name, str(exc)))
                cost = no_opt_cost(actual)
            daily[name][j] = cost
            charge[name][j] = schedule.p_ch
            discharge[name][j] = schedule.p_dis

    perfect_total = float(perfect_costs.sum())
    noopt_total = float(noopt_costs.sum())
    for name, fc in all_fc.items():
        total = float(daily[name].sum())
        results[name] = BuildingEval(
            s_rmse=s_rmse(fc, pv_actual),
            real_cost=total,
            relative_cost=relative_cost(total, perfect_total, noopt_total),
            daily_costs=daily[name],
            daily_regrets=daily[name] - perfect_costs,
        )
        schedules[name] = (charge[name], discharge[name])
        sqerr[name] = (fc - pv_actual) ** 2
    results["No-opt"] = BuildingEval(
        s_rmse=float("nan"),
        real_cost=noopt_total,
        relative_cost=relative_cost(noopt_total, perfect_total, noopt_total),
        daily_costs=noopt_costs,
        daily_regrets=noopt_costs - perfect_costs,
    )
    return {
        "models": results,
        "schedules": schedules,
        "sqerr": sqerr,
        "perfect_daily": perfect_costs,
        "dates": np.array([s.date for s in test_samples]),
        "pv_actual": pv_actual,
        "forecasts": all_fc,
    }


REGIME_TO_MODEL = {"MSE": "LSTM", "DFL": "DFL", "DFL_WS": "DFL-WS"}


def derive_load_forecast(building: Building, dataset_seed: int, level: int) -> HourlySeries:
    """The degraded load forecast for one building at one noise level."""
    spec = noise_level_to_spec(
        level,
        replace(LOAD_NOISE, seed=derive_seed(dataset_seed, "load-fcst", building.id)),
    )
    return apply_forecast_noise(building.load_series, spec)


def train_building(
    building: Building,
    dni_forecast: HourlySeries,
    price_import: HourlySeries,
    price_export: HourlySeries,
    load_forecast: HourlySeries,
    global_seed: int,
    max_epochs: int = 300,
    patience: int = 20,
    quad_reg_eps: float = 1e-3,
    hyper: LstmHyper | None = None,
    regimes=("MSE", "DFL", "DFL_WS"),
    mse_init_state: dict | None = None,
) -> dict:
    """Train the requested regimes for one building.

    Returns a picklable dict of checkpoint arrays, histories and timing
    so buildings can run in parallel worker processes.
    """
    hyper = hyper or LstmHyper()
    samples = build_samples(building, dni_forecast, price_import, price_export,
                            load_forecast)
    train_samples, test_samples = chronological_split(samples)

    out = {"building": building.id, "histories": {}, "checkpoints": {}, "timing": []}

    def make_model(tag):
        return ForecastModel(
            hyper, rng_seed=derive_seed(global_seed, "init", building.id, tag),
            dtype=np.float32,
        )

    def record(regime, model, hist):
        out["histories"][regime] = hist
        out["checkpoints"][regime] = {"arrays": model.state_arrays(),
                                      "pv_scale": model.pv_scale}
        out["timing"].append((building.id, regime, hist["wall_clock_s"],
                              len(hist["epochs"]) - 1, hist["best_epoch"]))

    for regime in regimes:
        config = TrainConfig(regime=regime, max_epochs=max_epochs, patience=patience,
                             seed=derive_seed(global_seed, "train", building.id, regime),
                             quad_reg_eps=quad_reg_eps, hyper=hyper)
        model = make_model(regime.lower())
        if regime == "MSE":
            model, hist = train_mse(model, train_samples, test_samples, config)
        elif regime == "DFL":
            model, hist = train_dfl(model, train_samples, test_samples, config)
        elif regime == "DFL_WS":
            source = out["checkpoints"].get("MSE") or mse_init_state
            if source is None:
                raise InvalidSpec("DFL_WS requires an MSE checkpoint to warm-start from")
            model.load_state_arrays(source["arrays"])
            model.pv_scale = source["pv_scale"]
            model, hist = train_dfl(model, train_samples, test_samples, config)
        record(regime, model, hist)
    return out


def eval_building(
    building: Building,
    dni_forecast: HourlySeries,
    price_import: HourlySeries,
    price_export: HourlySeries,
    load_forecast: HourlySeries,
    checkpoints: dict,
    hyper: LstmHyper | None = None,
) -> dict:
    """Test-split evaluation of the naive row plus every checkpointed model."""
    hyper = hyper or LstmHyper()
    samples = build_samples(building, dni_forecast, price_import, price_export,
                            load_forecast)
    _, test_samples = chronological_split(samples)
    x_test = windows_matrix([s.window for s in test_samples])
    forecasts = {"Naive": np.stack([naive_forecast(s.window.pv_hist)
                                    for s in test_samples])}
    for regime, state in checkpoints.items():
        model = ForecastModel(hyper, rng_seed=0, dtype=np.float32)
        model.load_state_arrays(state["arrays"])
        model.pv_scale = state["pv_scale"]
        forecasts[REGIME_TO_MODEL[regime]] = model.predict_batch(x_test)
    relaxation_events: list = []
    evaluation = evaluate_building(test_samples, forecasts, relaxation_events)
    return {"building": building.id, "evaluation": evaluation,
            "relaxation_events": relaxation_events}


def full_building_run(
    building: Building,
    dni_forecast: HourlySeries,
    price_import: HourlySeries,
    price_export: HourlySeries,
    noise_level: int,
    dataset_seed: int,
    global_seed: int,
    regimes=("MSE", "DFL", "DFL_WS"),
    **train_kwargs,
) -> dict:
    """Train-then-evaluate worker used by run_experiment."""
    load_fc = derive_load_forecast(building, dataset_seed, noise_level)
    out = train_building(
        building, dni_forecast, price_import, price_export, load_fc,
        global_seed=global_seed, regimes=regimes, **train_kwargs,
    )
    hyper = train_kwargs.get("hyper") or LstmHyper()
    evald = eval_building(
        building, dni_forecast, price_import, price_export, load_fc,
        out["checkpoints"], hyper=hyper,
    )
    out.update(evaluation=evald["evaluation"],
               relaxation_events=evald["relaxation_events"])
    return out


def _profile_stats(values_by_day: np.ndarray) -> dict:
    return {
        "mean": values_by_day.mean(axis=0),
        "p10": np.percentile(values_by_day, 10, axis=0),
        "p25": np.percentile(values_by_day, 25, axis=0),
        "p75": np.percentile(values_by_day, 75, axis=0),
        "p90": np.percentile(values_by_day, 90, axis=0),
    }


def assemble_report(per_building_results: list) -> EvalReport:
    """Merge per-building artifacts into the full report."""
    per_building = {}
    cost_series = {}
    error_series = {}
    fc_pool = {}
    sched_pool = {}
    timing_rows = []
    for result in sorted(per_building_results, key=lambda r: r["building"]):
        bid = result["building"]
        ev = result["evaluation"]
        per_building[bid] = ev["models"]
        cost_series[bid] = {m: ev["models"][m].daily_costs for m in ev["models"]}
        error_series[bid] = {m: ev["sqerr"][m].ravel() for m in ev["sqerr"]}
        seasons = season_of_day(ev["dates"])
        for name, fc in ev["forecasts"].items():
            for season in np.unique(seasons):
                sel = seasons == season
                fc_pool.setdefault(season, {}).setdefault(name, []).append(fc[sel])
        fc_pool_actual_key = "Actual"
        for season in np.unique(seasons):
            sel = seasons == season
            fc_pool.setdefault(season, {}).setdefault(fc_pool_actual_key, []).append(
                ev["pv_actual"][sel]
            )
        for name, (charge, discharge) in ev["schedules"].items():
            for season in np.unique(seasons):
                sel = seasons == season
                sched_pool.setdefault(season, {}).setdefault(name, []).append(
                    (charge[sel], discharge[sel])
                )
        for row in result["timing"]:
            timing_rows.append(list(row))

    report = EvalReport(per_building=per_building, pooled=pool_report(per_building))
    comparisons = [("LSTM", "DFL"), ("LSTM", "DFL-WS")]
    if len(per_building) >= 2:
        for pair in comparisons:
            if all(pair[k] in next(iter(per_building.values())) for k in (0, 1)):
                report.dm_cost.append(pooled_dm(cost_series, pair))
                report.dm_error.append(pooled_dm(error_series, pair))
    for season, models in fc_pool.items():
        report.forecast_profiles[season] = {
            name: _profile_stats(np.concatenate(chunks, axis=0))
            for name, chunks in models.items()
        }
    for season, models in sched_pool.items():
        report.battery_profiles[season] = {}
        for name, chunks in models.items():
            charge = np.concatenate([c for c, _ in chunks], axis=0)
            discharge = np.concatenate([d for _, d in chunks], axis=0)
            report.battery_profiles[season][name] = {
                "charge": charge.mean(axis=0),
                "discharge": discharge.mean(axis=0),
            }
    report.timing_rows = timing_rows
    return report


def sweep_building(
    building: Building,
    dni_forecast: HourlySeries,
    price_import: HourlySeries,
    price_export: HourlySeries,
    levels,
    dataset_seed: int,
    global_seed: int,
    base_checkpoints: dict,
    base_level: int = 2,
    models=("Naive", "LSTM", "DFL-WS"),
    max_epochs: int = 300,
    patience: int = 20,
    quad_reg_eps: float = 1e-3,
    hyper: LstmHyper | None = None,
) -> dict:
    """Load-noise sweep for one building.

    The two-phase models do not depend on the load forecast for their PV
    predictions, so Naive/LSTM are only re-evaluated per level; the
    decision-focused models retrain per level (warm-started from the base
    MSE checkpoint). Base-level checkpoints are reused untouched.
    """
    hyper = hyper or LstmHyper()
    out = {"building": building.id, "per_level": {}, "histories": {}}
    for level in levels:
        load_fc = derive_load_forecast(building, dataset_seed, level)
        checkpoints = {}
        if "LSTM" in models and "MSE" in base_checkpoints:
            checkpoints["MSE"] = base_checkpoints["MSE"]
        for regime in ("DFL", "DFL_WS"):
            model_name = REGIME_TO_MODEL[regime]
            if model_name not in models:
                continue
            if level == base_level and regime in base_checkpoints:
                checkpoints[regime] = base_checkpoints[regime]
                continue
            seed = derive_seed(global_seed, "sweep", building.id, regime, level)
            config = TrainConfig(regime=regime, max_epochs=max_epochs,
                                 patience=patience, seed=seed,
                                 quad_reg_eps=quad_reg_eps, hyper=hyper)
            samples = build_samples(building, dni_forecast, price_import,
                                    price_export, load_fc)
            train_samples, test_samples = chronological_split(samples)
            model = ForecastModel(hyper, rng_seed=derive_seed(
                global_seed, "sweep-init", building.id, regime, level),
                dtype=np.float32)
            if regime == "DFL_WS":
                model.load_state_arrays(base_checkpoints["MSE"]["arrays"])
                model.pv_scale = base_checkpoints["MSE"]["pv_scale"]
            model, hist = train_dfl(model, train_samples, test_samples, config)
            checkpoints[regime] = {"arrays": model.state_arrays(),
                                   "pv_scale": model.pv_scale}
            out["histories"][(level, regime)] = hist
        evald = eval_building(building, dni_forecast, price_import, price_export,
                              load_fc, checkpoints, hyper=hyper)
        entry = {}
        for name, ev in evald["evaluation"]["models"].items():
            entry[name] = {"s_rmse": ev.s_rmse, "real_cost": ev.real_cost}
        out["per_level"][level] = entry
    return out


def _sweep_worker(args):
    return sweep_building(**args)


def run_sweep(
    buildings: list,
    dni_forecast: HourlySeries,
    price_import: HourlySeries,
    price_export: HourlySeries,
    levels,
    dataset_seed: int,
    global_seed: int,
    base_checkpoints_by_building: dict,
    jobs: int = 1,
    models=("Naive", "LSTM", "DFL-WS"),
    **sweep_kwargs,
) -> tuple[list, list]:
    """Sweep over load-noise levels; returns (sweep_rows, raw results).

    Rows are (level, beta, model, mean S-RMSE, scaled cost) with costs
    scaled so the perfect forecast sits at 1.0; the no-battery line is
    included per level.
    """
    from .datagen import BETA_PER_LEVEL

    tasks = [
        dict(
            building=b,
            dni_forecast=dni_forecast,
            price_import=price_import,
            price_export=price_export,
            levels=list(levels),
            dataset_seed=dataset_seed,
            global_seed=global_seed,
            base_checkpoints=base_checkpoints_by_building[b.id],
            models=models,
            **sweep_kwargs,
        )
        for b in buildings
    ]
    if jobs > 1 and len(tasks) > 1:
        import multiprocessing as mp

        with mp.get_context("spawn").Pool(min(jobs, len(tasks))) as pool:
            results = pool.map(_sweep_worker, tasks)
    else:
        results = [_sweep_worker(t) for t in tasks]
    results = sorted(results, key=lambda r: r["building"])

    rows = []
    for level in levels:
        beta = 0.0 if level == 0 else BETA_PER_LEVEL * level
        names = list(results[0]["per_level"][level].keys())
        mean_perfect = np.mean(
            [r["per_level"][level]["Perfect"]["real_cost"] for r in results]
        )
        for name in names:
            costs = [r["per_level"][level][name]["real_cost"] for r in results]
            rmses = [
                r["per_level"][level][name]["s_rmse"]
                for r in results
                if not np.isnan(r["per_level"][level][name]["s_rmse"])
            ]
            rows.append([
                level,
                repr(float(beta)),
                name,
                repr(float(np.mean(rmses))) if rmses else "nan",
                repr(float(np.mean(costs) / mean_perfect)),
            ])
    return rows, results


def _worker(args):
    return full_building_run(**args)


def run_experiment(
    buildings: list,
    dni_forecast: HourlySeries,
    price_import: HourlySeries,
    price_export: HourlySeries,
    global_seed: int,
    dataset_seed: int | None = None,
    noise_level: int = 2,
    jobs: int = 1,
    **train_kwargs,
) -> tuple[EvalReport, list]:
    """Train and evaluate the four models on every building.

    Buildings run in parallel worker processes when jobs > 1; the merge
    is ordered by building id, so results do not depend on completion
    order. Returns (report, raw per-building results).
    """
    tasks = [
        dict(
            building=b,
            dni_forecast=dni_forecast,
            price_import=price_import,
            price_export=price_export,
            noise_level=noise_level,
            dataset_seed=dataset_seed if dataset_seed is not None else global_seed,
            global_seed=global_seed,
            **train_kwargs,
        )
        for b in buildings
    ]
    if jobs > 1 and len(tasks) > 1:
        import multiprocessing as mp

        with mp.get_context("spawn").Pool(min(jobs, len(tasks))) as pool:
            results = pool.map(_worker, tasks)
    else:
        results = [_worker(t) for t in tasks]
    return assemble_report(results), results
