"""Command-line pipeline: gen, train, eval, sweep, report, bench.

Every command writes a JSON manifest with its arguments, derived seeds
and input-file hashes, so runs are reproducible bit for bit. Building
level work runs in a process pool (``--jobs``) and results merge in
building-id order regardless of completion order.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import traceback
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import backend_name
from .datagen import (
    DNI_NOISE,
    TariffConfig,
    apply_forecast_noise,
    generate_tariff,
    load_buildings,
    synth_household,
    synth_weather,
)
from .domain import HourlySeries, Unit, write_building_csv
from .errors import ConfigInvalid, MissingCheckpoint, PvbdflError
from .eval import EvalReport, emit_report
from .forecast import ForecastModel, LstmHyper
from .seeding import derive_seed
from .train import (
    REGIME_TO_MODEL,
    assemble_report,
    derive_load_forecast,
    eval_building,
    run_sweep,
    train_building,
)

_DEF_LEVEL = 2


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _write_two_column_csv(path, header, start_hour, a, b):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, (va, vb) in enumerate(zip(a, b)):
            writer.writerow([start_hour + i, repr(float(va)), repr(float(vb))])


def _read_two_column_csv(path, expected_header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != expected_header:
            raise ConfigInvalid(f"{path}: expected header {expected_header}")
        rows = [(int(r[0]), float(r[1]), float(r[2])) for r in reader]
    start = rows[0][0]
    return start, np.array([r[1] for r in rows]), np.array([r[2] for r in rows])


WEATHER_HEADER = ["hour", "dni_actual_w_m2", "dni_forecast_w_m2"]
TARIFF_HEADER = ["hour", "price_import_eur_kwh", "price_export_eur_kwh"]
LOAD_FC_HEADER = ["hour", "load_forecast_kwh"]


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    if args.buildings <= 0:
        raise ConfigInvalid("--buildings must be positive")
    if args.years <= 0:
        raise ConfigInvalid("--years must be positive")
    out = Path(args.out)
    (out / "buildings").mkdir(parents=True, exist_ok=True)
    (out / "battery").mkdir(exist_ok=True)
    level_dir = out / "load_forecasts" / f"level{args.noise_level}"
    level_dir.mkdir(parents=True, exist_ok=True)

    seed = args.seed
    weather = synth_weather(derive_seed(seed, "weather-root"), args.years)
    dni_fc = apply_forecast_noise(
        weather.dni_actual, replace(DNI_NOISE, seed=derive_seed(seed, "dni-fcst"))
    )
    _write_two_column_csv(out / "weather.csv", WEATHER_HEADER, 0,
                          weather.dni_actual.values, dni_fc.values)

    tariff_cfg = TariffConfig(
        base_level=args.tariff_base,
        daily_amplitude=args.tariff_daily_amp,
        weekly_amplitude=args.tariff_weekly_amp,
        trend_per_year=args.tariff_trend,
        noise_std=args.tariff_noise,
        offtake_tax=args.tariff_tax,
        export_discount_frac=args.tariff_export_discount,
        seed=derive_seed(seed, "tariff") % (2**31),
    )
    price_import, price_export = generate_tariff(tariff_cfg, args.years * 8760)
    _write_two_column_csv(out / "tariff.csv", TARIFF_HEADER, 0,
                          price_import.values, price_export.values)

    building_ids = []
    for i in range(1, args.buildings + 1):
        building = synth_household(
            derive_seed(seed, "household", i), args.years,
            weather=weather, building_id=f"b{i:03d}",
        )
        write_building_csv(out / "buildings" / f"{building.id}.csv",
                           building.load_series, building.pv_series)
        (out / "battery" / f"{building.id}.json").write_text(
            building.battery.to_json() + "\n"
        )
        load_fc = derive_load_forecast(building, seed, args.noise_level)
        with open(level_dir / f"{building.id}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(LOAD_FC_HEADER)
            for h, v in enumerate(load_fc.values):
                writer.writerow([h, repr(float(v))])
        building_ids.append(building.id)

    files = {
        str(p.relative_to(out)): _sha256(p)
        for p in sorted(out.rglob("*"))
        if p.is_file() and p.name != "manifest.json"
    }
    _write_manifest(out / "manifest.json", {
        "command": "gen",
        "package_version": __version__,
        "seed": seed,
        "buildings": building_ids,
        "years": args.years,
        "noise_level": args.noise_level,
        "tariff": {k: v for k, v in tariff_cfg.__dict__.items()},
        "files": files,
    })
    print(f"wrote {len(building_ids)} buildings to {out}")
    return 0


# ---------------------------------------------------------------------------
# shared dataset loading


def _load_dataset(data_dir: Path):
    manifest = json.loads((data_dir / "manifest.json").read_text())
    buildings = load_buildings(data_dir / "buildings")
    start, dni_act, dni_fc = _read_two_column_csv(data_dir / "weather.csv",
                                                  WEATHER_HEADER)
    dni_forecast = HourlySeries(start, dni_fc, Unit.W_PER_M2)
    start, imp, exp = _read_two_column_csv(data_dir / "tariff.csv", TARIFF_HEADER)
    price_import = HourlySeries(start, imp, Unit.EUR_PER_KWH)
    price_export = HourlySeries(start, exp, Unit.EUR_PER_KWH)
    return manifest, buildings, dni_forecast, price_import, price_export


def _select_buildings(buildings, spec_str):
    if not spec_str:
        return buildings
    wanted = set(spec_str.split(","))
    chosen = [b for b in buildings if b.id in wanted]
    missing = wanted - {b.id for b in chosen}
    if missing:
        raise ConfigInvalid(f"unknown building id(s): {sorted(missing)}")
    return chosen


def _hyper_from_args(args) -> LstmHyper:
    return LstmHyper(
        layers=args.layers,
        hidden_size=args.hidden,
        dropout_frac=args.dropout,
        learning_rate=args.lr,
        batch_size=args.batch,
    )


def _pool_map(worker, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        import multiprocessing as mp

        with mp.get_context("spawn").Pool(min(jobs, len(tasks))) as pool:
            return pool.map(worker, tasks)
    return [worker(t) for t in tasks]


def _guarded_train_worker(task):
    try:
        return train_building(**task)
    except Exception:
        return {"building": task["building"].id, "error": traceback.format_exc()}


def _guarded_eval_worker(task):
    try:
        return eval_building(**task)
    except Exception:
        return {"building": task["building"].id, "error": traceback.format_exc()}


def _split_failures(results):
    done = [r for r in results if "error" not in r]
    failed = [r for r in results if "error" in r]
    for f in failed:
        print(f"[{f['building']}] failed:\n{f['error']}", file=sys.stderr)
    return done, failed


_REGIME_FLAGS = {"mse": "MSE", "dfl": "DFL", "dfl-ws": "DFL_WS"}


def _checkpoint_path(run_dir: Path, building_id: str, regime: str) -> Path:
    return run_dir / "checkpoints" / building_id / f"{regime.lower()}.npz"


def _save_checkpoint(run_dir, building_id, regime, state, hyper, seed):
    model = ForecastModel(hyper, rng_seed=seed, dtype=np.float32)
    model.load_state_arrays(state["arrays"])
    model.pv_scale = state["pv_scale"]
    path = _checkpoint_path(run_dir, building_id, regime)
    path.parent.mkdir(parents=True, exist_ok=True)
    model.save(path)


def _load_checkpoint_state(path: Path) -> dict:
    model = ForecastModel.load(path)
    return {"arrays": model.state_arrays(), "pv_scale": model.pv_scale,
            "hyper": model.hyper}


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    data_dir = Path(args.data)
    run_dir = Path(args.run)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest, buildings, dni_forecast, price_import, price_export = _load_dataset(data_dir)
    buildings = _select_buildings(buildings, args.buildings)
    dataset_seed = manifest["seed"]

    regimes = []
    for flag in args.regimes.split(","):
        flag = flag.strip().lower()
        if flag not in _REGIME_FLAGS:
            raise ConfigInvalid(f"unknown regime '{flag}'")
        regimes.append(_REGIME_FLAGS[flag])
    if "DFL_WS" in regimes and "MSE" not in regimes and not args.init:
        raise ConfigInvalid("dfl-ws needs --init <run dir with mse checkpoints> "
                            "unless mse trains in the same invocation")

    hyper = _hyper_from_args(args)
    tasks = []
    for building in buildings:
        mse_init_state = None
        if args.init and "MSE" not in regimes:
            init_path = Path(args.init)
            ckpt = (init_path if init_path.suffix == ".npz"
                    else _checkpoint_path(init_path, building.id, "MSE"))
            if not ckpt.exists():
                raise MissingCheckpoint(f"no MSE checkpoint at {ckpt}")
            mse_init_state = _load_checkpoint_state(ckpt)
        tasks.append(dict(
            building=building,
            dni_forecast=dni_forecast,
            price_import=price_import,
            price_export=price_export,
            load_forecast=derive_load_forecast(building, dataset_seed,
                                               args.noise_level),
            global_seed=args.seed,
            max_epochs=args.max_epochs,
            patience=args.patience,
            quad_reg_eps=args.eps,
            hyper=hyper,
            regimes=tuple(regimes),
            mse_init_state=mse_init_state,
        ))
    results = _pool_map(_guarded_train_worker, tasks, args.jobs)
    done, failed = _split_failures(results)

    timing_rows = []
    for result in sorted(done, key=lambda r: r["building"]):
        bid = result["building"]
        for regime, state in result["checkpoints"].items():
            _save_checkpoint(run_dir, bid, regime, state, hyper, args.seed)
        hist_dir = run_dir / "history" / bid
        hist_dir.mkdir(parents=True, exist_ok=True)
        for regime, hist in result["histories"].items():
            with open(hist_dir / f"{regime.lower()}.json", "w") as fh:
                json.dump(hist, fh, indent=2, default=float)
        timing_rows.extend(result["timing"])

    _write_manifest(run_dir / "manifest_train.json", {
        "command": "train",
        "package_version": __version__,
        "backend": backend_name(),
        "data_dir": str(data_dir),
        "dataset_seed": dataset_seed,
        "seed": args.seed,
        "noise_level": args.noise_level,
        "regimes": regimes,
        "hyper": hyper.__dict__,
        "max_epochs": args.max_epochs,
        "patience": args.patience,
        "quad_reg_eps": args.eps,
        "buildings": [b.id for b in buildings],
        "failed_buildings": [f["building"] for f in failed],
        "input_hashes": {
            "weather.csv": _sha256(data_dir / "weather.csv"),
            "tariff.csv": _sha256(data_dir / "tariff.csv"),
        },
        "timing": [
            {"building": b, "regime": r, "wall_clock_s": w, "epochs_run": e,
             "best_epoch": be}
            for b, r, w, e, be in timing_rows
        ],
    })
    print(f"trained {len(done)}/{len(results)} buildings into {run_dir}")
    return 0 if not failed else 1


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    data_dir = Path(args.data)
    run_dir = Path(args.run)
    out_dir = Path(args.out) if args.out else run_dir / "eval"
    manifest, buildings, dni_forecast, price_import, price_export = _load_dataset(data_dir)
    buildings = _select_buildings(buildings, args.buildings)
    train_manifest_path = run_dir / "manifest_train.json"
    train_manifest = (json.loads(train_manifest_path.read_text())
                      if train_manifest_path.exists() else {})
    noise_level = args.noise_level
    if noise_level is None:
        noise_level = train_manifest.get("noise_level", _DEF_LEVEL)
    dataset_seed = manifest["seed"]

    tasks = []
    hyper = None
    for building in buildings:
        checkpoints = {}
        for regime in ("MSE", "DFL", "DFL_WS"):
            path = _checkpoint_path(run_dir, building.id, regime)
            if path.exists():
                state = _load_checkpoint_state(path)
                hyper = state.pop("hyper")
                checkpoints[regime] = state
        if not checkpoints:
            raise MissingCheckpoint(
                f"no checkpoints for building {building.id} under {run_dir}"
            )
        tasks.append(dict(
            building=building,
            dni_forecast=dni_forecast,
            price_import=price_import,
            price_export=price_export,
            load_forecast=derive_load_forecast(building, dataset_seed, noise_level),
            checkpoints=checkpoints,
            hyper=hyper,
        ))
    results = _pool_map(_guarded_eval_worker, tasks, args.jobs)
    done, failed = _split_failures(results)
    if not done:
        return 1

    report = assemble_report(done)
    report.timing_rows = [
        [t["building"], t["regime"], t["wall_clock_s"], t["epochs_run"],
         t["best_epoch"]]
        for t in train_manifest.get("timing", [])
    ]
    files = emit_report(report, out_dir)
    relaxation_events = sum(len(r.get("relaxation_events", [])) for r in done)
    _write_manifest(out_dir / "manifest_eval.json", {
        "command": "eval",
        "package_version": __version__,
        "backend": backend_name(),
        "data_dir": str(data_dir),
        "run_dir": str(run_dir),
        "noise_level": noise_level,
        "buildings": [b.id for b in buildings],
        "failed_buildings": [f["building"] for f in failed],
        "schedule_infeasible_events": relaxation_events,
        "files": [str(f) for f in files],
    })
    print(f"evaluation written to {out_dir} "
          f"({relaxation_events} relaxed-window violations)")
    return 0 if not failed else 1


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(args) -> int:
    data_dir = Path(args.data)
    run_dir = Path(args.run)
    out_dir = Path(args.out) if args.out else run_dir / "sweep"
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest, buildings, dni_forecast, price_import, price_export = _load_dataset(data_dir)
    buildings = _select_buildings(buildings, args.buildings)
    dataset_seed = manifest["seed"]
    train_manifest = json.loads((run_dir / "manifest_train.json").read_text())
    hyper = LstmHyper(**train_manifest["hyper"])

    levels = [int(x) for x in args.levels.split(",")]
    model_names = []
    for flag in args.models.split(","):
        flag = flag.strip().lower()
        name = {"naive": "Naive", "lstm": "LSTM", "dfl": "DFL",
                "dfl-ws": "DFL-WS"}.get(flag)
        if name is None:
            raise ConfigInvalid(f"unknown model '{flag}'")
        model_names.append(name)

    base_checkpoints = {}
    for building in buildings:
        states = {}
        for regime in ("MSE", "DFL", "DFL_WS"):
            path = _checkpoint_path(run_dir, building.id, regime)
            if path.exists():
                state = _load_checkpoint_state(path)
                state.pop("hyper")
                states[regime] = state
        if "MSE" not in states and ("LSTM" in model_names or "DFL-WS" in model_names):
            raise MissingCheckpoint(f"sweep needs an MSE checkpoint for {building.id}")
        base_checkpoints[building.id] = states

    rows, _ = run_sweep(
        buildings, dni_forecast, price_import, price_export, levels,
        dataset_seed=dataset_seed,
        global_seed=train_manifest["seed"],
        base_checkpoints_by_building=base_checkpoints,
        jobs=args.jobs,
        models=tuple(model_names),
        base_level=train_manifest.get("noise_level", _DEF_LEVEL),
        max_epochs=train_manifest["max_epochs"],
        patience=train_manifest["patience"],
        quad_reg_eps=train_manifest["quad_reg_eps"],
        hyper=hyper,
    )
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "beta", "model", "s_rmse_pct", "scaled_cost"])
        writer.writerows(rows)
    _write_manifest(out_dir / "manifest_sweep.json", {
        "command": "sweep",
        "package_version": __version__,
        "backend": backend_name(),
        "levels": levels,
        "models": model_names,
        "buildings": [b.id for b in buildings],
        "seed": train_manifest["seed"],
        "dataset_seed": dataset_seed,
    })
    print(f"sweep written to {out_dir / 'sweep.csv'}")
    return 0


# ---------------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    table = run_dir / "eval" / "results_table.csv"
    if not table.exists():
        print(f"no evaluation results under {run_dir}", file=sys.stderr)
        return 1
    with open(table) as fh:
        rows = list(csv.reader(fh))
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    for row in rows:
        print("  ".join(str(v)[:12].ljust(min(w, 12)) for v, w in zip(row, widths)))
    for name in ("dm_cost.csv", "dm_error.csv", "sweep.csv"):
        for candidate in (run_dir / "eval" / name, run_dir / "sweep" / name):
            if candidate.exists():
                print(f"\n{name}:")
                print(candidate.read_text().strip())
                break
    return 0


# ---------------------------------------------------------------------------
# bench


def cmd_bench(args) -> int:
    from .bench import run_benchmark

    rows = run_benchmark(args.instances, seed=args.seed)
    header = f"{'backend':8s} {'case':12s} {'ms/solve':>10s} {'iters':>6s}"
    print(header)
    for row in rows:
        print(f"{row['backend']:8s} {row['case']:12s} {row['ms_per_solve']:10.3f} "
              f"{row['mean_iterations']:6.1f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
        print(f"written to {args.out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvbdfl",
        description="Decision-focused PV forecasting for battery scheduling",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--buildings", type=int, default=5)
    p.add_argument("--years", type=int, default=3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--noise-level", type=int, default=_DEF_LEVEL)
    p.add_argument("--tariff-base", type=float, default=0.16)
    p.add_argument("--tariff-daily-amp", type=float, default=0.05)
    p.add_argument("--tariff-weekly-amp", type=float, default=0.01)
    p.add_argument("--tariff-trend", type=float, default=0.05)
    p.add_argument("--tariff-noise", type=float, default=0.03)
    p.add_argument("--tariff-tax", type=float, default=0.13)
    p.add_argument("--tariff-export-discount", type=float, default=0.90)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train forecasting models")
    p.add_argument("--data", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--regimes", default="mse,dfl,dfl-ws")
    p.add_argument("--buildings", default="")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--noise-level", type=int, default=_DEF_LEVEL)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--max-epochs", type=int, default=300)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--init", default="",
                   help="run dir (or .npz) with MSE checkpoints for dfl-ws")
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--hidden", type=int, default=200)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=32)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate trained models")
    p.add_argument("--data", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--out", default="")
    p.add_argument("--buildings", default="")
    p.add_argument("--noise-level", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="load-noise sweep")
    p.add_argument("--data", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--out", default="")
    p.add_argument("--buildings", default="")
    p.add_argument("--levels", default="0,1,2,3,4,5,6")
    p.add_argument("--models", default="naive,lstm,dfl-ws")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="print a summary of a finished run")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("bench", help="compare solver backends")
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PvbdflError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
