"""Command-line front end: ``forecastnet <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import secrets
import sys
from pathlib import Path

import numpy as np

from .checkpoint import FormatError, load_model
from .data import IngestionError, ScalingError, load_csv, save_csv
from .metrics import MetricError, evaluate_forecasts, write_json
from .model import SpecError, forward_predict
from .synth import SynthConfig, generate
from .tensor import DimensionError
from .trainer import LR_GRID, SearchError, TrainConfig

MODELS = ("fn", "cfn", "fn2", "cfn2", "mlp")
EXPERIMENTS = ("vanishing-gradient", "time-variance", "timing", "table3")


class UsageError(Exception):
    pass


def _seed(text: str) -> int | str:
    if text == "random":
        return "random"
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer or 'random', got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("seed must be non-negative")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="forecastnet", description="Interleaved-output forecasting networks.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    g = sub.add_parser("gen-data", help="write a synthetic series as CSV (+ JSON sidecar)")
    g.add_argument("--variant", choices=("baseline", "modulated"), default="baseline")
    g.add_argument("--length", type=_positive_int, default=4320)
    g.add_argument("--out", type=Path, required=True)

    t = sub.add_parser("train", help="search learning rates, train, and score one model")
    t.add_argument("--data", type=Path, required=True)
    t.add_argument("--tau", type=_positive_int, help="seasonal period (defaults to the sidecar's tau)")
    t.add_argument("--model", choices=MODELS, required=True)
    t.add_argument("--seed", type=_seed, default=0)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--max-epochs", type=int, default=1000)
    t.add_argument("--lr", type=float, action="append", help="restrict the search grid (repeatable)")

    e = sub.add_parser("evaluate", help="score a checkpoint on the test segment of a series")
    e.add_argument("--model-file", type=Path, required=True)
    e.add_argument("--data", type=Path, required=True)
    e.add_argument("--mode", choices=("mean", "sample"), default="mean")
    e.add_argument("--seed", type=_seed, default=0)
    e.add_argument("--out", type=Path, help="write metrics JSON here")

    f = sub.add_parser("forecast", help="forecast tau steps from the last 2*tau values of a CSV")
    f.add_argument("--model-file", type=Path, required=True)
    f.add_argument("--input-csv", type=Path, required=True)
    f.add_argument("--mode", choices=("mean", "sample"), default="mean")
    f.add_argument("--seed", type=_seed, default=0)

    c = sub.add_parser("gradcheck", help="finite-difference and analytic gradient suites")
    c.add_argument("--depth", type=int, help="single chain depth (default: 2..40)")
    c.add_argument("--trials", type=_positive_int, default=100)

    x = sub.add_parser("experiment", help="run a scripted experiment")
    x.add_argument("name", choices=EXPERIMENTS)
    x.add_argument("--seed", type=_seed, default=0)
    x.add_argument("--out", type=Path, required=True)
    x.add_argument("--data", type=Path, action="append", help="datasets for table3 (default: synthetic)")
    x.add_argument("--max-epochs", type=int, help="epoch cap (table3, time-variance)")
    return p


def _resolve_seed(seed) -> int:
    if seed == "random":
        seed = secrets.randbelow(2**31)
    print(f"seed: {seed}")
    return int(seed)


def _echo(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, list):
            v = [str(i) if isinstance(i, Path) else i for i in v]
        out[k] = v
    return out


def cmd_gen_data(args) -> int:
    series = generate(SynthConfig(length=args.length, variant=args.variant))
    save_csv(series, args.out)
    print(f"wrote {len(series)} values to {args.out}")
    return 0


def cmd_train(args) -> int:
    from .experiments import fit_and_evaluate, save_fit

    series = load_csv(args.data, args.tau)
    if series.period is None:
        raise UsageError("train: --tau is required (no tau in the dataset sidecar)")
    seed = _resolve_seed(args.seed)
    grid = tuple(args.lr) if args.lr else LR_GRID
    cfg = TrainConfig(lr_grid=grid, max_epochs=args.max_epochs, seed=seed)
    res = fit_and_evaluate(args.model, series, series.period, cfg, seed)
    config = _echo(args)
    config.update({"seed": seed, "tau": series.period, "lr_grid": list(grid), "dataset": series.metadata(),
                   "train": {k: getattr(cfg, k) for k in ("batch_size", "patience", "min_delta", "beta1", "beta2",
                                                          "eps", "val_fraction", "max_epochs")}})
    save_fit(res, args.out, config)
    print(f"{res.name}: lr={res.lr:g} epochs={len(res.history)} test MASE={res.report.mean_mase:.6f} "
          f"SMAPE={res.report.mean_smape:.4f}%")
    return 0


def cmd_evaluate(args) -> int:
    from .experiments import prepare

    m = load_model(args.model_file)
    series = load_csv(args.data, m.spec.tau)
    prep = prepare(series, m.spec.tau)
    if m.scaler is None:
        m.scaler = prep.scaler
    X, Y = prep.test_xy_raw
    rng = np.random.default_rng(_resolve_seed(args.seed)) if args.mode == "sample" else None
    report = evaluate_forecasts(forward_predict(m, X, args.mode, rng).point, Y, prep.train)
    summary = report.summary()
    summary["mode"] = args.mode
    print(f"test MASE={report.mean_mase:.6f} SMAPE={report.mean_smape:.4f}% over {len(X)} forecasts")
    if args.out:
        write_json(summary, args.out)
    return 0


def cmd_forecast(args) -> int:
    m = load_model(args.model_file)
    if m.scaler is None:
        raise UsageError("forecast: checkpoint carries no scaler; train it through the pipeline first")
    series = load_csv(args.input_csv, m.spec.tau)
    need = 2 * m.spec.tau
    if len(series) < need:
        raise DimensionError(f"forecast needs at least {need} input values, got {len(series)}")
    x = series.values[-need:]
    rng = np.random.default_rng(_resolve_seed(args.seed)) if args.mode == "sample" else None
    res = forward_predict(m, x, args.mode, rng)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["step", "forecast", "sigma"])
    for h in range(m.spec.tau):
        sig = "" if res.sigma is None else repr(float(np.asarray(res.sigma).reshape(-1)[h]))
        w.writerow([h + 1, repr(float(np.asarray(res.point).reshape(-1)[h])), sig])
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_all

    if args.depth is not None and args.depth < 2:
        raise UsageError("gradcheck: --depth must be >= 2")
    results = run_all(depth=args.depth, trials=args.trials)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("all gradient checks passed" if ok else "gradient checks FAILED")
    return 0 if ok else 1


def cmd_experiment(args) -> int:
    from . import experiments as ex
    from .synth import gen_baseline

    seed = _resolve_seed(args.seed)
    if args.name == "vanishing-gradient":
        r = ex.run_vanishing_gradient(ex.VanishingConfig(seed=seed), args.out)
        print(f"first-layer mean |grad| at final epoch: MLP {r.mlp.grads['first'][-1]:.3e}, "
              f"interleaved {r.interleaved.grads['first'][-1]:.3e}")
    elif args.name == "time-variance":
        kw = {} if args.max_epochs is None else {"max_epochs": args.max_epochs}
        r = ex.run_time_variance(ex.TimeVarianceConfig(seed=seed, **kw), args.out)
        for k, v in r.mase.items():
            print(f"{k:<6} test MASE {v:.4f}")
    elif args.name == "timing":
        series = load_csv(args.data[0]) if args.data else None
        ratios = ex.run_timing(ex.TimingConfig(seed=seed), series, args.out)
        for k, v in ratios.items():
            print(f"{k:<5} {v:.2f}x MLP")
    else:
        datasets = [load_csv(p) for p in args.data] if args.data else [gen_baseline()]
        kw = {} if args.max_epochs is None else {"max_epochs": args.max_epochs}
        r = ex.run_table3_desk(datasets, ex.Table3Config(seed=seed, **kw), args.out)
        for k, v in r.borda.items():
            print(f"{k:<5} Borda {v:g}")
    write_json({**ex.load_json(Path(args.out) / "config.json"), "cli": _echo(args), "seed": seed},
               Path(args.out) / "config.json")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "forecast": cmd_forecast,
    "gradcheck": cmd_gradcheck,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"forecastnet: error: {exc}", file=sys.stderr)
        return 2
    except (IngestionError, ScalingError, FormatError, DimensionError, SpecError, MetricError, SearchError,
            ValueError, OSError) as exc:
        print(f"forecastnet: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
