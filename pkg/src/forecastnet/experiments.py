"""End-to-end pipelines and the experiment runners built on them.

Each runner writes plain CSV/JSON into a run directory and returns the same
numbers in memory. Apart from the ``seconds`` columns every artifact is a
pure function of the configuration and seed.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import MLPSpec, build_deep_mlp, build_mlp, seasonal_naive
from .checkpoint import save_model
from .data import Series, fit_scaler, split, window_arrays
from .metrics import MetricsReport, borda_table, evaluate_forecasts, write_json
from .model import ModelSpec, forward_predict
from .synth import SynthConfig, gen_baseline, gen_modulated
from .trainer import TrainConfig, TrainHistory, lr_search, make_model, train

log = logging.getLogger(__name__)

ROSTER = ("FN", "cFN", "FN2", "cFN2", "MLP")
START_INDICES = (0, 50, 150, 200)


def model_spec(name: str, tau: int, seed: int = 0, width: int = 24):
    """Spec for a roster name (case-insensitive: fn, cfn, fn2, cfn2, mlp)."""
    canon = {v.lower(): v for v in ROSTER}.get(name.lower())
    if canon is None:
        raise ValueError(f"unknown model {name!r}; expected one of {ROSTER}")
    if canon == "MLP":
        return build_mlp(tau, seed).spec
    return ModelSpec(canon, tau, width=width, seed=seed)


@dataclass
class Prepared:
    train: Series
    test: Series
    scaler: object
    train_xy: tuple[np.ndarray, np.ndarray]
    test_xy_raw: tuple[np.ndarray, np.ndarray]


def prepare(series: Series, tau: int, test_fraction: float = 0.10) -> Prepared:
    """Split chronologically, fit the scaler on the training part, cut windows."""
    train_s, test_s = split(series, test_fraction, tau)
    scaler = fit_scaler(train_s)
    train_xy = window_arrays(scaler.apply(train_s.values), tau)
    test_xy_raw = window_arrays(test_s.values, tau)
    return Prepared(train_s, test_s, scaler, train_xy, test_xy_raw)


def evaluate_model(m, prep: Prepared, mode: str = "mean", seed: int = 0) -> tuple[MetricsReport, np.ndarray]:
    X, Y = prep.test_xy_raw
    rng = np.random.default_rng(seed) if mode == "sample" else None
    forecasts = forward_predict(m, X, mode, rng).point
    return evaluate_forecasts(forecasts, Y, prep.train), forecasts


def evaluate_naive(prep: Prepared, tau: int) -> tuple[MetricsReport, np.ndarray]:
    X, Y = prep.test_xy_raw
    f = seasonal_naive(X, tau)
    return evaluate_forecasts(f, Y, prep.train), f


@dataclass
class FitResult:
    name: str
    model: object
    lr: float
    history: TrainHistory
    report: MetricsReport
    forecasts: np.ndarray


def fit_and_evaluate(name: str, series: Series, tau: int, cfg: TrainConfig, seed: int = 0,
                     prep: Prepared | None = None, mode: str = "mean") -> FitResult:
    """Scale, window, search learning rates, train, and score one model on the test segment."""
    prep = prep or prepare(series, tau)
    spec = model_spec(name, tau, seed)
    lr, m, hist = lr_search(spec, prep.train_xy, replace(cfg, seed=seed))
    m.scaler = prep.scaler
    report, forecasts = evaluate_model(m, prep, mode, seed)
    return FitResult(spec.variant, m, lr, hist, report, forecasts)


def _write_config(out: Path, config: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_json(config, out / "config.json")


def _cfg_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["lr_grid"] = list(cfg.lr_grid)
    d["grad_tags"] = list(cfg.grad_tags)
    return d


# ----------------------------------------------------------- vanishing gradient


@dataclass(frozen=True)
class VanishingConfig:
    seed: int = 0
    tau: int = 20
    n_hidden: int = 20
    width: int = 24
    epochs: int = 10
    lr: float = 1e-4
    batch_size: int = 32


@dataclass
class VanishingResult:
    mlp: TrainHistory
    interleaved: TrainHistory


def run_vanishing_gradient(cfg: VanishingConfig = VanishingConfig(), out: Path | None = None) -> VanishingResult:
    """Deep sigmoid MLP versus an interleaved-output network of equal depth.

    Both have ``2*tau`` inputs, ``n_hidden`` sigmoid hidden layers and ``tau``
    linear outputs; the MLP places every output after its last layer while
    the interleaved network attaches one output to each single-layer cell.
    """
    series = gen_baseline(SynthConfig())
    prep = prepare(series, cfg.tau)
    tcfg = TrainConfig(lr=cfg.lr, max_epochs=cfg.epochs, batch_size=cfg.batch_size,
                       patience=cfg.epochs + 1, seed=cfg.seed)
    deep = build_deep_mlp(2 * cfg.tau, cfg.n_hidden, cfg.width, cfg.tau, cfg.seed)
    inter = make_model(ModelSpec("FN2", cfg.tau, width=cfg.width, seed=cfg.seed, cell_layers=1,
                                 activation="sigmoid", init="xavier_normal"))
    if cfg.n_hidden != cfg.tau:
        raise ValueError("the interleaved network has one hidden layer per output, so n_hidden must equal tau")
    _, h_mlp = train(deep, prep.train_xy, tcfg)
    _, h_int = train(inter, prep.train_xy, tcfg)
    if out is not None:
        out = Path(out)
        _write_config(out, {"experiment": "vanishing-gradient", **asdict(cfg), "train": _cfg_dict(tcfg)})
        h_mlp.write_csv(out / "history_MLP-deep.csv")
        h_int.write_csv(out / "history_FN2-interleaved.csv")
        with open(out / "gradients.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "model", "grad_first", "grad_last", "train_loss"])
            for name, h in (("MLP-deep", h_mlp), ("FN2-interleaved", h_int)):
                for i in range(len(h)):
                    w.writerow([i + 1, name, repr(h.grads["first"][i]), repr(h.grads["last"][i]), repr(h.train_loss[i])])
    return VanishingResult(h_mlp, h_int)


# --------------------------------------------------------------- time variance


@dataclass(frozen=True)
class TimeVarianceConfig:
    seed: int = 0
    tau: int = 20
    length: int = 4320
    models: tuple[str, ...] = ("FN2", "cFN2", "MLP")
    lr_grid: tuple[float, ...] = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    max_epochs: int = 100
    conv_lr_grid: tuple[float, ...] = (1e-3,)
    conv_max_epochs: int = 10
    start_indices: tuple[int, ...] = START_INDICES


@dataclass
class TimeVarianceResult:
    mase: dict[str, float]
    smape: dict[str, float]
    forecasts: dict[int, dict[str, np.ndarray]]
    targets: dict[int, np.ndarray]
    lr: dict[str, float] = field(default_factory=dict)


def run_time_variance(cfg: TimeVarianceConfig = TimeVarianceConfig(), out: Path | None = None) -> TimeVarianceResult:
    """Train on the amplitude-modulated series and compare against the seasonal-naive forecast."""
    series = gen_modulated(SynthConfig(length=cfg.length, variant="modulated"))
    prep = prepare(series, cfg.tau)
    X, Y = prep.test_xy_raw
    if max(cfg.start_indices) >= len(X):
        raise ValueError(f"start index beyond the {len(X)} test windows")
    mase_by, smape_by, lrs, all_fc = {}, {}, {}, {}
    naive_report, naive_fc = evaluate_naive(prep, cfg.tau)
    mase_by["naive"], smape_by["naive"] = naive_report.mean_mase, naive_report.mean_smape
    all_fc["naive"] = naive_fc
    for name in cfg.models:
        conv = name.lower().startswith("c")
        tcfg = TrainConfig(lr_grid=cfg.conv_lr_grid if conv else cfg.lr_grid,
                           max_epochs=cfg.conv_max_epochs if conv else cfg.max_epochs, seed=cfg.seed)
        res = fit_and_evaluate(name, series, cfg.tau, tcfg, cfg.seed, prep)
        mase_by[res.name], smape_by[res.name], lrs[res.name] = res.report.mean_mase, res.report.mean_smape, res.lr
        all_fc[res.name] = res.forecasts
        if out is not None:
            Path(out).mkdir(parents=True, exist_ok=True)
            res.history.write_csv(Path(out) / f"history_{res.name}.csv")
    forecasts = {i: {k: v[i] for k, v in all_fc.items()} for i in cfg.start_indices}
    targets = {i: Y[i] for i in cfg.start_indices}
    result = TimeVarianceResult(mase_by, smape_by, forecasts, targets, lrs)
    if out is not None:
        out = Path(out)
        cfgd = asdict(cfg)
        cfgd["assumptions"] = "modulated series length and frequency are defaults (length 4320, f=1/20)"
        _write_config(out, {"experiment": "time-variance", **cfgd})
        for i in cfg.start_indices:
            names = list(forecasts[i])
            with open(out / f"forecasts_{i}.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["step", "target", *names])
                for h in range(cfg.tau):
                    w.writerow([h + 1, repr(float(targets[i][h])), *(repr(float(forecasts[i][n][h])) for n in names)])
        write_json({"mase": mase_by, "smape": smape_by, "lr": lrs}, out / "metrics.json")
    return result


# --------------------------------------------------------------------- timing


@dataclass(frozen=True)
class TimingConfig:
    seed: int = 0
    models: tuple[str, ...] = ROSTER
    epochs: int = 10
    lr: float = 1e-3
    tau: int = 20


def run_timing(cfg: TimingConfig = TimingConfig(), series: Series | None = None, out: Path | None = None) -> dict[str, float]:
    """Mean epoch wall time of each model as a multiple of the MLP's."""
    if "MLP" not in [m.upper() for m in cfg.models]:
        raise ValueError("timing ratios are relative to the MLP, which must be in the roster")
    series = series if series is not None else gen_baseline()
    tau = series.period or cfg.tau
    prep = prepare(series, tau)
    tcfg = TrainConfig(lr=cfg.lr, max_epochs=cfg.epochs, patience=cfg.epochs + 1, seed=cfg.seed)
    seconds = {}
    for name in cfg.models:
        spec = model_spec(name, tau, cfg.seed)
        _, hist = train(make_model(spec), prep.train_xy, tcfg)
        seconds[spec.variant] = float(np.mean(hist.seconds))
    ratios = {k: v / seconds["MLP"] for k, v in seconds.items()}
    if out is not None:
        out = Path(out)
        _write_config(out, {"experiment": "timing", **asdict(cfg), "dataset": series.name})
        with open(out / "timing.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "ratio_to_mlp", "seconds_per_epoch"])
            for k in ratios:
                w.writerow([k, f"{ratios[k]:.4f}", f"{seconds[k]:.6f}"])
    return ratios


# -------------------------------------------------------------------- table 3


@dataclass(frozen=True)
class Table3Config:
    seed: int = 0
    models: tuple[str, ...] = ROSTER
    lr_grid: tuple[float, ...] = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    max_epochs: int = 1000
    patience: int = 5
    mode: str = "mean"


@dataclass
class Table3Result:
    mase: dict[str, dict[str, float]]
    smape: dict[str, dict[str, float]]
    borda: dict[str, float]
    lr: dict[str, dict[str, float]]


def run_table3_desk(datasets: list[Series], cfg: Table3Config = Table3Config(), out: Path | None = None) -> Table3Result:
    """Full pipeline for every (model, dataset) pair, then MASE/SMAPE tables and Borda counts."""
    mase_t: dict[str, dict[str, float]] = {}
    smape_t: dict[str, dict[str, float]] = {}
    lr_t: dict[str, dict[str, float]] = {}
    tcfg = TrainConfig(lr_grid=cfg.lr_grid, max_epochs=cfg.max_epochs, patience=cfg.patience, seed=cfg.seed)
    for ds in datasets:
        if not ds.period:
            raise ValueError(f"dataset {ds.name!r} does not declare tau")
        prep = prepare(ds, ds.period)
        for name in cfg.models:
            try:
                res = fit_and_evaluate(name, ds, ds.period, tcfg, cfg.seed, prep, cfg.mode)
            except Exception as exc:
                raise RuntimeError(f"{name} on {ds.name}: {exc}") from exc
            mase_t.setdefault(res.name, {})[ds.name] = res.report.mean_mase
            smape_t.setdefault(res.name, {})[ds.name] = res.report.mean_smape
            lr_t.setdefault(res.name, {})[ds.name] = res.lr
            if out is not None:
                run = Path(out)
                run.mkdir(parents=True, exist_ok=True)
                res.history.write_csv(run / f"history_{res.name}_{ds.name}.csv")
                res.report.write_csv(run / f"forecast_metrics_{res.name}_{ds.name}.csv")
    counts = borda_table(mase_t)
    result = Table3Result(mase_t, smape_t, counts, lr_t)
    if out is not None:
        out = Path(out)
        cfgd = asdict(cfg)
        cfgd["datasets"] = [{"name": d.name, "tau": d.period, "length": len(d)} for d in datasets]
        _write_config(out, {"experiment": "table3", **cfgd})
        write_json({"mase": mase_t, "smape": smape_t, "borda": counts, "lr": lr_t}, out / "metrics.json")
    return result


def save_fit(res: FitResult, out: Path, config: dict) -> None:
    """Checkpoint, history, per-forecast metrics, aggregate metrics and config for one trained model."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(res.model, out / "model.fcnt")
    res.history.write_csv(out / f"history_{res.name}.csv")
    res.report.write_csv(out / "forecast_metrics.csv")
    summary = res.report.summary()
    summary.update({"model": res.name, "lr": res.lr,
                    "lr_search": {repr(k): v for k, v in res.history.search.items()},
                    "epochs": len(res.history), "best_epoch": res.history.best_epoch + 1})
    write_json(summary, out / "metrics.json")
    _write_config(out, config)


def load_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


__all__ = [
    "MLPSpec", "ROSTER", "START_INDICES", "Prepared", "prepare", "fit_and_evaluate", "evaluate_model",
    "evaluate_naive", "run_vanishing_gradient", "run_time_variance", "run_timing", "run_table3_desk",
    "VanishingConfig", "TimeVarianceConfig", "TimingConfig", "Table3Config", "save_fit",
]
