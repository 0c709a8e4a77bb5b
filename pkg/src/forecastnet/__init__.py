"""ForecastNet: interleaved-output feed-forward networks for multi-step seasonal forecasting."""

from .baselines import MLP, MLPSpec, build_deep_mlp, build_mlp, seasonal_naive
from .checkpoint import FormatError, load_model, save_model
from .data import Series, ScaleParams, WindowSample, fit_scaler, load_csv, save_csv, series_stats, split, window
from .metrics import borda, boxplot_stats, mase, smape
from .model import (
    ForecastResult,
    Model,
    ModelSpec,
    SpecError,
    analytic_interleaved_grad,
    build_model,
    forward_predict,
    forward_train,
    param_census,
)
from .synth import SynthConfig, gen_baseline, gen_modulated
from .trainer import TrainConfig, TrainHistory, adam_step, lr_search, train

__version__ = "0.1.0"

__all__ = [
    "MLP", "MLPSpec", "build_deep_mlp", "build_mlp", "seasonal_naive",
    "FormatError", "load_model", "save_model",
    "Series", "ScaleParams", "WindowSample", "fit_scaler", "load_csv", "save_csv", "series_stats", "split", "window",
    "borda", "boxplot_stats", "mase", "smape",
    "ForecastResult", "Model", "ModelSpec", "SpecError", "analytic_interleaved_grad", "build_model",
    "forward_predict", "forward_train", "param_census",
    "SynthConfig", "gen_baseline", "gen_modulated",
    "TrainConfig", "TrainHistory", "adam_step", "lr_search", "train",
]
