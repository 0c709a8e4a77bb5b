"""Forecast accuracy measures and rank aggregation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Series
from .tensor import DimensionError


class MetricError(ValueError):
    pass


def _pair(forecast, target):
    f = np.asarray(forecast, dtype=np.float64).reshape(-1)
    a = np.asarray(target, dtype=np.float64).reshape(-1)
    if f.shape != a.shape:
        raise DimensionError(f"forecast and target lengths differ: {f.size} vs {a.size}")
    return f, a


def naive_scale(insample) -> float:
    """Mean absolute one-step naive error over the in-sample series."""
    x = insample.values if isinstance(insample, Series) else np.asarray(insample, dtype=np.float64)
    if x.size < 2:
        raise MetricError("MASE needs at least two in-sample values")
    d = float(np.mean(np.abs(np.diff(x))))
    if d == 0.0:
        raise MetricError("in-sample series is constant; MASE is undefined")
    return d


def mase(forecast, target, insample) -> float:
    f, a = _pair(forecast, target)
    return float(np.mean(np.abs(a - f))) / naive_scale(insample)


def smape_terms(forecast, target) -> tuple[np.ndarray, int]:
    f, a = _pair(forecast, target)
    num = 2.0 * np.abs(f - a)
    den = np.abs(a) + np.abs(f)
    zero = den == 0.0
    terms = np.divide(num, den, out=np.zeros_like(num), where=~zero)
    return terms, int(zero.sum())


def smape(forecast, target) -> float:
    """Symmetric MAPE in percent; 0/0 terms count as 0."""
    terms, _ = smape_terms(forecast, target)
    return float(100.0 * terms.mean())


def borda(scores) -> np.ndarray:
    """Borda counts from an (n_models, n_datasets) error matrix.

    Per dataset the lowest error earns ``M`` points and the highest earns 1;
    tied models share the mean of the points their positions would get.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2 or s.size == 0:
        raise ValueError("borda needs a non-empty (models x datasets) matrix")
    if np.isnan(s).any():
        raise ValueError("borda matrix contains NaN")
    m, d = s.shape
    counts = np.zeros(m)
    for j in range(d):
        col = s[:, j]
        order = np.argsort(col, kind="stable")
        points = np.empty(m)
        i = 0
        while i < m:
            k = i
            while k + 1 < m and col[order[k + 1]] == col[order[i]]:
                k += 1
            # positions i..k (0 = best) are worth M-i .. M-k points
            points[order[i : k + 1]] = m - (i + k) / 2.0
            i = k + 1
        counts += points
    return counts


@dataclass
class BoxStats:
    min: float
    q1: float
    median: float
    q3: float
    max: float

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.min, self.q1, self.median, self.q3, self.max)


def boxplot_stats(values) -> BoxStats:
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValueError("boxplot_stats of an empty list")
    q = np.percentile(v, [0, 25, 50, 75, 100], method="linear")
    return BoxStats(*(float(t) for t in q))


@dataclass
class MetricsReport:
    mase: list[float]
    smape: list[float]
    smape_zero_terms: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def mean_mase(self) -> float:
        return float(np.mean(self.mase))

    @property
    def mean_smape(self) -> float:
        return float(np.mean(self.smape))

    def box(self) -> BoxStats:
        return boxplot_stats(self.mase)

    def summary(self) -> dict:
        return {
            "n_forecasts": len(self.mase),
            "mase": self.mean_mase,
            "smape": self.mean_smape,
            "mase_box": self.box().as_tuple(),
            "smape_zero_terms": self.smape_zero_terms,
            **self.extra,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["forecast", "mase", "smape"])
            for i, (a, b) in enumerate(zip(self.mase, self.smape)):
                w.writerow([i, repr(a), repr(b)])


def evaluate_forecasts(forecasts, targets, insample) -> MetricsReport:
    """Per-forecast MASE/SMAPE over matching rows of ``forecasts`` and ``targets``."""
    F = np.atleast_2d(np.asarray(forecasts, dtype=np.float64))
    A = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if F.shape != A.shape:
        raise DimensionError(f"forecast/target shapes differ: {F.shape} vs {A.shape}")
    scale = naive_scale(insample)
    mases, smapes, zeros = [], [], 0
    for f, a in zip(F, A):
        mases.append(float(np.mean(np.abs(a - f))) / scale)
        terms, z = smape_terms(f, a)
        smapes.append(float(100.0 * terms.mean()))
        zeros += z
    return MetricsReport(mases, smapes, zeros)


def borda_table(mase_table: dict[str, dict[str, float]]) -> dict[str, float]:
    """Borda counts from ``{model: {dataset: mase}}``; datasets missing for any model are skipped."""
    models = list(mase_table)
    datasets = [d for d in next(iter(mase_table.values()), {}) if all(d in mase_table[m] for m in models)]
    if not models or not datasets:
        raise ValueError("no complete (model, dataset) grid to rank")
    mat = np.array([[mase_table[m][d] for d in datasets] for m in models])
    return dict(zip(models, borda(mat).tolist()))


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
