"""Series ingestion, min-max scaling, sliding windows and splitting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import DimensionError

CSV_HEADER = "value"


class IngestionError(ValueError):
    """A series file could not be parsed."""


class ScalingError(ValueError):
    pass


@dataclass
class Series:
    values: np.ndarray
    name: str = "series"
    resolution: str = "-"
    period: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if np.isnan(self.values).any():
            raise IngestionError(f"series {self.name!r} contains missing values")

    def __len__(self) -> int:
        return self.values.size

    def with_values(self, values) -> "Series":
        return Series(values, self.name, self.resolution, self.period)

    def metadata(self) -> dict:
        return {"name": self.name, "resolution": self.resolution, "tau": self.period}


@dataclass(frozen=True)
class ScaleParams:
    min: float
    max: float

    def __post_init__(self):
        if not self.max > self.min:
            raise ScalingError(f"scaling needs max > min (got min={self.min}, max={self.max})")

    @property
    def span(self) -> float:
        return self.max - self.min

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.min) / self.span

    def invert(self, x):
        return np.asarray(x, dtype=np.float64) * self.span + self.min

    def to_dict(self) -> dict:
        return {"min": self.min, "max": self.max}


@dataclass
class WindowSample:
    input: np.ndarray
    target: np.ndarray
    origin: int


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def load_csv(path, tau: int | None = None) -> Series:
    """Read a one-column ``value`` CSV. Metadata comes from a ``.json`` sidecar if present."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != CSV_HEADER:
        raise IngestionError(f"{path}:1: expected header {CSV_HEADER!r}")
    values = []
    for lineno, raw in enumerate(lines[1:], start=2):
        field = raw.strip()
        if not field:
            raise IngestionError(f"{path}:{lineno}: missing value (blank line)")
        try:
            v = float(field)
        except ValueError:
            raise IngestionError(f"{path}:{lineno}: cannot parse {field!r} as a number") from None
        if not math.isfinite(v):
            raise IngestionError(f"{path}:{lineno}: non-finite value {field!r}")
        values.append(v)
    meta = {"name": path.stem, "resolution": "-", "tau": None}
    side = sidecar_path(path)
    if side.exists():
        try:
            meta.update(json.loads(side.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise IngestionError(f"{side}: bad sidecar JSON: {exc}") from exc
    period = tau if tau is not None else meta.get("tau")
    return Series(np.array(values), meta["name"], meta["resolution"], period)


def save_csv(series: Series, path, sidecar: bool = True) -> Path:
    """Write ``series`` in the one-column format; floats use repr so reloads are exact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = "".join(f"{float(v)!r}\n" for v in series.values)
    path.write_text(f"{CSV_HEADER}\n{body}", encoding="utf-8", newline="\n")
    if sidecar:
        sidecar_path(path).write_text(json.dumps(series.metadata(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def fit_scaler(train) -> ScaleParams:
    values = train.values if isinstance(train, Series) else np.asarray(train, dtype=np.float64)
    lo, hi = float(np.min(values)), float(np.max(values))
    if not hi > lo:
        raise ScalingError("cannot scale a constant series")
    return ScaleParams(lo, hi)


def _values(series) -> np.ndarray:
    return series.values if isinstance(series, Series) else np.asarray(series, dtype=np.float64)


def _tau(series, tau):
    if tau is None:
        tau = getattr(series, "period", None)
    if tau is None or tau < 1:
        raise ValueError("a seasonal period tau >= 1 is required")
    return int(tau)


def window_arrays(series, tau: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """All stride-1 windows as ``(inputs [N, 2tau], targets [N, tau])``."""
    tau = _tau(series, tau)
    v = _values(series)
    if v.size < 3 * tau:
        raise DimensionError(f"series of length {v.size} is shorter than one window (3*tau = {3 * tau})")
    win = sliding_window_view(v, 3 * tau)
    return np.ascontiguousarray(win[:, : 2 * tau]), np.ascontiguousarray(win[:, 2 * tau :])


def window(series, tau: int | None = None) -> list[WindowSample]:
    tau = _tau(series, tau)
    X, Y = window_arrays(series, tau)
    return [WindowSample(X[i], Y[i], i + 2 * tau - 1) for i in range(len(X))]


def samples_to_arrays(samples: list[WindowSample]) -> tuple[np.ndarray, np.ndarray]:
    return np.stack([s.input for s in samples]), np.stack([s.target for s in samples])


def split(series, test_fraction: float = 0.10, tau: int | None = None):
    """Chronological train/test split; the test segment is the last ``test_fraction`` of values."""
    v = _values(series)
    n_test = int(round(v.size * test_fraction))
    n_train = v.size - n_test
    tau = tau if tau is not None else getattr(series, "period", None)
    if tau is not None and (n_train < 3 * tau or n_test < 3 * tau):
        raise DimensionError(f"split of length {v.size} leaves a segment shorter than 3*tau={3 * tau}")
    if n_train < 1 or n_test < 1:
        raise DimensionError(f"cannot split a series of length {v.size}")
    if isinstance(series, Series):
        return series.with_values(v[:n_train].copy()), series.with_values(v[n_train:].copy())
    return v[:n_train].copy(), v[n_train:].copy()


@dataclass
class SeriesStats:
    length: int
    min: float
    max: float
    mean: float
    std: float

    def rounded(self, places: int = 2) -> tuple:
        r = lambda v: round(v, places) + 0.0  # noqa: E731  (+0.0 folds -0.0)
        return (self.length, r(self.min), r(self.max), r(self.mean), r(self.std))


def series_stats(series) -> SeriesStats:
    v = _values(series)
    if v.size == 0:
        raise ValueError("statistics of an empty series")
    return SeriesStats(int(v.size), float(v.min()), float(v.max()), float(v.mean()), float(v.std()))
