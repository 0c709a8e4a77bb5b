"""Noise-free synthetic seasonal series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Series

SYNTH_PERIOD = 20
SYNTH_LENGTH = 4320


@dataclass(frozen=True)
class SynthConfig:
    length: int = SYNTH_LENGTH
    f: float = 1.0 / SYNTH_PERIOD
    variant: str = "baseline"

    def __post_init__(self):
        if self.length < 1 or not self.f > 0:
            raise ValueError("length must be >= 1 and f > 0")
        if self.variant not in ("baseline", "modulated"):
            raise ValueError(f"unknown variant {self.variant!r}")


def _phase(cfg: SynthConfig) -> np.ndarray:
    return 2.0 * np.pi * cfg.f * np.arange(cfg.length, dtype=np.float64)


def gen_baseline(cfg: SynthConfig | None = None) -> Series:
    """``2 sin(2 pi f t) + 1/3 sin(2 pi f t / 5)`` for ``t = 0..length-1``."""
    cfg = cfg or SynthConfig()
    w = _phase(cfg)
    x = 2.0 * np.sin(w) + np.sin(w / 5.0) / 3.0
    return Series(x, "synthetic", "-", round(1.0 / cfg.f))


def gen_modulated(cfg: SynthConfig | None = None) -> Series:
    """Seasonal signal whose amplitude is modulated over six seasonal cycles."""
    cfg = cfg or SynthConfig(variant="modulated")
    w = _phase(cfg)
    x = 0.5 * np.sin(w / 6.0) * (0.6 * np.sin(w) + 0.2 * np.sin(w / 5.0))
    return Series(x, "synthetic-modulated", "-", round(1.0 / cfg.f))


def generate(cfg: SynthConfig) -> Series:
    return gen_modulated(cfg) if cfg.variant == "modulated" else gen_baseline(cfg)
