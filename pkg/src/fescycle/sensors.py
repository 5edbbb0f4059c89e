"""Auxiliary sensing channels: FSR pedal force and MMG microphones.

The force sensing resistors sit in a voltage divider; force readout goes
through a lookup table calibrated at 5 N steps and linear interpolation,
never through the inverse resistance model directly.  The MMG pair is one
microphone on the muscle and one sampling the ambient background, so a
scaled subtraction cancels the shared noise.  Neither stream feeds the
speed control law; they are logged for monitoring only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal


@dataclass(frozen=True)
class FsrConfig:
    """Divider and resistance-model constants for one FSR.

    The sensor follows R(F) = k_fsr / F**alpha above f_min and is treated
    as open-circuit below it.  Output voltage is taken across r_fixed.
    """

    vcc: float = 5.0
    r_fixed: float = 10e3
    k_fsr: float = 500e3
    alpha: float = 1.0
    f_min: float = 0.5

    def __post_init__(self):
        for name in ("vcc", "r_fixed", "k_fsr", "alpha", "f_min"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.5 <= self.alpha <= 1.5:
            raise ValueError("alpha must lie in [0.5, 1.5]")


@dataclass(frozen=True)
class CalibrationTable:
    """Ordered (force N, voltage V) pairs at 5 N steps starting at 0 or 5 N."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.points) < 3:
            raise ValueError("calibration needs at least 3 points")
        forces = [f for f, _ in self.points]
        volts = [v for _, v in self.points]
        if forces[0] not in (0.0, 5.0):
            raise ValueError("calibration forces must start at 0 or 5 N")
        for f0, f1 in zip(forces, forces[1:]):
            if not math.isclose(f1 - f0, 5.0, rel_tol=0, abs_tol=1e-9):
                raise ValueError("calibration forces must step by 5 N")
        if any(v1 <= v0 for v0, v1 in zip(volts, volts[1:])):
            raise ValueError("calibration voltages must be strictly increasing")

    @property
    def forces(self) -> np.ndarray:
        return np.array([f for f, _ in self.points])

    @property
    def voltages(self) -> np.ndarray:
        return np.array([v for _, v in self.points])


def fsr_voltage(force: float, cfg: FsrConfig) -> float:
    """Divider output for an applied force: vcc * r_fixed / (r_fixed + R(F))."""
    if force < 0:
        raise ValueError("force must be non-negative")
    if force < cfg.f_min:
        return 0.0  # open-circuit limit
    r = cfg.k_fsr / force ** cfg.alpha
    return cfg.vcc * cfg.r_fixed / (cfg.r_fixed + r)


def calibrate_fsr(weights: list[float], cfg: FsrConfig) -> CalibrationTable:
    """Build the lookup table by loading the pedal with known weights."""
    if sorted(weights) != list(weights):
        raise ValueError("weights must be sorted ascending")
    return CalibrationTable(tuple((w, fsr_voltage(w, cfg)) for w in weights))


def force_from_voltage(v: float, table: CalibrationTable) -> float:
    """Piecewise-linear readout; clamps to the end forces outside the table."""
    return float(np.interp(v, table.voltages, table.forces))


@dataclass(frozen=True)
class MmgConfig:
    """MMG synthesis constants.

    g_mmg is the muscle-component RMS at full activation (amplifier gain
    absorbed); c_amb couples the ambient source into the muscle microphone;
    band_hz is the muscle vibration band.
    """

    g_mmg: float = 0.1
    c_amb: float = 1.0
    amb_rms: float = 0.05
    band_hz: tuple[float, float] = (5.0, 100.0)

    def __post_init__(self):
        if self.g_mmg <= 0 or self.amb_rms < 0 or self.c_amb < 0:
            raise ValueError("g_mmg must be positive, amb_rms and c_amb non-negative")
        lo, hi = self.band_hz
        if not 0 < lo < hi:
            raise ValueError("band_hz must satisfy 0 < low < high")


@dataclass(frozen=True)
class MmgFrame:
    """One synchronized chunk from the muscle and ambient microphones."""

    mic_muscle: np.ndarray
    mic_ambient: np.ndarray
    fs_hz: float

    def __post_init__(self):
        if len(self.mic_muscle) != len(self.mic_ambient):
            raise ValueError("microphone series must have equal length")
        if self.fs_hz < 200.0:
            raise ValueError("fs_hz must be at least 200 Hz (2x the 100 Hz band edge)")


def mmg_synthesize(activation: float, rng: np.random.Generator, cfg: MmgConfig,
                   n: int, fs_hz: float) -> MmgFrame:
    """Synthesize one MMG frame for a given muscle activation level.

    The muscle component is band-limited noise normalized to an RMS of
    exactly g_mmg * activation; the ambient component is white noise of RMS
    amb_rms shared by both microphones (scaled by c_amb into the muscle
    one).  Both draws happen in a fixed order so that two runs from the
    same seed stay sample-aligned even when activation is 0.
    """
    if not 0.0 <= activation <= 1.0:
        raise ValueError("activation must lie in [0, 1]")
    if n < 1:
        raise ValueError("n must be at least 1")
    ambient = rng.standard_normal(n)
    amb_rms = float(np.sqrt(np.mean(ambient ** 2)))
    if amb_rms > 0:
        ambient = ambient * (cfg.amb_rms / amb_rms)
    white = rng.standard_normal(n)
    sos = signal.butter(4, cfg.band_hz, btype="bandpass", fs=fs_hz, output="sos")
    shaped = signal.sosfilt(sos, white)
    rms = float(np.sqrt(np.mean(shaped ** 2)))
    target = cfg.g_mmg * activation
    muscle = shaped * (target / rms) if rms > 0 and target > 0 else np.zeros(n)
    return MmgFrame(muscle + cfg.c_amb * ambient, ambient, fs_hz)


def mmg_denoise(frame: MmgFrame, c_amb: float) -> np.ndarray:
    """Cancel the shared background: mic_muscle - c_amb * mic_ambient."""
    return frame.mic_muscle - c_amb * frame.mic_ambient


def mmg_envelope(series: np.ndarray, fs_hz: float, window_ms: float = 200.0
                 ) -> np.ndarray:
    """Causal sliding-window RMS envelope.

    Warm-up samples are normalized by the window actually available, so a
    constant input maps to its absolute value from the first sample.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise ValueError("series must be non-empty")
    w = int(round(window_ms / 1000.0 * fs_hz))
    if w < 1:
        raise ValueError("window shorter than one sample")
    csum = np.cumsum(x ** 2)
    total = np.empty_like(csum)
    total[:w] = csum[:w]
    total[w:] = csum[w:] - csum[:-w]
    lengths = np.minimum(np.arange(1, x.size + 1), w)
    # Rounding in the cumsum difference can leave tiny negatives.
    return np.sqrt(np.maximum(total, 0.0) / lengths)


def write_calibration_csv(table: CalibrationTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["force_N", "voltage_V"])
        for force, volt in table.points:
            w.writerow([f"{force:.6g}", f"{volt:.9g}"])


def read_calibration_csv(path) -> CalibrationTable:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return CalibrationTable(tuple((float(r["force_N"]), float(r["voltage_V"]))
                                  for r in rows))


def write_mmg_csv(path, frame: MmgFrame, denoised: np.ndarray,
                  envelope: np.ndarray) -> None:
    t = np.arange(len(frame.mic_muscle)) / frame.fs_hz
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "mic_muscle_V", "mic_ambient_V", "denoised_V", "envelope_V"])
        for i in range(len(t)):
            w.writerow([f"{t[i]:.6f}", f"{frame.mic_muscle[i]:.9g}",
                        f"{frame.mic_ambient[i]:.9g}", f"{denoised[i]:.9g}",
                        f"{envelope[i]:.9g}"])
