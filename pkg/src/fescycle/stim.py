"""Six-channel stimulation scheduling with hard safety clamps.

Each muscle channel owns a crank-angle window and a per-channel maximum
current and pulse width.  A single global power setting (% of maximum)
scales all channels together; channels outside their window are sent an
explicit zero-current command so the output frame always covers all six.
The device boundary enforces absolute limits (120 mA, 500 us, 40 Hz)
independently of everything upstream.
"""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum

STIM_FREQUENCY_HZ = 40.0
HARD_CURRENT_MAX_MA = 120.0
HARD_PULSE_WIDTH_MAX_US = 500.0


class ChannelId(Enum):
    """The six stimulated muscle groups, keyed by wire-protocol code."""

    LQ = ("Left", "Quadriceps")
    LH = ("Left", "Hamstring")
    LG = ("Left", "Gluteal")
    RQ = ("Right", "Quadriceps")
    RH = ("Right", "Hamstring")
    RG = ("Right", "Gluteal")

    @property
    def side(self) -> str:
        return self.value[0]

    @property
    def muscle(self) -> str:
        return self.value[1]


@dataclass(frozen=True)
class ChannelConfig:
    """Per-channel limits and stimulation window.

    The window is half-open [start, end) in degrees; start > end wraps
    through 0.  Angle 0 is the right crank arm pointing forward.
    """

    id: ChannelId
    current_max_ma: float
    pulse_width_us: float
    window_start_deg: float
    window_end_deg: float
    enabled: bool = True

    def __post_init__(self):
        if not 0 < self.current_max_ma <= HARD_CURRENT_MAX_MA:
            raise ValueError(f"{self.id.name}: current_max_ma outside (0, 120]")
        if not 0 < self.pulse_width_us <= HARD_PULSE_WIDTH_MAX_US:
            raise ValueError(f"{self.id.name}: pulse_width_us outside (0, 500]")
        for deg in (self.window_start_deg, self.window_end_deg):
            if not 0 <= deg < 360:
                raise ValueError(f"{self.id.name}: window angles must lie in [0, 360)")


@dataclass(frozen=True)
class StimCommand:
    id: ChannelId
    current_ma: float
    pulse_width_us: float
    frequency_hz: float = STIM_FREQUENCY_HZ


def default_channel_configs() -> list[ChannelConfig]:
    """Bench defaults: per-channel maxima with left windows trailing right by 180.

    Each side pushes through a 152-degree sector tiled by three half-
    overlapped 76-degree windows (quad, glut, ham in firing order), leaving
    28-degree dead gaps centered at 80 and 260 degrees.  With the plant's
    raised-cosine torque arcs the half-overlap makes the per-side torque sum
    flat across the sector, so within-revolution speed ripple stays small.
    """
    def win(start: float, width: float = 76.0) -> tuple[float, float]:
        return start % 360.0, (start + width) % 360.0

    rq, rg, rh = win(274), win(312), win(350)
    lq, lg, lh = win(274 + 180), win(312 + 180), win(350 + 180)
    return [
        ChannelConfig(ChannelId.LQ, 40.0, 200.0, *lq),
        ChannelConfig(ChannelId.LH, 50.0, 225.0, *lh),
        ChannelConfig(ChannelId.LG, 45.0, 250.0, *lg),
        ChannelConfig(ChannelId.RQ, 40.0, 200.0, *rq),
        ChannelConfig(ChannelId.RH, 55.0, 220.0, *rh),
        ChannelConfig(ChannelId.RG, 50.0, 250.0, *rg),
    ]


def in_window(angle_deg: float, cfg: ChannelConfig) -> bool:
    """Half-open window membership with wraparound; equal bounds mean empty."""
    if not 0 <= angle_deg < 360:
        raise ValueError("angle must lie in [0, 360)")
    s, e = cfg.window_start_deg, cfg.window_end_deg
    if s < e:
        return s <= angle_deg < e
    if s > e:
        return angle_deg >= s or angle_deg < e
    return False


def round_half_up(x: float) -> int:
    """Rounding with ties toward +inf (round() would go to even)."""
    return int(math.floor(x + 0.5))


def build_commands(angle_deg: float, power_pct: float,
                   configs: list[ChannelConfig]) -> list[StimCommand]:
    """One command per configured channel; zero current off-window or disabled."""
    if not 0 <= power_pct <= 100:
        raise ValueError("power_pct must lie in [0, 100]")
    out = []
    for cfg in configs:
        active = cfg.enabled and in_window(angle_deg, cfg)
        current = float(round_half_up(power_pct / 100.0 * cfg.current_max_ma)) if active else 0.0
        out.append(StimCommand(cfg.id, current, cfg.pulse_width_us))
    return out


class SafetyViolation(Exception):
    """A command exceeded a hard device clamp; names channel and field."""

    def __init__(self, channel: ChannelId, field: str, value: float):
        self.channel = channel
        self.field = field
        self.value = value
        super().__init__(f"{channel.name}: {field}={value} exceeds hard limit")


class MockStimulator:
    """Inspectable stand-in for the stimulator output stage.

    Frames that pass the hard clamps are appended to a bounded log of
    (t_s, commands) tuples; a rejected frame raises and leaves the device
    usable with nothing logged.
    """

    def __init__(self, log_maxlen: int = 100_000):
        self.log: deque[tuple[float, tuple[StimCommand, ...]]] = deque(maxlen=log_maxlen)
        self.frames_applied = 0

    def apply(self, commands: list[StimCommand], t_s: float = 0.0) -> None:
        for cmd in commands:
            if cmd.current_ma > HARD_CURRENT_MAX_MA or cmd.current_ma < 0:
                raise SafetyViolation(cmd.id, "current_ma", cmd.current_ma)
            if cmd.pulse_width_us > HARD_PULSE_WIDTH_MAX_US or cmd.pulse_width_us <= 0:
                raise SafetyViolation(cmd.id, "pulse_width_us", cmd.pulse_width_us)
            if cmd.frequency_hz != STIM_FREQUENCY_HZ:
                raise SafetyViolation(cmd.id, "frequency_hz", cmd.frequency_hz)
        self.log.append((t_s, tuple(commands)))
        self.frames_applied += 1

    def write_log_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "channel", "current_mA", "pulse_width_us"])
            for t_s, commands in self.log:
                for cmd in commands:
                    w.writerow([f"{t_s:.6f}", cmd.id.name,
                                f"{cmd.current_ma:g}", f"{cmd.pulse_width_us:g}"])


def write_channel_configs(configs: list[ChannelConfig], path) -> None:
    payload = {
        cfg.id.name: {
            "current_max_mA": cfg.current_max_ma,
            "pulse_width_us": cfg.pulse_width_us,
            "window_start_deg": cfg.window_start_deg,
            "window_end_deg": cfg.window_end_deg,
            "enabled": cfg.enabled,
        }
        for cfg in configs
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_channel_configs(path) -> list[ChannelConfig]:
    with open(path) as fh:
        payload = json.load(fh)
    configs = []
    for cfg in default_channel_configs():
        entry = payload.get(cfg.id.name)
        if entry is None:
            configs.append(cfg)
            continue
        configs.append(replace(
            cfg,
            current_max_ma=float(entry.get("current_max_mA", cfg.current_max_ma)),
            pulse_width_us=float(entry.get("pulse_width_us", cfg.pulse_width_us)),
            window_start_deg=float(entry.get("window_start_deg", cfg.window_start_deg)),
            window_end_deg=float(entry.get("window_end_deg", cfg.window_end_deg)),
            enabled=bool(entry.get("enabled", cfg.enabled)),
        ))
    return configs
