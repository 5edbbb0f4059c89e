"""Cadence control: incremental integral law with slew and clamp.

The update is velocity-form: each step adds kp*(e - e_prev) + ki*e*dt to
the stimulation power, limited to power_slew_max per second and clamped to
[0, 100] %.  Because increments are applied to the clamped output there is
no hidden integral to unwind after saturation; a sign reversal of the
error pulls power off the rail on the very next step.  A kd term with a
filtered derivative turns the same stepper into a PID for comparison runs.

The law consumes only the measured cadence.  Pedal force and MMG streams
are logged elsewhere and never fed back.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence


@dataclass(frozen=True)
class ControllerGains:
    ki: float = 0.45         # %/(RPM*s); Avg3 lags ~3 revs, larger ki rings
    kp: float = 0.0          # %/RPM
    kd: float = 0.0          # %*s/RPM, 0 keeps the pure incremental law
    deadband_rpm: float = 0.0
    power_slew_max: float = 3.0  # %/s; also caps hunting amplitude
    d_tau_s: float = 0.05    # derivative low-pass time constant

    def __post_init__(self):
        if self.ki <= 0:
            raise ValueError("ki must be positive")
        if self.deadband_rpm < 0 or self.kd < 0:
            raise ValueError("deadband_rpm and kd must be non-negative")
        if self.power_slew_max <= 0 or self.d_tau_s <= 0:
            raise ValueError("power_slew_max and d_tau_s must be positive")


@dataclass
class ControllerState:
    setpoint_rpm: float = 0.0
    measured_rpm: float = 0.0
    error_rpm: float = 0.0
    prev_error_rpm: float = 0.0
    power_pct: float = 0.0
    integral_term: float = 0.0
    d_filt: float = 0.0
    prev_d_filt: float = 0.0
    converged: bool = False
    saturated_duration_s: float = 0.0


class Status(Enum):
    CONVERGED = "Converged"
    SATURATED = "Saturated"
    DIVERGED = "Diverged"
    IN_PROGRESS = "InProgress"


def step(state: ControllerState, setpoint_rpm: float,
         measured_rpm: Optional[float], gains: ControllerGains,
         dt_s: float) -> ControllerState:
    """Advance the controller one sample; measured None counts as 0 RPM."""
    if dt_s <= 0:
        raise ValueError("dt_s must be positive")
    if not 0 <= setpoint_rpm <= 120:
        raise ValueError("setpoint_rpm must lie in [0, 120]")
    measured = 0.0 if measured_rpm is None else measured_rpm
    error = setpoint_rpm - measured
    state.setpoint_rpm = setpoint_rpm
    state.measured_rpm = measured
    state.error_rpm = error

    d_raw = (error - state.prev_error_rpm) / dt_s
    state.d_filt += dt_s / (gains.d_tau_s + dt_s) * (d_raw - state.d_filt)

    if abs(error) > gains.deadband_rpm:
        delta = (gains.kp * (error - state.prev_error_rpm)
                 + gains.ki * error * dt_s
                 + gains.kd * (state.d_filt - state.prev_d_filt))
        limit = gains.power_slew_max * dt_s
        delta = max(-limit, min(limit, delta))
        new_power = max(0.0, min(100.0, state.power_pct + delta))
        pinned_high = state.power_pct >= 100.0 and error > 0
        pinned_low = state.power_pct <= 0.0 and error < 0
        if not (pinned_high or pinned_low):
            state.integral_term += gains.ki * error * dt_s
        state.power_pct = new_power

    state.prev_error_rpm = error
    state.prev_d_filt = state.d_filt
    if state.power_pct >= 100.0:
        state.saturated_duration_s += dt_s
    else:
        state.saturated_duration_s = 0.0
    return state


def convergence_status(history: Sequence[tuple[float, float, float]],
                       eps_rpm: float, hold_s: float) -> Status:
    """Classify a run from its trailing (t_s, error_rpm, power_pct) records.

    Converged: |error| <= eps throughout the trailing hold_s window.
    Saturated: power pinned at 100% throughout that window without the
    error settling.  Diverged: |error| strictly growing across the window.
    Anything shorter than hold_s, or none of the above, is InProgress.
    """
    if eps_rpm <= 0 or hold_s <= 0:
        raise ValueError("eps_rpm and hold_s must be positive")
    if not history:
        return Status.IN_PROGRESS
    t_end = history[-1][0]
    if t_end - history[0][0] < hold_s:
        return Status.IN_PROGRESS
    window = [rec for rec in history if rec[0] >= t_end - hold_s]
    errors = [abs(e) for _, e, _ in window]
    if all(e <= eps_rpm for e in errors):
        return Status.CONVERGED
    if all(p >= 100.0 for _, _, p in window):
        return Status.SATURATED
    if all(b > a for a, b in zip(errors, errors[1:])):
        return Status.DIVERGED
    return Status.IN_PROGRESS


def user_inputs(raw_pot: float, rocker_on: bool, pot_min_rpm: float = 0.0,
                pot_max_rpm: float = 100.0) -> tuple[float, bool]:
    """Map the pot fraction and rocker switch to (setpoint_rpm, enabled)."""
    if not 0.0 <= raw_pot <= 1.0:
        raise ValueError("raw_pot must lie in [0, 1]")
    return pot_min_rpm + raw_pot * (pot_max_rpm - pot_min_rpm), bool(rocker_on)


def write_controller_trace_csv(path, records: Sequence[tuple]) -> None:
    """records: (t_s, setpoint_rpm, measured_rpm, error_rpm, power_pct, status)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "setpoint_rpm", "measured_rpm", "error_rpm",
                    "power_pct", "status"])
        for t_s, sp, meas, err, power, status in records:
            w.writerow([f"{t_s:.6f}", f"{sp:g}", f"{meas:.6f}", f"{err:.6f}",
                        f"{power:.6f}", status])
