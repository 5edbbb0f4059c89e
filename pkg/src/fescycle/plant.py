"""Deterministic recumbent-rig plant.

Per muscle channel: a recruitment curve turns commanded current into a
drive level, a first-order lag turns drive into activation, and a raised
cosine over the channel's crank-angle arc turns activation into torque,
scaled by a linear force-velocity droop that reaches zero at fv_omega_max.
The crank is a rigid body with inertia, viscous friction and Coulomb
stiction, integrated by semi-implicit Euler with substeps capped at 1 ms.

The torque arcs leave two uncovered sectors (66-94 and 246-274 degrees
with the default windows), so the crank must coast through them on
momentum.  Together with stiction this produces a minimum sustainable
cadence, which is what makes very low setpoints unreachable in closed
loop.  Inside the covered sectors the default arcs tile each half-turn
with half-overlapped raised cosines, so the torque sum is flat and the
crank turns at near-constant speed within a revolution.

calibrate_to_paper tunes viscous friction, a global torque scale and the
recruitment threshold until the open-loop steady-state map hits the
published power/cadence operating points.  The map itself is supplied by
the caller (the loop module measures it through the full sensing and
stimulation pipeline), keeping this module free of control-loop imports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .encoder import QuadState, quad_at_position
from .stim import ChannelConfig, ChannelId, StimCommand

CHANNEL_ORDER = (ChannelId.LQ, ChannelId.LH, ChannelId.LG,
                 ChannelId.RQ, ChannelId.RH, ChannelId.RG)
_RPM_PER_RAD_S = 60.0 / (2.0 * math.pi)
SUBSTEP_MAX_S = 1e-3


@dataclass(frozen=True)
class PlantParams:
    """Physical constants of the rig; none are published, all are tunable."""

    inertia_j: float = 0.5         # kg m^2
    viscous_b: float = 0.24        # N m s/rad
    coulomb_tc: float = 1.25       # N m
    tau_max_quad: float = 41.25    # N m
    tau_max_ham: float = 27.5
    tau_max_glut: float = 22.0
    act_tau_s: float = 0.35
    recruit_threshold_pct: float = 18.0
    recruit_saturation_pct: float = 100.0
    crank_len_m: float = 0.17
    fv_omega_max: float = 14.2     # rad/s, concentric torque hits zero here
    effort_amp_pct: float = 12.0   # breathing-entrained torque modulation, amplitude
    effort_hz: float = 0.15        # entrainment frequency
    push_var_pct: float = 0.3      # std of per-revolution push strength
    current_noise_ma: float = 0.4  # electrode-skin delivery noise, std per step
    cpr: int = 256

    def __post_init__(self):
        for name in ("inertia_j", "viscous_b", "coulomb_tc", "tau_max_quad",
                     "tau_max_ham", "tau_max_glut", "act_tau_s", "crank_len_m",
                     "fv_omega_max", "effort_hz"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.effort_amp_pct < 0 or self.push_var_pct < 0 or self.current_noise_ma < 0:
            raise ValueError("noise amplitudes must be non-negative")
        if not 0 < self.recruit_threshold_pct < self.recruit_saturation_pct <= 100:
            raise ValueError("need 0 < recruit_threshold < recruit_saturation <= 100")
        if self.cpr <= 0:
            raise ValueError("cpr must be positive")

    def tau_max_for(self, muscle: str) -> float:
        return {"Quadriceps": self.tau_max_quad,
                "Hamstring": self.tau_max_ham,
                "Gluteal": self.tau_max_glut}[muscle]


@dataclass
class PlantState:
    theta_deg: float = 0.0
    omega_rpm: float = 0.0
    activation: dict[ChannelId, float] = field(
        default_factory=lambda: {cid: 0.0 for cid in CHANNEL_ORDER})
    time_s: float = 0.0


@dataclass(frozen=True)
class SensorFrame:
    """Ground-truth sensor snapshot handed to the decoding side."""

    lines: QuadState
    pedal_left_n: float
    pedal_right_n: float
    activation: dict[ChannelId, float]


def recruitment(current_pct_of_max: float, threshold_pct: float,
                saturation_pct: float) -> float:
    """Piecewise-linear recruitment: dead below threshold, full at saturation."""
    if not 0 <= current_pct_of_max <= 100:
        raise ValueError("current_pct_of_max must lie in [0, 100]")
    if current_pct_of_max <= threshold_pct:
        return 0.0
    if current_pct_of_max >= saturation_pct:
        return 1.0
    return (current_pct_of_max - threshold_pct) / (saturation_pct - threshold_pct)


def activation_step(a: float, u: float, dt_s: float, act_tau_s: float) -> float:
    """One Euler step of the first-order activation lag, clamped to [0, 1]."""
    a2 = a + dt_s * (u - a) / act_tau_s
    return max(0.0, min(1.0, a2))


def _arc(cfg: ChannelConfig) -> tuple[float, float]:
    """(center_deg, width_deg) of a window arc; width 0 means no torque."""
    width = (cfg.window_end_deg - cfg.window_start_deg) % 360.0
    center = (cfg.window_start_deg + width / 2.0) % 360.0
    return center, width


def _shape(theta_deg: float, center_deg: float, width_deg: float) -> float:
    """Raised cosine over the arc: 1 at center, 0 at and beyond the edges."""
    if width_deg <= 0:
        return 0.0
    delta = (theta_deg - center_deg + 180.0) % 360.0 - 180.0
    if abs(delta) >= width_deg / 2.0:
        return 0.0
    return 0.5 * (1.0 + math.cos(2.0 * math.pi * delta / width_deg))


def force_velocity(omega_rad_s: float, fv_omega_max: float) -> float:
    """Concentric torque scaling: linear decline to zero at fv_omega_max.

    Eccentric and isometric states keep the full scale; the factor never
    goes negative, so stimulation cannot brake the crank.
    """
    if omega_rad_s <= 0.0:
        return 1.0
    return max(0.0, 1.0 - omega_rad_s / fv_omega_max)


def muscle_torque(theta_deg: float, activation: float, cfg: ChannelConfig,
                  tau_max: float, omega_rad_s: float = 0.0,
                  fv_omega_max: float = float("inf")) -> float:
    """Torque contribution of one channel at the true crank angle; never negative."""
    center, width = _arc(cfg)
    return (activation * tau_max * _shape(theta_deg, center, width)
            * force_velocity(omega_rad_s, fv_omega_max))


def crank_step(state: PlantState, total_torque: float, params: PlantParams,
               dt_s: float) -> PlantState:
    """Semi-implicit Euler with stiction.

    The crank stays stuck while the applied torque cannot beat Coulomb
    friction; a velocity sign change inside a step parks it at zero so
    friction can never pump energy in.
    """
    if not 0 < dt_s <= 0.02:
        raise ValueError("dt_s must lie in (0, 0.02]")
    omega = state.omega_rpm / _RPM_PER_RAD_S
    if omega == 0.0 and abs(total_torque) <= params.coulomb_tc:
        state.time_s += dt_s
        return state
    s = math.copysign(1.0, omega if omega != 0.0 else total_torque)
    alpha = (total_torque - params.viscous_b * omega
             - params.coulomb_tc * s) / params.inertia_j
    omega2 = omega + dt_s * alpha
    if omega != 0.0 and omega * omega2 < 0.0:
        omega2 = 0.0
    state.omega_rpm = omega2 * _RPM_PER_RAD_S
    state.theta_deg = (state.theta_deg + math.degrees(omega2 * dt_s)) % 360.0
    state.time_s += dt_s
    return state


def emit_sensors(state: PlantState, params: PlantParams,
                 configs: Sequence[ChannelConfig],
                 index_latched: bool = False) -> SensorFrame:
    """Quadrature lines, per-side pedal forces and activations at this instant."""
    pos = int(math.floor(state.theta_deg / 360.0 * 4 * params.cpr))
    lines = quad_at_position(pos, params.cpr, index_high=index_latched)
    omega = state.omega_rpm / _RPM_PER_RAD_S
    left = right = 0.0
    for cfg in configs:
        tau = muscle_torque(state.theta_deg, state.activation[cfg.id], cfg,
                            params.tau_max_for(cfg.id.muscle), omega,
                            params.fv_omega_max)
        if cfg.id.side == "Left":
            left += tau
        else:
            right += tau
    return SensorFrame(lines, max(0.0, left) / params.crank_len_m,
                       max(0.0, right) / params.crank_len_m,
                       dict(state.activation))


class Plant:
    """Stateful wrapper: drives the substepped physics and latches the index.

    The index latch mirrors hardware pulse stretching: if the crank crossed
    the zero window between two emitted samples, the Z line is held high on
    the next sample so a polling decoder cannot miss the revolution mark,
    even when it misses A/B edges.
    """

    def __init__(self, params: PlantParams, configs: Sequence[ChannelConfig],
                 state: PlantState | None = None, rng=None):
        self.params = params
        self.configs = list(configs)
        self.state = state if state is not None else PlantState()
        self._arcs = {}
        for cfg in self.configs:
            center, width = _arc(cfg)
            self._arcs[cfg.id] = (center, width, params.tau_max_for(cfg.id.muscle))
        self._max_current = {cfg.id: cfg.current_max_ma for cfg in self.configs}
        self._unwrapped_deg = self.state.theta_deg
        self._emit_rev = self._rev_id()
        # Muscle output is never perfectly steady: when a generator is
        # supplied, a breathing-entrained effort oscillation (fixed
        # amplitude, random starting phase) plus an independent
        # per-revolution push strength draw scale the summed torque.
        # Without one the plant is exactly deterministic, which the unit
        # oracles rely on.
        self._rng = rng
        self._effort_phase = (rng.uniform(0.0, 2.0 * math.pi)
                              if rng is not None else 0.0)
        self._push_gain = 0.0
        self._push_rev = self._rev_id()

    def _rev_id(self) -> int:
        counts = 4 * self.params.cpr
        return math.floor(math.floor(self._unwrapped_deg / 360.0 * counts) / counts)

    def step(self, commands: Sequence[StimCommand], dt_s: float) -> None:
        """Advance the plant by one control period under the given commands."""
        p = self.params
        drive = {cid: 0.0 for cid in self._arcs}
        for cmd in commands:
            current = cmd.current_ma
            # Zero-current commands deliver nothing: impedance noise needs
            # an output stage actually driving the electrode.
            if current > 0.0 and self._rng is not None and p.current_noise_ma > 0.0:
                current = max(0.0, current + p.current_noise_ma
                              * self._rng.standard_normal())
            pct = 100.0 * current / self._max_current[cmd.id]
            drive[cmd.id] = recruitment(min(100.0, pct), p.recruit_threshold_pct,
                                        p.recruit_saturation_pct)
        n = max(1, math.ceil(dt_s / SUBSTEP_MAX_S))
        h = dt_s / n
        st = self.state
        act = st.activation
        effort = 0.0
        if self._rng is not None and p.effort_amp_pct > 0.0:
            effort = (p.effort_amp_pct / 100.0
                      * math.sin(2.0 * math.pi * p.effort_hz * st.time_s
                                 + self._effort_phase))
        if self._rng is not None and p.push_var_pct > 0.0:
            rev = self._rev_id()
            if rev != self._push_rev:
                self._push_rev = rev
                self._push_gain = (p.push_var_pct / 100.0
                                   * self._rng.standard_normal())
        gain = max(0.0, 1.0 + effort + self._push_gain)
        for _ in range(n):
            fv = force_velocity(st.omega_rpm / _RPM_PER_RAD_S, p.fv_omega_max)
            torque = 0.0
            for cid, (center, width, tau_max) in self._arcs.items():
                a = activation_step(act[cid], drive[cid], h, p.act_tau_s)
                act[cid] = a
                if a > 1e-9:
                    torque += a * tau_max * _shape(st.theta_deg, center, width) * fv
            before = st.theta_deg
            crank_step(st, torque * gain, p, h)
            delta = (st.theta_deg - before + 180.0) % 360.0 - 180.0
            self._unwrapped_deg += delta

    def emit(self) -> SensorFrame:
        rev = self._rev_id()
        crossed = rev != self._emit_rev
        self._emit_rev = rev
        return emit_sensors(self.state, self.params, self.configs,
                            index_latched=crossed)

    @property
    def true_rpm(self) -> float:
        return self.state.omega_rpm

    @property
    def unwrapped_deg(self) -> float:
        return self._unwrapped_deg


DEFAULT_TARGETS = ((40.0, 60.0), (50.0, 80.0), (60.0, 100.0))

MapFn = Callable[[PlantParams, Sequence[float]], list[float]]


class CalibrationError(RuntimeError):
    """Raised when no parameter set reaches the target operating points."""

    def __init__(self, message: str, sweep: list[tuple[float, float]]):
        super().__init__(message)
        self.sweep = sweep


def _crossing_power(powers: Sequence[float], rpms: Sequence[float],
                    target_rpm: float) -> float | None:
    """Lowest power at which the steady map reaches target_rpm (interpolated)."""
    for i in range(1, len(powers)):
        lo, hi = rpms[i - 1], rpms[i]
        if lo < target_rpm <= hi:
            if hi == lo:
                return powers[i]
            frac = (target_rpm - lo) / (hi - lo)
            return powers[i - 1] + frac * (powers[i] - powers[i - 1])
    if rpms and rpms[0] >= target_rpm:
        return powers[0]
    return None


def _with_knobs(base: PlantParams, b: float, tau_scale: float,
                threshold: float) -> PlantParams:
    return replace(base, viscous_b=b,
                   tau_max_quad=base.tau_max_quad * tau_scale,
                   tau_max_ham=base.tau_max_ham * tau_scale,
                   tau_max_glut=base.tau_max_glut * tau_scale,
                   recruit_threshold_pct=threshold)


def _map_objective(powers: list[float], rpms: list[float],
                   targets: Sequence[tuple[float, float]]) -> float:
    cost = 0.0
    for rpm_t, power_t in targets:
        if rpm_t <= 0 and power_t <= 0:
            continue  # trivially satisfied
        crossing = _crossing_power(powers, rpms, rpm_t)
        if crossing is None:
            cost += (100.0 + 5.0 * (rpm_t - max(rpms))) ** 2 / 100.0
        else:
            cost += (crossing - power_t) ** 2
    top = rpms[-1]
    if top >= 70.0:
        cost += 40.0 * (top - 69.0) ** 2
    riding = [r for r in rpms if r > 15.0]
    if riding and min(riding) < 34.0:
        cost += 25.0 * (34.0 - min(riding)) ** 2
    return cost


def _targets_feasible(targets: Sequence[tuple[float, float]]) -> bool:
    ordered = sorted(t for t in targets if not (t[0] <= 0 and t[1] <= 0))
    for (r0, p0), (r1, p1) in zip(ordered, ordered[1:]):
        if r1 > r0 and p1 <= p0:
            return False
    return True


def calibrate_to_paper(map_fn: MapFn, params: PlantParams | None = None,
                       targets: Sequence[tuple[float, float]] = DEFAULT_TARGETS,
                       tol_power: float = 10.0, max_rounds: int = 8
                       ) -> tuple[PlantParams, list[tuple[float, float]]]:
    """Tune (viscous_b, torque scale, recruitment threshold) to the targets.

    targets are (steady_rpm, power_pct) operating points.  map_fn measures
    the open-loop steady-state cadence over a power sweep for candidate
    params.  Coordinate descent with shrinking multiplicative steps; every
    evaluation is deterministic, so the result is too.
    """
    base = params if params is not None else PlantParams()
    if not _targets_feasible(targets):
        raise CalibrationError("targets require non-monotone power", [])
    real_targets = [t for t in targets if not (t[0] <= 0 and t[1] <= 0)]
    powers = [5.0 * i for i in range(21)]

    cache: dict[tuple[float, float, float], tuple[float, list[float]]] = {}

    def evaluate(knobs: tuple[float, float, float]) -> tuple[float, list[float]]:
        key = tuple(round(k, 6) for k in knobs)
        if key not in cache:
            rpms = map_fn(_with_knobs(base, *knobs), powers)
            cache[key] = (_map_objective(powers, rpms, real_targets), rpms)
        return cache[key]

    def satisfied(rpms: list[float]) -> bool:
        if rpms[-1] >= 70.0:
            return False
        for rpm_t, power_t in real_targets:
            crossing = _crossing_power(powers, rpms, rpm_t)
            if crossing is None or abs(crossing - power_t) > tol_power:
                return False
        return True

    bounds = ((0.02, 3.0), (0.2, 5.0), (5.0, 60.0))
    knobs = [base.viscous_b, 1.0, base.recruit_threshold_pct]
    steps = [0.25, 0.25, 0.25]  # relative perturbations per knob
    best_cost, best_map = evaluate(tuple(knobs))

    if not real_targets:
        return _with_knobs(base, *knobs), list(zip(powers, best_map))

    for _ in range(max_rounds):
        if satisfied(best_map):
            break
        improved = False
        for k in range(3):
            lo, hi = bounds[k]
            for direction in (1.0, -1.0):
                trial = list(knobs)
                trial[k] = min(hi, max(lo, knobs[k] * (1.0 + direction * steps[k])))
                cost, rpms = evaluate(tuple(trial))
                if cost < best_cost - 1e-9:
                    knobs, best_cost, best_map = trial, cost, rpms
                    improved = True
                    break
            if satisfied(best_map):
                break
        if not improved:
            steps = [s * 0.5 for s in steps]
            if max(steps) < 0.01:
                break

    sweep = list(zip(powers, best_map))
    if not satisfied(best_map):
        raise CalibrationError(
            f"no parameter set met the targets (residual cost {best_cost:.1f})",
            sweep)
    return _with_knobs(base, *knobs), sweep
