"""Fixed-timestep executive: plant -> encoder -> controller -> stim -> plant.

One object owns every component and advances them one control period at a
time, either as fast as possible (offline, deterministic) or paced against
the wall clock with a skip-and-count overrun policy.  The same stepper
backs the three experiment drivers (steady-state power maps, per-setpoint
convergence runs, count-loss sweeps) and the live serving path, so what
gets measured is always the behaviour of the full sensing pipeline.
"""

from __future__ import annotations

import csv
import math
import queue
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from . import controller as ctl
from .controller import ControllerGains, ControllerState, Status
from .encoder import (
    EncoderState,
    QuadState,
    RpmModel,
    estimate_angle_deg,
    estimate_rpm,
    ingest_lines,
    ingest_sample,
    sample_lines,
)
from .plant import Plant, PlantParams, PlantState
from .sensors import MmgConfig, mmg_denoise, mmg_envelope, mmg_synthesize
from .stim import (
    ChannelConfig,
    MockStimulator,
    StimCommand,
    build_commands,
    default_channel_configs,
    round_half_up,
)


class Mode(Enum):
    OFFLINE = "offline"
    PACED = "paced"


class Fault(RuntimeError):
    """A component raised mid-run; carries the step index for diagnosis."""

    def __init__(self, step_index: int, cause: BaseException):
        super().__init__(f"loop aborted at step {step_index}: {cause}")
        self.step_index = step_index
        self.cause = cause


@dataclass(frozen=True)
class LoopConfig:
    fs_hz: float = 100.0
    duration_s: float = 40.0
    mode: Mode = Mode.OFFLINE
    seed: int = 0
    rpm_model: RpmModel = RpmModel.AVG3
    eps_rpm: float = 2.0
    hold_s: float = 10.0
    telemetry_hz: float = 10.0

    def __post_init__(self):
        if self.fs_hz <= 0 or self.duration_s <= 0:
            raise ValueError("fs_hz and duration_s must be positive")
        if self.eps_rpm <= 0 or self.hold_s <= 0 or self.telemetry_hz <= 0:
            raise ValueError("eps_rpm, hold_s and telemetry_hz must be positive")


@dataclass
class LoopMetrics:
    requested_samples: int = 0
    executed_samples: int = 0
    overruns: int = 0
    wall_time_s: float = 0.0
    sim_time_s: float = 0.0
    observed_counts: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class TelemetryFrame:
    t_s: float
    theta_deg: float
    rpm_set: float
    rpm_meas: Optional[float]
    error_rpm: float
    power_pct: float
    status: str
    channels: tuple[tuple[str, bool, float], ...]
    pedal_n: tuple[float, float]
    mmg_env: tuple[float, float, float, float]


class TelemetrySink:
    """Bounded hand-off queue; a full queue drops frames, never blocks the loop."""

    def __init__(self, maxsize: int = 256):
        self._q: queue.Queue[TelemetryFrame] = queue.Queue(maxsize=maxsize)
        self.dropped = 0

    def push(self, frame: TelemetryFrame) -> None:
        try:
            self._q.put_nowait(frame)
        except queue.Full:
            self.dropped += 1

    def get(self, timeout: Optional[float] = None) -> Optional[TelemetryFrame]:
        try:
            return self._q.get(timeout=timeout)
        except queue.Empty:
            return None


class _RollingStatus:
    """Cheap per-step convergence classification over a trailing window."""

    def __init__(self, eps_rpm: float, hold_s: float):
        self.eps = eps_rpm
        self.hold = hold_s
        self.window: deque[tuple[float, float, float]] = deque()
        self.n_inband = 0
        self.n_pinned = 0
        self.t_first: Optional[float] = None

    def update(self, t: float, error: float, power: float) -> Status:
        if self.t_first is None:
            self.t_first = t
        self.window.append((t, error, power))
        if abs(error) <= self.eps:
            self.n_inband += 1
        if power >= 100.0:
            self.n_pinned += 1
        while self.window and self.window[0][0] < t - self.hold:
            t0, e0, p0 = self.window.popleft()
            if abs(e0) <= self.eps:
                self.n_inband -= 1
            if p0 >= 100.0:
                self.n_pinned -= 1
        if t - self.t_first < self.hold:
            return Status.IN_PROGRESS
        n = len(self.window)
        if self.n_inband == n:
            return Status.CONVERGED
        if self.n_pinned == n:
            return Status.SATURATED
        return Status.IN_PROGRESS


# The four MMG probes ride the two quadriceps and two hamstring channels.
MMG_PROBES = ("LQ", "LH", "RQ", "RH")


# Fixed push-off intensity; strong enough to carry the crank through the
# uncovered torque sectors from a standstill, weak enough that the burst
# tops out near sustainable cadence instead of far above it.
KICK_POWER_PCT = 35.0
# Gated power held between push-off and closed-loop control.  Must sit on
# the sustainable branch: the crank decays from push-off cadence onto the
# branch point for this power while the rev-averaged estimate flushes the
# atypical push-off revolutions.
HANDOVER_POWER_PCT = 60.0
# The handover hold ends once two consecutive revolutions agree this
# closely (the estimate has caught up with the plant), bounded below so at
# least one clean revolution is averaged and above so control is never
# deferred indefinitely.
BLANK_SETTLE_TOL = 0.08
BLANK_MIN_S = 2.0
BLANK_MAX_S = 8.0
# No index mark for this long means cadence is lost and gating is blind;
# drop back to the push-off.  Only reachable below ~15 RPM, well under any
# sustainable cadence, so a healthy ride never re-triggers it.
INDEX_STALE_S = 4.0


def bootstrap_commands(power_pct: float,
                       configs: Sequence[ChannelConfig]) -> list[StimCommand]:
    """Startup stimulation before cadence is measurable: all channels on.

    With a 100 Hz poll the decoded count aliases as soon as the crank moves
    at useful speed, so until the index mark has been seen twice there is no
    trustworthy crank angle.  Driving every enabled channel (a brief
    co-contraction push-off) turns the crank from any resting position;
    angle-gated stimulation takes over once cadence is known.  A slow power
    ramp would let the crank creep into an uncovered sector and park there,
    so the push-off runs at the fixed kick intensity, not the commanded one.
    """
    if not 0 <= power_pct <= 100:
        raise ValueError("power_pct must lie in [0, 100]")
    out = []
    for cfg in configs:
        current = (float(round_half_up(power_pct / 100.0 * cfg.current_max_ma))
                   if cfg.enabled else 0.0)
        out.append(StimCommand(cfg.id, current, cfg.pulse_width_us))
    return out


class ClosedLoop:
    """The wired system, advanced one control period per step_once call.

    External inputs (setpoint_rpm, enabled, gains, power_override) are
    plain attributes; in paced mode they are mutated via the control queue
    so only the loop thread ever touches component state.
    """

    def __init__(self, config: LoopConfig,
                 params: Optional[PlantParams] = None,
                 gains: Optional[ControllerGains] = None,
                 stim_configs: Optional[Sequence[ChannelConfig]] = None,
                 device: Optional[MockStimulator] = None,
                 initial_state: Optional[PlantState] = None):
        self.cfg = config
        self.params = params if params is not None else PlantParams()
        self.gains = gains if gains is not None else ControllerGains()
        self.stim_configs = list(stim_configs) if stim_configs is not None \
            else default_channel_configs()
        self.device = device if device is not None else MockStimulator()
        seq = np.random.SeedSequence(config.seed)
        plant_seed, mmg_seed = seq.spawn(2)
        self.plant = Plant(self.params, self.stim_configs, initial_state,
                           rng=np.random.default_rng(plant_seed))
        self.enc = EncoderState(cpr=self.params.cpr)
        self.ctrl = ControllerState()
        self.setpoint_rpm = 0.0
        self.enabled = True
        self.power_override: Optional[float] = None
        self.step_index = 0
        self.records: list[tuple[float, float, float, float, float, str]] = []
        self.status = Status.IN_PROGRESS
        self._rolling = _RollingStatus(config.eps_rpm, config.hold_s)
        self._prev_lines = self.plant.emit().lines
        self._last_frame = None
        self._last_commands: list[StimCommand] = []
        self._phase = "boot"
        self._blank_steps = 0
        self._blank_revs0 = 0
        self.kick_count = 0
        self.allow_rekick = True
        self._mmg_rng = np.random.default_rng(mmg_seed)
        self._mmg_cfg = MmgConfig()

    @property
    def t_s(self) -> float:
        return self.step_index / self.cfg.fs_hz

    def _advance_phase(self, measured: Optional[float]) -> None:
        stale = (self.enc.samples_since_index > self.cfg.fs_hz * INDEX_STALE_S)
        lost = measured is None or stale
        if self._phase == "boot":
            if not lost:
                self._phase = "blank"
                self._blank_steps = 0
                self._blank_revs0 = len(self.enc.rev_history)
        elif lost and (self.allow_rekick or measured is None):
            self._phase = "boot"
            self.kick_count += 1
        elif self._phase == "blank":
            self._blank_steps += 1
            if self._blank_steps >= self.cfg.fs_hz * BLANK_MAX_S:
                self._phase = "active"
            elif (self._blank_steps >= self.cfg.fs_hz * BLANK_MIN_S
                    and len(self.enc.rev_history) >= self._blank_revs0 + 2):
                d1, d2 = (r.samples for r in self.enc.rev_history[-2:])
                if abs(d1 - d2) <= BLANK_SETTLE_TOL * d2:
                    self._phase = "active"

    def step_once(self) -> None:
        dt = 1.0 / self.cfg.fs_hz
        measured = estimate_rpm(self.enc, self.cfg.rpm_model, self.cfg.fs_hz)
        self._advance_phase(measured)
        boot = self._phase == "boot"

        if not self.enabled:
            self._park_controller(measured, 0.0)
            power = 0.0
            commands = bootstrap_commands(0.0, self.stim_configs)
        elif self.power_override is not None:
            self._park_controller(measured, self.power_override)
            power = self.power_override
            commands = self._command(boot, power)
        elif boot:
            # Push-off: command the kick, park the integrator at the
            # handover level so gated control starts on the branch.
            want_motion = self.setpoint_rpm > 0.0
            power = KICK_POWER_PCT if want_motion else 0.0
            self._park_controller(measured,
                                  HANDOVER_POWER_PCT if want_motion else 0.0)
            commands = bootstrap_commands(power, self.stim_configs)
        elif self._phase == "blank":
            self._park_controller(measured, HANDOVER_POWER_PCT)
            power = HANDOVER_POWER_PCT
            commands = self._command(False, power)
        else:
            ctl.step(self.ctrl, self.setpoint_rpm, measured, self.gains, dt)
            power = self.ctrl.power_pct
            commands = self._command(False, power)

        self.device.apply(commands, self.t_s)
        self.plant.step(commands, dt)
        frame = self.plant.emit()
        ingest_sample(self.enc, self._prev_lines, frame.lines)
        self._prev_lines = frame.lines
        self.step_index += 1
        t = self.t_s
        self.status = self._rolling.update(t, self.ctrl.error_rpm, power)
        self.ctrl.converged = self.status is Status.CONVERGED
        meas_rec = math.nan if measured is None else measured
        self.records.append((t, self.setpoint_rpm, meas_rec,
                             self.ctrl.error_rpm, power, self.status.value))
        self._last_frame = frame
        self._last_commands = commands

    def _command(self, boot: bool, power: float) -> list[StimCommand]:
        if boot:
            kick = KICK_POWER_PCT if power > 0.0 else 0.0
            return bootstrap_commands(kick, self.stim_configs)
        # Gate off the latest single revolution: when cadence is moving the
        # averaged estimate lags and the reckoned angle walks off the true
        # crank position, firing channels into the wrong sector.
        angle = estimate_angle_deg(self.enc, RpmModel.INSTANTANEOUS,
                                   self.cfg.fs_hz)
        return build_commands(angle, power, self.stim_configs)

    def _park_controller(self, measured: Optional[float], power: float) -> None:
        self.ctrl.setpoint_rpm = self.setpoint_rpm
        self.ctrl.measured_rpm = 0.0 if measured is None else measured
        self.ctrl.error_rpm = self.setpoint_rpm - self.ctrl.measured_rpm
        self.ctrl.prev_error_rpm = self.ctrl.error_rpm
        self.ctrl.power_pct = power

    def telemetry(self) -> TelemetryFrame:
        frame = self._last_frame if self._last_frame is not None else self.plant.emit()
        by_id = {c.id.name: c for c in self._last_commands}
        channels = []
        for cfg in self.stim_configs:
            cmd = by_id.get(cfg.id.name)
            current = cmd.current_ma if cmd else 0.0
            channels.append((cfg.id.name, current > 0.0, current))
        env = []
        for probe in MMG_PROBES:
            act = frame.activation[next(c.id for c in self.stim_configs
                                        if c.id.name == probe)]
            mmg = mmg_synthesize(act, self._mmg_rng, self._mmg_cfg, 64, 1000.0)
            clean = mmg_denoise(mmg, self._mmg_cfg.c_amb)
            env.append(float(mmg_envelope(clean, 1000.0)[-1]))
        measured = estimate_rpm(self.enc, self.cfg.rpm_model, self.cfg.fs_hz)
        return TelemetryFrame(
            t_s=self.t_s,
            theta_deg=estimate_angle_deg(self.enc, RpmModel.INSTANTANEOUS,
                                         self.cfg.fs_hz),
            rpm_set=self.setpoint_rpm,
            rpm_meas=measured,
            error_rpm=self.ctrl.error_rpm,
            power_pct=self.ctrl.power_pct,
            status=self.status.value,
            channels=tuple(channels),
            pedal_n=(frame.pedal_left_n, frame.pedal_right_n),
            mmg_env=tuple(env),
        )


def run_offline(loop: ClosedLoop, sinks: Sequence[TelemetrySink] = ()) -> LoopMetrics:
    """Execute exactly duration_s * fs_hz steps as fast as possible."""
    n = int(round(loop.cfg.duration_s * loop.cfg.fs_hz))
    every = max(1, int(round(loop.cfg.fs_hz / loop.cfg.telemetry_hz)))
    start = time.monotonic()
    for i in range(n):
        try:
            loop.step_once()
        except Exception as exc:
            raise Fault(i, exc) from exc
        if sinks and loop.step_index % every == 0:
            frame = loop.telemetry()
            for sink in sinks:
                sink.push(frame)
    wall = time.monotonic() - start
    return LoopMetrics(requested_samples=n, executed_samples=n, overruns=0,
                       wall_time_s=wall, sim_time_s=n / loop.cfg.fs_hz,
                       observed_counts=[r.count_at_reset
                                        for r in loop.enc.rev_history])


def run_paced(loop: ClosedLoop, sinks: Sequence[TelemetrySink] = (),
              stop: Optional[Callable[[], bool]] = None,
              control_queue: Optional[queue.Queue] = None) -> LoopMetrics:
    """Pace steps against the wall clock; late slots are skipped and counted.

    control_queue entries are callables of the loop, executed between
    steps; this keeps all component state single-threaded.
    """
    period = 1.0 / loop.cfg.fs_hz
    requested = (int(round(loop.cfg.duration_s * loop.cfg.fs_hz))
                 if math.isfinite(loop.cfg.duration_s) else None)
    every = max(1, int(round(loop.cfg.fs_hz / loop.cfg.telemetry_hz)))
    executed = overruns = slot = 0
    start = time.monotonic()
    next_t = start
    while requested is None or slot < requested:
        if stop is not None and stop():
            break
        if control_queue is not None:
            while True:
                try:
                    fn = control_queue.get_nowait()
                except queue.Empty:
                    break
                fn(loop)
        next_t += period
        now = time.monotonic()
        if now <= next_t:
            time.sleep(next_t - now)
            try:
                loop.step_once()
            except Exception as exc:
                raise Fault(slot, exc) from exc
            executed += 1
            if sinks and loop.step_index % every == 0:
                frame = loop.telemetry()
                for sink in sinks:
                    sink.push(frame)
        else:
            overruns += 1
        slot += 1
    wall = time.monotonic() - start
    return LoopMetrics(requested_samples=requested if requested is not None else slot,
                       executed_samples=executed, overruns=overruns,
                       wall_time_s=wall,
                       sim_time_s=executed / loop.cfg.fs_hz,
                       observed_counts=[r.count_at_reset
                                        for r in loop.enc.rev_history])


# ---------------------------------------------------------------------------
# Experiment drivers
# ---------------------------------------------------------------------------

def steady_state_map(params: PlantParams, powers: Sequence[float],
                     stim_configs: Optional[Sequence[ChannelConfig]] = None,
                     fs_hz: float = 100.0, settle_s: float = 16.0,
                     measure_s: float = 4.0) -> list[float]:
    """Open-loop steady cadence per constant power, through the full pipeline.

    Each point starts from rest with the loop's kick-start and then holds
    the commanded power; powers that cannot sustain rotation decay and
    stall, so the map reports sustainable cadence, approached from above.
    Cadence is averaged over the trailing measurement window from
    ground-truth crank travel.
    """
    rpms = []
    for power in powers:
        cfg = LoopConfig(fs_hz=fs_hz, duration_s=settle_s + measure_s)
        loop = ClosedLoop(cfg, params=params, stim_configs=stim_configs,
                          device=MockStimulator(log_maxlen=4))
        loop.power_override = float(power)
        loop.allow_rekick = False
        n_settle = int(round(settle_s * fs_hz))
        n_measure = int(round(measure_s * fs_hz))
        for _ in range(n_settle):
            loop.step_once()
        mark = loop.plant.unwrapped_deg
        for _ in range(n_measure):
            loop.step_once()
        rpms.append((loop.plant.unwrapped_deg - mark) / 360.0 / measure_s * 60.0)
    return rpms


@dataclass(frozen=True)
class CountLossRow:
    fs_hz: float
    rpm: float
    theoretical_counts: int
    observed_mean: float
    observed_min: int
    revolutions: int


def count_loss_experiment(fs_list: Sequence[float], rpm_list: Sequence[float],
                          cpr: int = 256, n_revs: int = 10) -> list[CountLossRow]:
    """Poll a constant-cadence crank at each fs and tally counts per revolution."""
    if not fs_list or not rpm_list:
        raise ValueError("fs_list and rpm_list must be non-empty")
    rows = []
    for fs in fs_list:
        for rpm in rpm_list:
            if rpm <= 0:
                rows.append(CountLossRow(fs, rpm, 4 * cpr, math.nan, 0, 0))
                continue
            duration = (n_revs + 1.5) * 60.0 / rpm
            n = int(math.ceil(duration * fs))
            theta = 360.0 * rpm / 60.0 * np.arange(n) / fs
            a, b, z = sample_lines(theta, cpr, latch_index=True)
            state = EncoderState(cpr=cpr)
            prev = QuadState(int(a[0]), int(b[0]), int(z[0]))
            ingest_lines(state, prev, a[1:], b[1:], z[1:])
            counts = [r.count_at_reset for r in state.rev_history[:n_revs]]
            rows.append(CountLossRow(fs, rpm, 4 * cpr,
                                     float(np.mean(counts)), int(min(counts)),
                                     len(counts)))
    return rows


@dataclass
class ConvergenceResult:
    setpoint_rpm: float
    status: Status
    final_power_pct: float
    settle_time_s: float
    records: list[tuple[float, float, float, float, float, str]]


def convergence_experiment(setpoints: Sequence[float], config: LoopConfig,
                           params: Optional[PlantParams] = None,
                           gains: Optional[ControllerGains] = None,
                           stim_configs: Optional[Sequence[ChannelConfig]] = None
                           ) -> list[ConvergenceResult]:
    """Closed-loop run per setpoint from rest; classify the outcome."""
    results = []
    for sp in setpoints:
        loop = ClosedLoop(config, params=params, gains=gains,
                          stim_configs=stim_configs,
                          device=MockStimulator(log_maxlen=4))
        loop.setpoint_rpm = float(sp)
        run_offline(loop)
        history = [(t, err, power) for t, _, _, err, power, _ in loop.records]
        status = ctl.convergence_status(history, config.eps_rpm, config.hold_s)
        # Average the reported power over a window long enough to cancel
        # the rider's effort oscillation, not just the convergence hold.
        win = max(config.hold_s, 30.0)
        tail = [p for t, _, p in history if t >= history[-1][0] - win]
        final_power = float(np.mean(tail))
        settle = math.nan
        for t, _, _, _, _, st in loop.records:
            if st == Status.CONVERGED.value:
                settle = t
                break
        results.append(ConvergenceResult(float(sp), status, final_power,
                                         settle, loop.records))
    return results


# ---------------------------------------------------------------------------
# CSV emission (stable schemas, no timestamps: reruns must be byte-identical)
# ---------------------------------------------------------------------------

def write_convergence_csv(path, records: Sequence[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "setpoint_rpm", "measured_rpm", "power_pct", "status"])
        for t, sp, meas, _err, power, status in records:
            meas_s = "" if math.isnan(meas) else f"{meas:.6f}"
            w.writerow([f"{t:.6f}", f"{sp:g}", meas_s, f"{power:.6f}", status])


def write_summary_csv(path, results: Sequence[ConvergenceResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["setpoint_rpm", "status", "final_power_pct", "settle_time_s"])
        for r in results:
            settle = "" if math.isnan(r.settle_time_s) else f"{r.settle_time_s:.2f}"
            w.writerow([f"{r.setpoint_rpm:g}", r.status.value,
                        f"{r.final_power_pct:.3f}", settle])


def write_count_loss_csv(path, rows: Sequence[CountLossRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fs_hz", "rpm", "theoretical_counts",
                    "observed_counts_mean", "observed_counts_min"])
        for r in rows:
            mean_s = "" if math.isnan(r.observed_mean) else f"{r.observed_mean:.2f}"
            w.writerow([f"{r.fs_hz:g}", f"{r.rpm:g}", r.theoretical_counts,
                        mean_s, r.observed_min if r.revolutions else ""])


def write_paced_metrics_csv(path, rows: Sequence[tuple[float, LoopMetrics]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fs_hz", "requested", "executed", "overruns", "wall_time_s"])
        for fs, m in rows:
            w.writerow([f"{fs:g}", m.requested_samples, m.executed_samples,
                        m.overruns, f"{m.wall_time_s:.4f}"])


def write_map_csv(path, sweep: Sequence[tuple[float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["power_pct", "steady_rpm"])
        for power, rpm in sweep:
            w.writerow([f"{power:g}", f"{rpm:.4f}"])
