"""Quadrature crank encoder decoding and cadence estimation.

Decodes polled A/B/Z line samples from a magnetic incremental encoder into
a count-since-index, a crank angle and an RPM estimate.  Counting is 4x
(every line edge counts), the index pulse Z resets the count once per
revolution, and per-revolution timing feeds three cadence models: the
bare last-revolution estimate and 2- or 3-revolution moving averages.

Polling is lossy by nature: when the crank moves more than one quadrature
phase per sample the decoder sees an ambiguous double-bit change.  Those
samples are tallied as invalid transitions (they carry no direction
information) instead of raising, so that count-loss behaviour can be
measured rather than hidden.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

# Forward phase sequence for increasing angle: (a,b) = 00 -> 01 -> 11 -> 10.
# Indexed by (prev_ab << 2) | next_ab with ab = (a << 1) | b.
# Double-bit changes are direction-ambiguous; they contribute 0 counts and
# are flagged through _INVALID_TRANSITION.
_DELTAS = np.array(
    [0, +1, -1, 0,
     -1, 0, 0, +1,
     +1, 0, 0, -1,
     0, -1, +1, 0], dtype=np.int8)
_INVALID = np.zeros(16, dtype=bool)
_INVALID[[0b0011, 0b0110, 0b1001, 0b1100]] = True


@dataclass(frozen=True)
class QuadState:
    """One polled sample of the encoder lines (levels are 0 or 1)."""

    a: int
    b: int
    z: int

    def __post_init__(self):
        for name in ("a", "b", "z"):
            v = getattr(self, name)
            if v not in (0, 1):
                raise ValueError(f"line {name} must be 0 or 1, got {v!r}")

    @property
    def ab(self) -> int:
        return (self.a << 1) | self.b


class Revolution(NamedTuple):
    """One completed index-to-index interval."""

    samples: int
    count_at_reset: int
    invalid_transitions: int


@dataclass
class EncoderState:
    """Mutable decoder state: count since index, revolution history, zero offset.

    ``cpr`` is the number of encoder lines per revolution; 4x decoding gives
    ``4 * cpr`` counts per revolution.  ``zero_offset_deg`` places 0 degrees at
    the right crank arm pointing directly forward.
    """

    cpr: int = 256
    count: int = 0
    zero_offset_deg: float = 0.0
    rev_history: list[Revolution] = field(default_factory=list)
    samples_since_index: int = 0
    invalid_transitions: int = 0
    invalid_in_rev: int = 0
    index_synced: bool = False

    def __post_init__(self):
        if self.cpr <= 0:
            raise ValueError("cpr must be a positive integer")

    @property
    def counts_per_rev(self) -> int:
        return 4 * self.cpr


class RpmModel(Enum):
    """Cadence estimators over the revolution history."""

    INSTANTANEOUS = 1
    AVG2 = 2
    AVG3 = 3

    @property
    def window(self) -> int:
        return self.value


def decode_transition(prev: QuadState, nxt: QuadState) -> Optional[int]:
    """Count delta for one A/B transition: +1 forward, -1 reverse, 0 no change.

    Returns None for a double-bit change (both lines flipped within one
    sample) -- an aliasing event whose direction is undecidable.
    """
    idx = (prev.ab << 2) | nxt.ab
    if _INVALID[idx]:
        return None
    return int(_DELTAS[idx])


def ingest_sample(state: EncoderState, prev: QuadState, nxt: QuadState) -> EncoderState:
    """Advance the decoder by one polled sample.

    A Z rising edge closes the current revolution: the running
    (samples, count, invalid) triple is appended to ``rev_history`` and the
    counters reset.  The first Z edge ever seen only synchronizes (the
    interval before it did not start at the index, so its duration is
    meaningless).
    """
    state.samples_since_index += 1
    delta = decode_transition(prev, nxt)
    if delta is None:
        state.invalid_transitions += 1
        state.invalid_in_rev += 1
    else:
        state.count += delta
    if prev.z == 0 and nxt.z == 1:
        if state.index_synced:
            state.rev_history.append(
                Revolution(state.samples_since_index, state.count, state.invalid_in_rev))
        else:
            state.index_synced = True
        state.count = 0
        state.samples_since_index = 0
        state.invalid_in_rev = 0
    return state


def angle_deg(state: EncoderState) -> float:
    """Decoded crank angle in [0, 360): count scaled to degrees plus zero offset."""
    return (state.count / state.counts_per_rev * 360.0 + state.zero_offset_deg) % 360.0


def estimate_rpm(state: EncoderState, model: RpmModel, fs_hz: float) -> Optional[float]:
    """Cadence from the revolution history, or None before the first revolution.

    Revolution durations are samples/fs; the models average the last one,
    two or three durations.  The running estimate is additionally capped by
    the in-progress revolution: if the current index-to-index interval has
    already lasted d_open seconds the cadence cannot exceed 60/d_open, which
    makes the estimate decay instead of going stale when the crank stalls.
    """
    if fs_hz <= 0:
        raise ValueError("fs_hz must be positive")
    if not state.rev_history:
        return None
    k = min(model.window, len(state.rev_history))
    recent = state.rev_history[-k:]
    mean_samples = sum(r.samples for r in recent) / k
    rpm = 60.0 * fs_hz / mean_samples
    if state.samples_since_index > 0:
        rpm = min(rpm, 60.0 * fs_hz / state.samples_since_index)
    return rpm


def estimate_angle_deg(state: EncoderState, model: RpmModel, fs_hz: float) -> float:
    """Best-estimate crank angle for gating decisions.

    Below the lossless sampling rate the raw count drifts badly within a
    revolution, while the index interval stays exactly measurable (the Z
    pulse is latched).  So once cadence is known the angle is dead-reckoned
    from time since the last index at the estimated cadence, the way a
    hardware-counted rig effectively behaves.  The stall bound inside
    estimate_rpm keeps the reckoned angle from wrapping ahead of a slowing
    crank; before the first completed revolution this falls back to the
    raw count angle.
    """
    rpm = estimate_rpm(state, model, fs_hz)
    if rpm is None:
        return angle_deg(state)
    frac = min(state.samples_since_index / fs_hz * rpm / 60.0, 1.0 - 1e-9)
    return (frac * 360.0 + state.zero_offset_deg) % 360.0


def expected_observed_counts(cpr: int, rpm: float, fs_hz: float) -> int:
    """Upper bound on decodable counts per revolution under polling.

    At most one count can register per poll, so the per-revolution count is
    capped by the smaller of the true edge count 4*cpr and the number of
    samples falling inside one revolution.
    """
    if cpr <= 0 or rpm <= 0 or fs_hz <= 0:
        raise ValueError("cpr, rpm and fs_hz must all be positive")
    return min(4 * cpr, int(np.floor(fs_hz * 60.0 / rpm)))


# ---------------------------------------------------------------------------
# Vectorized decoding and line synthesis (experiment-scale paths)
# ---------------------------------------------------------------------------

def decode_deltas(prev: QuadState, a: np.ndarray, b: np.ndarray
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized decode_transition over sampled line arrays.

    Returns (deltas, invalid_mask); invalid samples contribute delta 0.
    ``prev`` supplies the line state one sample before ``a[0]``/``b[0]``.
    """
    ab = ((np.asarray(a, dtype=np.uint8) << 1) | np.asarray(b, dtype=np.uint8))
    ab_prev = np.empty_like(ab)
    ab_prev[0] = prev.ab
    ab_prev[1:] = ab[:-1]
    idx = (ab_prev.astype(np.int16) << 2) | ab
    return _DELTAS[idx].astype(np.int64), _INVALID[idx]


def ingest_lines(state: EncoderState, prev: QuadState,
                 a: np.ndarray, b: np.ndarray, z: np.ndarray) -> QuadState:
    """Batch equivalent of repeated ingest_sample over line arrays.

    Mutates ``state`` exactly as the per-sample path would and returns the
    final line sample for chaining into the next batch.
    """
    n = len(a)
    if n == 0:
        return prev
    deltas, invalid = decode_deltas(prev, a, b)
    z = np.asarray(z, dtype=np.uint8)
    z_prev = np.empty_like(z)
    z_prev[0] = prev.z
    z_prev[1:] = z[:-1]
    rising = np.nonzero((z == 1) & (z_prev == 0))[0]

    cum_delta = np.cumsum(deltas)
    cum_inv = np.cumsum(invalid)
    base_d = base_i = 0
    base_s = 0
    count0, samples0, inv0 = state.count, state.samples_since_index, state.invalid_in_rev
    for r in rising:
        samples = samples0 + int(r) + 1 - base_s
        count = count0 + int(cum_delta[r]) - base_d
        inv = inv0 + int(cum_inv[r]) - base_i
        if state.index_synced:
            state.rev_history.append(Revolution(samples, count, inv))
        else:
            state.index_synced = True
        base_d, base_i, base_s = int(cum_delta[r]), int(cum_inv[r]), int(r) + 1
        count0 = samples0 = inv0 = 0
    state.count = count0 + int(cum_delta[-1]) - base_d
    state.samples_since_index = samples0 + n - base_s
    state.invalid_in_rev = inv0 + int(cum_inv[-1]) - base_i
    state.invalid_transitions += int(cum_inv[-1])
    return QuadState(int(a[-1]), int(b[-1]), int(z[-1]))


def quad_at_position(pos: int, cpr: int, index_high: bool = False) -> QuadState:
    """Line levels for an absolute position count (scalar plant-side helper)."""
    p = pos % (4 * cpr)
    phase = p & 3
    gray = phase ^ (phase >> 1)
    z = 1 if (p == 0 or index_high) else 0
    return QuadState((gray >> 1) & 1, gray & 1, z)


def sample_lines(theta_deg: np.ndarray, cpr: int, latch_index: bool = True
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Synthesize sampled A/B/Z line arrays from an unwrapped angle profile.

    The index pulse occupies the single count window at 0 degrees.  With
    ``latch_index`` the Z line is additionally held high for the first sample
    after any index crossing, mirroring hardware that latches the (short)
    physical pulse so polling cannot step over it; the A/B lines are always
    the raw sampled levels and do alias.
    """
    theta = np.asarray(theta_deg, dtype=np.float64)
    counts_per_rev = 4 * cpr
    pos_total = np.floor(theta / 360.0 * counts_per_rev).astype(np.int64)
    p = np.mod(pos_total, counts_per_rev)
    phase = (p & 3).astype(np.uint8)
    gray = phase ^ (phase >> 1)
    a = (gray >> 1) & 1
    b = gray & 1
    z = (p == 0)
    if latch_index:
        rev_id = np.floor_divide(pos_total, counts_per_rev)
        crossed = np.zeros_like(z)
        crossed[1:] = rev_id[1:] != rev_id[:-1]
        z = z | crossed
    return a.astype(np.uint8), b.astype(np.uint8), z.astype(np.uint8)


def write_rev_history_csv(state: EncoderState, path) -> None:
    """Dump the revolution history for offline inspection."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rev_index", "samples", "count_at_reset", "invalid_transitions"])
        for i, rev in enumerate(state.rev_history):
            w.writerow([i, rev.samples, rev.count_at_reset, rev.invalid_transitions])
