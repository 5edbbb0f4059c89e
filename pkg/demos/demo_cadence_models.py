#!/usr/bin/env python3
"""Cadence estimators under per-revolution jitter: why the loop uses Avg3.

A rider never pushes two revolutions identically. With 10% duration
jitter the last-revolution (instantaneous) estimate inherits the full
spread while the three-revolution average smooths it, at the cost of
lag. This script measures both against the underlying cadence.
"""

import numpy as np

from fescycle.encoder import (
    EncoderState,
    QuadState,
    RpmModel,
    estimate_rpm,
    ingest_lines,
    sample_lines,
)

FS = 6000.0
N_REVS = 100
JITTER = 0.10


def run(rpm: float, seed: int) -> dict[RpmModel, float]:
    rng = np.random.default_rng(seed)
    durations = 60.0 / rpm * (1.0 + JITTER * rng.standard_normal(N_REVS))
    durations = np.clip(durations, 0.3 * 60.0 / rpm, None)
    state = EncoderState(cpr=256)
    prev = None
    theta0 = 0.0
    est: dict[RpmModel, list[float]] = {
        RpmModel.INSTANTANEOUS: [], RpmModel.AVG2: [], RpmModel.AVG3: []}
    for d in durations:
        nk = max(4, int(round(d * FS)))
        theta = theta0 + 360.0 * np.arange(1, nk + 1) / nk
        if prev is None:
            theta = np.concatenate([[theta0], theta])
        a, b, z = sample_lines(theta, 256)
        if prev is None:
            prev = QuadState(int(a[0]), int(b[0]), int(z[0]))
            a, b, z = a[1:], b[1:], z[1:]
        prev = ingest_lines(state, prev, a, b, z)
        theta0 += 360.0
        if len(state.rev_history) >= 3:
            for model in est:
                est[model].append(estimate_rpm(state, model, FS))
    return {model: float(np.sqrt(np.mean((np.array(v) - rpm) ** 2)))
            for model, v in est.items()}


def main() -> None:
    print(f"RMSE vs commanded cadence, {N_REVS} revolutions, "
          f"{JITTER:.0%} duration jitter")
    print(f"{'cadence':>8}  {'instantaneous':>13}  {'avg2':>6}  {'avg3':>6}")
    for i, rpm in enumerate((30.0, 60.0, 90.0)):
        rmse = run(rpm, seed=500 + i)
        print(f"{rpm:>7g}   {rmse[RpmModel.INSTANTANEOUS]:>12.2f}  "
              f"{rmse[RpmModel.AVG2]:>6.2f}  {rmse[RpmModel.AVG3]:>6.2f}")
    print("\nAvg3 trades ~2.25 s of lag for the smoothest estimate; the")
    print("controller gains are sized around exactly that lag.")


if __name__ == "__main__":
    main()
