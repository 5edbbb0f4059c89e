#!/usr/bin/env python3
"""Closed-loop convergence: one setpoint below the floor, one reachable,
one beyond the rig's ceiling.

The loop kick-starts the crank, hands over at a fixed shelf power while
the rev-averaged cadence estimate settles, then the integral law takes
the error. 40 RPM converges and hunts around zero error; 30 RPM sits
below the minimum sustainable cadence and never converges; 80 RPM pins
the power at 100% and stays there (saturated).
"""

from pathlib import Path

from fescycle.loop import (
    LoopConfig,
    convergence_experiment,
    write_convergence_csv,
    write_summary_csv,
)

OUT = Path("runs/demo_convergence")


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    config = LoopConfig(fs_hz=100.0, duration_s=60.0, seed=0)
    results = convergence_experiment([30.0, 40.0, 80.0], config)

    print("setpoint  outcome     final power  what happened")
    stories = {
        30.0: "below the stiction/recruitment floor, cadence collapses",
        40.0: "converges, then hunts in a band around zero error",
        80.0: "beyond the rig ceiling, power pins at 100%",
    }
    for res in results:
        print(f"{res.setpoint_rpm:8g}  {res.status.value:<10}  "
              f"{res.final_power_pct:10.1f}%  {stories[res.setpoint_rpm]}")
        write_convergence_csv(
            OUT / f"trace_{res.setpoint_rpm:g}.csv", res.records)
    write_summary_csv(OUT / "summary.csv", results)

    # Show the hunt: the 40 RPM error trace never parks on zero.
    rec40 = next(r.records for r in results if r.setpoint_rpm == 40.0)
    tail = [(t, err) for t, _, _, err, _, _ in rec40 if t >= 40.0]
    signs = [e > 0 for _, e in tail if e != 0.0]
    crossings = sum(1 for a, b in zip(signs, signs[1:]) if a != b)
    worst = max(abs(e) for _, e in tail)
    print(f"\n40 RPM, final 20 s: {crossings} zero crossings, "
          f"worst |error| {worst:.2f} RPM")
    print(f"traces written under {OUT}/")


if __name__ == "__main__":
    main()
