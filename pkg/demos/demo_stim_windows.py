#!/usr/bin/env python3
"""Stimulation geometry walkthrough: who fires where, and what the
safety layer refuses.

Sweeps a full crank revolution at a fixed power level, prints the set
of active channels in each firing region, shows how commands scale with
power, and finally demonstrates the hard ceilings of the mock
stimulator.
"""

from fescycle.stim import (
    MockStimulator,
    SafetyViolation,
    StimCommand,
    build_commands,
    default_channel_configs,
    in_window,
)

configs = default_channel_configs()


def active_at(theta: float) -> list[str]:
    return [c.id.name for c in configs if in_window(theta, c)]


def main() -> None:
    print("Active channels over one revolution (power fixed at 60%):")
    prev: list[str] = []
    for theta in range(0, 360):
        names = active_at(float(theta))
        if names != prev:
            label = " ".join(names) if names else "(dead gap)"
            print(f"  from {theta:3d} deg: {label}")
            prev = names
    print("\nCommand table at 350 deg (right hamstring region):")
    print(f"{'ch':>3}  {'mA':>5}  {'us':>5}  {'Hz':>3}")
    for power in (0.0, 25.0, 50.0, 75.0, 100.0):
        cmds = build_commands(350.0, power, configs)
        live = [c for c in cmds if c.current_ma > 0]
        print(f"  power {power:>5g}%:")
        for c in live:
            print(f"{c.id.name:>5}  {c.current_ma:>5.0f}  "
                  f"{c.pulse_width_us:>5.0f}  {c.frequency_hz:>3.0f}")
        if not live:
            print("    (all channels idle)")

    print("\nSafety layer:")
    stim = MockStimulator()
    stim.apply(build_commands(350.0, 100.0, configs))
    print(f"  full-power frame accepted; {stim.frames_applied} frame logged")
    rq = configs[3]
    hot = StimCommand(id=rq.id, current_ma=130.0, pulse_width_us=200.0)
    try:
        stim.apply([hot])
    except SafetyViolation as exc:
        print(f"  130 mA refused: channel {exc.channel.name}, "
              f"field {exc.field!r}, value {exc.value:g}")
    print(f"  frames logged afterwards: still {stim.frames_applied}")


if __name__ == "__main__":
    main()
