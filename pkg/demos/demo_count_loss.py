#!/usr/bin/env python3
"""Count loss under polled sampling: the rig's central pathology.

A 256-line quadrature encoder produces 1024 edges per revolution. Polling
below the edge rate cannot see them all: counts alias away, and deep
aliasing can even run the decoded tally backwards. This sweep drives a
constant-cadence crank across six polling rates and prints what survives.
"""

from pathlib import Path

from fescycle.loop import count_loss_experiment, write_count_loss_csv

OUT = Path("runs/demo_count_loss")
FREQS = (100.0, 500.0, 1000.0, 2000.0, 3000.0, 6000.0)
RPMS = (30.0, 60.0, 90.0)


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    rows = count_loss_experiment(FREQS, RPMS)
    write_count_loss_csv(OUT / "count_loss.csv", rows)

    print("counts per revolution (true: 1024), by polling rate and cadence")
    print(f"{'fs [Hz]':>8} | " + " | ".join(f"{r:>6g} RPM" for r in RPMS))
    for fs in FREQS:
        cells = []
        for rpm in RPMS:
            row = next(r for r in rows if r.fs_hz == fs and r.rpm == rpm)
            edge_rate = 1024.0 * rpm / 60.0
            mark = " " if fs >= edge_rate else "*"
            cells.append(f"{row.observed_mean:>9.1f}{mark}")
        print(f"{fs:>8g} | " + " | ".join(cells))
    print("\n* = polling below the edge rate; counts alias away, and a")
    print("    negative tally means the alias sequence ran the decoder")
    print("    backwards. At 2 kHz and up every edge is caught.")
    print(f"table written to {OUT}/count_loss.csv")


if __name__ == "__main__":
    main()
