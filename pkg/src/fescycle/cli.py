"""Command-line front end: calibration, experiments to CSV, live serving.

Every command writes a RunManifest JSON beside its outputs, so a results
directory is self-describing and a run can be repeated from the manifest
alone.  All randomness flows from the single --seed flag; offline outputs
are pure functions of (command, config, seed) and reruns are
byte-identical.  Human-readable summaries go to stdout, machine-readable
output only to files.
"""

from __future__ import annotations

import argparse
import json
import math
import subprocess
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .controller import ControllerGains
from .loop import (
    ClosedLoop,
    LoopConfig,
    Mode,
    convergence_experiment,
    count_loss_experiment,
    run_paced,
    steady_state_map,
    write_convergence_csv,
    write_count_loss_csv,
    write_map_csv,
    write_paced_metrics_csv,
    write_summary_csv,
)
from .plant import DEFAULT_TARGETS, CalibrationError, PlantParams, calibrate_to_paper

# Fig. 6-analog sampling study: the six polling rates under test, and the
# cadence grid they are crossed with.
STUDY_FREQS_HZ = (100.0, 500.0, 1000.0, 2000.0, 3000.0, 6000.0)
STUDY_RPMS = (30.0, 60.0, 90.0)
SWEEP_SETPOINTS = (30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0)


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility record written alongside every command's outputs."""

    command: str
    config_paths: dict[str, Optional[str]]
    seed: int
    out_dir: str
    version: str


def describe_version() -> str:
    """Package version, extended with the git description when available."""
    for parent in Path(__file__).resolve().parents:
        if (parent / ".git").exists():
            probe = subprocess.run(
                ["git", "describe", "--always", "--dirty"],
                cwd=parent, capture_output=True, text=True)
            if probe.returncode == 0:
                return f"v{__version__}-g{probe.stdout.strip()}"
            break
    return f"v{__version__}"


def write_manifest(out_dir: Path, command: str,
                   config_paths: dict[str, Optional[str]], seed: int) -> Path:
    manifest = RunManifest(command=command, config_paths=config_paths,
                           seed=seed, out_dir=str(out_dir),
                           version=describe_version())
    path = out_dir / f"{command}_manifest.json"
    with open(path, "w") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# Config file I/O
# ---------------------------------------------------------------------------

def write_plant_params(params: PlantParams, path) -> None:
    with open(path, "w") as fh:
        json.dump(asdict(params), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_plant_params(path) -> PlantParams:
    with open(path) as fh:
        payload = json.load(fh)
    return PlantParams(**payload)


def read_targets(path) -> tuple[tuple[float, float], ...]:
    """Targets file: a list of [steady_rpm, power_pct] pairs, bare or under
    a "targets" key."""
    with open(path) as fh:
        payload = json.load(fh)
    rows = payload["targets"] if isinstance(payload, dict) else payload
    return tuple((float(rpm), float(power)) for rpm, power in rows)


def _csv_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _ensure_out_dir(args) -> Path:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_calibrate(args) -> int:
    out_dir = _ensure_out_dir(args)
    if args.targets is not None:
        try:
            targets = read_targets(args.targets)
        except FileNotFoundError:
            print(f"targets file not found: {args.targets}", file=sys.stderr)
            return 2
    else:
        targets = DEFAULT_TARGETS

    def map_fn(params: PlantParams, powers: Sequence[float]) -> list[float]:
        return steady_state_map(params, powers)

    try:
        params, sweep = calibrate_to_paper(map_fn, targets=targets)
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        if exc.sweep:
            print("power_pct  steady_rpm", file=sys.stderr)
            for power, rpm in exc.sweep:
                print(f"{power:9.1f}  {rpm:10.2f}", file=sys.stderr)
        return 1

    params_path = Path(args.params) if args.params \
        else out_dir / "plant_params.json"
    write_plant_params(params, params_path)
    map_path = out_dir / "steady_state_map.csv"
    write_map_csv(map_path, sweep)
    write_manifest(out_dir, "calibrate",
                   {"targets": args.targets, "params": str(params_path)},
                   args.seed)

    print(f"calibrated plant written to {params_path}")
    print(f"steady-state map written to {map_path}")
    print("target operating points:")
    for rpm_t, power_t in targets:
        print(f"  {rpm_t:g} RPM at {power_t:g}% power")
    return 0


def cmd_sweep(args) -> int:
    out_dir = _ensure_out_dir(args)
    if args.params is not None:
        try:
            params = read_plant_params(args.params)
        except FileNotFoundError:
            print(f"params file not found: {args.params} "
                  "(run `fescycle calibrate` first)", file=sys.stderr)
            return 2
    else:
        params = PlantParams()

    setpoints = args.setpoints
    config = LoopConfig(fs_hz=args.fs_hz, duration_s=args.duration_s,
                        seed=args.seed)
    results = convergence_experiment(setpoints, config, params=params)

    for res in results:
        write_convergence_csv(out_dir / f"convergence_{res.setpoint_rpm:g}.csv",
                              res.records)
    summary_path = out_dir / "summary.csv"
    write_summary_csv(summary_path, results)
    write_manifest(out_dir, "sweep", {"params": args.params}, args.seed)

    print(f"{'setpoint_rpm':>12}  {'status':<10}  {'final_power_pct':>15}  "
          f"{'settle_s':>8}")
    for res in results:
        settle = "-" if math.isnan(res.settle_time_s) \
            else f"{res.settle_time_s:.1f}"
        print(f"{res.setpoint_rpm:>12g}  {res.status.value:<10}  "
              f"{res.final_power_pct:>15.1f}  {settle:>8}")
    print(f"summary written to {summary_path}")
    return 0


def cmd_sampling_study(args) -> int:
    out_dir = _ensure_out_dir(args)
    freqs = args.fs_hz
    rpms = args.rpms
    if not freqs or not rpms:
        print("fs and rpm lists must be non-empty", file=sys.stderr)
        return 2

    rows = count_loss_experiment(freqs, rpms)
    count_path = out_dir / "count_loss.csv"
    write_count_loss_csv(count_path, rows)

    # Table 2 analog for this host: pace the full loop at each rate and
    # count the slots it could not serve.
    paced = []
    for fs in freqs:
        config = LoopConfig(fs_hz=fs, duration_s=args.duration_s,
                            mode=Mode.PACED, seed=args.seed)
        loop = ClosedLoop(config, params=PlantParams())
        loop.setpoint_rpm = 40.0
        paced.append((fs, run_paced(loop)))
    paced_path = out_dir / "paced_metrics.csv"
    write_paced_metrics_csv(paced_path, paced)
    write_manifest(out_dir, "sampling_study", {}, args.seed)

    print(f"{'fs_hz':>7}  {'rpm':>5}  {'counts/rev':>10}  {'of':>5}")
    for row in rows:
        mean = "-" if math.isnan(row.observed_mean) \
            else f"{row.observed_mean:.1f}"
        print(f"{row.fs_hz:>7g}  {row.rpm:>5g}  {mean:>10}  "
              f"{row.theoretical_counts:>5}")
    print(f"{'fs_hz':>7}  {'requested':>9}  {'executed':>8}  {'overruns':>8}")
    for fs, m in paced:
        print(f"{fs:>7g}  {m.requested_samples:>9}  {m.executed_samples:>8}  "
              f"{m.overruns:>8}")
    print(f"count-loss table written to {count_path}")
    print(f"paced metrics written to {paced_path}")
    return 0


def cmd_serve(args) -> int:
    # Imported here so the CSV-only commands work without the websockets
    # dependency installed.
    from .server import TelemetryServer

    out_dir = _ensure_out_dir(args)
    if args.params is not None:
        try:
            params = read_plant_params(args.params)
        except FileNotFoundError:
            print(f"params file not found: {args.params}", file=sys.stderr)
            return 2
    else:
        params = PlantParams()

    config = LoopConfig(fs_hz=args.fs_hz, duration_s=math.inf,
                        mode=Mode.PACED, seed=args.seed)
    server = TelemetryServer(config, params=params,
                             host=args.host, port=args.port)
    try:
        port = server.start()
    except OSError as exc:
        print(f"could not bind {args.host}:{args.port}: {exc}",
              file=sys.stderr)
        return 1
    write_manifest(out_dir, "serve", {"params": args.params}, args.seed)
    print(f"serving ws://{args.host}:{port} (Ctrl-C to stop)", flush=True)
    try:
        server.run_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fescycle",
        description="Closed-loop FES cycling rig: experiments and serving.")
    parser.add_argument("--version", action="version",
                        version=describe_version())
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0,
                       help="seed for every random draw in the run")
        p.add_argument("--out-dir", default="runs",
                       help="directory for CSVs and the run manifest")

    p = sub.add_parser("calibrate",
                       help="tune plant parameters to the target "
                            "power/cadence operating points")
    p.add_argument("targets", nargs="?", default=None,
                   help="JSON file of [steady_rpm, power_pct] target pairs")
    p.add_argument("--params", default=None,
                   help="where to write the calibrated plant parameters")
    common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sweep",
                       help="closed-loop convergence run per setpoint")
    p.add_argument("--setpoints", type=_csv_floats,
                   default=list(SWEEP_SETPOINTS),
                   help="comma-separated setpoints in RPM")
    p.add_argument("--fs-hz", type=float, default=100.0,
                   help="control/sampling rate")
    p.add_argument("--duration-s", type=float, default=120.0,
                   help="simulated seconds per setpoint")
    p.add_argument("--params", default=None,
                   help="calibrated plant parameters (default: built-ins)")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sampling-study",
                       help="count-loss table and paced-loop overrun "
                            "metrics per sampling rate")
    p.add_argument("--fs-hz", type=_csv_floats, default=list(STUDY_FREQS_HZ),
                   help="comma-separated sampling rates")
    p.add_argument("--rpms", type=_csv_floats, default=list(STUDY_RPMS),
                   help="comma-separated cadences for the count-loss table")
    p.add_argument("--duration-s", type=float, default=2.0,
                   help="paced wall seconds measured per sampling rate")
    common(p)
    p.set_defaults(func=cmd_sampling_study)

    p = sub.add_parser("serve",
                       help="run the paced loop and serve telemetry/control "
                            "over a WebSocket")
    p.add_argument("--port", type=int, default=8765,
                   help="TCP port (0 picks a free one)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--fs-hz", type=float, default=100.0)
    p.add_argument("--params", default=None,
                   help="calibrated plant parameters (default: built-ins)")
    common(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
