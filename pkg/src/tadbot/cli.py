"""Operator command line: gateway, device fleet, sweeps, logs, summaries.

Exit codes are a stable contract: 0 success, 1 runtime failure, 2 usage
error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import threading
from pathlib import Path

from . import experiment as xp
from .actuation import ActuationConfig
from .analysis import SweepError, sweep_characterization, sweep_to_csv
from .gateway import Gateway, GatewayConfig

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tadbot",
        description="Simulator-backed command and control for robotic tadpoles.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("serve", help="run the gateway service")
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--listen", help="HTTP host:port (overrides config)")
    p.add_argument("--device-listen", help="device TCP host:port")
    p.add_argument("--data-dir", type=Path, help="state directory")
    p.add_argument("--webhook", help="motion notification webhook URL")
    p.add_argument("--threshold", type=float, help="motion score threshold")

    p = sub.add_parser("sim-device", help="run a simulated device against a gateway")
    p.add_argument("--device-id", required=True)
    p.add_argument("--gateway", required=True, help="device port as host:port")
    p.add_argument("--tick", type=float, default=0.01, help="tick length in seconds")
    p.add_argument("--virtual-time", action="store_true",
                   help="free-run the clock instead of tracking wall time")

    p = sub.add_parser("sweep", help="run a frequency/amplitude characterization")
    p.add_argument("--fmin", type=float, required=True)
    p.add_argument("--fmax", type=float, required=True)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.0, help="marker noise std in mm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=2.0, help="seconds per frequency")
    p.add_argument("--out", type=Path, help="CSV output path (default stdout)")

    p = sub.add_parser("replay", help="validate and print a care-event log")
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--trial-id", help="only events for this trial")

    p = sub.add_parser("summarize", help="per-phase care summary for a trial")
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--trial-id", required=True)
    p.add_argument("--trial-file", type=Path,
                   help="trial JSON (defaults to <data-dir>/trials.json lookup)")
    p.add_argument("--data-dir", type=Path, help="gateway data dir with trials.json")
    p.add_argument("--csv", type=Path, help="also write the summary as CSV")

    p = sub.add_parser("export", help="export care events to CSV")
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--trial-id", required=True)
    p.add_argument("--trial-file", type=Path)
    p.add_argument("--data-dir", type=Path)
    p.add_argument("--out", type=Path, help="CSV output path (default stdout)")

    return parser


def cmd_sweep(args) -> int:
    if args.fmin > args.fmax:
        print(f"error: --fmin {args.fmin} exceeds --fmax {args.fmax}", file=sys.stderr)
        return EXIT_USAGE
    if args.step <= 0:
        print(f"error: --step must be > 0, got {args.step}", file=sys.stderr)
        return EXIT_USAGE
    n = int(round((args.fmax - args.fmin) / args.step)) + 1
    freqs = [args.fmin + k * args.step for k in range(n) if args.fmin + k * args.step <= args.fmax + 1e-9]
    try:
        results = sweep_characterization(ActuationConfig(), freqs,
                                         duration_s=args.duration,
                                         noise_std_mm=args.noise, seed=args.seed)
    except SweepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    csv_text = sweep_to_csv(results)
    if args.out:
        args.out.write_text(csv_text)
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


def _load_trial(args) -> xp.Trial:
    if args.trial_file:
        import json

        obj = json.loads(args.trial_file.read_text())
        trial = xp.Trial.from_json(obj)
        if trial.trial_id != args.trial_id:
            raise ValueError(f"trial file holds {trial.trial_id!r}, "
                             f"not {args.trial_id!r}")
        return trial
    if args.data_dir:
        import json

        path = args.data_dir / "trials.json"
        for obj in json.loads(path.read_text()):
            trial = xp.Trial.from_json(obj)
            if trial.trial_id == args.trial_id:
                return trial
        raise ValueError(f"trial {args.trial_id!r} not found in {path}")
    raise ValueError("need --trial-file or --data-dir to resolve the trial")


def cmd_replay(args) -> int:
    if not args.log.exists():
        print(f"error: no such log {args.log}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        for ev in xp.read_events(args.log):
            if args.trial_id and ev.trial_id != args.trial_id:
                continue
            print(ev.to_json_line())
    except xp.LogParseError as exc:
        print(f"error: corrupt log {args.log}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_summarize(args) -> int:
    if not args.log.exists():
        print(f"error: no such log {args.log}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        trial = _load_trial(args)
        events = list(xp.read_events(args.log))
    except xp.LogParseError as exc:
        print(f"error: corrupt log {args.log}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    summary = xp.summarize(events, trial)

    header = ["kind"] + [f"phase{i + 1}:{p.stimulus.value}"
                         for i, p in enumerate(trial.phases)] + ["unphased"]
    rows = []
    for kind in xp.CareKind:
        rows.append([kind.value] + [str(c[kind]) for c in summary.phase_counts]
                    + [str(summary.unphased[kind])])
    rows.append(["begging_activations"]
                + [str(n) for n in summary.begging_activations] + ["-"])
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    for row in [header] + rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))

    if args.csv:
        lines = ["kind,phase1,phase2,phase3,unphased"]
        for kind in xp.CareKind:
            lines.append(",".join([kind.value]
                                  + [str(c[kind]) for c in summary.phase_counts]
                                  + [str(summary.unphased[kind])]))
        args.csv.write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_export(args) -> int:
    if not args.log.exists():
        print(f"error: no such log {args.log}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        trial = _load_trial(args)
        events = [ev for ev in xp.read_events(args.log)
                  if ev.trial_id == args.trial_id]
    except xp.LogParseError as exc:
        print(f"error: corrupt log {args.log}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    csv_text = xp.events_to_csv(events, trial)
    if args.out:
        args.out.write_text(csv_text)
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


def cmd_serve(args) -> int:
    from .server import run_server

    config = GatewayConfig.from_file(args.config) if args.config else GatewayConfig()
    config.apply_env()
    if args.listen:
        config.listen = args.listen
    if args.device_listen:
        config.device_listen = args.device_listen
    if args.data_dir:
        config.data_dir = args.data_dir
    if args.webhook:
        config.webhook_url = args.webhook
    if args.threshold is not None:
        config.motion_threshold = args.threshold
    run_server(Gateway(config))
    return EXIT_OK


def cmd_sim_device(args) -> int:
    from .server import parse_listen
    from .simdevice import run_device_client

    stop = threading.Event()
    try:
        run_device_client(args.device_id, parse_listen(args.gateway),
                          tick_s=args.tick, virtual_time=args.virtual_time,
                          stop_event=stop)
    except KeyboardInterrupt:
        stop.set()
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "serve": cmd_serve,
        "sim-device": cmd_sim_device,
        "sweep": cmd_sweep,
        "replay": cmd_replay,
        "summarize": cmd_summarize,
        "export": cmd_export,
    }
    try:
        return handlers[args.subcommand](args)
    except KeyboardInterrupt:
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
