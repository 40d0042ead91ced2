"""Command-line interface: run scenarios, sweeps, trace generation, and
config validation.

Exit codes: 0 success, 1 validation error, 2 runtime invariant breach.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import ScenarioConfig, ValidationError, load_config, run_scenario
from .engine import RngRegistry
from .metrics import ConservationError
from .mobility import SyntheticRouteSpec, generate_routes, save_traces
from .sweep import SweepSpec, format_rows, run_sweep

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INVARIANT = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lorahop",
        description="Trace-driven simulator of opportunistic data forwarding "
                    "in mobile LoRaWAN networks with static gateways.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario config")
    p_run.add_argument("config", help="scenario config JSON file")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default=None, help="output root (default: config output_dir)")

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep spec")
    p_sweep.add_argument("spec", help="sweep spec JSON file")
    p_sweep.add_argument("--parallel", type=int, default=1, metavar="N")
    p_sweep.add_argument("--out", default=None, help="output root for per-run artifacts")
    p_sweep.add_argument("--format", choices=["table", "delimited"], default="table")

    p_gen = sub.add_parser("gen-traces", help="generate mobility traces from route specs")
    p_gen.add_argument("routespec", help="JSON file with a list of route specs")
    p_gen.add_argument("-o", "--output", required=True, help="trace file to write")
    p_gen.add_argument("--seed", type=int, default=1)

    p_val = sub.add_parser("validate", help="validate a scenario config")
    p_val.add_argument("config", help="scenario config JSON file")
    return parser


def _default_out(cli_out: str | None) -> str | None:
    return cli_out if cli_out is not None else os.environ.get("LORAHOP_OUT")


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        report, run_dir, problems = run_scenario(cfg, out_root=_default_out(args.out))
    except ValidationError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConservationError as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    if run_dir:
        print(f"artifacts: {run_dir}", file=sys.stderr)
    if problems:
        for p in problems:
            print(f"invariant breach: {p}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        with open(args.spec, "r", encoding="utf-8") as fh:
            raw = json.load(fh)

        def base_loader(path):
            base_path = path if os.path.isabs(path) else os.path.join(
                os.path.dirname(os.path.abspath(args.spec)), path)
            with open(base_path, "r", encoding="utf-8") as bfh:
                return json.load(bfh)

        spec = SweepSpec.from_dict(raw, base_loader=base_loader)
        rows = run_sweep(spec, parallelism=args.parallel, out_root=_default_out(args.out))
    except ValidationError as exc:
        for err in exc.errors:
            print(f"sweep error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"sweep error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(format_rows(rows, spec.axes, style=args.format), end="")
    failed = [r for r in rows if r.status != "ok"]
    if failed:
        print(f"{len(failed)} of {len(rows)} runs failed", file=sys.stderr)
    breached = [r for r in rows if r.report and r.report.get("audit_problems")]
    if breached:
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_gen_traces(args) -> int:
    try:
        with open(args.routespec, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        specs_raw = raw["synthetic"] if isinstance(raw, dict) else raw
        rng = RngRegistry(args.seed)
        traces = []
        for i, s in enumerate(specs_raw):
            spec = SyntheticRouteSpec(
                route_polyline=[tuple(map(float, p)) for p in s["route_polyline"]],
                speed=float(s["speed"]),
                headway=float(s["headway"]),
                service_window=tuple(map(float, s["service_window"])),
                vehicle_count=int(s["vehicle_count"]),
                id_prefix=s.get("id_prefix", f"r{i}_"),
            )
            traces.extend(generate_routes(spec, rng.stream(f"route-{i}")))
    except (FileNotFoundError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"routespec error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    save_traces(traces, args.output)
    print(f"wrote {len(traces)} traces to {args.output}", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        load_config(args.config)
    except ValidationError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print("config ok")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return {"run": cmd_run, "sweep": cmd_sweep,
            "gen-traces": cmd_gen_traces, "validate": cmd_validate}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
