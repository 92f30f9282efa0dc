"""Command-line entry points: run, diff, ledger, serve.

Exit codes: 0 success, 1 assertion or diff failure, 2 usage/validation error.
"""

from __future__ import annotations

import argparse
import sys

from .gateway import GatewayConfigError
from .harness import ScenarioError, check_golden, load_scenario, run_scenario
from .trace import TraceFormatError, diff_traces, parse_jsonl


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    result = run_scenario(scenario, seed=args.seed)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(result.trace_jsonl())
    print(f"scenario={scenario.name} outcome={result.outcome} "
          f"t={result.world.now}ms records={len(result.trace)} "
          f"ledger={len(result.world.root.ledger)}")
    divergence = check_golden(result, scenario)
    if divergence is not None:
        print(divergence.describe(), file=sys.stderr)
        return 1
    if scenario.golden_trace is not None:
        print("golden trace matched")
    return 0


def _cmd_diff(args) -> int:
    traces = []
    for path in (args.left, args.right):
        with open(path, "r", encoding="utf-8") as fh:
            traces.append(parse_jsonl(fh.read()))
    divergence = diff_traces(traces[0], traces[1])
    if divergence is None:
        print("traces are identical")
        return 0
    print(divergence.describe())
    return 1


def _cmd_ledger(args) -> int:
    scenario = load_scenario(args.scenario)
    result = run_scenario(scenario, seed=args.seed)
    print(result.ledger_json())
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .gateway import create_app, load_gateway_config

    config = load_gateway_config(args.config)
    port = args.port if args.port is not None else config.port
    app = create_app(config)
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agent",
        description="Event-driven runtime for real-time tool-using agents.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="replay a scenario on the virtual clock")
    run_p.add_argument("scenario")
    run_p.add_argument("--trace", help="write the trace to this JSONL file")
    run_p.add_argument("--seed", type=int, help="override the scenario seed")
    run_p.set_defaults(fn=_cmd_run)

    diff_p = sub.add_parser("diff", help="compare two trace files")
    diff_p.add_argument("left")
    diff_p.add_argument("right")
    diff_p.set_defaults(fn=_cmd_diff)

    ledger_p = sub.add_parser("ledger", help="run a scenario and print the final ledger")
    ledger_p.add_argument("scenario")
    ledger_p.add_argument("--seed", type=int, help="override the scenario seed")
    ledger_p.set_defaults(fn=_cmd_ledger)

    serve_p = sub.add_parser("serve", help="serve the WebSocket gateway")
    serve_p.add_argument("--port", type=int, default=None)
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--config", help="gateway config JSON")
    serve_p.set_defaults(fn=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ScenarioError, TraceFormatError, GatewayConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
