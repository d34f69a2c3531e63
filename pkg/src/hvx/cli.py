"""Command-line entry points.

``hvx run`` and ``hvx expand`` execute files through the plain, session-
free pipeline so purely textual tooling sees the exact same semantics as
the IDE. ``hvx serve`` hosts the editor-facing protocol: newline-delimited
JSON-RPC over stdio or TCP, or the HTTP facade for browsers.

Exit codes: 0 ok, 1 program error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import HvxError
from .kernel import compile_text, format_error, run_program
from .reader import print_datum
from .session import FuelPolicy


def _read_file(path: str) -> str:
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def _fuel_policy(args) -> FuelPolicy:
    policy = FuelPolicy()
    if args.fuel is not None:
        policy.edit_fuel = args.fuel
        policy.compile_fuel = args.fuel
        policy.run_fuel = args.fuel
    return policy


def cmd_run(args) -> int:
    try:
        text = _read_file(args.file)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        result = run_program(text, run_fuel=args.fuel, compile_fuel=args.fuel or 1_000_000)
    except HvxError as exc:
        if args.json:
            print(json.dumps({"ok": False, "error": format_error(exc)}))
        else:
            print(f"error: {format_error(exc)}", file=sys.stderr)
        return 1
    sys.stdout.write(result.output)
    if args.json:
        print(json.dumps({"ok": True, "value": result.value_text}))
    else:
        print(result.value_text)
    return 0


def cmd_expand(args) -> int:
    try:
        text = _read_file(args.file)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        expanded, _ = compile_text(text, compile_fuel=args.fuel or 1_000_000)
    except HvxError as exc:
        print(f"error: {format_error(exc)}", file=sys.stderr)
        return 1
    for form in expanded:
        print(print_datum(form))
    return 0


def cmd_serve(args) -> int:
    policy = _fuel_policy(args)
    if args.http is not None:
        import uvicorn

        from .service.http import create_app

        uvicorn.run(create_app(fuel_policy=policy), host="127.0.0.1", port=args.http)
        return 0
    if args.port is not None:
        from .service.rpc import serve_tcp

        serve_tcp(args.port, policy)
        return 0
    from .service.rpc import serve_stdio

    serve_stdio(policy)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hvx", description="Hybrid visual-textual language kernel")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="expand and evaluate a .hvx file")
    p_run.add_argument("file")
    p_run.add_argument("--fuel", type=int, default=None, help="step budget (default: unlimited run phase)")
    p_run.add_argument("--json", action="store_true", help="machine-readable result envelope")
    p_run.set_defaults(fn=cmd_run)

    p_exp = sub.add_parser("expand", help="print the fully expanded program")
    p_exp.add_argument("file")
    p_exp.add_argument("--fuel", type=int, default=None)
    p_exp.set_defaults(fn=cmd_expand)

    p_srv = sub.add_parser("serve", help="serve the editor protocol")
    group = p_srv.add_mutually_exclusive_group()
    group.add_argument("--stdio", action="store_true", help="newline-delimited JSON-RPC on stdio (default)")
    group.add_argument("--port", type=int, default=None, help="newline-delimited JSON-RPC on TCP localhost")
    group.add_argument("--http", type=int, default=None, help="HTTP facade on the given port")
    p_srv.add_argument("--fuel", type=int, default=None)
    p_srv.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
