"""Operator command line.

Every subcommand is translated into a wire request and run through the same
dispatcher the server uses, against state loaded from the data directory.
Mutating commands write the manifests back.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

from . import canonical
from .errors import ProtocolError
from .runtime import DATA_DIR_ENV, Runtime
from .server import Dispatcher, request, serve

KIND_PREFIX = {"tool": "tool", "tools": "tool", "env": "env", "environment": "env", "environments": "env",
               "agent": "agent", "agents": "agent", "prompt": "prompt", "prompts": "prompt"}


def _prefix(kind: str) -> str:
    try:
        return KIND_PREFIX[kind]
    except KeyError:
        raise ProtocolError(f"unknown kind {kind!r}; use tool, env, agent or prompt") from None


def _json_arg(text: str, what: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"{what} is not valid JSON: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="teaproto", description="Registries, transformations and a wire server for tools, environments and agents.")
    ap.add_argument("--data-dir", default=os.environ.get(DATA_DIR_ENV), help=f"manifest directory (default ${DATA_DIR_ENV})")
    ap.add_argument("--format", choices=("human", "canonical"), default="human")
    ap.add_argument("--listen", default="stdio", help="for serve: stdio, host:port or unix:/path")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("serve", help="run the wire server")
    s.add_argument("--workers", type=int, default=16)

    s = sub.add_parser("list", help="names of active components")
    s.add_argument("kind")

    s = sub.add_parser("info", help="active (or given) config of a component")
    s.add_argument("kind")
    s.add_argument("name")
    s.add_argument("--version")

    s = sub.add_parser("contract", help="contract document for a kind")
    s.add_argument("kind")

    s = sub.add_parser("invoke", help="invoke a tool")
    s.add_argument("tool")
    s.add_argument("--args", default="{}", help="JSON mapping of arguments")
    s.add_argument("--session")

    s = sub.add_parser("retrieve", help="semantic search over one kind")
    s.add_argument("kind")
    s.add_argument("query")
    s.add_argument("-k", type=int, default=5)

    s = sub.add_parser("route", help="route a query through the category tree")
    s.add_argument("kind")
    s.add_argument("query")
    s.add_argument("-b", "--branching", type=int, default=4)

    s = sub.add_parser("trace", help="trace records of a session")
    s.add_argument("session_id")

    s = sub.add_parser("history", help="version history of a component")
    s.add_argument("kind")
    s.add_argument("name")

    s = sub.add_parser("rollback", help="restore a historical version as a new version")
    s.add_argument("kind")
    s.add_argument("name")
    s.add_argument("version")

    s = sub.add_parser("register", help="register a component from a JSON declaration")
    s.add_argument("kind")
    s.add_argument("spec", help="JSON params for <kind>.register, or @file")

    s = sub.add_parser("save", help="write every manifest to a directory")
    s.add_argument("target", nargs="?")

    s = sub.add_parser("load", help="replace the data directory's state with another directory's manifests")
    s.add_argument("source")

    s = sub.add_parser("call", help="send one raw wire request")
    s.add_argument("op")
    s.add_argument("params", nargs="?", default="{}")
    return ap


def _request_for(args) -> dict:
    c = args.command
    if c == "list":
        return request(f"{_prefix(args.kind)}.list")
    if c == "info":
        params = {"name": args.name}
        if args.version:
            params["version"] = args.version
        return request(f"{_prefix(args.kind)}.info", params)
    if c == "contract":
        return request(f"{_prefix(args.kind)}.contract")
    if c == "invoke":
        params = {"name": args.tool, "args": _json_arg(args.args, "--args")}
        if args.session:
            params["session_id"] = args.session
        return request("tool.invoke", params)
    if c == "retrieve":
        return request(f"{_prefix(args.kind)}.retrieve", {"query": args.query, "k": args.k})
    if c == "route":
        return request("route", {"kind": args.kind, "query": args.query, "branching": args.branching})
    if c == "trace":
        return request("trace.query", {"session_id": args.session_id})
    if c == "history":
        return request(f"{_prefix(args.kind)}.history", {"name": args.name})
    if c == "rollback":
        return request("evolve.rollback", {"kind": args.kind, "name": args.name, "to": args.version})
    if c == "register":
        text = Path(args.spec[1:]).read_text(encoding="utf-8") if args.spec.startswith("@") else args.spec
        return request(f"{_prefix(args.kind)}.register", _json_arg(text, "spec"))
    if c == "save":
        return request("state.save", {"data_dir": args.target} if args.target else {})
    if c == "load":
        return request("state.load", {"data_dir": args.source})
    if c == "call":
        return request(args.op, _json_arg(args.params, "params"))
    raise ProtocolError(f"unhandled command {c!r}")


def _human(command: str, result: Any) -> str:
    if command == "list":
        return "\n".join(result)
    if command == "contract":
        lines = [f"{result['kind']} contract: {len(result['entries'])} entries"]
        for e in result["entries"]:
            lines += [f"{e['name']} v{e['version']}", f"  {e['schema_summary']}", *("  " + t for t in e["text_description"].splitlines())]
        return "\n".join(lines)
    if command == "invoke":
        if result["ok"]:
            return f"{json.dumps(result['output'], sort_keys=True, ensure_ascii=False)}\n(tool v{result['tool_version']}, {result['elapsed']:.6f}s)"
        return f"{result['error']['kind']}: {result['error']['detail']}"
    if command == "retrieve":
        return "\n".join(f"{name}\t{score:.6f}" for name, score in result)
    if command == "history":
        return "\n".join(f"{r['version']}\t{r['state']}\t{r['created_at']}" for r in result)
    if command == "trace":
        return "\n".join(
            f"{r['index']}\t{r['record_id']}\t{json.dumps(r['invocation'], sort_keys=True, ensure_ascii=False)}" for r in result
        )
    if command == "rollback":
        return f"{result['descriptor']['name']} restored as v{result['version']}"
    if command == "route":
        return f"{result['name']}\t(examined {result['candidates_examined']})"
    return json.dumps(result, indent=2, sort_keys=True, ensure_ascii=False)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr)

    runtime = Runtime()
    data_dir = Path(args.data_dir) if args.data_dir else None
    if data_dir is not None and data_dir.is_dir():
        try:
            runtime.load_all(data_dir)
        except Exception as exc:  # noqa: BLE001
            print(f"error: could not load {data_dir}: {exc}", file=sys.stderr)
            return 1
    dispatcher = Dispatcher(runtime, data_dir)

    if args.command == "serve":
        serve(dispatcher, args.listen, args.workers)
        return 0

    try:
        req = _request_for(args)
    except ProtocolError as exc:
        resp = {"id": "cli", "ok": False, "error": exc.to_dict()}
    except OSError as exc:
        parser.error(str(exc))
    else:
        resp = dispatcher.dispatch(req)
        if args.command == "load" and resp["ok"] and data_dir is not None:
            resp = dispatcher.dispatch(request("state.save", {"data_dir": str(data_dir)}))

    ok = resp["ok"] and not (args.command == "invoke" and not resp["result"]["ok"])
    if args.format == "canonical":
        sys.stdout.write(canonical.encode(resp))
    elif resp["ok"]:
        print(_human(args.command, resp["result"]), file=sys.stdout if ok else sys.stderr)
    else:
        err = resp["error"]
        print(f"{err['kind']}: {err['detail']}", file=sys.stderr)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
