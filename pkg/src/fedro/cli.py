"""Command-line interface.

The CLI is a thin client over the HTTP service: by default it mounts the
service in-process (no socket), and with --server it talks to a remote
instance instead. Exit codes: 0 success, 1 check-suite failure, 2 invalid
specification or config, 3 infeasible tolerated count.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import httpx

__all__ = ["main"]

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3


def _client(server: Optional[str]) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient

    from .service.app import app

    # Synchronous in-process bridge to the ASGI app; no socket involved.
    return TestClient(app, raise_server_exceptions=False)


def _format_error(response: httpx.Response) -> str:
    try:
        detail = response.json().get("detail")
    except ValueError:
        return response.text
    if isinstance(detail, str):
        return detail
    if isinstance(detail, list):  # pydantic validation errors with field paths
        lines = []
        for item in detail:
            loc = ".".join(str(part) for part in item.get("loc", []) if part != "body")
            lines.append(f"{loc or 'config'}: {item.get('msg', '')}")
        return "\n".join(lines)
    return response.text


def _post(client: httpx.Client, path: str, payload: dict) -> httpx.Response:
    return client.post(path, json=payload)


def _cmd_plan(args: argparse.Namespace) -> int:
    payload = {"n": args.n, "b": args.b, "T": args.T, "p": args.p}
    if args.n_hat is not None:
        payload["n_hat"] = args.n_hat
    with _client(args.server) as client:
        resp = _post(client, "/plan", payload)
    if resp.status_code != 200:
        print(f"error: {_format_error(resp)}", file=sys.stderr)
        return EXIT_INVALID
    body = resp.json()
    if args.json:
        print(json.dumps(body, sort_keys=True))
    else:
        print(f"n_th = {body['n_th']}")
        print(f"n_opt = {body['n_opt']}")
        if body["impossibility"] is not None:
            print(f"impossibility = {body['impossibility']}")
        if args.n_hat is not None:
            if body["feasible"]:
                print(f"b_star = {body['b_star']}")
                print(f"condition = {body['condition']}")
            else:
                print(f"no feasible tolerated count at n_hat = {args.n_hat}")
    if args.n_hat is not None and not body["feasible"]:
        return EXIT_INFEASIBLE
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    path = Path(args.config)
    try:
        config = json.loads(path.read_text())
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON in {path}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    with _client(args.server) as client:
        resp = _post(client, "/run", config)
    if resp.status_code != 200:
        print(f"error: {_format_error(resp)}", file=sys.stderr)
        return EXIT_INVALID
    body = resp.json()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trace.csv").write_text(body.pop("trace_csv"))
    (out_dir / "summary.json").write_text(json.dumps(body, sort_keys=True, indent=2) + "\n")
    print(f"wrote {out_dir / 'trace.csv'} and {out_dir / 'summary.json'}")
    print(f"avg_grad_norm_sq = {body['avg_grad_norm_sq']}")
    print(f"event_held = {body['event_held']}")
    return EXIT_OK


def _cmd_preset(args: argparse.Namespace) -> int:
    payload = {"name": args.name, "master_seed": args.seed}
    if args.workers is not None:
        payload["workers"] = args.workers
    with _client(args.server) as client:
        resp = _post(client, "/preset", payload)
    if resp.status_code != 200:
        print(f"error: {_format_error(resp)}", file=sys.stderr)
        return EXIT_INVALID
    body = resp.json()
    out_dir = Path(args.out_dir) / body["name"]
    out_dir.mkdir(parents=True, exist_ok=True)
    for filename in sorted(body["cell_csvs"]):
        (out_dir / filename).write_text(body["cell_csvs"][filename])
    (out_dir / "aggregate.csv").write_text(body["aggregate_csv"])
    print(f"wrote {len(body['cell_csvs'])} cell files and aggregate.csv to {out_dir}")
    return EXIT_OK


def _cmd_check(args: argparse.Namespace) -> int:
    payload = {
        "suite": args.suite,
        "rule": args.rule,
        "b_hat": args.b_hat,
        "nnm": args.nnm,
    }
    with _client(args.server) as client:
        resp = _post(client, "/check", payload)
    if resp.status_code != 200:
        print(f"error: {_format_error(resp)}", file=sys.stderr)
        return EXIT_INVALID
    body = resp.json()
    status = "PASS" if body["passed"] else "FAIL"
    print(f"[{status}] suite={body['suite']} {body['details']}".rstrip())
    for key in sorted(body["margins"]):
        print(f"  {key} = {body['margins'][key]}")
    return EXIT_OK if body["passed"] else EXIT_CHECK_FAILED


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedro",
        description="Planner and simulator for robust federated averaging "
        "under client subsampling.",
    )
    parser.add_argument(
        "--server",
        default=None,
        help="URL of a running service; default runs the service in-process",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="sampling thresholds and tolerated counts")
    p_plan.add_argument("--n", type=int, required=True)
    p_plan.add_argument("--b", type=int, required=True)
    p_plan.add_argument("--T", type=int, required=True)
    p_plan.add_argument("--p", type=float, required=True)
    p_plan.add_argument("--n-hat", dest="n_hat", type=int, default=None)
    p_plan.add_argument("--json", action="store_true")
    p_plan.set_defaults(func=_cmd_plan)

    p_run = sub.add_parser("run", help="simulate one training run from a JSON config")
    p_run.add_argument("config", help="path to a JSON run config")
    p_run.add_argument("--out-dir", default=".")
    p_run.set_defaults(func=_cmd_run)

    p_preset = sub.add_parser("preset", help="run a named experiment preset")
    p_preset.add_argument("name")
    p_preset.add_argument("--out-dir", default=".")
    p_preset.add_argument("--seed", type=int, default=0)
    p_preset.add_argument("--workers", type=int, default=None)
    p_preset.set_defaults(func=_cmd_preset)

    p_check = sub.add_parser("check", help="run a self-verification suite")
    p_check.add_argument("--suite", required=True)
    p_check.add_argument("--rule", default="average")
    p_check.add_argument("--b-hat", dest="b_hat", type=int, default=0)
    p_check.add_argument("--nnm", action="store_true")
    p_check.set_defaults(func=_cmd_check)

    p_serve = sub.add_parser("serve", help="serve the HTTP API")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
