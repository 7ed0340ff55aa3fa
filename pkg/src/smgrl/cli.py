"""Command-line client.

Each subcommand builds a request body from ``--config`` (a JSON object) plus
explicit flags, which win, and posts it to the service. By default the
service runs in-process; ``--server URL`` targets a running instance.
Errors go to stderr as a JSON object and exit nonzero (2 for usage errors).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

EXIT_ERROR = 1
EXIT_USAGE = 2

COMMANDS = ("synth", "coarsen", "train", "embed", "evaluate", "experiment", "partition-infer", "inductive", "dmgrl")
PATH_FIELDS = ("dataset", "out", "checkpoint", "pred", "truth", "bottom_partition", "base_dir")
TRAIN_FLAGS = ("lr", "patience", "max_epochs", "weight_decay")


def _fail(kind: str, detail: str, code: int = EXIT_ERROR):
    print(json.dumps({"error": kind, "detail": detail}), file=sys.stderr)
    raise SystemExit(code)


class Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("UsageError", f"{self.prog}: {message}", EXIT_USAGE)


def _param(text: str):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def _common(p: argparse.ArgumentParser):
    s = argparse.SUPPRESS
    p.add_argument("-c", "--config", default=s, help="JSON file with request fields")
    p.add_argument("--seed", type=int, default=s)
    p.add_argument("--out", default=s, help="output directory")
    p.add_argument("--server", default=s, help="base URL of a running service")


def _model(p: argparse.ArgumentParser):
    s = argparse.SUPPRESS
    p.add_argument("--dataset", "-d", default=s)
    p.add_argument("--arch", choices=("sage", "appnp"), default=s)
    p.add_argument("--layers", type=int, default=s)
    p.add_argument("--hidden", type=int, default=s)
    p.add_argument("--dim", type=int, default=s)
    p.add_argument("--ratio", type=float, default=s)
    p.add_argument("-k", type=int, default=s)
    p.add_argument("--max-pass-reduction", type=float, default=s)
    p.add_argument("--combine", choices=("mean", "weighted", "concat"), default=s)
    _train_flags(p)


def _train_flags(p: argparse.ArgumentParser):
    s = argparse.SUPPRESS
    p.add_argument("--lr", type=float, default=s)
    p.add_argument("--patience", type=int, default=s)
    p.add_argument("--max-epochs", type=int, default=s)
    p.add_argument("--weight-decay", type=float, default=s)


def build_parser() -> Parser:
    s = argparse.SUPPRESS
    parser = Parser(prog="smgrl", description="Multi-resolution graph representation learning toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset container")
    _common(p)
    p.add_argument("--family", default=s)
    p.add_argument("--param", type=_param, action="append", default=s, help="generator parameter KEY=VALUE")

    p = sub.add_parser("coarsen", help="build the hierarchy and write hierarchy.json")
    _common(p)
    p.add_argument("--dataset", "-d", default=s)
    p.add_argument("--ratio", type=float, default=s)
    p.add_argument("-k", type=int, default=s)
    p.add_argument("--max-pass-reduction", type=float, default=s)

    p = sub.add_parser("train", help="run the full pipeline and save the model")
    _common(p)
    _model(p)

    p = sub.add_parser("embed", help="write per-level embeddings lifted to the original nodes")
    _common(p)
    p.add_argument("--dataset", "-d", default=s)
    p.add_argument("--checkpoint", default=s)
    p.add_argument("--partitioned", action="store_true", default=s)

    p = sub.add_parser("evaluate", help="macro F1 of a prediction file against a truth file")
    _common(p)
    p.add_argument("--pred", default=s)
    p.add_argument("--truth", default=s)
    p.add_argument("--json", action="store_true", default=False, help="print the full score object")

    p = sub.add_parser("experiment", help="run an experiment config")
    _common(p)

    p = sub.add_parser("partition-infer", help="compare full and parent-partitioned inference")
    _common(p)
    _model(p)

    p = sub.add_parser("inductive", help="hold out test nodes, reinsert them and compare scores")
    _common(p)
    _model(p)
    p.add_argument("--holdout-frac", type=float, default=s)
    p.add_argument("--holdouts", type=int, default=s)

    p = sub.add_parser("dmgrl", help="community-partitioned hierarchy with per-subgraph encoders")
    _common(p)
    p.add_argument("--dataset", "-d", default=s)
    p.add_argument("--arch", choices=("sage", "appnp"), default=s)
    p.add_argument("--dim", type=int, default=s)
    p.add_argument("--combine", choices=("mean", "weighted", "concat"), default=s)
    p.add_argument("--include-features", action="store_true", default=s)
    p.add_argument("--bottom-partition", default=s, help="file with one community id per node")
    _train_flags(p)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _read_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        _fail("FileNotFoundError", f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        _fail("ConfigError", f"{p}: invalid JSON ({exc})")
    if not isinstance(data, dict):
        _fail("ConfigError", f"{p}: config must be a JSON object")
    return data


def build_request(command: str, args: dict, local: bool) -> dict:
    """Merge config file and flags into the request body for ``command``."""
    config_path = args.pop("config", None)
    args.pop("server", None)
    if command == "experiment":
        if config_path is None:
            _fail("UsageError", "experiment needs --config", EXIT_USAGE)
        body = {"config": _read_config(config_path), "base_dir": str(Path(config_path).resolve().parent),
                "out": args.get("out", ".")}
        if "seed" in args:
            body["config"]["seeds"] = [args["seed"]]
    else:
        body = _read_config(config_path) if config_path else {}
        if "param" in args:
            body.setdefault("params", {}).update(dict(args.pop("param")))
        train = {k: args.pop(k) for k in TRAIN_FLAGS if k in args}
        if train:
            body.setdefault("train", {}).update(train)
        body.update(args)
    if local:
        for key in PATH_FIELDS:
            if isinstance(body.get(key), str):
                body[key] = str(Path(body[key]).resolve())
    return body


def _transport(server: str | None):
    if server:
        import httpx
        return httpx.Client(base_url=server, timeout=None)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient
    from .service.app import app
    return TestClient(app, raise_server_exceptions=False)


def main(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    if command == "serve":
        import uvicorn
        from .service.app import app
        uvicorn.run(app, host=args["host"], port=args["port"])
        return 0
    as_json = args.pop("json", False)
    server = args.get("server")
    body = build_request(command, args, local=server is None)
    try:
        with _transport(server) as client:
            resp = client.post(f"/{command}", json=body)
    except Exception as exc:
        _fail(type(exc).__name__, str(exc))
    try:
        payload = resp.json()
    except ValueError:
        payload = {"error": "HTTPError", "detail": resp.text}
    if resp.status_code >= 400:
        _fail(payload.get("error", "HTTPError"), payload.get("detail", resp.text))
    if command == "evaluate" and not as_json:
        print(payload["macro_f1"])
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
