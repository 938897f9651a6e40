"""Thin command-line client for the wedgebench service.

Talks to a running server when --server is given, otherwise mounts the
FastAPI app in-process, so every subcommand works offline.  Exit codes:
0 = success / verdict matched --expect, 1 = verdict or check mismatch,
2 = usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import httpx

_CONFIG_CONVERTERS = {
    "mode": str,
    "algo": str,
    "T": int,
    "d": int,
    "eps": float,
    "delta": float,
    "seed": int,
    "out": str,
    "expect": str,
    "step": float,
    "probe": float,
    "samples": int,
    "trials": int,
    "eta": float,
    "breakpoints": str,
    "function": str,
    "transcript": str,
    "server": str,
}


def make_client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service.app import app

    return TestClient(app)


def _apply_config_file(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    if not getattr(args, "config", None):
        return
    path = Path(args.config)
    if not path.exists():
        parser.error(f"config file not found: {path}")
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
        else:
            key, _, value = line.partition(" ")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_CONVERTERS:
            parser.error(f"{path}:{lineno}: unknown config key {key!r}")
        if not hasattr(args, key):
            parser.error(f"{path}:{lineno}: key {key!r} does not apply to this command")
        try:
            setattr(args, key, _CONFIG_CONVERTERS[key](value))
        except ValueError:
            parser.error(f"{path}:{lineno}: bad value {value!r} for {key!r}")


def _algorithm_params(args: argparse.Namespace) -> dict:
    params = {}
    if getattr(args, "step", None) is not None:
        params["step"] = args.step
    if getattr(args, "probe", None) is not None:
        params["probe"] = args.probe
    if getattr(args, "samples", None) is not None:
        params["samples"] = args.samples
    return params


def _parse_breakpoints(text: str | None) -> list[float] | None:
    if not text:
        return None
    return [float(v) for v in text.replace(",", " ").split()]


def _write_outputs(payload: dict, out: str | None) -> None:
    if not out:
        return
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "results.csv").write_text(payload["csv_text"])
    (out_dir / "report.txt").write_text(payload["report_text"])
    (out_dir / "function.txt").write_text(payload["function_text"])
    if payload.get("transcript_text"):
        (out_dir / "transcript.txt").write_text(payload["transcript_text"])


def _run_experiment(client: httpx.Client, body: dict, out: str | None, expect: str | None) -> int:
    resp = client.post("/experiments/run", json=body)
    if resp.status_code != 200:
        print(f"error: {resp.json().get('detail', resp.text)}", file=sys.stderr)
        return 2
    payload = resp.json()
    _write_outputs(payload, out)
    print(f"verdict {payload['verdict']}")
    print(f"best-distance {payload['best_distance']:.17g}")
    if payload.get("replay_verified") is not None:
        print(f"replay-verified {str(payload['replay_verified']).lower()}")
    if expect and payload["verdict"] != expect:
        print(f"expected verdict {expect!r}, got {payload['verdict']!r}", file=sys.stderr)
        return 1
    return 0


def cmd_adversary(args: argparse.Namespace) -> int:
    with make_client(args.server) as client:
        body = {
            "mode": args.mode,
            "algorithm": args.algo,
            "T": args.T,
            "d": args.d,
            "epsilon": args.eps,
            "delta": args.delta,
            "seed": args.seed,
            "algorithm_params": _algorithm_params(args),
        }
        return _run_experiment(client, body, args.out, args.expect)


def cmd_frozen(args: argparse.Namespace) -> int:
    function_text = None
    if args.function:
        path = Path(args.function)
        if not path.exists():
            print(f"error: function file not found: {path}", file=sys.stderr)
            return 2
        function_text = path.read_text()
    with make_client(args.server) as client:
        body = {
            "mode": "frozen",
            "algorithm": args.algo,
            "T": args.T,
            "d": args.d,
            "epsilon": args.eps,
            "delta": args.delta,
            "seed": args.seed,
            "algorithm_params": _algorithm_params(args),
            "breakpoints": _parse_breakpoints(args.breakpoints),
            "function_text": function_text,
        }
        return _run_experiment(client, body, args.out, args.expect)


def cmd_verify_lemmas(args: argparse.Namespace) -> int:
    with make_client(args.server) as client:
        body = {
            "breakpoints": _parse_breakpoints(args.breakpoints) or [0.0],
            "eta": args.eta,
            "dimension": args.d,
            "trials": args.trials,
            "seed": args.seed,
            "delta": args.delta,
        }
        resp = client.post("/lemmas/verify", json=body)
        if resp.status_code != 200:
            print(f"error: {resp.json().get('detail', resp.text)}", file=sys.stderr)
            return 2
        payload = resp.json()
        print(payload["text"], end="")
        if args.out:
            out_dir = Path(args.out)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "lemmas.txt").write_text(payload["text"])
        return 0 if payload["all_passed"] else 1


def cmd_replay(args: argparse.Namespace) -> int:
    fn_path, tr_path = Path(args.function), Path(args.transcript)
    for p in (fn_path, tr_path):
        if not p.exists():
            print(f"error: file not found: {p}", file=sys.stderr)
            return 2
    with make_client(args.server) as client:
        body = {
            "function_text": fn_path.read_text(),
            "transcript_text": tr_path.read_text(),
            "algorithm": args.algo,
            "algorithm_params": _algorithm_params(args),
        }
        resp = client.post("/experiments/replay", json=body)
        if resp.status_code != 200:
            print(f"error: {resp.json().get('detail', resp.text)}", file=sys.stderr)
            return 2
        ok = resp.json()["replay_verified"]
        print(f"replay-verified {str(ok).lower()}")
        return 0 if ok else 1


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wedgebench",
        description="Adversary-vs-algorithm experiments for Goldstein stationarity",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--server", default=None, help="HTTP endpoint; default is in-process")
        p.add_argument("--config", default=None, help="key/value file overriding flags")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="directory for result files")
        p.add_argument("--expect", default=None, help="expected verdict; mismatch exits 1")

    p = sub.add_parser("adversary", help="run an algorithm against the resisting oracle")
    common(p)
    p.add_argument("--mode", choices=["gzr", "general"], default="gzr")
    p.add_argument("--algo", default="subgradient_descent")
    p.add_argument("--T", type=int, default=16)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--eps", type=float, default=0.2)
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--probe", type=float, default=None)
    p.set_defaults(func=cmd_adversary)

    p = sub.add_parser("frozen", help="run an algorithm on a frozen instance")
    common(p)
    p.add_argument("--algo", default="gradient_sampling")
    p.add_argument("--T", type=int, default=1000)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--probe", type=float, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--breakpoints", default=None, help="comma-separated first coordinates")
    p.add_argument("--function", default=None, help="serialized function file")
    p.set_defaults(func=cmd_frozen)

    p = sub.add_parser("verify-lemmas", help="randomized checks of the construction")
    common(p)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--breakpoints", default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--delta", type=float, default=0.2)
    p.set_defaults(func=cmd_verify_lemmas)

    p = sub.add_parser("replay", help="re-run an algorithm against a recorded transcript")
    common(p)
    p.add_argument("--function", required=True)
    p.add_argument("--transcript", required=True)
    p.add_argument("--algo", default="subgradient_descent")
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--probe", type=float, default=None)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command != "serve":
        _apply_config_file(args, parser)
    try:
        return args.func(args)
    except httpx.HTTPError as exc:
        print(f"error: cannot reach server: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
