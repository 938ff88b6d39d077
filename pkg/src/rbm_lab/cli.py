"""rbm-lab command line: run one experiment and write deterministic reports.

Exit codes: 0 all checks pass, 1 a check failed, 2 config error,
3 runtime or capacity error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
import traceback

from . import __version__
from .config import COMMANDS, ConfigError, load_config
from .mc import resolve_workers
from .reports import dumps, git_blob_hash
from .runner import run

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
DEFAULT_FORMAT = {"dos-scan": "csv", "region-report": "csv", "grassmann-selftest": "json"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rbm-lab", description="Random band matrix DOS experiments and checks.")
    ap.add_argument("--version", action="version", version=f"rbm-lab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH", help="INI file with a section per command")
        sp.add_argument("--seed", metavar="U64", help="overrides the config seed")
        sp.add_argument("--workers", metavar="N", help="worker processes (env RBM_LAB_WORKERS)")
        sp.add_argument("--out", metavar="DIR", default="rbm_lab_out", help="output directory")
        sp.add_argument("--format", choices=("csv", "json"), default=None)
    return ap


def _error(kind: str, exc: Exception, code: int) -> int:
    obj = exc.to_json() if isinstance(exc, ConfigError) else {"error": kind, "message": str(exc)}
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")
    return code


def _write(path: str, data: bytes) -> str:
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        text = None
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}", "config") from None
        cfg = load_config(args.command, text, {"seed": args.seed})
        try:
            workers = resolve_workers(None if args.workers is None else int(args.workers))
        except ValueError as exc:
            raise ConfigError(f"--workers: {exc}", "workers") from None
        fmt = args.format or DEFAULT_FORMAT.get(args.command, "json")
    except ConfigError as exc:
        return _error("config", exc, EXIT_CONFIG)

    t0 = time.perf_counter()
    try:
        report = run(cfg, workers)
        os.makedirs(args.out, exist_ok=True)
        stem = args.command.replace("-", "_")
        data_name = f"{stem}.{fmt}"
        outputs = {
            data_name: _write(os.path.join(args.out, data_name), report.data_bytes(fmt)),
            "report.json": _write(os.path.join(args.out, "report.json"),
                                  dumps(report.report_json()).encode()),
        }
        manifest = {
            "command": args.command,
            "version": __version__,
            "seed": cfg.seed,
            "workers": workers,
            "format": fmt,
            "config": cfg.echo(),
            "input_hash": git_blob_hash((cfg.source or "").encode()),
            "outputs": outputs,
            "summary": report.summary(),
        }
        _write(os.path.join(args.out, "manifest.json"), dumps(manifest).encode())
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable error
        traceback.print_exc(file=sys.stderr)
        return _error("runtime", exc, EXIT_RUNTIME)
    elapsed = time.perf_counter() - t0
    print(f"[{args.command}] wall time {elapsed:.2f} s", file=sys.stderr)

    s = report.summary()
    print(f"{args.command}: {s['passed']}/{s['checks']} checks passed")
    for c in report.checks:
        print(f"  {'PASS' if c.passed else 'FAIL'}  {c.check_id}")
    print(f"outputs written to {args.out}")
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
