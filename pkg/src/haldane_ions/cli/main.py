"""``haldane-ions`` command line.

Usage:
    haldane-ions observe --config run.yaml --out results/ --format both

Exit codes: 0 success, 2 invalid configuration, 3 non-convergence,
4 resource budget exceeded.
"""

from __future__ import annotations

import argparse
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from pydantic import ValidationError

from .. import __version__
from ..exceptions import HaldaneIonsError
from ..serialization import canonical_hash, to_jsonable, write_csv, write_json, write_state
from .commands import COMMANDS, cmd_scan
from .config import format_validation_error, load_config

log = logging.getLogger("haldane_ions")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_BUDGET = 0, 2, 3, 4


def _parse_args(argv=None):
    p = argparse.ArgumentParser(prog="haldane-ions", description="Trapped-ion spin-1 chain simulator")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=str, default=None, help="YAML or JSON run file (defaults if omitted)")
    p.add_argument("--out", type=str, default="results", help="output directory")
    p.add_argument("--workers", type=int, default=1, help="parallel workers for scan")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--format", choices=("json", "csv", "both"), default="both")
    p.add_argument("-v", "--verbose", action="store_true")
    return p.parse_args(argv)


def build_envelope(command, cfg, payload, flags):
    resolved = cfg.resolved()
    body = to_jsonable(payload)
    return {
        "tool": "haldane-ions",
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": resolved,
        "config_hash": canonical_hash(resolved),
        "payload_hash": canonical_hash(body),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "flags": flags,
        "payload": body,
    }


def run(command, cfg, out, fmt="both", workers=1):
    """Execute one command and write its files; returns the envelope."""
    if command == "scan":
        payload, tables, blobs, flags = cmd_scan(cfg, workers=workers)
    else:
        payload, tables, blobs, flags = COMMANDS[command](cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    env = build_envelope(command, cfg, payload, flags)
    if fmt in ("json", "both"):
        write_json(out / f"{command}.json", env)
    if fmt in ("csv", "both"):
        for name, (header, rows) in tables.items():
            write_csv(out / f"{name}.csv", header, rows)
    for name, (vec, sector, extra) in blobs.items():
        write_state(out / f"{name}.bin", vec, sector=sector, extra=extra)
    return env


def main(argv=None):
    args = _parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = {"seed": args.seed} if args.seed is not None else None
        cfg = load_config(args.config, overrides)
        if args.workers < 1:
            raise ValueError("--workers must be >= 1")
        env = run(args.command, cfg, args.out, args.format, args.workers)
    except ValidationError as exc:
        print(f"invalid config:\n{format_validation_error(exc)}", file=sys.stderr)
        return EXIT_CONFIG
    except HaldaneIonsError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    bad = [k for k, v in env["flags"].items() if v is False]
    if bad:
        log.warning("flags not satisfied: %s", ", ".join(bad))
    log.info("wrote %s results to %s (config %s)", args.command, args.out, env["config_hash"][:12])
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
