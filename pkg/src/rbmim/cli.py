"""``rbmim`` command line: run and validate experiment configs, dump generated streams.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from pathlib import Path

import yaml

from .experiment import load_config, run_experiment, validate_config, with_overrides
from .generators import ConfigError, generator_from_config
from .stream import SchemaError, write_csv

log = logging.getLogger("rbmim")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rbmim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--seed", type=int, help="run this single seed instead of the config's list")
    run.add_argument("--length", type=int, help="cap each stream at this many instances")
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    run.add_argument("--quiet", action="store_true")

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")

    gen = sub.add_parser("generate", help="write a generated stream to CSV")
    gen.add_argument("config", help="YAML mapping of generator keys")
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--length", type=int)
    return p


def _run(args) -> int:
    try:
        cfg = with_overrides(load_config(args.config), args.seed, args.length)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    if args.jobs < 1:
        log.error("--jobs must be >= 1")
        return EXIT_CONFIG

    def progress(i, n, spec):
        log.info("[%d/%d] %s done", i, n, spec.tag(cfg.sweep and cfg.sweep["parameter"]))

    try:
        out = run_experiment(cfg, jobs=args.jobs, progress=progress)
    except (SchemaError, OSError, ValueError) as exc:
        log.error("run failed: %s", exc)
        return EXIT_RUNTIME
    log.info("results written to %s", out)
    return EXIT_OK


def _validate(args) -> int:
    problems = validate_config(args.config)
    for msg in problems:
        print(f"{args.config}: {msg}", file=sys.stderr)
    if not problems:
        print(f"{args.config}: ok")
    return EXIT_CONFIG if problems else EXIT_OK


def _generate(args) -> int:
    try:
        raw = yaml.safe_load(Path(args.config).read_text())
        if isinstance(raw, dict) and "generator" in raw:
            raw = raw["generator"]
        if not isinstance(raw, dict):
            raise ConfigError("generator config must be a mapping")
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.length is not None:
            raw["length"] = args.length
        gen = generator_from_config(raw)
    except (ConfigError, OSError, yaml.YAMLError, TypeError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    out = Path(args.out)
    fd, tmp = tempfile.mkstemp(prefix=f".{out.name}-", dir=out.parent or ".")
    os.close(fd)
    try:
        n = write_csv(tmp, gen)
        os.replace(tmp, out)
    except OSError as exc:
        os.unlink(tmp)
        log.error("cannot write %s: %s", out, exc)
        return EXIT_RUNTIME
    log.info("wrote %d instances to %s", n, out)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.WARNING if quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    handler = {"run": _run, "validate": _validate, "generate": _generate}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
