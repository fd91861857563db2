"""``qvorder <config-file> [--paths N] [--seed S] [--threads W] [--out DIR]``."""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .levy_models import ModelError
from .runner import run_experiment

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qvorder",
                                description="Run a realized-variance order experiment described by a config file.")
    p.add_argument("config", help="experiment file with 'section.key = value' lines")
    p.add_argument("--paths", type=int, help="override experiment.paths")
    p.add_argument("--seed", type=int, help="override experiment.seed")
    p.add_argument("--threads", type=int, help="worker threads (default: experiment.threads or CPU count)")
    p.add_argument("--out", help="override experiment.out")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.paths is not None:
            if args.paths < 1:
                raise ConfigError("must be >= 1", "--paths")
            cfg.paths = args.paths
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("must be >= 1", "--threads")
            cfg.threads = args.threads
        if args.out is not None:
            cfg.out = args.out
    except (ConfigError, ModelError, OSError) as exc:
        print(f"qvorder: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result = run_experiment(cfg)
    status = "pass" if result.exit_code == 0 else "fail"
    print(f"qvorder: {cfg.kind} {status}; reports in {cfg.out}")
    for f in result.failures:
        print(f"  failed: {f}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
