"""``qrcforge <subcommand> --config <file> [--out <dir>] [--seed <u64>] [--threads <k>]``"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import KINDS, ConfigError, load_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INTERRUPTED = 0, 2, 3, 130


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qrcforge", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", required=True, help="JSON/TOML config or a previous manifest.json")
        sp.add_argument("--out", default=None, help="output directory (default: out/<subcommand>)")
        sp.add_argument("--seed", type=int, default=None, help="override the master seed")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker processes for population/sweep evaluation")
        sp.add_argument("--genome", default=None, help="genome file (evaluate, info-metrics)")
        sp.add_argument("--resume", default=None, help="checkpoint.json of an interrupted GA run")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log = logging.getLogger("qrcforge")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG

    # one BLAS thread per process keeps every reduction order fixed
    from threadpoolctl import threadpool_limits
    threadpool_limits(1)

    from .experiments import run_experiment
    from .qcore import NumericalError

    try:
        cfg = load_config(args.config, seed=args.seed, kind=args.command)
        for attr in ("genome", "resume"):
            val = getattr(args, attr)
            if val is not None:
                if not Path(val).exists():
                    raise ConfigError(f"{attr} file not found: {val}")
                setattr(cfg, attr, str(Path(val).resolve()))
        out = Path(args.out or os.path.join("out", args.command))
        manifest = run_experiment(cfg, out, workers=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except KeyboardInterrupt:
        ckpt = out / "checkpoint.json"
        hint = f"; resume with --resume {ckpt}" if ckpt.exists() else ""
        print(f"interrupted{hint}", file=sys.stderr)
        return EXIT_INTERRUPTED
    log.info("wrote %s", out / "manifest.json")
    print(out / "manifest.json")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
