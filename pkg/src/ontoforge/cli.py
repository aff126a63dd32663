"""``ontoforge generate|merge|eval|report|run --config <path>``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import load_config
from .costing import CostingError
from .llm import BadStatus, ConfigError, FixtureMiss, TransportError
from .prompts import PromptError
from .trials import EncodingError, IngestError

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_FIXTURE_MISS, EXIT_INTERNAL = 0, 2, 3, 4, 5

log = logging.getLogger("ontoforge")


def _column_map(items):
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"--column-map expects key=value, got {item!r}")
        out[key.strip()] = value
    return out


def _abs(p):
    return None if p is None else str(Path(p).resolve())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ontoforge", description="Clinical-trial outcome ontologies with LLMs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("generate", "build one ontology per trial"),
        ("merge", "merge per-trial ontologies into main.ttl"),
        ("eval", "compute NOCOnto and structural counts"),
        ("report", "write cost/time/quality reports"),
        ("run", "generate, merge, eval and report"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="run configuration (TOML)")
        p.add_argument("--trials", help="trials CSV, overrides the config")
        p.add_argument("--column-map", action="append", metavar="KEY=HEADER", help="CSV header override, repeatable")
        p.add_argument("--model", help="backend name from the config")
        p.add_argument("--mode", choices=("single", "chained"))
        p.add_argument("--replay", help="serve responses from this replay fixture")
        p.add_argument("--record", help="append live exchanges to this fixture file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--run-name", dest="run", help="run name under the output directory")
        p.add_argument("--max-retries", type=int)
        p.add_argument("--concurrency", type=int)
        p.add_argument("--repair-prefixes", action="store_true", default=None)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = dict(
            trials=_abs(args.trials),
            model=args.model,
            mode=args.mode,
            replay=_abs(args.replay),
            record=_abs(args.record),
            out=_abs(args.out),
            run=args.run,
            max_retries=args.max_retries,
            concurrency=args.concurrency,
            repair_prefixes=args.repair_prefixes,
        )
        cfg = load_config(args.config, **overrides)
        if args.column_map:
            cfg = cfg.__class__(**{**cfg.__dict__, "column_map": {**cfg.column_map, **_column_map(args.column_map)}})
        command = getattr(pipeline, f"cmd_{args.command}")
        command(cfg)
    except FixtureMiss as exc:
        log.error("%s", exc)
        return EXIT_FIXTURE_MISS
    except (ConfigError, PromptError, CostingError, argparse.ArgumentTypeError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except IngestError as exc:
        log.error("trial input error: %s", exc)
        return EXIT_IO if isinstance(exc, EncodingError) else EXIT_CONFIG
    except (OSError, TransportError, BadStatus) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
