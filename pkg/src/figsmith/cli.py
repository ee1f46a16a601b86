"""Command-line entry point.

Subcommands: ``generate`` (document to final figure), ``evaluate``
(referenced scoring or pairwise comparison of one pair), ``stats``
(figure statistics, kappa, correlations), and ``batch`` (many documents
over a worker pool). Exit codes: 0 success, 2 validation, 3 backend
exhaustion, 4 schema/parse failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys

from . import runner
from .config import build_gateway, load_config
from .errors import (
    CoverageError,
    DocumentError,
    ExhaustedError,
    ParseError,
    SchemaError,
    ValidationError,
)

EXIT_VALIDATION = 2
EXIT_EXHAUSTED = 3
EXIT_SCHEMA = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="figsmith", description="Scientific text to publication-style schematic.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="run the full pipeline on one document")
    gen.add_argument("input", help="source document (.txt, .md, .tex)")
    gen.add_argument("--style", help="style description passed to the renderer")
    gen.add_argument("--iterations", type=int, help="refinement round budget")
    gen.add_argument("--threshold", type=float, help="early-exit critic score")
    gen.add_argument("--epsilon", type=float, help="convergence tolerance on rejected candidates")
    gen.add_argument("--skip-text-refinement", action="store_true", default=None)
    gen.add_argument("--config", help="TOML config file")
    gen.add_argument("--out", help="run directory (resume if it already holds a manifest)")

    ev = sub.add_parser("evaluate", help="judge one generated image against its reference")
    ev.add_argument("--mode", choices=("score", "pairwise", "extended"), default=None,
                    help="defaults to the config [judge] mode")
    ev.add_argument("--seed", type=int, default=None, help="defaults to the config [judge] seed")
    ev.add_argument("--reference", required=True)
    ev.add_argument("--generated", required=True)
    ev.add_argument("--text", required=True, help="full source text file")
    ev.add_argument("--config", help="TOML config file")
    ev.add_argument("--out", default="eval-out")
    ev.add_argument("--method", default="generated", help="method name used in the report")

    st = sub.add_parser("stats", help="dataset statistics and agreement measures")
    st.add_argument("subcommand", choices=("figures", "kappa", "correlate"))
    st.add_argument("input", help="CSV file (or a directory of PNGs for figures)")
    st.add_argument("--config", help="TOML config file")
    st.add_argument("--out", default="stats-out")

    ba = sub.add_parser("batch", help="run generate over a list of documents")
    ba.add_argument("--manifest", required=True, help="file with one input path per line")
    ba.add_argument("--config", help="TOML config file")
    ba.add_argument("--out", default="runs")
    ba.add_argument("--workers", type=int, default=2)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ValidationError, DocumentError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except ExhaustedError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_EXHAUSTED
    except (SchemaError, ParseError, CoverageError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_SCHEMA


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "generate":
        overrides = {
            "style": args.style,
            "iterations": args.iterations,
            "threshold": args.threshold,
            "epsilon": args.epsilon,
            "skip_text_refinement": args.skip_text_refinement,
        }
        config = load_config(args.config, overrides)
        manifest = runner.generate(args.input, config, out_dir=args.out)
        done = sum(1 for status in manifest.stages.values() if status == "done")
        print(f"run {manifest.run_id}: {done}/{len(manifest.stages)} stages done, "
              f"{len(manifest.artifacts)} artifacts")
        return 0
    if args.command == "evaluate":
        config = load_config(args.config)
        gateway = build_gateway(config)
        mode = args.mode if args.mode is not None else config["judge"]["mode"]
        seed = args.seed if args.seed is not None else config["judge"]["seed"]
        summary = runner.evaluate(
            args.reference, args.generated, args.text,
            mode=mode, seed=seed, out_dir=args.out,
            gateway=gateway, method=args.method,
        )
        print(f"wrote {args.out}/report.csv and report.json ({summary['mode']} mode)")
        return 0
    if args.command == "stats":
        config = load_config(args.config)
        gateway = build_gateway(config)
        summary = runner.stats_command(args.subcommand, args.input, args.out, gateway)
        print(f"wrote {args.out}/stats_summary.json: {summary}")
        return 0
    if args.command == "batch":
        config = load_config(args.config)
        manifests = runner.batch(args.manifest, config, args.out, workers=args.workers)
        print(f"completed {len(manifests)} runs under {args.out}")
        return 0
    raise ValidationError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
