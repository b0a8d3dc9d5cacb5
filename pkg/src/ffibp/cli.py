"""Command line entry point: generate, run, sweep, features."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .features import write_feature_csv
from .harness import (
    ExperimentConfig,
    SweepGrid,
    SyntheticSpec,
    extract_corpus,
    generate_synthetic,
    read_manifest,
    run_experiment,
    sweep,
    write_sweep_outputs,
)


def _load_json(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def cmd_generate(args) -> int:
    spec = SyntheticSpec.from_dict(_load_json(args.spec))
    manifest = generate_synthetic(spec, args.out)
    print(manifest)
    return 0


def cmd_run(args) -> int:
    cfg = ExperimentConfig.from_dict(_load_json(args.config))
    report = run_experiment(read_manifest(args.manifest), cfg)
    text = report.to_json() + "\n"
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        out.with_suffix(".csv").write_text(report.to_csv())
    else:
        sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    grid = SweepGrid.from_dict(_load_json(args.grid))
    result = sweep(read_manifest(args.manifest), grid)
    path = write_sweep_outputs(args.out, result, plots=args.plots)
    print(f"{path}: {len(result.reports)} rows, {len(result.failures)} failed cells")
    return 0


def cmd_features(args) -> int:
    cfg = ExperimentConfig.from_dict(_load_json(args.config))
    corpus = extract_corpus(read_manifest(args.manifest), cfg.preprocess, cfg.features)
    write_feature_csv(args.out, corpus.vectors)
    if corpus.excluded:
        print(f"excluded (no voiced frames): {', '.join(corpus.excluded)}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ffibp", description="Speech-based BP class clustering experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic corpus and manifest")
    p.add_argument("--spec", help="SyntheticSpec JSON (defaults if omitted)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="ExperimentConfig JSON (defaults if omitted)")
    p.add_argument("--out", help="report JSON path; a .csv twin is written beside it")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a grid of experiments")
    p.add_argument("--manifest", required=True)
    p.add_argument("--grid", help="SweepGrid JSON (40-90% x 10-50 epochs grid if omitted)")
    p.add_argument("--out", required=True)
    p.add_argument("--plots", action="store_true", help="also write SVG metric plots")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("features", help="dump per-clip feature vectors as CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="ExperimentConfig JSON for preprocess/feature settings")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc), "command": args.command}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
