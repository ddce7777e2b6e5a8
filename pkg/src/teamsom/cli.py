"""Command-line entry point: ``teamsom <command> [options]``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import pipeline
from .errors import DataError
from .pipeline import RunConfig, StageFailed

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

log = logging.getLogger("teamsom")


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, help="master random seed (default 0)")
    p.add_argument("--config", type=Path, help="file of 'key = value' lines; flags override it")
    p.add_argument("-o", "--output", type=Path, help="output / run directory")
    p.add_argument("--force", action="store_true", help="allow writing into a non-empty directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _gen_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("generation")
    g.add_argument("--items", type=_positive_int, help="number of work items (default 10215)")
    g.add_argument("--iterations", type=_positive_int, help="number of iterations (default 30)")
    g.add_argument("--latent-clusters", type=_positive_int, dest="latent_clusters")
    g.add_argument("--words-per-message", type=_positive_int, dest="words_per_message")


def _ingest_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("input")
    g.add_argument("--work-items", dest="work_items", help="work item CSV/JSON/JSONL file")
    g.add_argument("--messages", help="message CSV/JSON/JSONL file")
    g.add_argument("--iterations", type=_positive_int, help="number of iterations (default 30)")
    g.add_argument("--strict", action="store_true", default=None, help="stop at the first invalid row")
    g.add_argument(
        "--reconcile", action="store_true", default=None,
        help="trust the message files over comment_count when they disagree",
    )


def _score_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lexicon", help="category dictionary file (default: bundled demo lexicon)")


def _train_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("map")
    g.add_argument("--rows", type=_positive_int)
    g.add_argument("--cols", type=_positive_int)
    g.add_argument("--lattice", choices=["hexagonal", "rectangular"])
    g.add_argument("--epochs", type=_positive_int)
    g.add_argument("--sigma0", type=float)
    g.add_argument("--sigma-final", type=float, dest="sigma_final")
    g.add_argument("--init", choices=["pca_plane", "random"])
    g.add_argument("--behavior-map", choices=["overlay", "separate"], dest="behavior_map")


def _cluster_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=_positive_int, help="number of clusters (default: automatic)")
    p.add_argument("--weighted", action="store_true", default=None, help="weight nodes by record counts")


def _stats_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float)
    p.add_argument("--noteworthy-tau", type=float, dest="noteworthy_tau")
    p.add_argument("--ks-mc", type=_nonneg_int, dest="ks_mc", help="Monte Carlo replicates for KS p-values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="teamsom", description="Task and behavior maps for team work items.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    p = sub.add_parser("generate", parents=[common], help="write a synthetic dataset")
    _gen_options(p)
    p = sub.add_parser("ingest", parents=[common], help="validate input files into a run directory")
    _ingest_options(p)
    p = sub.add_parser("score", parents=[common], help="score message text per work item")
    _score_options(p)
    p = sub.add_parser("train", parents=[common], help="normalize features and train the map")
    _train_options(p)
    p = sub.add_parser("cluster", parents=[common], help="SOM-Ward clustering of the trained map")
    _cluster_options(p)
    p = sub.add_parser("render", parents=[common], help="write SVG maps")
    p.add_argument("--behavior-map", choices=["overlay", "separate"], dest="behavior_map")
    p = sub.add_parser("stats", parents=[common], help="normality tests and correlation matrix")
    _stats_options(p)
    p = sub.add_parser("report", parents=[common], help="run every stage and write report.md")
    _gen_options(p)
    p.add_argument("--work-items", dest="work_items", help="use this input instead of generating data")
    p.add_argument("--messages")
    p.add_argument("--strict", action="store_true", default=None)
    p.add_argument("--reconcile", action="store_true", default=None)
    _score_options(p)
    _train_options(p)
    _cluster_options(p)
    _stats_options(p)
    return parser


CONFIG_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    values: dict = {}
    if args.config is not None:
        values.update(pipeline.read_config_file(args.config))
    for name in CONFIG_FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    values = {k: v for k, v in values.items() if v is not None or k in ("rows", "cols", "k", "sigma0")}
    return RunConfig(**values)


def _output_dir(args: argparse.Namespace, default: str) -> Path:
    return args.output if args.output is not None else Path(default)


def _require_empty(path: Path, force: bool) -> None:
    if path.exists() and not path.is_dir():
        raise UsageError(f"{path} exists and is not a directory")
    if path.exists() and any(path.iterdir()) and not force:
        raise UsageError(f"{path} is not empty; pass --force to write into it")


def _require_run_dir(path: Path) -> None:
    if not path.is_dir():
        raise UsageError(f"run directory {path} does not exist")


STAGES = {
    "ingest": pipeline.stage_ingest,
    "score": pipeline.stage_score,
    "train": pipeline.stage_train,
    "cluster": pipeline.stage_cluster,
    "render": pipeline.stage_render,
    "stats": pipeline.stage_stats,
}


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    cmd = args.command
    if cmd == "generate":
        out = _output_dir(args, "generated")
        _require_empty(out, args.force)
        for path in pipeline.stage_generate(cfg, out):
            print(path)
        return EXIT_OK
    if cmd == "report":
        out = _output_dir(args, "run")
        _require_empty(out, args.force)
        try:
            manifest = pipeline.run_report(cfg, out)
        except StageFailed as exc:
            print(f"teamsom: stage '{exc.stage}' failed: {exc.cause}", file=sys.stderr)
            print(f"teamsom: partial outputs kept in {out} (manifest marked incomplete)", file=sys.stderr)
            if isinstance(exc.cause, DataError):
                return EXIT_DATA
            log.debug("internal error", exc_info=exc.cause)
            return EXIT_INTERNAL
        print(out / pipeline.REPORT)
        print(f"digest {manifest['digest']}")
        return EXIT_OK
    out = _output_dir(args, "run")
    if cmd == "ingest":
        out.mkdir(parents=True, exist_ok=True)
    else:
        _require_run_dir(out)
    STAGES[cmd](cfg, out)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="teamsom: %(levelname)s: %(message)s",
    )
    try:
        return run(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"teamsom: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"teamsom: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"teamsom: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
