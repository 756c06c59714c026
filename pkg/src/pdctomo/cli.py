"""Command-line workflow: simulate -> reconstruct -> compare -> render.

Environment overrides
---------------------
PDCTOMO_OUTPUT_DIR
    Output directory for ``simulate`` and ``reconstruct`` (``--out`` wins).
PDCTOMO_LOG_LEVEL
    Logging level name (``--log-level`` wins). Default ``WARNING``.

Failures print one JSON line ``{"error": <category>, "message": ...}`` on
stderr. Exit codes: 2 for input/validation errors (including grid
mismatches), 3 for file-system errors, 1 for anything unexpected.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import load_config
from .errors import PdcTomoError
from .instrument import simulate_scan
from .jsa import build_jsa
from .render import COLORMAPS, render_file
from .storage import dumps_json, load_dataset, load_result, load_truth, save_dataset, save_metrics, save_result
from .tomography import reconstruct, score

log = logging.getLogger("pdctomo")

EXIT_INPUT = 2
EXIT_IO = 3
EXIT_INTERNAL = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    category = "usage"


def _fail(category: str, message: str, code: int) -> int:
    line = json.dumps({"error": category, "message": " ".join(str(message).split())})
    print(line, file=sys.stderr)
    return code


def _log_warning(message, category, filename, lineno, file=None, line=None):
    log.warning("%s: %s", category.__name__, message)


def _out_dir(arg: Optional[str], fallback: Path) -> Path:
    if arg:
        return Path(arg)
    env = os.environ.get("PDCTOMO_OUTPUT_DIR")
    return Path(env) if env else fallback


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out) if args.out else Path(cfg.output_dir)
    jsa = build_jsa(cfg.grid, cfg.pdc)
    dataset = simulate_scan(jsa, cfg.seeds, cfg.dazzler, cfg.detector)
    dataset = replace(dataset, config=cfg.to_dict())
    path = save_dataset(dataset, out_dir, stem=args.stem or cfg.stem, binary=args.binary)
    log.info("dataset written to %s", path)
    print(path)
    return 0


def cmd_reconstruct(args) -> int:
    dataset_path = Path(args.dataset)
    dataset = load_dataset(dataset_path)
    result = reconstruct(dataset, estimator=args.estimator)
    out_dir = _out_dir(args.out, dataset_path.parent)
    stem = args.stem or f"{dataset_path.stem}_result"
    path = save_result(result, out_dir, stem=stem)
    log.info("result written to %s", path)
    if result.metrics is not None:
        log.info("metrics: %s", json.dumps(result.metrics, sort_keys=True))
    print(path)
    return 0


def cmd_compare(args) -> int:
    result_path = Path(args.result)
    result = load_result(result_path)
    truth = load_truth(args.truth)
    metrics = score(result, truth)
    out = Path(args.out) if args.out else result_path.with_name(f"{result_path.stem}_metrics.json")
    save_metrics(metrics, out)
    sys.stdout.write(dumps_json(metrics))
    return 0


def cmd_render(args) -> int:
    out = render_file(args.matrix, out=args.out, kind=args.kind)
    print(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pdctomo", description="Seeded JSA tomography: simulate, reconstruct, compare, render.")
    parser.add_argument("--log-level", default=None, help="logging level (default: $PDCTOMO_LOG_LEVEL or WARNING)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="synthesise a scan dataset from a run config")
    p.add_argument("config", help="config JSON path, or a bundled name: wg25, wg10, noise-study")
    p.add_argument("--out", help="output directory (overrides config and $PDCTOMO_OUTPUT_DIR)")
    p.add_argument("--stem", help="file stem (default: paths.stem from the config)")
    p.add_argument("--binary", action="store_true", help="store traces as .npy instead of CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="invert a dataset into the complex JSA")
    p.add_argument("dataset", help="dataset metadata JSON")
    p.add_argument("--estimator", choices=("dft", "fit"), default="dft")
    p.add_argument("--out", help="output directory (default: next to the dataset)")
    p.add_argument("--stem", help="file stem (default: <dataset>_result)")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("compare", help="score a result against a reference JSA")
    p.add_argument("result", help="result metadata JSON")
    p.add_argument("truth", help="dataset JSON (uses its ground truth) or another result JSON")
    p.add_argument("--out", help="metrics JSON path (default: <result>_metrics.json)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("render", help="render a grid-matrix CSV to a PNG heatmap")
    p.add_argument("matrix", help="grid-matrix CSV")
    p.add_argument("--out", help="PNG path (default: CSV path with .png)")
    p.add_argument("--kind", choices=sorted(COLORMAPS), help="colormap preset (default: inferred from file name)")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        return _fail("usage", str(exc), EXIT_INPUT)
    level = (args.log_level or os.environ.get("PDCTOMO_LOG_LEVEL") or "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        return _fail("usage", f"unknown log level {level!r}", EXIT_INPUT)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    warnings.showwarning = _log_warning
    try:
        return args.func(args)
    except PdcTomoError as exc:
        return _fail(exc.category, str(exc), EXIT_INPUT)
    except OSError as exc:
        return _fail("io", str(exc), EXIT_IO)
    except Exception as exc:  # noqa: BLE001 - last-resort reporting
        return _fail("internal", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL)


if __name__ == "__main__":
    sys.exit(main())
