"""Command-line entry point: ``qmap <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import pipeline
from .errors import QmapError
from .maps import FrMethod

log = logging.getLogger("qmap")

COMMANDS = ("map", "synth", "labels", "train-gen", "train-pool", "predict", "eval", "study", "smoke")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file, or a bundled name ('smoke')")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--workers", type=int, help="threads for per-image work (results do not depend on it)")
    p.add_argument("--out", default=".", help="workspace directory (default: current directory)")
    p.add_argument("--method", action="append", choices=[m.value for m in FrMethod],
                   help="map method; repeat for several maps")
    p.add_argument("--fusion", choices=("single", "multi"), help="how several maps reach the pooler")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key")
    p.add_argument("--dry-run", action="store_true", help="print the resolved plan and exit")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("map", help="compute a full-reference quality map and its poolings")
    p.add_argument("dist")
    p.add_argument("ref")
    p.add_argument("--method", default="fsim_gm", choices=[m.value for m in FrMethod])
    p.add_argument("--out", help="write the map as an 8-bit PNG")
    p.add_argument("--map-config", help="key=value file overriding map constants")
    p.add_argument("-v", "--verbose", action="store_true")

    helps = {
        "synth": "write a synthetic distorted dataset",
        "labels": "materialize full-reference map labels",
        "train-gen": "train one map generator per method",
        "train-pool": "train the pooling network",
        "eval": "score the held-out split",
        "study": "patch-averaging study on ground-truth maps",
        "smoke": "run synth, labels, train-gen, train-pool and eval in turn",
    }
    for name, text in helps.items():
        _common(sub.add_parser(name, help=text))
    p = sub.add_parser("predict", help="score one image and write its predicted map")
    p.add_argument("image")
    _common(p)
    return parser


def _overrides(args) -> dict:
    out = {"seed": args.seed, "workers": args.workers, "fusion": args.fusion}
    if args.method:
        out["methods"] = ",".join(args.method)
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise QmapError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _run_map(args) -> int:
    from .maps import MapConfig

    cfg = MapConfig.load(args.map_config) if args.map_config else MapConfig()
    scores = pipeline.run_map(args.dist, args.ref, args.method, args.out, cfg)
    for name, value in scores.items():
        print(f"{name} {value:.6f}")
    return 0


def _run_stage(args) -> int:
    cfg = pipeline.RunConfig.resolve(args.config, _overrides(args))
    ws = pipeline.Workspace(args.out, cfg)
    stages = pipeline.SMOKE_ORDER if args.command == "smoke" else (args.command,)
    if args.dry_run:
        print(f"workspace {ws.root}")
        print(f"stages {' '.join(stages)}")
        sys.stdout.write(cfg.text())
        return 0
    os.makedirs(ws.root, exist_ok=True)
    for stage in stages:
        log.info("running %s", stage)
        if stage == "predict":
            summary = pipeline.run_predict(ws, args.image)
            print(f"{summary.records[1]['score']:.6f}")
        else:
            summary = pipeline.STAGES[stage](ws)
            for rec in summary.records[1:-1]:
                _report(stage, rec)
    return 0


def _report(stage: str, rec: dict) -> None:
    keys = ("srcc", "plcc", "block", "entries", "method", "best_epoch", "patches")
    shown = " ".join(f"{k}={rec[k]:.4f}" if isinstance(rec[k], float) else f"{k}={rec[k]}"
                     for k in keys if k in rec)
    print(f"{stage}: {shown}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "map":
            return _run_map(args)
        return _run_stage(args)
    except (QmapError, ValueError, OSError, RuntimeError, FloatingPointError) as exc:
        print(f"qmap {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
