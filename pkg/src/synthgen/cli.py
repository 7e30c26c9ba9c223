"""Command line: ``synthgen generate|render|evaluate|inspect``.

Exit codes: 0 success, 1 usage or configuration error, 2 data or asset
error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import AssetError, ConfigError, EvaluationError, SamplingError, SynthGenError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="synthgen", description="Synthetic detection-data generator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("generate", help="sample (and settle) all scenes of a run")
    g.add_argument("--config", required=True, help="run configuration (TOML)")
    g.add_argument("--out", required=True, help="run directory")
    g.add_argument("--seed", type=int, help="override the configured seed")

    r = sub.add_parser("render", help="render and export a frame interval")
    r.add_argument("run", nargs="?", help="run directory (or --out)")
    r.add_argument("--out", help="run directory")
    r.add_argument("--frames", help="inclusive interval A..B (default: the configured interval)")
    r.add_argument("--spp", type=int, help="samples per pixel")
    r.add_argument("--threads", type=int, help="render threads")

    e = sub.add_parser("evaluate", help="COCO-style mAP of detections against ground truth")
    e.add_argument("--gt", required=True, help="COCO ground-truth JSON")
    e.add_argument("--dets", required=True, help="COCO results JSON (list of detections)")
    e.add_argument("--out", required=True, help="report path (.json; a .txt table is written beside it)")
    e.add_argument("--max-dets", type=int, help="keep at most this many detections per image and class")

    i = sub.add_parser("inspect", help="summarize a run directory")
    i.add_argument("run", nargs="?", help="run directory (or --out)")
    i.add_argument("--out", help="run directory")
    i.add_argument("--json", action="store_true", help="print the summary as JSON")
    return p


def _run_dir(args) -> str:
    d = args.run or args.out
    if not d:
        raise UsageError("a run directory is required")
    return d


def run(argv=None) -> int:
    from . import pipeline

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: generate, render, evaluate or inspect")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "generate":
            m = pipeline.cmd_generate(args.config, args.out, args.seed)
            print(f"generated {m['scene_count']} scenes in {args.out}")
        elif args.command == "render":
            f_s = f_e = None
            if args.frames:
                f_s, f_e = pipeline.parse_frames(args.frames)
            if args.spp is not None and args.spp < 1:
                raise UsageError("--spp must be >= 1")
            m = pipeline.cmd_render(_run_dir(args), f_s, f_e, args.spp, args.threads)
            done = sum(1 for r in m["frames"].values() if r["status"] == "exported")
            print(f"{done}/{m['scene_count']} frames exported")
        elif args.command == "evaluate":
            res = pipeline.cmd_evaluate(args.gt, args.dets, args.out, args.max_dets)
            print(f"mAP@50 {res.map50:.4f}  mAP@50-95 {res.map50_95:.4f}")
        elif args.command == "inspect":
            summary = pipeline.cmd_inspect(_run_dir(args))
            print(json.dumps(summary, indent=2) if args.json else pipeline.format_inspect(summary), end="")
            if args.json:
                print()
    except UsageError as exc:
        print(f"synthgen: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"synthgen: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AssetError, SamplingError, EvaluationError, pipeline.RunError) as exc:
        print(f"synthgen: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SynthGenError as exc:
        print(f"synthgen: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # anything else is a bug
        logging.getLogger(__name__).exception("internal error")
        print(f"synthgen: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
