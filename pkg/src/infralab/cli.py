"""Command line interface ``lab``.

``lab run <config.json> [--out DIR] [--jobs N]``
    Run an experiment; exit 0 on PASS, 1 on scientific FAIL.
``lab golden check <report> <golden>``
    Compare a report with a golden file.
``lab scene rasterize <scene.json> [--out FILE]``
    Rasterize a Minkowski scene and write a PBM plus JSON metadata.

Usage and configuration errors exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .jld import SceneError, load_scene

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lab", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run an experiment configuration")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="report directory")
    r.add_argument("--jobs", type=int, default=1, help="worker threads for sweeps")
    g = sub.add_parser("golden", help="golden-file operations")
    gsub = g.add_subparsers(dest="golden_command", required=True, parser_class=_Parser)
    gc = gsub.add_parser("check", help="compare a report with a golden")
    gc.add_argument("report")
    gc.add_argument("golden")
    gc.add_argument("--tolerances", default=None, help="JSON file of per-field tolerances")
    s = sub.add_parser("scene", help="scene operations")
    ssub = s.add_subparsers(dest="scene_command", required=True, parser_class=_Parser)
    sr = ssub.add_parser("rasterize", help="rasterize a scene to PBM")
    sr.add_argument("scene")
    sr.add_argument("--out", default=None, help="output .pbm path (default next to the scene)")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            if args.jobs < 1:
                print("lab: --jobs must be >= 1", file=sys.stderr)
                return EXIT_USAGE
            cfg = harness.load_config(args.config)
            out = args.out or cfg.output or str(Path("reports") / cfg.experiment)
            rep = harness.run_experiment(cfg, out, jobs=args.jobs)
            status = "PASS" if rep.passed else "FAIL"
            print(f"{status} {cfg.experiment} -> {out}")
            print(json.dumps(rep.verdicts, indent=2, sort_keys=True))
            return EXIT_PASS if rep.passed else EXIT_FAIL
        if args.command == "golden":
            tols = json.loads(Path(args.tolerances).read_text()) if args.tolerances else None
            v = harness.compare_golden(args.report, args.golden, tols)
            print("\n".join(v.lines()))
            return EXIT_PASS if v.passed else EXIT_FAIL
        if args.command == "scene":
            region = load_scene(args.scene)
            out = Path(args.out) if args.out else Path(args.scene).with_suffix(".pbm")
            region.to_pbm(out)
            print(f"{region.count()} cells of {region.grid.size} -> {out}")
            return EXIT_PASS
    except harness.GoldenMissingError as exc:
        print(f"lab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (harness.ConfigError, SceneError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"lab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
