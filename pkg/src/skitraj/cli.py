"""Command line: run, synth, eval, render."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, InvalidParams, InvalidSpec, SkitrajError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def cmd_run(args) -> int:
    from .config import load_config
    from .pipeline import run

    overrides = {}
    if args.input:
        overrides["input"] = str(Path(args.input).resolve())
    if args.output:
        overrides["output"] = str(Path(args.output).resolve())
    if args.no_render:
        overrides["render"] = "false"
    cfg = load_config(args.config, overrides)
    res = run(cfg)
    print(f"{res.frames} frames -> {res.out}  (identity fallbacks: {res.fallbacks}, low-confidence boxes: {res.low_confidence})")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthgen import SceneSpec, generate, spec_from_ini, write_scene

    spec = spec_from_ini(args.spec) if args.spec else SceneSpec()
    frames, gt = generate(spec)
    meta = write_scene(args.out, spec, frames, gt, ext=args.ext, check_suitability=not args.skip_suitability)
    tag = "" if "suitable" not in meta else ("  [suitable]" if meta["suitable"] else "  [unsuitable]")
    print(f"scene with {spec.frames} frames written to {args.out}{tag}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluate import evaluate_dirs, write_report

    report = evaluate_dirs(args.pred, args.ref, clipped=args.clipped)
    write_report(report, args.out, with_timing=not args.no_timing, figures=not args.no_figures)
    sys.stdout.write(report.text(with_timing=not args.no_timing))
    return EXIT_OK


def cmd_render(args) -> int:
    from .bbox import BBox
    from .config import _section
    from .image import FrameDirectory, write_frame
    from .render import RenderStyle, copy_frames, render_frame
    from .tracker import read_track_file
    from .trajectory import read_records

    records = read_records(args.records)
    boxes = read_track_file(args.boxes) if args.boxes else {}
    style = RenderStyle()
    if args.style:
        import configparser

        cp = configparser.ConfigParser()
        cp.read(args.style)
        style = _section(cp, "render", RenderStyle)
    frames = FrameDirectory(args.frames)
    out = Path(args.out)
    if not records:
        n = copy_frames(args.frames, out)
        print(f"no records; copied {n} frames")
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    for t in range(len(frames)):
        f = frames[t]
        box: BBox | None = boxes.get(t)
        if t < len(records):
            f = render_frame(f, records[t], box, style)
        write_frame(out / frames.path(t).name, f)
    print(f"{len(frames)} frames rendered to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skitraj", description="Target trajectories under a moving camera.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-frame fallbacks")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="process a frame directory online")
    r.add_argument("--config", required=True, help="INI run configuration")
    r.add_argument("--input", help="override [run] input")
    r.add_argument("--output", help="override [run] output")
    r.add_argument("--no-render", action="store_true", help="skip writing annotated frames")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("synth", help="generate a synthetic scene with ground truth")
    s.add_argument("--spec", help="INI scene spec (defaults when omitted)")
    s.add_argument("--out", required=True)
    s.add_argument("--ext", choices=("png", "ppm"), default="png")
    s.add_argument("--skip-suitability", action="store_true", help="do not run the corner-count check")
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", help="score predicted records against references")
    e.add_argument("--pred", required=True)
    e.add_argument("--ref", required=True)
    e.add_argument("--out", required=True, help="CSV path; report.txt and figures go next to it")
    e.add_argument("--clipped", choices=("diagonal", "skip"), default="diagonal",
                   help="how a clipped prediction of a visible reference point counts")
    e.add_argument("--no-timing", action="store_true", help="leave wall-clock columns empty (reproducible CSV)")
    e.add_argument("--no-figures", action="store_true")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("render", help="draw records onto frames")
    d.add_argument("--records", required=True)
    d.add_argument("--frames", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--boxes", help="track file with the box per frame")
    d.add_argument("--style", help="INI file with a [render] section")
    d.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidSpec, InvalidParams) as exc:
        print(f"skitraj: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SkitrajError, OSError, ValueError) as exc:
        print(f"skitraj: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
