"""Command line interface.

Exit codes: 0 success, 2 configuration error, 3 I/O or format error,
4 stage failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import PRESETS, SUITES, PipelineConfig, merge, set_path
from .embedcluster import ClusterParams, decode, load_embeddings, save_embeddings
from .exceptions import ConfigError, FormatError, StageError, SynthtrackError
from .io import load_labels, save_intensities, save_labels, save_masks
from .metrics import AogmWeights
from .render import ingest_frames

FORMATS = """\
Label videos (directory)
  mask%03d.png   16-bit grayscale PNG per frame, pixel value = instance id (0 = background),
                 frames numbered from 0
  tracks.txt     one record per line, ascending id: "L B E P"
                 L id, B first frame, E last frame, P parent id (0 = none)

Intensity frames (directory)
  t%03d.png      8- or 16-bit grayscale PNG, normalized by 255 / 65535 on load

Embeddings (EMB1, little-endian)
  bytes 0-3      magic "EMB1"
  u32 x 5        frames, height, width, dim, flags (bit0 = foreground masks present)
  f32 payload    frames*height*width*dim values, row-major, dim fastest
  u8 payload     if flags bit0: frames*height*width bytes, 0 or 1

Scores
  scores.txt     "DET=.. SEG=.. TRA=.." then operation counts "NS=.. FN=.. FP=.. ED=.. EA=.. EC=.."
  report.json    scores, counts and per-frame SEG

Config
  single JSON object; top-level keys: scenario, seed, n_videos, split_quadrants,
  simulator, appearance, binarize, refine, embedding, cluster, weights, io.
  Unknown keys are errors. `synthtrack formats --config-defaults [--scenario S]`
  prints a complete default document.
"""


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _flag_overrides(args):
    data = {}
    if getattr(args, "scenario", None):
        data["scenario"] = args.scenario
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        set_path(data, key, _parse_value(value))
    return data


def build_config(args):
    """Defaults, then flags; the config file wins unless ``--override`` is given."""
    flags = _flag_overrides(args)
    base = {}
    if getattr(args, "preset", None):
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}")
        base = PRESETS[args.preset][1]
    file_data = {}
    if getattr(args, "config", None):
        try:
            file_data = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON: {exc}") from None
        if not isinstance(file_data, dict):
            raise ConfigError(f"{args.config}: config must be a JSON object")
    if getattr(args, "override", False):
        data = merge(merge(base, file_data), flags)
    else:
        data = merge(merge(base, flags), file_data)
    return PipelineConfig.from_dict(data)


def _config_args(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--scenario", choices=("hela", "microvilli"))
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="set a config key, e.g. simulator.frame_count=10 (repeatable)")
    p.add_argument("--override", action="store_true", help="flags win over the config file")


def cmd_sim(args):
    cfg = build_config(args)
    video = pipeline.simulate(cfg, args.index)
    save_labels(video, args.out)
    print(f"wrote {video.n_frames} frames, {len(video.lineage)} tracks to {args.out}")


def cmd_render(args):
    cfg = build_config(args)
    video = load_labels(args.labels)
    frames = pipeline.render(video, cfg, args.index)
    save_intensities(frames, args.out)
    print(f"wrote {len(frames)} frames to {args.out}")


def cmd_refine(args):
    cfg = build_config(args)
    video = load_labels(args.labels)
    frames = ingest_frames(args.frames, args.pattern)
    if not (cfg.refine.enable_ad or cfg.refine.enable_ac):
        cfg.refine.enable_ad = cfg.refine.enable_ac = True
    refined, cleaned, masks, reports = pipeline.refine(video, frames, cfg)
    out = Path(args.out)
    save_labels(refined, out / "labels")
    save_intensities(cleaned, out / "frames")
    save_masks(masks, out / "masks")
    (out / "refine_report.json").write_text(
        json.dumps(pipeline._jsonable(reports), indent=2, sort_keys=True) + "\n")
    print(f"refined {refined.n_frames} frames, {len(refined.lineage)} tracks kept")


def cmd_embed_oracle(args):
    cfg = build_config(args)
    video = load_labels(args.labels)
    field = pipeline.embed_oracle(video, cfg, args.index)
    save_embeddings(field, args.out)
    print(f"wrote EMB1 {field.values.shape} to {args.out}")


def cmd_decode(args):
    cfg = build_config(args)
    params = cfg.cluster
    if args.bandwidth is not None:
        params = ClusterParams(**{**params.to_dict(), "bandwidth": args.bandwidth})
    video = decode(load_embeddings(args.embeddings), params)
    save_labels(video, args.out)
    print(f"decoded {len(video.lineage)} tracks to {args.out}")


def cmd_eval(args):
    weights = AogmWeights()
    if args.config:
        weights = build_config(args).weights
    report = pipeline.evaluate_dirs(args.gt, args.res, weights)
    sys.stdout.write(report.to_text())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "scores.txt").write_text(report.to_text())
        (out / "report.json").write_text(report.to_json())


def cmd_pipeline(args):
    if args.suite:
        _, text = pipeline.run_suite(args.suite, args.out, seed=args.seed or 0)
        sys.stdout.write(text)
        return
    cfg = build_config(args)
    agg = pipeline.run_pipeline(cfg, args.out)
    sys.stdout.write(pipeline.format_scores(agg))


def cmd_formats(args):
    if args.config_defaults:
        cfg = PipelineConfig(scenario=args.scenario or "hela")
        sys.stdout.write(cfg.to_json())
    else:
        sys.stdout.write(FORMATS)


def make_parser():
    parser = argparse.ArgumentParser(prog="synthtrack", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim", help="simulate a labeled video")
    _config_args(p)
    p.add_argument("--index", type=int, default=0, help="video index (seed stream)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("render", help="render intensity frames from labels")
    _config_args(p)
    p.add_argument("--labels", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("refine", help="binarize frames, deform and clean labels")
    _config_args(p)
    p.add_argument("--labels", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--pattern", default="t%03d.png")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("embed-oracle", help="write oracle embeddings (EMB1) for labels")
    _config_args(p)
    p.add_argument("--labels", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed_oracle)

    p = sub.add_parser("decode", help="mean-shift decode an EMB1 file into labels")
    _config_args(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="score a result label video against ground truth")
    _config_args(p)
    p.add_argument("--gt", required=True)
    p.add_argument("--res", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="run every stage, or a preset suite")
    _config_args(p)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--suite", choices=sorted(SUITES))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("formats", help="print file format specifications")
    p.add_argument("--config-defaults", action="store_true")
    p.add_argument("--scenario", choices=("hela", "microvilli"))
    p.set_defaults(func=cmd_formats)
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    except StageError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return 4
    except (SynthtrackError, ValueError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
