"""End-to-end runs: simulate -> render -> refine -> embed -> decode -> evaluate.

Every CLI subcommand is a thin wrapper over a function in this module.
"""
from __future__ import annotations

import hashlib
import json
import logging
import shutil
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import PRESETS, SUITES, PipelineConfig, canonical_json, preset
from .embedcluster import decode, load_embeddings, oracle_embeddings, save_embeddings
from .exceptions import StageError
from .hela import simulate_hela
from .io import (load_labels, save_intensities, save_labels, save_masks)
from .metrics import evaluate
from .microvilli import simulate_microvilli
from .model import LabeledVideo, Rng, finalize_tracks
from .refine import refine_video
from .render import binarize, ingest_frames, render_video

log = logging.getLogger(__name__)


def video_seed(seed, index):
    """Per-video simulator seed derived from the run seed."""
    return int(Rng(seed).child("video", index).integers(0, 2**63))


# ---------------------------------------------------------------------------
# stage functions (library equivalents of the subcommands)


def simulate(config, index=0):
    sim = replace(config.simulator, seed=video_seed(config.seed, index))
    return simulate_hela(sim) if config.scenario == "hela" else simulate_microvilli(sim)


def render(video, config, index=0):
    params = replace(config.appearance, seed=video_seed(config.seed, index) ^ 0x5EED)
    return render_video(video, params)


def binarize_frames(frames, method="otsu"):
    return [binarize(f, method) for f in frames]


def refine(video, frames, config):
    masks = binarize_frames(frames, config.binarize)
    refined, cleaned, reports = refine_video(video, masks, frames, config.refine)
    return refined, cleaned, masks, reports


def embed_oracle(video, config, index=0):
    e = config.embedding
    rng = Rng(video_seed(config.seed, index)).child("embedding")
    return oracle_embeddings(video, e.dim, e.noise_sigma, rng, e.min_distance)


def split_quadrants(video, frames=None):
    """Split a video (and optional intensity frames) into four half-size videos."""
    T, H, W = video.frames.shape
    h, w = H // 2, W // 2
    parents = {r.id: r.parent for r in video.lineage if r.parent}
    out = []
    for y0, x0 in ((0, 0), (0, w), (h, 0), (h, w)):
        sub = video.frames[:, y0 : y0 + h, x0 : x0 + w]
        f, lin = finalize_tracks(sub, parents)
        quad_frames = None if frames is None else [fr[y0 : y0 + h, x0 : x0 + w] for fr in frames]
        out.append((LabeledVideo(f, lin), quad_frames))
    return out


# ---------------------------------------------------------------------------
# full pipeline


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _run_video(config, index, vdir):
    video = _stage("sim", simulate, config, index)
    save_labels(video, vdir / "sim")
    if config.io.frames_dir:
        frames = _stage("render", ingest_frames, config.io.frames_dir, config.io.frames_pattern)
        if len(frames) != video.n_frames or frames[0].shape != video.shape:
            raise StageError("render", ValueError("ingested frames do not match the simulated video"))
    else:
        frames = _stage("render", render, video, config, index)
    save_intensities(frames, vdir / "frames")

    gt = video
    if config.refine.enable_ad or config.refine.enable_ac:
        gt, frames, masks, reports = _stage("refine", refine, video, frames, config)
        save_masks(masks, vdir / "masks")
        save_labels(gt, vdir / "refined")
        save_intensities(frames, vdir / "frames_clean")
        (vdir / "refine_report.json").write_text(canonical_json(_jsonable(reports)))

    units = [(gt, frames)]
    if config.split_quadrants:
        units = _stage("split", split_quadrants, gt, frames)

    reports = []
    for q, (unit_gt, _) in enumerate(units):
        udir = vdir if len(units) == 1 else vdir / f"quad_{q}"
        if len(units) > 1:
            save_labels(unit_gt, udir / "gt")
        if config.embedding.source == "file":
            field = _stage("embed", load_embeddings, config.io.embeddings_path)
        else:
            field = _stage("embed", embed_oracle, unit_gt, config, index * 4 + q)
        save_embeddings(field, udir / "embeddings.emb")
        res = _stage("decode", decode, field, config.cluster)
        save_labels(res, udir / "decoded")
        report = _stage("eval", evaluate, unit_gt, res, config.weights)
        (udir / "scores.txt").write_text(report.to_text())
        (udir / "report.json").write_text(report.to_json())
        reports.append(report)
    return reports


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return round(float(obj), 9)
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj


def aggregate(reports):
    keys = ("DET", "SEG", "TRA")
    out = {k: float(np.mean([r.to_dict()[k] for r in reports])) for k in keys}
    counts = {}
    for r in reports:
        for k, v in r.counts.items():
            counts[k] = counts.get(k, 0) + v
    out["counts"] = counts
    out["n_videos"] = len(reports)
    return out


def format_scores(agg):
    head = f"DET={agg['DET']:.6f} SEG={agg['SEG']:.6f} TRA={agg['TRA']:.6f}"
    tail = " ".join(f"{k}={v}" for k, v in agg["counts"].items())
    return f"{head}\n{tail} VIDEOS={agg['n_videos']}\n"


def run_pipeline(config, out_dir=None):
    """Run every stage for ``config.n_videos`` videos under ``out_dir``.

    Returns the aggregate score dict. A failing stage raises
    :class:`StageError`; that video's partial outputs move to ``failed/``.
    """
    config.validate()
    out = Path(out_dir or config.io.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config.to_json())
    all_reports = []
    for k in range(config.n_videos):
        vdir = out / f"video_{k:03d}"
        if vdir.exists():
            shutil.rmtree(vdir)
        vdir.mkdir()
        try:
            all_reports.extend(_run_video(config, k, vdir))
        except StageError:
            failed = out / "failed"
            failed.mkdir(exist_ok=True)
            dest = failed / vdir.name
            if dest.exists():
                shutil.rmtree(dest)
            shutil.move(str(vdir), str(dest))
            raise
    agg = aggregate(all_reports)
    (out / "scores.txt").write_text(format_scores(agg))
    (out / "report.json").write_text(canonical_json(_jsonable(
        {**agg, "videos": [r.to_dict() for r in all_reports]})))
    artifacts = {
        str(p.relative_to(out)): _sha256(p)
        for p in sorted(out.rglob("*"))
        if p.is_file() and p.name != "manifest.json" and "failed" not in p.relative_to(out).parts
    }
    manifest = {"config_sha256": config.digest(), "seed": config.seed, "artifacts": artifacts}
    (out / "manifest.json").write_text(canonical_json(manifest))
    return agg


# ---------------------------------------------------------------------------
# experiment tables


def table_row(name, config, agg):
    frames = config.simulator.frame_count
    return {"Exp.": name, "T.V.": agg["n_videos"], "T.F.": frames,
            "DET": agg["DET"], "SEG": agg["SEG"], "TRA": agg["TRA"]}


def format_table(rows):
    header = f"{'Exp.':<16} | {'T.V.':>4} | {'T.F.':>4} | {'DET':>5} | {'SEG':>5} | {'TRA':>5}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(f"{r['Exp.']:<16} | {r['T.V.']:>4} | {r['T.F.']:>4} | "
                     f"{r['DET']:.3f} | {r['SEG']:.3f} | {r['TRA']:.3f}")
    return "\n".join(lines) + "\n"


def run_suite(suite, out_dir, seed=0):
    """Run a family of presets and write a DET/SEG/TRA table."""
    out = Path(out_dir)
    rows = []
    for name in SUITES[suite]:
        cfg = preset(name, seed=seed)
        agg = run_pipeline(cfg, out / name)
        rows.append(table_row(PRESETS[name][0], cfg, agg))
    text = format_table(rows)
    (out / "table.txt").write_text(text)
    (out / "table.json").write_text(canonical_json(_jsonable(rows)))
    return rows, text


def evaluate_dirs(gt_dir, res_dir, weights=None):
    return evaluate(load_labels(gt_dir), load_labels(res_dir), weights)
