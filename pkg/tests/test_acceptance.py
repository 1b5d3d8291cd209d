"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""
import itertools
import json
import math
import time

import numpy as np
import pytest

from synthtrack import pipeline
from synthtrack.config import PipelineConfig, SUITES, PRESETS
from synthtrack.embedcluster import (ClusterParams, EmbeddingField, decode, dumps_embeddings,
                                     loads_embeddings, oracle_embeddings)
from synthtrack.exceptions import ConfigError, FormatError
from synthtrack.hela import simulate_cell_states, simulate_hela
from synthtrack.io import load_labels, parse_tracks, save_labels
from synthtrack.metrics import aogm, build_graph, evaluate, tra
from synthtrack.microvilli import render_scene_sequence, simulate_microvilli, simulate_states
from synthtrack.model import LabeledVideo, Lineage, Rng, finalize_tracks
from synthtrack.refine import RefineOptions, dice, register, refine_video, warp_labels

from aogm_reference import exhaustive_cases, random_case, records, reference_aogm
from conftest import disk_mask, record_acceptance, small_hela, small_microvilli

pytestmark = pytest.mark.acceptance


def check(number, title, ok, detail):
    record_acceptance(number, title, ok, detail)
    print(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
    assert ok, detail


def _perturb(video, rng):
    """A degraded copy: dropped objects, a shifted frame and an id swap."""
    f = video.frames.copy()
    ids = video.lineage.ids()
    for i in rng.choice(ids, size=max(1, len(ids) // 4), replace=False):
        t = rng.integers(len(f))
        f[t][f[t] == i] = 0
    t = rng.integers(len(f))
    f[t] = np.roll(f[t], int(rng.integers(1, 4)), axis=1)
    if len(ids) > 1:
        a, b = rng.choice(ids, 2, replace=False)
        t = rng.integers(len(f))
        fa, fb = f[t] == a, f[t] == b
        f[t][fa], f[t][fb] = b, a
    frames, lin = finalize_tracks(f)
    return LabeledVideo(frames, lin)


def test_1_metric_identity_and_bounds():
    start = time.perf_counter()
    identity_ok, bounded_ok, n = True, True, 0
    for seed in range(25):
        for video in (simulate_hela(small_hela(seed=seed)),
                      simulate_microvilli(small_microvilli(seed=seed))):
            n += 1
            rep = evaluate(video, video)
            identity_ok &= (rep.det, rep.seg, rep.tra) == (1.0, 1.0, 1.0)
            bad = evaluate(video, _perturb(video, np.random.default_rng(seed)))
            bounded_ok &= all(0.0 <= v <= 1.0 for v in (bad.det, bad.seg, bad.tra))
    elapsed = time.perf_counter() - start
    check(1, "metric identity & bounds", identity_ok and bounded_ok and elapsed < 30 and n == 50,
          f"{n} videos, identity={identity_ok}, bounded={bounded_ok}, {elapsed:.1f}s (< 30s)")


def test_2_aogm_oracle_equivalence():
    start = time.perf_counter()
    videos = exhaustive_cases()
    pairs = list(itertools.product(videos, repeat=2))
    pairs += [random_case(s) for s in range(400)]
    mismatches = 0
    for gt, res in pairs:
        counts, cost = reference_aogm(gt.frames, records(gt), res.frames, records(res))
        r = aogm(gt, res)
        if r.counts() != counts or not math.isclose(r.cost, cost):
            mismatches += 1
    elapsed = time.perf_counter() - start
    check(2, "AOGM oracle equivalence", mismatches == 0 and len(pairs) >= 200 and elapsed < 60,
          f"{len(pairs)} cases, {mismatches} mismatches, {elapsed:.1f}s (< 60s)")


def test_3_hand_counted_tra():
    f = np.array([[[1, 1, 0]], [[0, 1, 1]]], dtype=np.int32)
    gt = LabeledVideo(*finalize_tracks(f))
    g = f.copy()
    g[1] = 0
    res = LabeledVideo(*finalize_tracks(g))
    value = tra(gt, res)
    expect = 1 - 11.5 / 21.5
    check(3, "hand-counted TRA case", abs(value - expect) <= 1e-9,
          f"TRA={value:.12f}, expected {expect:.12f}")


def _oracle_scores(seed, sigma):
    video = simulate_hela(small_hela(seed=seed, object_count=12, n_mitosis=1))
    field = oracle_embeddings(video, 8, sigma, Rng(seed).child("embedding"))
    rep = evaluate(video, decode(field, ClusterParams(bandwidth=0.5)))
    return np.array([rep.det, rep.seg, rep.tra])


def test_4_oracle_decode_round_trip():
    start = time.perf_counter()
    sigmas = (0.0, 0.05, 0.1, 0.2)
    scores = np.array([[_oracle_scores(seed, s) for s in sigmas] for seed in range(10)])
    mean = scores.mean(axis=0)          # (sigma, metric)
    zero = scores[:, 0]
    thresholds = bool((zero[:, 0] >= 0.99).all() and (zero[:, 2] >= 0.99).all()
                      and (zero[:, 1] >= 0.95).all())
    near = bool(np.all(np.abs(scores[:, 1] - scores[:, 0]) <= 0.05))
    monotone = bool(np.all(np.diff(mean, axis=0) <= 0))
    elapsed = time.perf_counter() - start
    table = "; ".join(f"s={s}: DET={m[0]:.4f} SEG={m[1]:.4f} TRA={m[2]:.4f}"
                      for s, m in zip(sigmas, mean))
    check(4, "oracle decode round-trip",
          thresholds and near and monotone and elapsed < 120,
          f"thresholds={thresholds}, within0.05={near}, monotone={monotone}, "
          f"{elapsed:.1f}s (< 120s) [{table}]")


def _perturbed_disk_frame(rng, shape=(64, 64)):
    labels = np.zeros(shape, dtype=np.int32)
    mask = np.zeros(shape, dtype=bool)
    centers = [(18, 18), (44, 22), (30, 46)]
    from scipy import ndimage
    for k, (cx, cy) in enumerate(centers, 1):
        r = int(rng.integers(7, 11))
        labels[disk_mask((cx, cy), r, shape)] = k
        dx, dy = rng.integers(-3, 4, size=2)
        m = disk_mask((cx + dx, cy + dy), r, shape)
        morph = int(rng.integers(-2, 3))
        if morph > 0:
            m = ndimage.binary_dilation(m, iterations=morph)
        elif morph < 0:
            m = ndimage.binary_erosion(m, iterations=-morph)
        mask |= m
    return labels, mask


def test_5_refinement_properties():
    rng = np.random.default_rng(5)
    frames = [_perturbed_disk_frame(rng) for _ in range(20)]
    dice_ok, cover_ok = True, True
    worst = 1.0
    for labels, mask in frames:
        field = register(labels > 0, mask)
        before = dice(labels > 0, mask)
        after = dice(warp_labels(labels, field) > 0, mask)
        dice_ok &= after >= before
    f, lin = finalize_tracks(np.stack([l for l, _ in frames]))
    video = LabeledVideo(f, lin)
    masks = [m for _, m in frames]
    out, _, _ = refine_video(video, masks, [m * 0.7 for m in masks], RefineOptions())
    for frame, m in zip(out.frames, masks):
        for i in np.unique(frame[frame > 0]):
            frac = m[frame == i].mean()
            worst = min(worst, frac)
            cover_ok &= frac >= 0.9
    check(5, "refinement properties", dice_ok and cover_ok,
          f"20 frames, Dice non-decreasing={dice_ok}, min coverage after AC={worst:.3f} (>= 0.9)")


def _hela_sound(seed):
    cfg = small_hela(seed=seed)
    for scene in simulate_cell_states(cfg):
        for a, b in itertools.combinations(scene, 2):
            if math.dist(a.center, b.center) < cfg.overlap_factor * (a.radius + b.radius) - 1e-9:
                return False
    v1, v2 = simulate_hela(cfg), simulate_hela(cfg)
    v1.check_consistency()
    ok = v1.frames.tobytes() == v2.frames.tobytes() and v1.lineage == v2.lineage
    return ok and all(v1.lineage[r.parent].end + 1 == r.birth for r in v1.lineage if r.parent)


def _microvilli_sound(seed):
    cfg = small_microvilli(seed=seed)
    states = simulate_states(cfg)
    for i in range(len(states[0])):
        d = np.diff([s[i].length for s in states])
        if not ((d >= 0).all() or (d <= 0).all()):
            return False
    v1, v2 = render_scene_sequence(states, cfg), simulate_microvilli(cfg)
    v1.check_consistency()
    return v1.frames.tobytes() == v2.frames.tobytes() and v1.lineage == v2.lineage


def test_6_simulator_invariants():
    start = time.perf_counter()
    bad_h = [s for s in range(100) if not _hela_sound(s)]
    bad_m = [s for s in range(100) if not _microvilli_sound(s)]
    elapsed = time.perf_counter() - start
    check(6, "simulator invariants", not bad_h and not bad_m and elapsed < 60,
          f"100 seeds x 2 simulators, failing HeLa={bad_h}, microvilli={bad_m}, "
          f"{elapsed:.1f}s (< 60s)")


def test_7_experiment_tables(tmp_path):
    ok, names = True, []
    for suite in ("microvilli", "hela"):
        rows, text = pipeline.run_suite(suite, tmp_path / suite, seed=0)
        header = [c.strip() for c in text.splitlines()[0].split("|")]
        ok &= header == ["Exp.", "T.V.", "T.F.", "DET", "SEG", "TRA"]
        ok &= [r["Exp."] for r in rows] == [PRESETS[n][0] for n in SUITES[suite]]
        ok &= all(0.0 <= r[k] <= 1.0 for r in rows for k in ("DET", "SEG", "TRA"))
        ok &= json.loads((tmp_path / suite / "table.json").read_text()) == json.loads(
            json.dumps(pipeline._jsonable(rows)))
        names += [f"{r['Exp.']}={r['TRA']:.3f}" for r in rows]
        print(text)
    check(7, "experiment-harness shape", ok, "TRA " + ", ".join(names))


def test_8_format_conformance(tmp_path):
    results = {}
    video = simulate_hela(small_hela(seed=8))
    save_labels(video, tmp_path / "a")
    save_labels(load_labels(tmp_path / "a"), tmp_path / "b")
    results["labels"] = load_labels(tmp_path / "a") == video and all(
        p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()
        for p in (tmp_path / "a").iterdir())
    field = oracle_embeddings(video, 8, 0.05, Rng(1))
    data = dumps_embeddings(field)
    results["emb1"] = dumps_embeddings(loads_embeddings(data)) == data
    cfg = PipelineConfig(scenario="microvilli")
    results["config"] = PipelineConfig.from_json(cfg.to_json()).to_json() == cfg.to_json()

    def raises(exc, fn, *a):
        try:
            fn(*a)
        except exc:
            return True
        return False

    results["errors"] = all([
        raises(FormatError, loads_embeddings, b"EMB0" + data[4:]),
        raises(FormatError, loads_embeddings, data[:-3]),
        raises(FormatError, parse_tracks, "1 2 x 0"),
        raises(FormatError, parse_tracks, "70000 0 0 0"),
        raises(ConfigError, PipelineConfig.from_json, '{"unknown": 1}'),
        raises(ConfigError, PipelineConfig.from_json, "[1"),
    ])
    (tmp_path / "a" / "tracks.txt").write_text("1 0 0 0\n60000 0 0 0\n")
    results["errors"] &= raises(FormatError, load_labels, tmp_path / "a")
    ok = all(results.values())
    check(8, "format conformance", ok, ", ".join(f"{k}={v}" for k, v in results.items()))
