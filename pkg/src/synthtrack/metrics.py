"""DET / SEG / TRA scores via acyclic oriented graph matching (AOGM).

Matching follows the Cell Tracking Challenge convention: ground-truth
object G is detected by result object R iff ``|R ∩ G| > |G| / 2``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import check_label_frame, check_same_shape
from .exceptions import LineageError

TRACK, PARENT = "track", "parent"


@dataclass(frozen=True)
class AogmWeights:
    """Defaults are the Cell Tracking Challenge TRA weights."""

    ns: float = 5.0
    fn: float = 10.0
    fp: float = 1.0
    ed: float = 1.0
    ea: float = 1.5
    ec: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"AOGM weight {k} must be >= 0")


@dataclass
class TrackingGraph:
    """Nodes are ``(frame, marker)``; edges map ``(src, dst) -> kind``."""

    nodes: set = field(default_factory=set)
    edges: dict = field(default_factory=dict)

    def add_edge(self, src, dst, kind):
        if dst[0] <= src[0]:
            raise ValueError(f"edge {src}->{dst} does not go forward in time")
        if src not in self.nodes or dst not in self.nodes:
            raise ValueError(f"edge {src}->{dst} references unknown nodes")
        if kind == TRACK and any(d == dst and k == TRACK for (_, d), k in self.edges.items()):
            raise ValueError(f"node {dst} already has an incoming track edge")
        self.edges[(src, dst)] = kind

    @property
    def track_edges(self):
        return [e for e, k in self.edges.items() if k == TRACK]

    @property
    def parent_edges(self):
        return [e for e, k in self.edges.items() if k == PARENT]


def build_graph(video):
    """One node per visible ``(frame, id)``; track edges join consecutive
    appearances of an id; parent edges join a parent's last node to each
    child's first node."""
    video.check_consistency()
    visible = video.visible_frames()
    g = TrackingGraph()
    for i, ts in visible.items():
        g.nodes.update((t, i) for t in ts)
    for i, ts in visible.items():
        for a, b in zip(ts, ts[1:]):
            g.add_edge((a, i), (b, i), TRACK)
    for rec in video.lineage:
        if rec.parent and rec.id in visible:
            if rec.parent not in visible:
                raise LineageError(f"parent {rec.parent} of track {rec.id} has no pixels")
            g.add_edge((visible[rec.parent][-1], rec.parent), (visible[rec.id][0], rec.id), PARENT)
    return g


@dataclass
class FrameMatch:
    gt_to_res: dict          # gt id -> res id or None
    res_multiplicity: dict   # res id -> number of gt ids matched to it
    unmatched_res: set
    gt_area: dict
    res_area: dict
    overlap: dict            # (gt id, res id) -> pixel count


def match_frame(gt, res):
    """Majority-overlap matching of one frame (``|R ∩ G| > |G| / 2``)."""
    gt, res = check_label_frame(gt, "gt"), check_label_frame(res, "res")
    check_same_shape(gt, res, "gt and res frames")
    g_ids, g_area = np.unique(gt[gt > 0], return_counts=True)
    r_ids, r_area = np.unique(res[res > 0], return_counts=True)
    both = (gt > 0) & (res > 0)
    pairs, counts = np.unique(
        np.stack([gt[both], res[both]]).reshape(2, -1), axis=1, return_counts=True)
    overlap = {(int(a), int(b)): int(c) for (a, b), c in zip(pairs.T, counts)}
    gt_area = {int(i): int(a) for i, a in zip(g_ids, g_area)}
    res_area = {int(i): int(a) for i, a in zip(r_ids, r_area)}
    gt_to_res = {g: None for g in gt_area}
    for (g, r), c in overlap.items():
        if 2 * c > gt_area[g]:
            gt_to_res[g] = r
    mult = {r: 0 for r in res_area}
    for r in gt_to_res.values():
        if r is not None:
            mult[r] += 1
    return FrameMatch(gt_to_res, mult, {r for r, k in mult.items() if k == 0},
                      gt_area, res_area, overlap)


@dataclass
class AogmResult:
    ns: int = 0
    fn: int = 0
    fp: int = 0
    ed: int = 0
    ea: int = 0
    ec: int = 0
    cost: float = 0.0
    detection_cost: float = 0.0

    def counts(self):
        return {k.upper(): getattr(self, k) for k in ("ns", "fn", "fp", "ed", "ea", "ec")}


def aogm_graphs(gt_graph, res_graph, node_match, weights=None):
    """AOGM from two graphs and a node matching ``{gt node: res node or None}``.

    A result edge corresponds to a GT edge when its endpoints are matched to
    that edge's endpoints. Each result edge takes at most one GT edge,
    preferring one of the same kind; edges with no counterpart are deleted
    (ED), unclaimed GT edges are added (EA), kind mismatches are EC.
    """
    w = weights or AogmWeights()
    r = AogmResult()
    matched_to = {}
    for g in gt_graph.nodes:
        m = node_match.get(g)
        if m is None:
            r.fn += 1
        else:
            matched_to.setdefault(m, []).append(g)
    for m in res_graph.nodes:
        k = len(matched_to.get(m, ()))
        if k == 0:
            r.fp += 1
        else:
            r.ns += k - 1

    claimed = 0
    for (a, b), kind in sorted(res_graph.edges.items()):
        cands = [gt_graph.edges[(ga, gb)]
                 for ga in matched_to.get(a, ()) for gb in matched_to.get(b, ())
                 if (ga, gb) in gt_graph.edges]
        if not cands:
            r.ed += 1
        else:
            claimed += 1
            if kind not in cands:
                r.ec += 1
    r.ea = len(gt_graph.edges) - claimed
    r.detection_cost = w.ns * r.ns + w.fn * r.fn + w.fp * r.fp
    r.cost = r.detection_cost + w.ed * r.ed + w.ea * r.ea + w.ec * r.ec
    return r


def _check_pair(gt_video, res_video):
    if gt_video.frames.shape != res_video.frames.shape:
        raise ValueError(
            f"gt and res videos have mismatched dimensions: "
            f"{gt_video.frames.shape} vs {res_video.frames.shape}")


def match_video(gt_video, res_video):
    _check_pair(gt_video, res_video)
    return [match_frame(g, r) for g, r in zip(gt_video.frames, res_video.frames)]


def _node_match(matches):
    return {(t, g): (None if r is None else (t, r))
            for t, m in enumerate(matches) for g, r in m.gt_to_res.items()}


def aogm(gt_video, res_video, weights=None, matches=None):
    matches = matches or match_video(gt_video, res_video)
    return aogm_graphs(build_graph(gt_video), build_graph(res_video), _node_match(matches), weights)


def _normalized(cost, cost0):
    return 1.0 - min(cost, cost0) / cost0


def tra(gt_video, res_video, weights=None):
    w = weights or AogmWeights()
    g = build_graph(gt_video)
    cost0 = w.fn * len(g.nodes) + w.ea * len(g.edges)
    if not g.nodes or cost0 == 0:
        raise ValueError("TRA undefined for empty ground truth")
    return _normalized(aogm(gt_video, res_video, w).cost, cost0)


def det(gt_video, res_video, weights=None):
    w = weights or AogmWeights()
    g = build_graph(gt_video)
    cost0 = w.fn * len(g.nodes)
    if not g.nodes or cost0 == 0:
        raise ValueError("DET undefined for empty ground truth")
    return _normalized(aogm(gt_video, res_video, w).detection_cost, cost0)


def _seg_from_matches(matches):
    per_frame, all_j = [], []
    for m in matches:
        js = []
        for g, r in m.gt_to_res.items():
            if r is None:
                js.append(0.0)
            else:
                inter = m.overlap[(g, r)]
                js.append(inter / (m.gt_area[g] + m.res_area[r] - inter))
        all_j.extend(js)
        per_frame.append(float(np.mean(js)) if js else None)
    if not all_j:
        raise ValueError("SEG undefined: no ground-truth objects")
    return float(np.mean(all_j)), per_frame


def seg(gt_video, res_video):
    """Mean Jaccard over all GT objects; unmatched objects count 0."""
    return _seg_from_matches(match_video(gt_video, res_video))[0]


@dataclass
class ScoreReport:
    det: float
    seg: float
    tra: float
    counts: dict
    seg_per_frame: list
    aogm: float = 0.0

    def to_text(self):
        head = f"DET={self.det:.6f} SEG={self.seg:.6f} TRA={self.tra:.6f}"
        tail = " ".join(f"{k}={v}" for k, v in self.counts.items())
        return f"{head}\n{tail} AOGM={self.aogm:.6f}\n"

    def to_dict(self):
        return {"DET": self.det, "SEG": self.seg, "TRA": self.tra, "AOGM": self.aogm,
                "counts": dict(self.counts), "seg_per_frame": list(self.seg_per_frame)}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def evaluate(gt_video, res_video, weights=None):
    """All three scores with one matching pass."""
    w = weights or AogmWeights()
    matches = match_video(gt_video, res_video)
    g = build_graph(gt_video)
    if not g.nodes:
        raise ValueError("scores undefined for empty ground truth")
    res = aogm_graphs(g, build_graph(res_video), _node_match(matches), w)
    seg_score, per_frame = _seg_from_matches(matches)
    return ScoreReport(
        det=_normalized(res.detection_cost, w.fn * len(g.nodes)),
        seg=seg_score,
        tra=_normalized(res.cost, w.fn * len(g.nodes) + w.ea * len(g.edges)),
        counts=res.counts(),
        seg_per_frame=per_frame,
        aogm=res.cost,
    )


def parse_scores(text):
    """Parse the ``key=value`` block written by :meth:`ScoreReport.to_text`."""
    out = {}
    for tok in text.split():
        k, _, v = tok.partition("=")
        out[k] = float(v) if "." in v else int(v)
    return out
