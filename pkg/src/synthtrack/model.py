"""Core domain types, seeded randomness and rasterization primitives.

Frames are plain numpy arrays:

* label frame: 2-D ``int32`` array of instance identifiers (0 = background)
* intensity frame: 2-D ``float64`` array with values in [0, 1]
* binary mask: 2-D ``bool`` array

A :class:`LabeledVideo` bundles a ``(T, H, W)`` label stack with its
:class:`Lineage`.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from ._validation import MAX_LABEL, check_label_stack
from .exceptions import FormatError, LineageError


# ---------------------------------------------------------------------------
# randomness


def _key_part(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    k = int(k)
    if k < 0:
        raise ValueError("stream keys must be non-negative")
    return k


class Rng:
    """Counter-based random stream (Philox) with keyed child streams.

    ``Rng(seed).child("step", frame, obj_id)`` always yields the same stream
    regardless of how many other children were drawn before it, so per-object
    randomness does not depend on iteration order.
    """

    def __init__(self, seed=0, key=()):
        self.seed = int(seed)
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        self.key = tuple(_key_part(k) for k in key)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def child(self, *key):
        return Rng(self.seed, self.key + tuple(_key_part(k) for k in key))

    @property
    def generator(self):
        return self._gen

    def random(self, size=None):
        return self._gen.random(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None, endpoint=False):
        return self._gen.integers(low, high, size=size, endpoint=endpoint)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def choice(self, a, size=None, replace=True):
        return self._gen.choice(a, size=size, replace=replace)

    def permutation(self, x):
        return self._gen.permutation(x)

    def __repr__(self):
        return f"Rng(seed={self.seed}, key={self.key})"


# ---------------------------------------------------------------------------
# lineage


@dataclass(frozen=True, order=True)
class LineageRecord:
    id: int
    birth: int
    end: int
    parent: int = 0


class Lineage:
    """Set of track records keyed by identifier."""

    def __init__(self, records=()):
        self._records = {}
        for rec in records:
            if not isinstance(rec, LineageRecord):
                rec = LineageRecord(*rec)
            if rec.id in self._records:
                raise LineageError(f"duplicate lineage id {rec.id}")
            self._records[rec.id] = rec
        self.validate()

    def validate(self):
        for rec in self._records.values():
            if rec.id <= 0:
                raise LineageError(f"lineage id must be positive, got {rec.id}")
            if rec.id > MAX_LABEL:
                raise LineageError(f"lineage id {rec.id} exceeds {MAX_LABEL}")
            if rec.birth < 0 or rec.birth > rec.end:
                raise LineageError(f"track {rec.id}: birth {rec.birth} > end {rec.end}")
            if rec.parent:
                par = self._records.get(rec.parent)
                if par is None:
                    raise LineageError(f"track {rec.id}: parent {rec.parent} missing")
                if par.end != rec.birth - 1:
                    raise LineageError(
                        f"track {rec.id}: parent {rec.parent} ends at {par.end}, "
                        f"child born at {rec.birth}"
                    )

    def __getitem__(self, track_id):
        return self._records[track_id]

    def __contains__(self, track_id):
        return track_id in self._records

    def __iter__(self):
        return iter(sorted(self._records.values()))

    def __len__(self):
        return len(self._records)

    def __eq__(self, other):
        return isinstance(other, Lineage) and self._records == other._records

    def ids(self):
        return sorted(self._records)

    def children(self, parent_id):
        return [r for r in self if r.parent == parent_id]

    def __repr__(self):
        return f"Lineage({list(self)!r})"


@dataclass
class LabeledVideo:
    """Label stack of shape ``(T, H, W)`` plus lineage."""

    frames: np.ndarray
    lineage: Lineage = field(default_factory=Lineage)

    def __post_init__(self):
        self.frames = check_label_stack(self.frames)
        if self.frames.size and self.frames.max() > MAX_LABEL:
            raise FormatError(f"label id {int(self.frames.max())} exceeds {MAX_LABEL}")

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def shape(self):
        return self.frames.shape[1:]

    def __len__(self):
        return self.n_frames

    def visible_frames(self):
        """Map each visible id to the sorted list of frames where it has pixels."""
        seen = {}
        for t, frame in enumerate(self.frames):
            for i in np.unique(frame):
                if i:
                    seen.setdefault(int(i), []).append(t)
        return seen

    def check_consistency(self):
        """Raise :class:`LineageError` when frames and lineage disagree."""
        for i, ts in self.visible_frames().items():
            if i not in self.lineage:
                raise LineageError(f"id {i} appears in frame {ts[0]} but not in lineage")
            rec = self.lineage[i]
            if ts[0] < rec.birth or ts[-1] > rec.end:
                raise LineageError(
                    f"id {i} visible in frames {ts[0]}..{ts[-1]} outside [{rec.birth}, {rec.end}]"
                )

    def __eq__(self, other):
        return (
            isinstance(other, LabeledVideo)
            and self.frames.shape == other.frames.shape
            and bool(np.array_equal(self.frames, other.frames))
            and self.lineage == other.lineage
        )


def finalize_tracks(frames, parents=None):
    """Build a lineage from visibility, splitting tracks with gaps.

    Each id keeps its first contiguous run of visible frames; later runs are
    relabeled with fresh ids (parent 0). ``parents`` maps an id to its
    intended parent; the link survives only when the parent's (relabeled)
    track ends exactly one frame before the child's first visible frame.
    Ids that are never visible are dropped.
    """
    frames = np.array(check_label_stack(frames), copy=True)
    parents = parents or {}
    visible = LabeledVideo(frames).visible_frames()

    runs = {}
    for i, ts in visible.items():
        groups = [[ts[0]]]
        for t in ts[1:]:
            if t == groups[-1][-1] + 1:
                groups[-1].append(t)
            else:
                groups.append([t])
        runs[i] = [(g[0], g[-1]) for g in groups]

    next_id = max(visible, default=0) + 1
    extra = sorted((r[0], i, r) for i, rs in runs.items() for r in rs[1:])
    run_ids = {i: {rs[0]: i} for i, rs in runs.items()}
    for _, i, r in extra:
        if next_id > MAX_LABEL:
            raise FormatError(f"relabeling would exceed id {MAX_LABEL}")
        run_ids[i][r] = next_id
        for t in range(r[0], r[1] + 1):
            f = frames[t]
            f[f == i] = next_id
        next_id += 1

    records = []
    for i, rs in runs.items():
        for k, r in enumerate(rs):
            new_id = run_ids[i][r]
            parent = 0
            p = parents.get(i, 0)
            if k == 0 and p and p in runs:
                for pr in runs[p]:
                    if pr[1] == r[0] - 1:
                        parent = run_ids[p][pr]
            records.append(LineageRecord(new_id, r[0], r[1], parent))
    return frames, Lineage(records)


# ---------------------------------------------------------------------------
# rasterization


def rasterize_disk(center, radius):
    """Pixels whose centers lie within ``radius`` of ``center``.

    Returns an ``(n, 2)`` int array of ``(x, y)`` pairs in raster order.
    Pixel ``(x, y)`` has its center at integer coordinates ``(x, y)``.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    cx, cy = float(center[0]), float(center[1])
    x0, x1 = math.floor(cx - radius), math.ceil(cx + radius)
    y0, y1 = math.floor(cy - radius), math.ceil(cy + radius)
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius * radius
    return np.column_stack([xs[inside], ys[inside]])


def _cos_sin(angle):
    a = float(angle) % 360.0
    exact = {0.0: (1.0, 0.0), 90.0: (0.0, 1.0), 180.0: (-1.0, 0.0), 270.0: (0.0, -1.0)}
    if a in exact:
        return exact[a]
    r = math.radians(a)
    return math.cos(r), math.sin(r)


def rasterize_stick(center, length, width, angle):
    """Pixels whose centers lie inside a rotated ``length x width`` rectangle.

    Membership is half-open along both local axes (``-L/2 <= u < L/2``) so an
    axis-aligned stick at an integer center covers exactly ``length * width``
    pixels. ``angle`` is in degrees, counter-clockwise from the x axis.
    """
    if not length >= width >= 1:
        raise ValueError("require length >= width >= 1")
    cx, cy = float(center[0]), float(center[1])
    c, s = _cos_sin(angle)
    half = 0.5 * math.hypot(length, width) + 1
    x0, x1 = math.floor(cx - half), math.ceil(cx + half)
    y0, y1 = math.floor(cy - half), math.ceil(cy + half)
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    dx, dy = xs - cx, ys - cy
    u = dx * c + dy * s
    v = -dx * s + dy * c
    inside = (u >= -length / 2) & (u < length / 2) & (v >= -width / 2) & (v < width / 2)
    return np.column_stack([xs[inside], ys[inside]])


def paint(grid, pixels, value):
    """Write ``value`` at ``(x, y)`` pixels inside ``grid`` (out-of-bounds ignored)."""
    if len(pixels) == 0:
        return grid
    xs, ys = pixels[:, 0], pixels[:, 1]
    h, w = grid.shape
    ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    grid[ys[ok], xs[ok]] = value
    return grid


def crop_offset(src_w, src_h, target_w, target_h):
    if target_w > src_w or target_h > src_h:
        raise ValueError("crop larger than source")
    return (src_w - target_w) // 2, (src_h - target_h) // 2


def crop_center(frame, target_w, target_h):
    """Centered ``target_h x target_w`` window of a 2-D (or stacked 3-D) array."""
    arr = np.asarray(frame)
    h, w = arr.shape[-2:]
    ox, oy = crop_offset(w, h, target_w, target_h)
    return arr[..., oy : oy + target_h, ox : ox + target_w]
