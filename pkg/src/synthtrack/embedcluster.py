"""Pixel-embedding fields, oracle embeddings, mean-shift decoding and the EMB1 format."""
from __future__ import annotations

import struct
import sys
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.neighbors import NearestNeighbors
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ConfigError, FormatError
from .model import LabeledVideo, Lineage, LineageRecord

SEED_ROUNDS = 2
_FOUR = ndimage.generate_binary_structure(2, 1)


@dataclass
class EmbeddingField:
    """``values``: ``(T, H, W, d)`` float32; ``foreground``: ``(T, H, W)`` bool or None."""

    values: np.ndarray
    foreground: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 4:
            raise ValueError(f"embedding values must be (T, H, W, d), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("embedding values must be finite")
        if self.foreground is not None:
            self.foreground = np.asarray(self.foreground, dtype=bool)
            if self.foreground.shape != self.values.shape[:3]:
                raise ValueError("foreground mask dimensions do not match the embeddings")

    @property
    def n_frames(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[3]

    def __eq__(self, other):
        if not isinstance(other, EmbeddingField):
            return NotImplemented
        if (self.foreground is None) != (other.foreground is None):
            return False
        return (self.values.shape == other.values.shape
                and np.array_equal(self.values, other.values)
                and (self.foreground is None or np.array_equal(self.foreground, other.foreground)))


@dataclass
class ClusterParams:
    bandwidth: float = 0.5
    seed_stride: int = 4
    max_iters: int = 100
    shift_tol: float | None = None      # default 1e-3 * bandwidth
    mode_merge_radius: float | None = None  # default bandwidth / 2
    chunk_len: int | None = None        # default: whole video
    association_radius: float | None = None  # default bandwidth

    def validate(self):
        if not self.bandwidth > 0:
            raise ConfigError("bandwidth must be > 0")
        if int(self.seed_stride) != self.seed_stride or self.seed_stride < 1:
            raise ConfigError("seed_stride must be an integer >= 1")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.chunk_len is not None and self.chunk_len < 1:
            raise ConfigError("chunk_len must be >= 1")
        return self

    @property
    def tol(self):
        return 1e-3 * self.bandwidth if self.shift_tol is None else self.shift_tol

    @property
    def merge_radius(self):
        return self.bandwidth / 2 if self.mode_merge_radius is None else self.mode_merge_radius

    @property
    def assoc_radius(self):
        return self.bandwidth if self.association_radius is None else self.association_radius

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# oracle embeddings


def random_codes(n, d, rng, min_distance=0.1, max_tries=10000):
    """``n`` random unit vectors, resampled until pairwise distance > ``min_distance``."""
    codes = np.zeros((n, d))
    for k in range(n):
        for _ in range(max_tries):
            v = rng.normal(size=d)
            norm = np.linalg.norm(v)
            if norm == 0:
                continue
            v = v / norm
            if k == 0 or np.min(np.linalg.norm(codes[:k] - v, axis=1)) > min_distance:
                codes[k] = v
                break
        else:
            raise ValueError(f"could not place {n} codes with separation {min_distance} in {d} dims")
    return codes


def oracle_embeddings(video, d, noise_sigma, rng, min_distance=0.1):
    """Ideal embeddings: one unit code per track plus isotropic Gaussian noise.

    Background pixels get the zero vector; the foreground mask is ``labels > 0``.
    """
    if d < 2:
        raise ValueError("embedding dimension must be >= 2")
    ids = video.lineage.ids()
    codes = random_codes(len(ids), d, rng.child("codes"), min_distance)
    table = np.zeros((int(video.frames.max(initial=0)) + 1, d))
    for i, c in zip(ids, codes):
        table[i] = c
    values = table[video.frames]
    fg = video.frames > 0
    if noise_sigma > 0:
        for t in range(video.n_frames):
            noise = rng.child("noise", t).normal(0.0, noise_sigma, size=values[t].shape)
            values[t][fg[t]] += noise[fg[t]]
    return EmbeddingField(values.astype(np.float32), fg)


# ---------------------------------------------------------------------------
# mean shift


def _flat_shift(seeds, tree, weighted_points, weights, bandwidth):
    graph = tree.radius_neighbors_graph(seeds, radius=bandwidth, mode="connectivity")
    mass = graph @ weights
    sums = graph @ weighted_points
    out = seeds.copy()
    ok = mass > 0
    out[ok] = sums[ok] / mass[ok, np.newaxis]
    return out


def mean_shift_modes(points, params, rng=None, return_sizes=False):
    """Flat-kernel mean shift.

    Seeds are every ``seed_stride``-th input point, deduplicated
    (deterministic, so ``rng`` is accepted for interface symmetry only). One
    extra seeding round starts from points left farther than the bandwidth
    from every mode, so small clusters missed by the subsampling still get a
    mode. Converged seeds closer than
    ``merge_radius`` merge, weighted by basin size; modes are returned by
    descending basin size.
    """
    params.validate()
    pts = check_array(points, dtype=np.float64)
    if len(pts) == 0:
        raise ValueError("mean shift needs at least one point")
    uniq, inv, counts = np.unique(pts, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    weights = counts.astype(np.float64)
    h = params.bandwidth
    tree = NearestNeighbors(radius=h, algorithm="brute").fit(uniq)
    weighted = uniq * weights[:, np.newaxis]

    seed_idx = np.unique(inv[:: params.seed_stride])
    modes = np.zeros((0, uniq.shape[1]))
    sizes = np.zeros(0)
    for _ in range(SEED_ROUNDS):
        x = uniq[seed_idx].copy()
        active = np.arange(len(x))
        for _ in range(params.max_iters):
            nxt = _flat_shift(x[active], tree, weighted, weights, h)
            moved = np.linalg.norm(nxt - x[active], axis=1)
            x[active] = nxt
            active = active[moved >= params.tol]
            if len(active) == 0:
                break
        modes, sizes = _merge(np.vstack([modes, x]),
                              np.concatenate([sizes, weights[seed_idx]]), params.merge_radius)
        dist, _ = NearestNeighbors(n_neighbors=1).fit(modes).kneighbors(uniq)
        uncovered = np.flatnonzero(dist[:, 0] > h)
        if len(uncovered) == 0:
            break
        seed_idx = uncovered[:: params.seed_stride]
    return (modes, sizes) if return_sizes else modes


def _merge(x, sizes, radius):
    """Greedy merge of converged positions, largest basin first."""
    x, inv = np.unique(x, axis=0, return_inverse=True)
    sizes = np.bincount(inv.ravel(), weights=sizes, minlength=len(x))
    order = np.lexsort(tuple(x.T[::-1]) + (-sizes,))
    centers = np.zeros((0, x.shape[1]))
    mass = np.zeros(0)
    for i in order:
        if len(centers):
            d = np.linalg.norm(centers - x[i], axis=1)
            k = int(np.argmin(d))
            if d[k] <= radius:
                total = mass[k] + sizes[i]
                centers[k] = (centers[k] * mass[k] + x[i] * sizes[i]) / total
                mass[k] = total
                continue
        centers = np.vstack([centers, x[i]])
        mass = np.append(mass, sizes[i])
    keep = np.argsort(-mass, kind="stable")
    return centers[keep], mass[keep]


# ---------------------------------------------------------------------------
# decoding


def _cluster_chunk(vals, fg, params):
    pts = vals[fg]
    if len(pts) == 0:
        return np.zeros((0, vals.shape[-1])), np.zeros(fg.shape, dtype=np.int32)
    modes = mean_shift_modes(pts, params)
    _, idx = NearestNeighbors(n_neighbors=1).fit(modes).kneighbors(pts)
    assign = np.zeros(fg.shape, dtype=np.int32)
    assign[fg] = idx[:, 0] + 1
    return modes, assign


def _associate(prev_modes, prev_keys, modes, radius, next_key):
    """Greedy ascending-distance matching of chunk modes."""
    keys = [-1] * len(modes)
    if len(prev_modes) and len(modes):
        d = np.linalg.norm(modes[:, None, :] - prev_modes[None, :, :], axis=2)
        used = set()
        for flat in np.argsort(d, axis=None, kind="stable"):
            i, j = divmod(int(flat), d.shape[1])
            if d[i, j] > radius:
                break
            if keys[i] == -1 and j not in used:
                keys[i] = prev_keys[j]
                used.add(j)
    for i in range(len(keys)):
        if keys[i] == -1:
            keys[i] = next_key
            next_key += 1
    return keys, next_key


def decode(field, params=None):
    """Cluster embedding pixels into tracked instances.

    Each spatial 4-connected component of a mode in a frame is one instance.
    Within a mode, an instance continues the mode's previous track when that
    mode had a single track alive; otherwise tracks are continued by greatest
    pixel overlap and leftovers start new ids. Lineage has parent 0 and spans
    first to last appearance.
    """
    params = (params or ClusterParams()).validate()
    if field.foreground is None:
        raise ValueError("foreground mask required")
    T, H, W, _ = field.values.shape
    chunk = params.chunk_len or max(T, 1)

    mode_keys = np.zeros((T, H, W), dtype=np.int64)  # 0 = background
    prev_modes, prev_keys, next_key = np.zeros((0, field.dim)), [], 1
    for start in range(0, T, chunk):
        sl = slice(start, min(T, start + chunk))
        modes, assign = _cluster_chunk(field.values[sl], field.foreground[sl], params)
        if len(modes) == 0:
            continue
        keys, next_key = _associate(prev_modes, prev_keys, modes, params.assoc_radius, next_key)
        lut = np.array([0] + keys, dtype=np.int64)
        mode_keys[sl] = lut[assign]
        prev_modes, prev_keys = modes, keys

    out = np.zeros((T, H, W), dtype=np.int32)
    tracks = {}   # mode key -> list of [track id, last frame, last pixel mask]
    spans = {}
    next_id = 1
    for t in range(T):
        for key in np.unique(mode_keys[t]):
            if key == 0:
                continue
            comps, n = ndimage.label(mode_keys[t] == key, structure=_FOUR)
            alive = tracks.setdefault(int(key), [])
            ids = _link(comps, n, alive)
            for c in range(1, n + 1):
                region = comps == c
                if ids[c] is None:
                    ids[c] = next_id
                    next_id += 1
                    alive.append([ids[c], t, region])
                else:
                    for tr in alive:
                        if tr[0] == ids[c]:
                            tr[1], tr[2] = t, region
                out[t][region] = ids[c]
                b, _ = spans.get(ids[c], (t, t))
                spans[ids[c]] = (b, t)
    lineage = Lineage(LineageRecord(i, b, e, 0) for i, (b, e) in sorted(spans.items()))
    return LabeledVideo(out, lineage)


def _link(comps, n, alive):
    ids = [None] * (n + 1)
    if not alive or n == 0:
        return ids
    if n == 1 and len(alive) == 1:
        ids[1] = alive[0][0]
        return ids
    pairs = []
    for k, tr in enumerate(alive):
        ov = np.bincount(comps[tr[2]], minlength=n + 1)
        for c in range(1, n + 1):
            if ov[c]:
                pairs.append((-int(ov[c]), -tr[1], k, c))
    used = set()
    for _, _, k, c in sorted(pairs):
        if ids[c] is None and k not in used:
            ids[c] = alive[k][0]
            used.add(k)
    return ids


class MeanShift(ClusterMixin, BaseEstimator):
    """Flat-kernel mean shift with seed subsampling."""

    def __init__(self, bandwidth=0.5, seed_stride=4, max_iters=100, shift_tol=None,
                 mode_merge_radius=None):
        self.bandwidth = bandwidth
        self.seed_stride = seed_stride
        self.max_iters = max_iters
        self.shift_tol = shift_tol
        self.mode_merge_radius = mode_merge_radius

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.cluster_centers_, self.basin_sizes_ = mean_shift_modes(
            X, ClusterParams(**self.get_params()), return_sizes=True)
        self.labels_ = self.predict(X)
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        _, idx = NearestNeighbors(n_neighbors=1).fit(self.cluster_centers_).kneighbors(X)
        return idx[:, 0]


class EmbeddingDecoder(BaseEstimator):
    """``fit(field)`` decodes an :class:`EmbeddingField` into ``video_``."""

    def __init__(self, bandwidth=0.5, seed_stride=4, max_iters=100, shift_tol=None,
                 mode_merge_radius=None, chunk_len=None, association_radius=None):
        self.bandwidth = bandwidth
        self.seed_stride = seed_stride
        self.max_iters = max_iters
        self.shift_tol = shift_tol
        self.mode_merge_radius = mode_merge_radius
        self.chunk_len = chunk_len
        self.association_radius = association_radius

    def fit(self, field, y=None):
        self.video_ = decode(field, ClusterParams(**self.get_params()))
        return self

    def fit_predict(self, field, y=None):
        return self.fit(field).video_


# ---------------------------------------------------------------------------
# EMB1 format

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4s5I")


def dumps_embeddings(field):
    T, H, W, D = field.values.shape
    flags = 1 if field.foreground is not None else 0
    parts = [_HEADER.pack(MAGIC, T, H, W, D, flags),
             np.ascontiguousarray(field.values, dtype="<f4").tobytes()]
    if flags:
        parts.append(np.ascontiguousarray(field.foreground, dtype=np.uint8).tobytes())
    return b"".join(parts)


def loads_embeddings(data):
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError("bad magic")
    if len(data) < _HEADER.size:
        raise FormatError("truncated")
    _, T, H, W, D, flags = _HEADER.unpack_from(data)
    if flags & ~1:
        raise FormatError(f"unknown flags 0x{flags:x}")
    n_vals = T * H * W * D
    need = _HEADER.size + 4 * n_vals + (T * H * W if flags & 1 else 0)
    if 4 * n_vals > sys.maxsize or need > sys.maxsize:
        raise FormatError("dimension overflow")
    if len(data) != need:
        raise FormatError(f"truncated: declared {need} bytes, payload has {len(data)}")
    off = _HEADER.size
    values = np.frombuffer(data, dtype="<f4", count=n_vals, offset=off).reshape(T, H, W, D)
    fg = None
    if flags & 1:
        raw = np.frombuffer(data, dtype=np.uint8, count=T * H * W, offset=off + 4 * n_vals)
        if raw.size and raw.max() > 1:
            raise FormatError("foreground bytes must be 0 or 1")
        fg = raw.reshape(T, H, W).astype(bool)
    if not np.all(np.isfinite(values)):
        raise FormatError("non-finite embedding values")
    return EmbeddingField(values.astype(np.float32), fg)


def save_embeddings(field, path):
    with open(path, "wb") as fh:
        fh.write(dumps_embeddings(field))


def load_embeddings(path):
    with open(path, "rb") as fh:
        return loads_embeddings(fh.read())
