"""Annotation deformation (demons registration on signed distance maps) and cleaning."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_intensity_frame, check_label_frame, check_mask, check_same_shape
from .exceptions import ConfigError
from .model import LabeledVideo, finalize_tracks

_EIGHT = np.ones((3, 3), dtype=bool)
_FOUR = ndimage.generate_binary_structure(2, 1)


# ---------------------------------------------------------------------------
# primitives


def connected_components(mask, connectivity=8):
    """Label connected foreground regions, ids in raster order of first pixel."""
    mask = check_mask(mask)
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    lab, n = ndimage.label(mask, structure=_EIGHT if connectivity == 8 else _FOUR)
    if n == 0:
        return lab.astype(np.int32)
    flat = lab.ravel()
    ids, first = np.unique(flat, return_index=True)
    order = np.argsort(first[ids > 0])
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[ids[ids > 0][order]] = np.arange(1, n + 1, dtype=np.int32)
    return remap[lab]


def signed_distance(mask):
    """Signed Euclidean distance map, zero on the inner boundary, negative inside.

    Outside pixels hold the distance to the nearest foreground pixel; inside
    pixels hold ``1 - d`` where ``d`` is the distance to the nearest
    background pixel. Empty / full masks return ``+diag`` / ``-diag``.
    """
    mask = check_mask(mask)
    h, w = mask.shape
    diag = math.hypot(h, w)
    if not mask.any():
        return np.full(mask.shape, diag)
    if mask.all():
        return np.full(mask.shape, -diag)
    d_out = ndimage.distance_transform_edt(~mask)
    d_in = ndimage.distance_transform_edt(mask)
    return np.where(mask, 1.0 - d_in, d_out)


def dice(a, b):
    a, b = np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)
    total = a.sum() + b.sum()
    if total == 0:
        return 1.0
    return 2.0 * np.logical_and(a, b).sum() / total


# ---------------------------------------------------------------------------
# registration


@dataclass
class RegistrationOptions:
    step: float = 1.0
    sigma_fluid: float = 1.0
    sigma_diffusion: float = 1.0
    levels: tuple = (4, 2, 1)
    max_iter: int = 100
    tol: float = 0.01
    max_displacement: float = 20.0

    def validate(self):
        if self.step <= 0 or self.max_iter < 1 or self.tol < 0 or self.max_displacement <= 0:
            raise ConfigError("registration step, max_iter, tol and max_displacement must be positive")
        if self.sigma_fluid < 0 or self.sigma_diffusion < 0:
            raise ConfigError("registration sigmas must be >= 0")
        if not self.levels or any(int(s) != s or s < 1 for s in self.levels):
            raise ConfigError("levels must be positive integer shrink factors")
        return self

    def to_dict(self):
        d = asdict(self)
        d["levels"] = list(d["levels"])
        return d


@dataclass
class DeformationField:
    """Backward displacement: output pixel (x, y) samples input at (x + dx, y + dy)."""

    dx: np.ndarray
    dy: np.ndarray
    converged: bool = True
    iterations: int = 0
    dice_before: float = float("nan")
    dice_after: float = float("nan")

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape))

    @property
    def shape(self):
        return self.dx.shape

    def max_displacement(self):
        return float(np.hypot(self.dx, self.dy).max()) if self.dx.size else 0.0


def _resize(arr, shape):
    """Bilinear resampling with pixel centers aligned."""
    if arr.shape == tuple(shape):
        return arr.copy()
    sy, sx = arr.shape[0] / shape[0], arr.shape[1] / shape[1]
    yy, xx = np.meshgrid((np.arange(shape[0]) + 0.5) * sy - 0.5,
                         (np.arange(shape[1]) + 0.5) * sx - 0.5, indexing="ij")
    return ndimage.map_coordinates(arr, [yy, xx], order=1, mode="nearest")


def _smooth(arr, sigma):
    return ndimage.gaussian_filter(arr, sigma, mode="nearest", truncate=3.0) if sigma > 0 else arr


def _demons_level(d_moving, d_fixed, ux, uy, opts, cap):
    yy, xx = np.indices(d_moving.shape, dtype=np.float64)
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        warped = ndimage.map_coordinates(d_moving, [yy + uy, xx + ux], order=1, mode="nearest")
        diff = d_fixed - warped
        gy, gx = np.gradient(warped)
        denom = gx * gx + gy * gy + diff * diff
        scale = np.divide(opts.step * diff, denom, out=np.zeros_like(diff), where=denom > 1e-12)
        upd_x = _smooth(scale * gx, opts.sigma_fluid)
        upd_y = _smooth(scale * gy, opts.sigma_fluid)
        ux = _smooth(ux + upd_x, opts.sigma_diffusion)
        uy = _smooth(uy + upd_y, opts.sigma_diffusion)
        mag = np.hypot(ux, uy)
        over = mag > cap
        if over.any():
            ux[over] *= cap / mag[over]
            uy[over] *= cap / mag[over]
        if np.mean(np.hypot(upd_x, upd_y)) < opts.tol:
            converged = True
            break
    return ux, uy, converged, it


def register(moving, fixed, opts=None):
    """Non-rigid demons registration of two binary masks.

    Coarse-to-fine over ``opts.levels``. The returned field never lowers
    Dice(warped moving, fixed) below the unregistered Dice: the best field
    seen at the end of each level (or the zero field) is kept.
    """
    opts = (opts or RegistrationOptions()).validate()
    moving, fixed = check_mask(moving, "moving"), check_mask(fixed, "fixed")
    check_same_shape(moving, fixed, "moving and fixed masks")
    shape = moving.shape
    d_moving, d_fixed = signed_distance(moving), signed_distance(fixed)

    before = dice(moving, fixed)
    best = DeformationField.zeros(shape)
    best_dice = before
    ux = uy = None
    total_iters, converged = 0, False
    for s in opts.levels:
        level_shape = (max(1, math.ceil(shape[0] / s)), max(1, math.ceil(shape[1] / s)))
        if s > 1 and min(level_shape) < 8:
            continue
        dm, df = _resize(d_moving, level_shape) / s, _resize(d_fixed, level_shape) / s
        if ux is None:
            ux, uy = np.zeros(level_shape), np.zeros(level_shape)
        else:
            fy, fx = level_shape[0] / ux.shape[0], level_shape[1] / ux.shape[1]
            ux, uy = _resize(ux, level_shape) * fx, _resize(uy, level_shape) * fy
        ux, uy, converged, n = _demons_level(dm, df, ux, uy, opts, opts.max_displacement / s)
        total_iters += n
        full = DeformationField(_resize(ux, shape) * shape[1] / level_shape[1],
                                _resize(uy, shape) * shape[0] / level_shape[0])
        score = dice(warp_labels(moving.astype(np.int32), full) > 0, fixed)
        if score >= best_dice:
            best, best_dice = full, score
    best.converged, best.iterations = converged, total_iters
    best.dice_before, best.dice_after = before, best_dice
    return best


def warp_labels(labels, field):
    """Backward nearest-neighbor warp; out-of-bounds samples become background."""
    labels = check_label_frame(labels)
    check_same_shape(labels, field.dx, "labels and deformation field")
    h, w = labels.shape
    yy, xx = np.indices((h, w))
    sx = np.floor(xx + field.dx + 0.5).astype(np.int64)
    sy = np.floor(yy + field.dy + 0.5).astype(np.int64)
    ok = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    out = np.zeros_like(labels)
    out[ok] = labels[sy[ok], sx[ok]]
    return out


# ---------------------------------------------------------------------------
# cleaning


@dataclass
class CleanReport:
    removed_ids: list = field(default_factory=list)
    inpainted_components: list = field(default_factory=list)
    background_value: float | None = None

    def to_dict(self):
        return asdict(self)


def clean(deformed, mask, intensity, coverage=0.90):
    """Drop poorly covered annotations and inpaint unannotated mask components.

    (a) an instance whose overlap with ``mask`` is below ``coverage`` of its
    area becomes background; (b) a connected component of ``mask`` whose
    overlap with the remaining annotations is below ``coverage`` of its area
    is filled with the mean intensity of the non-mask pixels.
    """
    labels = check_label_frame(deformed, "deformed")
    mask = check_mask(mask)
    intensity = check_intensity_frame(intensity, "intensity")
    check_same_shape(labels, mask, "labels and mask")
    check_same_shape(labels, intensity, "labels and intensity")

    out = labels.copy()
    ids, areas = np.unique(labels[labels > 0], return_counts=True)
    inside = np.bincount(labels[mask & (labels > 0)], minlength=labels.max() + 1)
    removed = [int(i) for i, a in zip(ids, areas) if inside[i] < coverage * a]
    if removed:
        out[np.isin(out, removed)] = 0

    img = intensity.copy()
    comps = connected_components(mask)
    n = int(comps.max())
    inpainted = []
    bg_value = float(intensity[~mask].mean()) if (~mask).any() else None
    if n:
        comp_area = np.bincount(comps.ravel(), minlength=n + 1)
        covered = np.bincount(comps[out > 0], minlength=n + 1)
        inpainted = [c for c in range(1, n + 1) if covered[c] < coverage * comp_area[c]]
        if inpainted and bg_value is not None:
            img[np.isin(comps, inpainted)] = bg_value
    return out, img, CleanReport(removed, inpainted, bg_value)


# ---------------------------------------------------------------------------
# video-level refinement


@dataclass
class RefineOptions:
    enable_ad: bool = True
    enable_ac: bool = True
    coverage: float = 0.90
    registration: RegistrationOptions = field(default_factory=RegistrationOptions)
    n_jobs: int = 1

    def validate(self):
        if not 0.0 < self.coverage <= 1.0:
            raise ConfigError("coverage must lie in (0, 1]")
        self.registration.validate()
        return self


def _refine_frame(labels, mask, intensity, opts):
    report = {}
    if opts.enable_ad:
        fld = register(labels > 0, mask, opts.registration)
        labels = warp_labels(labels, fld)
        report.update(dice_before=fld.dice_before, dice_after=fld.dice_after,
                      converged=fld.converged, iterations=fld.iterations)
    if opts.enable_ac:
        labels, intensity, rep = clean(labels, mask, intensity, opts.coverage)
        report["clean"] = rep.to_dict()
    return labels, intensity, report


def refine_video(circles, masks, intensities, opts=None):
    """Register, warp and clean every frame, then rebuild the lineage.

    Returns ``(video, intensities, reports)``. Ids that vanish from every
    frame are dropped; tracks broken by cleaning are split like any other
    gap (see :func:`synthtrack.model.finalize_tracks`).
    """
    opts = (opts or RefineOptions()).validate()
    if not (len(circles.frames) == len(masks) == len(intensities)):
        raise ValueError(
            f"length mismatch: {len(circles.frames)} label frames, "
            f"{len(masks)} masks, {len(intensities)} intensity frames"
        )
    args = list(zip(circles.frames, masks, intensities))
    if opts.n_jobs > 1:
        with ThreadPoolExecutor(opts.n_jobs) as pool:
            results = list(pool.map(lambda a: _refine_frame(*a, opts), args))
    else:
        results = [_refine_frame(*a, opts) for a in args]
    parents = {r.id: r.parent for r in circles.lineage if r.parent}
    stack = np.stack([r[0] for r in results]) if results else circles.frames.copy()
    frames, lineage = finalize_tracks(stack, parents)
    return LabeledVideo(frames, lineage), [r[1] for r in results], [r[2] for r in results]


class DemonsRegistration(BaseEstimator):
    """Estimator wrapper: ``fit(moving, fixed)`` then ``transform(labels)``."""

    def __init__(self, step=1.0, sigma_fluid=1.0, sigma_diffusion=1.0, levels=(4, 2, 1),
                 max_iter=100, tol=0.01, max_displacement=20.0):
        self.step = step
        self.sigma_fluid = sigma_fluid
        self.sigma_diffusion = sigma_diffusion
        self.levels = levels
        self.max_iter = max_iter
        self.tol = tol
        self.max_displacement = max_displacement

    def fit(self, moving, fixed):
        self.field_ = register(moving, fixed, RegistrationOptions(**self.get_params()))
        self.converged_ = self.field_.converged
        self.dice_before_ = self.field_.dice_before
        self.dice_after_ = self.field_.dice_after
        return self

    def transform(self, labels):
        check_is_fitted(self)
        return warp_labels(labels, self.field_)
