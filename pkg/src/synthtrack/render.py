"""Procedural label-to-image renderer, binarization and external frame ingestion."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_intensity_frame, check_label_frame
from .exceptions import ConfigError, FormatError
from .io import FRAME_PATTERN, indexed_files, read_png
from .model import Rng


@dataclass
class AppearanceParams:
    background_level: float = 0.15
    foreground_level: float = 0.7
    per_object_jitter: float = 0.05
    psf_sigma: float = 1.0
    noise_sigma: float = 0.03
    seed: int = 0

    def validate(self):
        for name in ("background_level", "foreground_level"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        for name in ("per_object_jitter", "psf_sigma", "noise_sigma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.foreground_level <= self.background_level:
            raise ConfigError("foreground_level must exceed background_level")
        return self

    def to_dict(self):
        return asdict(self)


def gaussian_kernel(sigma):
    """Normalized 1-D Gaussian truncated at 3 sigma."""
    if sigma <= 0:
        return np.ones(1)
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(image, sigma):
    """Separable two-pass Gaussian blur, edges replicated."""
    if sigma <= 0:
        return np.asarray(image, dtype=np.float64).copy()
    k = gaussian_kernel(sigma)
    out = ndimage.convolve1d(np.asarray(image, dtype=np.float64), k, axis=0, mode="nearest")
    return ndimage.convolve1d(out, k, axis=1, mode="nearest")


def object_level(track_id, params, rng):
    """Pre-blur paint level of one object; a pure function of (id, seed)."""
    jitter = rng.child("jitter", int(track_id)).normal(0.0, params.per_object_jitter) \
        if params.per_object_jitter > 0 else 0.0
    return float(np.clip(params.foreground_level + jitter, 0.0, 1.0))


def render_frame(labels, params, rng, frame_index=0):
    """Paint, blur and add noise to one label frame.

    Pass the same ``rng`` for every frame of a video: object levels are keyed
    by id and the noise stream by ``frame_index``.
    """
    labels = check_label_frame(labels)
    params.validate()
    img = np.full(labels.shape, params.background_level, dtype=np.float64)
    for i in np.unique(labels):
        if i:
            img[labels == i] = object_level(i, params, rng)
    img = gaussian_blur(img, params.psf_sigma)
    if params.noise_sigma > 0:
        img = img + rng.child("noise", frame_index).normal(0.0, params.noise_sigma, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def render_video(video, params):
    rng = Rng(params.seed)
    return [render_frame(f, params, rng, t) for t, f in enumerate(video.frames)]


# ---------------------------------------------------------------------------
# binarization


def _histogram(frame):
    bins = np.minimum((frame * 256).astype(np.int64), 255).ravel()
    return np.bincount(bins, minlength=256).astype(np.float64)


def otsu_threshold(frame):
    """Threshold ``k/256`` maximizing between-class variance (lowest k on ties)."""
    frame = check_intensity_frame(frame)
    hist = _histogram(frame)
    if np.count_nonzero(hist) < 2:
        raise ValueError("degenerate histogram")
    centers = (np.arange(256) + 0.5) / 256
    total = hist.sum()
    w0 = np.cumsum(hist)[:-1]          # background = bins < k, k = 1..255
    s0 = np.cumsum(hist * centers)[:-1]
    w1 = total - w0
    s1 = (hist * centers).sum() - s0
    with np.errstate(divide="ignore", invalid="ignore"):
        var = w0 * w1 * (s0 / w0 - s1 / w1) ** 2 / total**2
    var[(w0 == 0) | (w1 == 0)] = -1.0
    k = int(np.argmax(var)) + 1
    return k / 256


def binarize(frame, method="otsu"):
    """Foreground mask ``frame >= threshold``.

    ``method`` is ``"otsu"`` or a fixed threshold given as a number.
    """
    frame = check_intensity_frame(frame)
    if isinstance(method, str):
        if method != "otsu":
            raise ValueError(f"unknown binarization method {method!r}")
        threshold = otsu_threshold(frame)
    else:
        threshold = float(method)
    return frame >= threshold


# ---------------------------------------------------------------------------
# ingestion


def ingest_frames(directory, pattern=FRAME_PATTERN):
    """Load ``pattern``-named 8/16-bit grayscale PNGs as intensity frames."""
    frames = []
    for path in indexed_files(directory, pattern):
        arr, bitdepth = read_png(path)
        if frames and arr.shape != frames[0].shape:
            raise FormatError(f"{path.name}: dimension mismatch {arr.shape} vs {frames[0].shape}")
        frames.append(arr.astype(np.float64) / ((1 << bitdepth) - 1))
    return frames


# ---------------------------------------------------------------------------
# estimator wrappers


class LabelRenderer(TransformerMixin, BaseEstimator):
    """Render label frames (a ``(T, H, W)`` stack or 2-D frame) to intensities."""

    def __init__(self, background_level=0.15, foreground_level=0.7, per_object_jitter=0.05,
                 psf_sigma=1.0, noise_sigma=0.03, seed=0):
        self.background_level = background_level
        self.foreground_level = foreground_level
        self.per_object_jitter = per_object_jitter
        self.psf_sigma = psf_sigma
        self.noise_sigma = noise_sigma
        self.seed = seed

    def fit(self, X=None, y=None):
        self.params_ = AppearanceParams(**self.get_params()).validate()
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = np.asarray(X)
        rng = Rng(self.seed)
        if X.ndim == 2:
            return render_frame(X, self.params_, rng)
        return np.stack([render_frame(f, self.params_, rng, t) for t, f in enumerate(X)])


class Binarizer(TransformerMixin, BaseEstimator):
    """Otsu or fixed-threshold binarizer.

    ``fit`` learns ``threshold_`` from the pooled histogram of the given
    frames; ``transform`` applies it.
    """

    def __init__(self, method="otsu"):
        self.method = method

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if isinstance(self.method, str):
            flat = X.reshape(-1, X.shape[-1]) if X.ndim > 2 else X
            self.threshold_ = otsu_threshold(flat)
        else:
            self.threshold_ = float(self.method)
        return self

    def transform(self, X):
        check_is_fitted(self)
        return np.asarray(X, dtype=np.float64) >= self.threshold_
