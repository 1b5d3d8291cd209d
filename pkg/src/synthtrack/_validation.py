"""Input validation helpers shared by the estimators and functional API."""
import numbers

import numpy as np

from .exceptions import ConfigError

MAX_LABEL = 65535


def check_label_frame(labels, name="labels"):
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError(f"{name} must hold integer identifiers")
    arr = arr.astype(np.int32, copy=False)
    if arr.size and arr.min() < 0:
        raise ValueError(f"{name} contains negative identifiers")
    return arr


def check_label_stack(frames, name="frames"):
    arr = np.asarray(frames)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be a (T, H, W) array, got shape {arr.shape}")
    arr = arr.astype(np.int32, copy=False)
    if arr.size and arr.min() < 0:
        raise ValueError(f"{name} contains negative identifiers")
    return arr


def check_intensity_frame(frame, name="frame"):
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr


def check_mask(mask, name="mask"):
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    return arr.astype(bool, copy=False)


def check_same_shape(a, b, what="inputs"):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"{what} have mismatched dimensions: {np.shape(a)} vs {np.shape(b)}")


def check_probability(value, name):
    if not isinstance(value, numbers.Real) or not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must be a probability in [0, 1], got {value!r}")
    return float(value)


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if (strict and value <= 0) or (not strict and value < 0):
        raise ConfigError(f"{name} must be {'>' if strict else '>='} 0, got {value!r}")
    return value


def check_range(pair, name, lo=None):
    try:
        a, b = pair
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a [min, max] pair, got {pair!r}") from None
    if a > b or (lo is not None and a < lo):
        raise ConfigError(f"{name} must satisfy {lo if lo is not None else '-inf'} <= min <= max, got {pair!r}")
    return a, b
