"""On-disk formats: 16-bit label PNGs, ``tracks.txt`` lineage, intensity PNGs."""
from __future__ import annotations

import os
import re
from pathlib import Path

import numpy as np
import png

from ._validation import MAX_LABEL
from .exceptions import FormatError, LineageError
from .model import LabeledVideo, Lineage, LineageRecord

MASK_PATTERN = "mask%03d.png"
FRAME_PATTERN = "t%03d.png"
TRACKS_FILE = "tracks.txt"


def write_png(path, array, bitdepth=16):
    arr = np.asarray(array)
    if arr.ndim != 2:
        raise FormatError(f"PNG writer expects a 2-D array, got shape {arr.shape}")
    limit = (1 << bitdepth) - 1
    if arr.size and (arr.min() < 0 or arr.max() > limit):
        raise FormatError(f"values outside the {bitdepth}-bit range")
    h, w = arr.shape
    writer = png.Writer(width=w, height=h, greyscale=True, bitdepth=bitdepth)
    with open(path, "wb") as fh:
        writer.write(fh, arr.astype(np.uint16 if bitdepth > 8 else np.uint8).tolist())


def read_png(path):
    """Read a single-channel PNG; returns ``(array, bitdepth)``."""
    try:
        w, h, rows, info = png.Reader(filename=str(path)).read()
        data = np.vstack([np.asarray(r, dtype=np.uint32) for r in rows]) if h else np.zeros((0, w))
    except png.Error as exc:
        raise FormatError(f"{path}: {exc}") from exc
    planes = info["planes"]
    if not info["greyscale"] or info.get("palette"):
        raise FormatError(f"{path}: only grayscale PNG is supported")
    if planes == 2:  # grey + alpha, drop alpha
        data = data[:, ::2]
    bitdepth = info["bitdepth"]
    if bitdepth not in (8, 16):
        raise FormatError(f"{path}: unsupported bit depth {bitdepth}")
    return data.reshape(h, w), bitdepth


def pattern_regex(pattern):
    """Turn a printf-style name pattern with one integer field into a regex."""
    m = re.search(r"%(0?\d*)d", pattern)
    if m is None or len(re.findall(r"%(0?\d*)d", pattern)) != 1:
        raise FormatError(f"pattern {pattern!r} needs exactly one integer field")
    head, tail = pattern[: m.start()], pattern[m.end() :]
    return re.compile("^" + re.escape(head) + r"(\d+)" + re.escape(tail) + "$")


def indexed_files(directory, pattern):
    """Return ``[path, ...]`` ordered by index, requiring indices 0..n-1."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError(f"{directory}: not a directory")
    rx = pattern_regex(pattern)
    found = {}
    for name in os.listdir(directory):
        m = rx.match(name)
        if m and (pattern % int(m.group(1))) == name:
            found[int(m.group(1))] = directory / name
    for k in range(len(found)):
        if k not in found:
            raise FormatError(f"missing frame index {k}")
    return [found[k] for k in range(len(found))]


def save_labels(video, directory):
    """Write ``mask%03d.png`` frames and ``tracks.txt`` (``L B E P`` per line)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if video.frames.size and video.frames.max() > MAX_LABEL:
        raise FormatError(f"label id exceeds {MAX_LABEL}")
    for t, frame in enumerate(video.frames):
        write_png(directory / (MASK_PATTERN % t), frame, bitdepth=16)
    lines = [f"{r.id} {r.birth} {r.end} {r.parent}\n" for r in video.lineage]
    (directory / TRACKS_FILE).write_text("".join(lines))


def parse_tracks(text):
    records = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise FormatError(f"malformed lineage line {n}: {line!r}")
        try:
            vals = [int(p) for p in parts]
        except ValueError:
            raise FormatError(f"malformed lineage line {n}: {line!r}") from None
        if min(vals) < 0:
            raise FormatError(f"malformed lineage line {n}: negative value")
        if vals[0] > MAX_LABEL:
            raise FormatError(f"lineage id {vals[0]} exceeds {MAX_LABEL}")
        records.append(LineageRecord(*vals))
    return records


def load_labels(directory):
    """Load a label video written by :func:`save_labels` and validate it."""
    directory = Path(directory)
    tracks = directory / TRACKS_FILE
    if not tracks.is_file():
        raise FormatError(f"{tracks}: missing lineage file")
    records = parse_tracks(tracks.read_text())
    files = indexed_files(directory, MASK_PATTERN)
    frames = []
    for f in files:
        arr, _ = read_png(f)
        if frames and arr.shape != frames[0].shape:
            raise FormatError(f"{f.name}: dimension mismatch")
        frames.append(arr.astype(np.int32))
    stack = np.stack(frames) if frames else np.zeros((0, 0, 0), dtype=np.int32)
    try:
        video = LabeledVideo(stack, Lineage(records))
        video.check_consistency()
    except LineageError as exc:
        raise FormatError(f"{directory}: frame/lineage inconsistency: {exc}") from exc
    visible = video.visible_frames()
    for r in records:
        if r.id not in visible:
            raise FormatError(f"{directory}: lineage references id {r.id} absent from all masks")
        if r.end >= len(frames):
            raise FormatError(f"{directory}: track {r.id} ends after the last frame")
    return video


def save_intensities(frames, directory, pattern=FRAME_PATTERN, bitdepth=16):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    scale = (1 << bitdepth) - 1
    for t, frame in enumerate(frames):
        q = np.floor(np.clip(np.asarray(frame, dtype=np.float64), 0.0, 1.0) * scale + 0.5)
        write_png(directory / (pattern % t), q.astype(np.int64), bitdepth=bitdepth)


def save_masks(masks, directory, pattern="bin%03d.png"):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t, m in enumerate(masks):
        write_png(directory / (pattern % t), np.asarray(m, dtype=np.uint8) * 255, bitdepth=8)


def load_masks(directory, pattern="bin%03d.png"):
    return [read_png(p)[0] > 0 for p in indexed_files(directory, pattern)]
