"""Stick-shaped (microvilli) annotation video simulator."""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from ._validation import check_positive, check_probability, check_range
from .exceptions import ConfigError, SceneOverfull
from .model import LabeledVideo, Rng, crop_center, finalize_tracks, paint, rasterize_stick

_DIRECTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass
class StickState:
    id: int
    center: tuple
    length: float
    width: float
    angle: float
    length_direction: int


@dataclass
class MicrovilliConfig:
    canvas_w: int = 550
    canvas_h: int = 550
    target_w: int = 512
    target_h: int = 512
    object_count: int = 100
    count_range: tuple | None = None
    frame_count: int = 50
    p_translate: float = 0.5
    translate_step: float = 1.0
    p_rotate: float = 0.5
    rotate_step: float = 1.0
    p_length: float = 0.5
    length_step: float = 1.0
    width_range: tuple = (3, 3)
    length_range: tuple = (12, 30)
    min_length: float = 8.0
    seed: int = 0

    def validate(self):
        for name in ("p_translate", "p_rotate", "p_length"):
            check_probability(getattr(self, name), name)
        for name in ("canvas_w", "canvas_h", "target_w", "target_h", "frame_count"):
            check_positive(getattr(self, name), name)
        for name in ("translate_step", "rotate_step", "length_step"):
            check_positive(getattr(self, name), name, strict=False)
        if self.canvas_w < self.target_w or self.canvas_h < self.target_h:
            raise ConfigError("canvas must be at least as large as the target")
        if self.count_range is None:
            if int(self.object_count) != self.object_count or self.object_count < 0:
                raise ConfigError("object_count must be a non-negative integer")
        else:
            check_range(self.count_range, "count_range", lo=0)
        wlo, whi = check_range(self.width_range, "width_range", lo=1)
        llo, lhi = check_range(self.length_range, "length_range", lo=whi)
        if self.min_length < whi or self.min_length > llo:
            raise ConfigError("min_length must lie between the max width and the min length")
        return self

    def to_dict(self):
        d = asdict(self)
        for k in ("count_range", "width_range", "length_range"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d


def init_scene(config, rng):
    """Place the initial sticks uniformly on the oversized canvas."""
    config.validate()
    if config.count_range is not None:
        lo, hi = config.count_range
        n = int(rng.child("count").integers(lo, hi, endpoint=True))
    else:
        n = int(config.object_count)
    max_area = config.length_range[1] * config.width_range[1]
    if n * max_area > 0.9 * config.canvas_w * config.canvas_h:
        raise SceneOverfull("scene overfull")
    sticks = []
    for i in range(1, n + 1):
        r = rng.child("init", i)
        x = r.uniform(0, config.canvas_w)
        y = r.uniform(0, config.canvas_h)
        length = int(r.integers(config.length_range[0], config.length_range[1], endpoint=True))
        width = int(r.integers(config.width_range[0], config.width_range[1], endpoint=True))
        angle = float(r.uniform(0.0, 180.0))
        direction = 1 if r.random() < 0.5 else -1
        sticks.append(StickState(i, (x, y), length, width, angle, direction))
    return sticks


def step_stick(stick, config, rng):
    # Fixed draw order so every stick consumes the same counter span.
    u_t, u_dir, u_r, u_sign, u_l = rng.random(5)
    center, angle, length = stick.center, stick.angle, stick.length
    if u_t < config.p_translate:
        dx, dy = _DIRECTIONS[min(int(u_dir * 4), 3)]
        center = (center[0] + dx * config.translate_step, center[1] + dy * config.translate_step)
    if u_r < config.p_rotate:
        angle = (angle + (config.rotate_step if u_sign < 0.5 else -config.rotate_step)) % 360.0
    if u_l < config.p_length:
        length = max(config.min_length, length + config.length_step * stick.length_direction)
    return replace(stick, center=center, angle=angle, length=length)


def step_scene(scene, config, rng):
    """Advance every stick by one frame; ``rng`` should be the frame's stream."""
    return [step_stick(s, config, rng.child(s.id)) for s in scene]


def render_sticks(scene, width, height):
    grid = np.zeros((height, width), dtype=np.int32)
    for s in sorted(scene, key=lambda s: s.id):
        paint(grid, rasterize_stick(s.center, s.length, s.width, s.angle), s.id)
    return grid


def render_scene_sequence(states, config):
    """Rasterize per-frame stick lists, crop, and build the lineage."""
    canvas = np.stack(
        [render_sticks(scene, config.canvas_w, config.canvas_h) for scene in states]
    ) if states else np.zeros((0, config.canvas_h, config.canvas_w), dtype=np.int32)
    cropped = crop_center(canvas, config.target_w, config.target_h)
    frames, lineage = finalize_tracks(cropped)
    return LabeledVideo(frames, lineage)


def simulate_states(config):
    config.validate()
    rng = Rng(config.seed)
    scene = init_scene(config, rng)
    states = [scene]
    for t in range(1, config.frame_count):
        scene = step_scene(scene, config, rng.child("step", t))
        states.append(scene)
    return states


def simulate_microvilli(config):
    """Generate a labeled stick video.

    Sticks are drawn in id order on the canvas (later ids overdraw earlier),
    then center-cropped to the target size. Tracks are clipped to their
    contiguous visible interval; a stick that re-enters after fully leaving
    the window gets a fresh id.
    """
    return render_scene_sequence(simulate_states(config), config)
