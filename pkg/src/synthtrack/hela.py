"""Ball-shaped (HeLa nuclei) annotation video simulator.

Cells translate, change radius, appear, disappear and divide. Every pair of
live cells keeps ``distance >= overlap_factor * (r_i + r_j)`` at all times.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._validation import check_positive, check_probability, check_range
from .exceptions import ConfigError, PlacementExhausted, ScheduleInfeasible
from .model import LabeledVideo, Rng, crop_center, finalize_tracks, paint, rasterize_disk

MOVE_ATTEMPTS = 1 + 8
SPAWN_ATTEMPTS = 100


@dataclass
class CellState:
    id: int
    center: tuple
    radius: int
    growth_target: int = 0
    birth: int = 0
    parent: int = 0


@dataclass
class EventSchedule:
    appear_events: list = field(default_factory=list)  # (frame, radius)
    disappear_events: list = field(default_factory=list)  # (frame, victim id)
    mitosis_events: list = field(default_factory=list)  # (frame, mother id)

    def sizes(self):
        return len(self.appear_events), len(self.disappear_events), len(self.mitosis_events)

    def at(self, frame):
        return (
            [r for f, r in self.appear_events if f == frame],
            [v for f, v in self.disappear_events if f == frame],
            [m for f, m in self.mitosis_events if f == frame],
        )


@dataclass
class HelaConfig:
    canvas_w: int = 550
    canvas_h: int = 550
    target_w: int = 512
    target_h: int = 512
    object_count: int = 150
    frame_count: int = 50
    translate_step_max: int = 2
    p_radius: float = 0.10
    radius_step: int = 1
    radius_range: tuple = (8, 16)
    overlap_factor: float = 0.7
    n_appear: int = 20
    n_disappear: int = 20
    n_mitosis: int = 5
    daughter_shrink: float = 0.7
    growth_every: int = 2
    seed: int = 0

    def validate(self):
        check_probability(self.p_radius, "p_radius")
        for name in ("canvas_w", "canvas_h", "target_w", "target_h", "frame_count", "growth_every"):
            check_positive(getattr(self, name), name)
        for name in ("translate_step_max", "radius_step", "object_count",
                     "n_appear", "n_disappear", "n_mitosis"):
            check_positive(getattr(self, name), name, strict=False)
        if not 0.0 < self.overlap_factor <= 1.0:
            raise ConfigError("overlap_factor must lie in (0, 1]")
        if not 0.0 < self.daughter_shrink <= 1.0:
            raise ConfigError("daughter_shrink must lie in (0, 1]")
        if self.canvas_w < self.target_w or self.canvas_h < self.target_h:
            raise ConfigError("canvas must be at least as large as the target")
        check_range(self.radius_range, "radius_range", lo=1)
        return self

    def to_dict(self):
        d = asdict(self)
        d["radius_range"] = list(d["radius_range"])
        return d


def placement_ok(candidate, scene, overlap_factor, ignore=()):
    """True iff ``candidate`` keeps the minimum distance to every cell in ``scene``."""
    cx, cy = candidate.center
    for other in scene:
        if other.id == candidate.id or other.id in ignore:
            continue
        d = math.hypot(cx - other.center[0], cy - other.center[1])
        if d < overlap_factor * (candidate.radius + other.radius):
            return False
    return True


def schedule_events(config, rng):
    """Draw appear / disappear / mitosis events at frames in [1, frame_count - 1].

    Victims and mothers are distinct initial cells, so no cell is subject to
    two terminal events.
    """
    if config.frame_count < 3:
        raise ScheduleInfeasible("schedule infeasible: frame_count must be >= 3")
    n_terminal = config.n_disappear + config.n_mitosis
    if n_terminal > config.object_count:
        raise ScheduleInfeasible(
            f"schedule infeasible: {n_terminal} terminal events for {config.object_count} cells"
        )
    lo, hi = config.radius_range

    def frames(n, key):
        return [int(f) for f in rng.child(key).integers(1, config.frame_count, size=n)]

    targets = [int(i) + 1 for i in rng.child("targets").permutation(config.object_count)[:n_terminal]]
    radii = rng.child("appear-radius").integers(lo, hi, size=config.n_appear, endpoint=True)
    return EventSchedule(
        appear_events=sorted(zip(frames(config.n_appear, "appear"), (int(r) for r in radii))),
        disappear_events=sorted(zip(frames(config.n_disappear, "disappear"), targets[: config.n_disappear])),
        mitosis_events=sorted(zip(frames(config.n_mitosis, "mitosis"), targets[config.n_disappear :])),
    )


def _spawn(cell_id, radius, scene, config, rng, frame):
    for _ in range(SPAWN_ATTEMPTS):
        c = CellState(cell_id, (rng.uniform(0, config.canvas_w), rng.uniform(0, config.canvas_h)),
                      radius, birth=frame)
        if placement_ok(c, scene, config.overlap_factor):
            return c
    raise PlacementExhausted(f"placement exhausted for cell {cell_id} at frame {frame}")


def init_cells(config, rng):
    lo, hi = config.radius_range
    scene = []
    for i in range(1, config.object_count + 1):
        r = rng.child("init", i)
        scene.append(_spawn(i, int(r.integers(lo, hi, endpoint=True)), scene, config, r, 0))
    return scene


def _propose(cell, frame, config, rng):
    n = config.translate_step_max
    dx, dy = rng.integers(-n, n, size=2, endpoint=True) if n else (0, 0)
    radius = cell.radius
    lo, hi = config.radius_range
    if cell.growth_target > cell.radius:
        if (frame - cell.birth) % config.growth_every == 0:
            radius = cell.radius + 1
    elif rng.random() < config.p_radius:
        step = config.radius_step if rng.random() < 0.5 else -config.radius_step
        radius = int(min(hi, max(lo, cell.radius + step)))
    return replace(cell, center=(cell.center[0] + float(dx), cell.center[1] + float(dy)), radius=radius)


def _move_cells(scene, frame, config, rng):
    scene = list(scene)
    for k, cell in enumerate(scene):
        r = rng.child("move", frame, cell.id)
        for _ in range(MOVE_ATTEMPTS):
            cand = _propose(cell, frame, config, r)
            if cand == cell or placement_ok(cand, scene, config.overlap_factor):
                scene[k] = cand
                break
    return scene


def _divide(mother, new_ids, scene, frame, config, rng):
    lo, _ = config.radius_range
    rd = max(lo, int(round(config.daughter_shrink * mother.radius)))
    others = [c for c in scene if c.id != mother.id]
    near, far = 1.2 * rd, max(1.2 * rd, 2.0 * mother.radius)
    mx, my = mother.center
    for attempt in range(SPAWN_ATTEMPTS):
        dist = near + (far - near) * attempt / (SPAWN_ATTEMPTS - 1)
        theta = rng.uniform(0.0, 2.0 * math.pi)
        pair = []
        for sign, cid in zip((1.0, -1.0), new_ids):
            pair.append(CellState(
                cid,
                (mx + sign * dist * math.cos(theta), my + sign * dist * math.sin(theta)),
                rd, growth_target=mother.radius, birth=frame, parent=mother.id,
            ))
        if all(placement_ok(d, others + pair, config.overlap_factor) for d in pair):
            return pair
    raise PlacementExhausted(f"placement exhausted dividing cell {mother.id} at frame {frame}")


def step_cells(scene, schedule, frame, config, rng, next_id):
    """Advance to ``frame``: motion and radius changes, then that frame's events.

    Returns ``(scene, next_id, ended)`` where ``ended`` lists ids whose last
    frame is ``frame - 1``.
    """
    scene = _move_cells(scene, frame, config, rng)
    appear, disappear, mitosis = schedule.at(frame)
    ended = []
    for victim in disappear:
        if any(c.id == victim for c in scene):
            scene = [c for c in scene if c.id != victim]
            ended.append(victim)
    for mother_id in mitosis:
        mother = next((c for c in scene if c.id == mother_id), None)
        if mother is None:
            continue
        pair = _divide(mother, (next_id, next_id + 1), scene, frame,
                       config, rng.child("mitosis", frame, mother_id))
        next_id += 2
        scene = [c for c in scene if c.id != mother_id] + pair
        ended.append(mother_id)
    for k, radius in enumerate(appear):
        scene.append(_spawn(next_id, radius, scene, config, rng.child("appear", frame, k), frame))
        next_id += 1
    return scene, next_id, ended


def simulate_cell_states(config):
    """Per-frame cell lists for the whole video on the full canvas."""
    config.validate()
    rng = Rng(config.seed)
    schedule = schedule_events(config, rng.child("schedule"))
    scene = init_cells(config, rng)
    states = [scene]
    next_id = config.object_count + 1
    for t in range(1, config.frame_count):
        scene, next_id, _ = step_cells(scene, schedule, t, config, rng, next_id)
        states.append(scene)
    return states


def render_cells(scene, width, height):
    grid = np.zeros((height, width), dtype=np.int32)
    for c in sorted(scene, key=lambda c: c.id):
        paint(grid, rasterize_disk(c.center, c.radius), c.id)
    return grid


def simulate_hela(config):
    """Generate a labeled circle video with its lineage (mitosis included)."""
    states = simulate_cell_states(config)
    parents = {c.id: c.parent for scene in states for c in scene if c.parent}
    canvas = np.stack([render_cells(s, config.canvas_w, config.canvas_h) for s in states])
    cropped = crop_center(canvas, config.target_w, config.target_h)
    frames, lineage = finalize_tracks(cropped, parents)
    return LabeledVideo(frames, lineage)
