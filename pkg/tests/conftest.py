import numpy as np
import pytest

from synthtrack.hela import HelaConfig
from synthtrack.microvilli import MicrovilliConfig


def small_hela(seed=0, **kw):
    base = dict(canvas_w=72, canvas_h=72, target_w=64, target_h=64, object_count=12,
                frame_count=10, radius_range=(4, 7), n_appear=2, n_disappear=2, n_mitosis=1,
                seed=seed)
    base.update(kw)
    return HelaConfig(**base)


def small_microvilli(seed=0, **kw):
    base = dict(canvas_w=72, canvas_h=72, target_w=64, target_h=64, object_count=10,
                frame_count=10, length_range=(10, 18), seed=seed)
    base.update(kw)
    return MicrovilliConfig(**base)


@pytest.fixture
def hela_cfg():
    return small_hela()


@pytest.fixture
def microvilli_cfg():
    return small_microvilli()


def disk_mask(center, radius, shape=(64, 64)):
    yy, xx = np.indices(shape)
    return (xx - center[0]) ** 2 + (yy - center[1]) ** 2 <= radius**2


# Acceptance results, printed as one line per criterion at the end of the run.
ACCEPTANCE = {}


def record_acceptance(number, title, ok, detail=""):
    ACCEPTANCE[number] = (title, ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n}. {title}: {detail}")
