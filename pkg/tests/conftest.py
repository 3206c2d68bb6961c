import math

import numpy as np
import pytest

from trajaug.scenario import AgentTrack, Category, DrivableMap, SceneRecord
from trajaug.synthetic import GeneratorSpec, gen_synthetic

ROAD = np.array([[-500.0, -50.0], [500.0, -50.0], [500.0, 50.0], [-500.0, 50.0]])


def straight(agent_id, x0=0.0, y0=0.0, speed=0.0, heading=0.0, n=101, dt=0.1,
             category=Category.VEHICLE, bbox=(4.0, 2.0), observed=True):
    t = np.arange(n) * dt
    c, s = math.cos(heading), math.sin(heading)
    pos = np.column_stack([x0 + c * speed * t, y0 + s * speed * t])
    vel = np.tile([c * speed, s * speed], (n, 1))
    return AgentTrack(agent_id, category, pos, np.full(n, heading), vel, bbox, observed)


def track_from_headings(agent_id, headings, speed=1.0, dt=0.1, start=(0.0, 0.0)):
    headings = np.asarray(headings, dtype=float)
    vel = speed * np.column_stack([np.cos(headings), np.sin(headings)])
    pos = np.asarray(start) + np.vstack([[0.0, 0.0], np.cumsum(vel[:-1] * dt, axis=0)])
    return AgentTrack(agent_id, "vehicle", pos, headings, vel, (4.0, 2.0), True)


def make_scene(agents=(), ego=None, T_H=21, T_F=80, dt=0.1, scene_id="s0", drivable=None,
               **kw):
    n = T_H + T_F
    ego = ego or straight("ego", n=n, dt=dt)
    if drivable is None:
        drivable = DrivableMap(polygons=(ROAD,))
    return SceneRecord(scene_id, dt, T_H, T_F, ego, tuple(agents), drivable=drivable, **kw)


@pytest.fixture
def scene_factory():
    return make_scene


@pytest.fixture(scope="session")
def small_corpus():
    spec = GeneratorSpec(n_scenes=12, n_cruisers=3, n_turners=2, n_tailgaters=1, n_jerky=1,
                         n_parkers=1, n_stationary=1, n_occluded=1, n_pedestrians=1)
    return list(gen_synthetic(spec, seed=7))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
