"""Synthetic scene generator with closed-form ground truth.

Scenes are laid out on a straight four-lane road plus an ego lane at
``y = 0``. The drivable area is the road strip ``|y| <= ROAD_HALF_WIDTH``;
parked vehicles and pedestrians sit just outside it. Every generated agent
carries its known metrics under ``context["truth"][agent_id]``.

Agent kinds:

* ``cruiser`` -- constant velocity along +x (``h = 0``).
* ``turner`` -- constant speed and yaw rate, ``h = |omega| * (T_H - 1)``.
* ``tailgater`` -- follower of a pair whose gap and closing speed stay fixed,
  so its in-lane TTC is ``gap / closing`` at every step. The ``leader`` is
  the vehicle in front.
* ``jerky`` -- cruiser with a period-4 velocity/heading perturbation whose
  finite differences exceed every comfort threshold at every step.
* ``parker`` -- stationary vehicle off the drivable area.
* ``stationary`` -- stopped vehicle on the road.
* ``occluded`` -- cruiser with one unobserved timestep.
* ``pedestrian`` -- walker on the sidewalk.
* ``ramp`` -- straight line with constant longitudinal acceleration.
* ``cubic`` -- straight line whose position is a cubic in time (constant jerk).

Ramps and cubics carry their acceleration polynomial ``a(t) = c0 + c1 * t``
in the truth record (``accel``), so every body-frame signal has a closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .kinematics import ComfortThresholds
from .sampler import random_stream
from .scenario import AgentTrack, Category, DrivableMap, Obstacle, SceneRecord

ROAD_HALF_WIDTH = 10.0
ROAD_X = (-200.0, 400.0)
SIDE_LANES = (-7.0, -3.5, 3.5, 7.0)
TURNER_MAX_RADIUS = 2.5
CAR = (4.5, 2.0)
PERIOD4 = np.array([1.0, 1.0, -1.0, -1.0])


@dataclass(frozen=True)
class GeneratorSpec:
    n_scenes: int = 10
    history_len: int = 21
    future_len: int = 80
    dt: float = 0.1
    ego_speed: float = 3.0
    ego_stationary: bool = False
    n_cruisers: int = 4
    n_turners: int = 1
    n_tailgaters: int = 0
    n_jerky: int = 0
    n_parkers: int = 0
    n_stationary: int = 0
    n_occluded: int = 0
    n_pedestrians: int = 0
    n_ramps: int = 0
    n_cubics: int = 0
    # rad per step; a float fixes it, a pair is a uniform range (sign random)
    turn_rate: float | tuple[float, float] = (0.02, 0.12)
    tailgate_gap: float = 3.0
    tailgate_closing: float = 5.0
    jerk_speed_amplitude: float = 1.0
    jerk_heading_amplitude: float = 0.2
    scene_prefix: str = "syn"

    def __post_init__(self):
        counts = [self.n_scenes, self.n_cruisers, self.n_turners, self.n_tailgaters, self.n_jerky,
                  self.n_parkers, self.n_stationary, self.n_occluded, self.n_pedestrians,
                  self.n_ramps, self.n_cubics]
        if min(counts) < 0:
            raise ValueError("generator counts must be >= 0")
        if self.history_len < 2 or self.future_len < 0 or self.dt <= 0:
            raise ValueError("invalid horizon or timestep")


def _track(agent_id, category, pos, heading, vel, bbox=CAR, observed=True) -> AgentTrack:
    return AgentTrack(agent_id, category, pos, heading, vel, bbox, observed)


def _straight(x0, y0, speed, n, dt, heading=0.0):
    t = np.arange(n) * dt
    c, s = math.cos(heading), math.sin(heading)
    pos = np.column_stack([x0 + c * speed * t, y0 + s * speed * t])
    vel = np.tile([c * speed, s * speed], (n, 1))
    return pos, np.full(n, heading), vel


class _SceneBuilder:
    def __init__(self, spec: GeneratorSpec, scene_id: str, rng: np.random.Generator):
        self.spec = spec
        self.scene_id = scene_id
        self.rng = rng
        self.n = spec.history_len + spec.future_len
        self.agents: list[AgentTrack] = []
        self.truth: dict[str, dict] = {}
        self.h1 = spec.history_len - 1

    def _id(self, kind: str) -> str:
        return f"{kind}{len(self.agents)}"

    def _offset(self, lo=-10.0, hi=25.0) -> float:
        return float(self.rng.uniform(lo, hi))

    def _speed(self) -> float:
        sp = self.spec
        base = 0.0 if sp.ego_stationary else sp.ego_speed
        return max(0.5, base + float(self.rng.uniform(-1.0, 1.0)))

    def _lane(self) -> float:
        return float(self.rng.choice(SIDE_LANES))

    def _add(self, track: AgentTrack, truth: dict) -> None:
        self.agents.append(track)
        self.truth[track.agent_id] = truth

    def cruiser(self, kind="cruiser"):
        sp = self.spec
        speed = self._speed()
        pos, head, vel = _straight(self._offset(), self._lane(), speed, self.n, sp.dt)
        aid = self._id(kind)
        observed = np.ones(self.n, dtype=bool)
        truth = {"kind": kind, "h": 0.0, "d": speed * self.h1 * sp.dt}
        if kind == "occluded":
            observed[int(self.rng.integers(0, self.n))] = False
        self._add(_track(aid, Category.VEHICLE, pos, head, vel, observed=observed), truth)

    def turner(self):
        sp = self.spec
        if isinstance(sp.turn_rate, (int, float)):
            omega = float(sp.turn_rate)
        else:
            omega = float(self.rng.uniform(*sp.turn_rate)) * float(self.rng.choice([-1.0, 1.0]))
        rate = omega / sp.dt
        speed = min(self._speed(), TURNER_MAX_RADIUS * abs(rate))
        radius = speed / rate  # signed: positive turns left
        theta0 = float(self.rng.uniform(-math.pi, math.pi))
        theta = theta0 + omega * np.arange(self.n)
        center = np.array([self._offset(0.0, 25.0), math.copysign(7.0, self.rng.uniform(-1, 1))])
        pos = center + radius * np.column_stack([np.sin(theta), -np.cos(theta)])
        vel = speed * np.column_stack([np.cos(theta), np.sin(theta)])
        chord = 2.0 * abs(radius) * abs(math.sin(omega * self.h1 / 2.0))
        self._add(
            _track(self._id("turner"), Category.VEHICLE, pos, theta, vel),
            {"kind": "turner", "h": abs(omega) * self.h1, "d": chord, "omega": omega},
        )

    def tailgating_pair(self):
        sp = self.spec
        lane, x0, speed = -3.5, self._offset(-10.0, 15.0), self._speed()
        lead_x = x0 + sp.tailgate_gap + CAR[0]
        pos_f, head, vel_f = _straight(x0, lane, speed, self.n, sp.dt)
        pos_l, _, vel_l = _straight(lead_x, lane, speed, self.n, sp.dt)
        vel_f = vel_f + [sp.tailgate_closing, 0.0]
        leader = self._id("leader")
        self._add(_track(leader, Category.VEHICLE, pos_l, head, vel_l),
                  {"kind": "leader", "h": 0.0})
        truth = {"kind": "tailgater", "h": 0.0, "leader": leader}
        if sp.tailgate_closing > 0 and sp.tailgate_gap > 0:
            truth["ttc"] = sp.tailgate_gap / sp.tailgate_closing
        self._add(_track(self._id("tailgater"), Category.VEHICLE, pos_f, head, vel_f), truth)

    def jerky(self):
        sp = self.spec
        speed = max(2.0, self._speed())
        pattern = PERIOD4[(np.arange(self.n) + int(self.rng.integers(0, 4))) % 4]
        heading = sp.jerk_heading_amplitude * pattern
        v_body = np.column_stack([speed + sp.jerk_speed_amplitude * pattern,
                                  sp.jerk_speed_amplitude * pattern])
        c, s = np.cos(heading), np.sin(heading)
        vel = np.column_stack([c * v_body[:, 0] - s * v_body[:, 1],
                               s * v_body[:, 0] + c * v_body[:, 1]])
        start = np.array([self._offset(), float(self.rng.choice([3.5, 7.0]))])
        steps = np.vstack([np.zeros((1, 2)), np.cumsum(vel[:-1] * sp.dt, axis=0)])
        pos = start + steps
        hist = pattern[: sp.history_len]
        truth = {"kind": "jerky",
                 "h": float(sp.jerk_heading_amplitude * np.abs(np.diff(hist)).sum())}
        # every |first| and |second| difference of the pattern is >= 1 unit
        th = ComfortThresholds()
        a, j = sp.jerk_speed_amplitude / sp.dt, sp.jerk_speed_amplitude / sp.dt**2
        r, ra = sp.jerk_heading_amplitude / sp.dt, sp.jerk_heading_amplitude / sp.dt**2
        if (a > max(th.alpha_x, th.alpha_y) and j > max(th.beta_x, th.beta_y)
                and r > th.gamma_1 and ra > th.gamma_2):
            truth["v_comf"] = sp.history_len
        self._add(_track(self._id("jerky"), Category.VEHICLE, pos, heading, vel), truth)

    def parker(self):
        y = math.copysign(ROAD_HALF_WIDTH + 3.0, self.rng.uniform(-1, 1))
        pos, head, vel = _straight(self._offset(), y, 0.0, self.n, self.spec.dt)
        self._add(_track(self._id("parker"), Category.VEHICLE, pos, head, vel),
                  {"kind": "parker", "h": 0.0, "d": 0.0})

    def stationary(self):
        pos, head, vel = _straight(self._offset(), self._lane(), 0.0, self.n, self.spec.dt)
        self._add(_track(self._id("stationary"), Category.VEHICLE, pos, head, vel),
                  {"kind": "stationary", "h": 0.0, "d": 0.0})

    def pedestrian(self):
        y = math.copysign(ROAD_HALF_WIDTH + 2.0, self.rng.uniform(-1, 1))
        pos, head, vel = _straight(self._offset(), y, 1.4, self.n, self.spec.dt)
        self._add(_track(self._id("ped"), Category.PEDESTRIAN, pos, head, vel, bbox=(0.5, 0.5)),
                  {"kind": "pedestrian"})

    def polynomial(self, kind: str):
        """Line at a random heading with position ``x0 + c1 t + c2 t^2 + c3 t^3``."""
        sp = self.spec
        heading = float(self.rng.uniform(-0.5, 0.5))
        c1 = self._speed()
        c2 = float(self.rng.uniform(-0.3, 0.3))
        c3 = float(self.rng.uniform(-0.02, 0.02)) if kind == "cubic" else 0.0
        t = np.arange(self.n) * sp.dt
        along = c1 * t + c2 * t**2 + c3 * t**3
        speed = c1 + 2 * c2 * t + 3 * c3 * t**2
        e = np.array([math.cos(heading), math.sin(heading)])
        start = np.array([self._offset(), self._lane()])
        pos = start + along[:, None] * e
        vel = speed[:, None] * e
        h1 = self.h1 * sp.dt
        truth = {"kind": kind, "h": 0.0, "d": abs(c1 * h1 + c2 * h1**2 + c3 * h1**3),
                 "accel": [2 * c2, 6 * c3]}
        self._add(_track(self._id(kind), Category.VEHICLE, pos, np.full(self.n, heading), vel),
                  truth)

    def build(self) -> SceneRecord:
        sp = self.spec
        for _ in range(sp.n_cruisers):
            self.cruiser()
        for _ in range(sp.n_turners):
            self.turner()
        for _ in range(sp.n_tailgaters):
            self.tailgating_pair()
        for _ in range(sp.n_jerky):
            self.jerky()
        for _ in range(sp.n_parkers):
            self.parker()
        for _ in range(sp.n_stationary):
            self.stationary()
        for _ in range(sp.n_occluded):
            self.cruiser("occluded")
        for _ in range(sp.n_pedestrians):
            self.pedestrian()
        for _ in range(sp.n_ramps):
            self.polynomial("ramp")
        for _ in range(sp.n_cubics):
            self.polynomial("cubic")

        ego_speed = 0.0 if sp.ego_stationary else sp.ego_speed
        pos, head, vel = _straight(0.0, 0.0, ego_speed, self.n, sp.dt)
        ego = _track("ego", Category.VEHICLE, pos, head, vel)
        x0, x1 = ROAD_X
        road = np.array([[x0, -ROAD_HALF_WIDTH], [x1, -ROAD_HALF_WIDTH],
                         [x1, ROAD_HALF_WIDTH], [x0, ROAD_HALF_WIDTH]])
        centerlines = tuple(np.array([[x0, y], [x1, y]]) for y in (0.0, *SIDE_LANES))
        obstacles = (Obstacle((float(self.rng.uniform(0, 40)), ROAD_HALF_WIDTH + 4.0), 0.0, (1.0, 1.0)),)
        return SceneRecord(
            scene_id=self.scene_id,
            dt=sp.dt,
            history_len=sp.history_len,
            future_len=sp.future_len,
            ego=ego,
            agents=tuple(self.agents),
            obstacles=obstacles,
            drivable=DrivableMap(polygons=(road,), polylines=centerlines),
            context={"generator": "synthetic", "truth": self.truth},
        )


def generate_scene(spec: GeneratorSpec, index: int, seed: int) -> SceneRecord:
    scene_id = f"{spec.scene_prefix}-{index:06d}"
    return _SceneBuilder(spec, scene_id, random_stream(seed, "synthetic", index)).build()


def gen_synthetic(spec: GeneratorSpec, seed: int = 0) -> Iterator[SceneRecord]:
    """Yield ``spec.n_scenes`` scenes; each depends only on ``(seed, index)``."""
    for i in range(spec.n_scenes):
        yield generate_scene(spec, i, seed)


PRESETS = {
    "default": GeneratorSpec(n_cruisers=4, n_turners=2, n_tailgaters=1, n_jerky=1, n_parkers=1,
                             n_stationary=1, n_occluded=1, n_pedestrians=1),
    # low-h-dominated pools: many straight drivers, a few turners
    "low_h": GeneratorSpec(n_cruisers=6, n_turners=2, n_stationary=1, n_parkers=1),
    # smooth ego, noisy or tailgating surrounding traffic
    "noisy_traffic": GeneratorSpec(n_cruisers=3, n_tailgaters=1, n_jerky=2, n_turners=1),
    "throughput": GeneratorSpec(n_cruisers=8, n_turners=3, n_tailgaters=2, n_jerky=2, n_parkers=1,
                                n_stationary=1, n_occluded=1, n_pedestrians=0),
}
