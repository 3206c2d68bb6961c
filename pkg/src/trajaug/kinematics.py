"""Per-agent motion descriptors over the history window.

Heading deviation, displacement, body-frame acceleration/jerk/yaw signals and
the comfort-violation count. The array functions (``*_batch``) work on a
trailing time axis so a whole scene can be scored in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, HorizonTooShortError, UnobservedStateError
from .scenario import AgentTrack, wrap_angle

MIN_KINEMATIC_HORIZON = 4


def wrapped_heading_delta(theta_a, theta_b):
    """``theta_a - theta_b`` mapped into (-pi, pi]."""
    return wrap_angle(np.asarray(theta_a, dtype=float) - np.asarray(theta_b, dtype=float))


def _require_observed(track: AgentTrack, idx, what: str):
    obs = track.observed[idx]
    if not np.all(obs):
        raise UnobservedStateError(f"agent {track.agent_id!r}: {what} contains unobserved states")


def heading_deviation_sum_batch(heading: np.ndarray) -> np.ndarray:
    """Sum of absolute wrapped heading steps along the last axis."""
    steps = wrapped_heading_delta(heading[..., 1:], heading[..., :-1])
    return np.abs(steps).sum(axis=-1)


def heading_deviation_sum(track: AgentTrack, history_len: int) -> float:
    _require_observed(track, slice(0, history_len), "history window")
    return float(heading_deviation_sum_batch(track.heading[:history_len]))


def displacement(track: AgentTrack, history_len: int) -> float:
    """Straight-line distance between the first and last history positions."""
    _require_observed(track, [0, history_len - 1], "history endpoints")
    delta = track.position[history_len - 1] - track.position[0]
    return float(np.hypot(delta[0], delta[1]))


@dataclass(frozen=True)
class KinematicSignals:
    a_lon: np.ndarray
    a_lat: np.ndarray
    jerk_lon: np.ndarray
    jerk_lat: np.ndarray
    yaw_rate: np.ndarray
    yaw_accel: np.ndarray

    def stacked(self) -> np.ndarray:
        """Signals as a ``(..., T, 6)`` array in the comfort-threshold order."""
        return np.stack(
            [self.a_lon, self.a_lat, self.jerk_lon, self.jerk_lat, self.yaw_rate, self.yaw_accel],
            axis=-1,
        )


@dataclass(frozen=True)
class ComfortThresholds:
    alpha_x: float = 2.40
    alpha_y: float = 4.89
    beta_x: float = 4.13
    beta_y: float = 4.13
    gamma_1: float = 0.95
    gamma_2: float = 1.93
    combiner: str = "all"

    def __post_init__(self):
        for name in ("alpha_x", "alpha_y", "beta_x", "beta_y", "gamma_1", "gamma_2"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"comfort threshold {name} must be > 0, got {value!r}")
        if self.combiner not in ("all", "any"):
            raise ConfigError(f"combiner must be 'all' or 'any', got {self.combiner!r}")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.alpha_x, self.alpha_y, self.beta_x, self.beta_y, self.gamma_1, self.gamma_2]
        )


def _derivative(values: np.ndarray, dt: float) -> np.ndarray:
    # second-order central interior, second-order one-sided ends
    return np.gradient(values, dt, axis=-1, edge_order=2)


def body_frame_kinematics_batch(
    heading: np.ndarray, velocity: np.ndarray, dt: float
) -> KinematicSignals:
    """Body-frame signals for ``heading`` of shape ``(..., T)`` and ``velocity`` ``(..., T, 2)``.

    The measured velocity is rotated into each timestep's heading frame and
    then differenced; positions are never differentiated.
    """
    if heading.shape[-1] < MIN_KINEMATIC_HORIZON:
        raise HorizonTooShortError(
            f"body-frame kinematics need at least {MIN_KINEMATIC_HORIZON} steps, "
            f"got {heading.shape[-1]}"
        )
    c, s = np.cos(heading), np.sin(heading)
    vx, vy = velocity[..., 0], velocity[..., 1]
    v_lon = c * vx + s * vy
    v_lat = -s * vx + c * vy
    a_lon = _derivative(v_lon, dt)
    a_lat = _derivative(v_lat, dt)

    steps = wrapped_heading_delta(heading[..., 1:], heading[..., :-1])
    unwrapped = np.concatenate(
        [np.zeros_like(heading[..., :1]), np.cumsum(steps, axis=-1)], axis=-1
    )
    yaw_rate = _derivative(unwrapped, dt)
    return KinematicSignals(
        a_lon=a_lon,
        a_lat=a_lat,
        jerk_lon=_derivative(a_lon, dt),
        jerk_lat=_derivative(a_lat, dt),
        yaw_rate=yaw_rate,
        yaw_accel=_derivative(yaw_rate, dt),
    )


def body_frame_kinematics(track: AgentTrack, dt: float, history_len: int) -> KinematicSignals:
    if history_len < MIN_KINEMATIC_HORIZON:
        raise HorizonTooShortError(
            f"history_len={history_len} < {MIN_KINEMATIC_HORIZON}; jerk needs two derivative levels"
        )
    _require_observed(track, slice(0, history_len), "history window")
    return body_frame_kinematics_batch(
        track.heading[:history_len], track.velocity[:history_len], dt
    )


def comfort_indicator(signals: KinematicSignals, thresholds: ComfortThresholds) -> np.ndarray:
    """Per-timestep violation flags, shape ``(..., T)``."""
    exceeds = np.abs(signals.stacked()) > thresholds.as_array()
    if thresholds.combiner == "all":
        return exceeds.all(axis=-1)
    return exceeds.any(axis=-1)


def comfort_violation_count(signals: KinematicSignals, thresholds: ComfortThresholds):
    """Number of flagged timesteps; an int, or an integer array for batched signals."""
    counts = comfort_indicator(signals, thresholds).sum(axis=-1)
    if np.ndim(counts) == 0:
        return int(counts)
    return counts.astype(np.int64)
