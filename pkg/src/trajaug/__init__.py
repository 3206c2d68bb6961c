"""Scenario-level data augmentation for driving imitation learning.

Surrounding vehicles are scored by maneuver complexity (sum of absolute
heading changes), optionally filtered for motion, comfort and time-to-collision
quality, sampled with a temperature softmax, and re-expressed as ego
demonstrations in their own SE(2) frame.
"""

from .config import RunConfig, load_config
from .corpus import read_corpus, write_corpus
from .eligibility import CandidateScore, FilterConfig, eligible_pool, filtered_pool, score_candidates
from .errors import AugmentError, ConfigError, CorpusIOError, DataError
from .interaction import TtcConfig, ttc_pair, ttc_violation_count
from .kinematics import (
    ComfortThresholds,
    body_frame_kinematics,
    comfort_violation_count,
    displacement,
    heading_deviation_sum,
)
from .sampler import (
    SamplingConfig,
    SelectionPlan,
    sample_without_replacement,
    select_per_ego,
    select_per_scene,
    softmax_weights,
)
from .scenario import AgentState, AgentTrack, DrivableMap, Obstacle, SceneRecord, validate_scene
from .transform import RigidTransform2D, augment_dataset, transform_scene

__version__ = "0.1.0"

__all__ = [
    "AgentState", "AgentTrack", "AugmentError", "CandidateScore", "ComfortThresholds",
    "ConfigError", "CorpusIOError", "DataError", "DrivableMap", "FilterConfig", "Obstacle",
    "RigidTransform2D", "RunConfig", "SamplingConfig", "SceneRecord", "SelectionPlan",
    "TtcConfig", "augment_dataset", "body_frame_kinematics", "comfort_violation_count",
    "displacement", "eligible_pool", "filtered_pool", "heading_deviation_sum", "load_config",
    "read_corpus", "sample_without_replacement", "score_candidates", "select_per_ego",
    "select_per_scene", "softmax_weights",
    "transform_scene", "ttc_pair", "ttc_violation_count", "validate_scene", "write_corpus",
]
