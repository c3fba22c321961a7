"""Pose-augmented pedestrian trajectory prediction toolkit."""

from .errors import ConfigError, DataError, NumericError
from .scenes import (
    JOINT_NAMES,
    AgentTrack,
    PoseFrame,
    Scene,
    SceneCategory,
    read_scenes,
    write_scenes,
)

__version__ = "0.1.0"

__all__ = [
    "AgentTrack",
    "ConfigError",
    "DataError",
    "JOINT_NAMES",
    "NumericError",
    "PoseFrame",
    "Scene",
    "SceneCategory",
    "read_scenes",
    "write_scenes",
    "__version__",
]
