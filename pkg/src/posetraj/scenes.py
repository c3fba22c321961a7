"""Scene data model for pose-annotated pedestrian trajectories.

A corpus is a list of :class:`Scene` objects.  Each scene is one prediction
instance: a primary agent whose future is the prediction target, plus any
number of neighbours.  Poses are stored pelvis-relative (world axes,
translated so the pelvis is the origin), with a per-joint validity mask.
Masked joints always carry exact zeros.

Scenes persist as line-delimited JSON, one scene per line; floats go through
Python's shortest round-trip repr, so write/read is bit-exact.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

SCENE_FILE_VERSION = 1

# Canonical 17-joint skeleton used by the synthetic generator and the
# occlusion/attention tooling.  Index 0 is the pelvis.
JOINT_NAMES = (
    "pelvis",
    "left_hip", "left_knee", "left_ankle",
    "right_hip", "right_knee", "right_ankle",
    "spine", "thorax", "neck", "head",
    "left_shoulder", "left_elbow", "left_wrist",
    "right_shoulder", "right_elbow", "right_wrist",
)
JOINT_INDEX = {name: i for i, name in enumerate(JOINT_NAMES)}
PELVIS = 0

LIMBS = {
    "left_leg": ("left_hip", "left_knee", "left_ankle"),
    "right_leg": ("right_hip", "right_knee", "right_ankle"),
    "left_arm": ("left_shoulder", "left_elbow", "left_wrist"),
    "right_arm": ("right_shoulder", "right_elbow", "right_wrist"),
}


def limb_joint_indices(limb: str) -> list[int]:
    return [JOINT_INDEX[name] for name in LIMBS[limb]]


@dataclass
class PoseFrame:
    """One frame of body keypoints, pelvis-relative.

    joints: (J, C) array, C=3 for 3D (meters) or C=2 (normalized image units).
    mask: (J,) booleans, True where the joint was observed.  Masked joints
    are forced to exact zeros on construction.
    """

    joints: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.joints.ndim != 2 or self.joints.shape[1] not in (2, 3):
            raise ValueError(f"joints must be (J, 2|3), got {self.joints.shape}")
        if self.mask.shape != (self.joints.shape[0],):
            raise ValueError("mask length must equal joint count")
        # invariant: masked-out joints carry exact zeros
        self.joints = np.where(self.mask[:, None], self.joints, 0.0)

    @property
    def n_joints(self) -> int:
        return self.joints.shape[0]

    @property
    def dims(self) -> int:
        return self.joints.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, PoseFrame)
            and np.array_equal(self.joints, other.joints)
            and np.array_equal(self.mask, other.mask)
        )


@dataclass
class AgentTrack:
    """World trajectory plus pose sequence for one agent."""

    agent_id: str
    positions: np.ndarray  # (T, 2) world meters
    poses: list[PoseFrame]
    frame_rate: float

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ValueError(f"positions must be (T, 2), got {self.positions.shape}")
        if not np.isfinite(self.positions).all():
            raise ValueError(f"agent {self.agent_id}: non-finite positions")
        if len(self.poses) != len(self.positions):
            raise ValueError(f"agent {self.agent_id}: poses length != positions length")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")

    def __len__(self) -> int:
        return len(self.positions)

    def frame_observed(self) -> np.ndarray:
        """Per-frame flag: a frame with every joint masked counts as a gap."""
        return np.array([f.mask.any() for f in self.poses], dtype=bool)

    def pose_array(self) -> np.ndarray:
        """Stacked (T, J, C) joint coordinates."""
        return np.stack([f.joints for f in self.poses])

    def mask_array(self) -> np.ndarray:
        """Stacked (T, J) joint validity."""
        return np.stack([f.mask for f in self.poses])

    def window(self, start: int, length: int) -> "AgentTrack":
        return AgentTrack(
            agent_id=self.agent_id,
            positions=self.positions[start : start + length].copy(),
            poses=[
                PoseFrame(f.joints.copy(), f.mask.copy())
                for f in self.poses[start : start + length]
            ],
            frame_rate=self.frame_rate,
        )

    def __eq__(self, other):
        return (
            isinstance(other, AgentTrack)
            and self.agent_id == other.agent_id
            and self.frame_rate == other.frame_rate
            and np.array_equal(self.positions, other.positions)
            and self.poses == other.poses
        )


class SceneCategory(enum.Enum):
    STATIC = "static"
    LINEAR = "linear"
    INTERACTION = "interaction"
    OTHER = "other"


@dataclass
class Scene:
    """One prediction instance: primary agent + neighbours over a fixed window."""

    primary_index: int
    agents: list[AgentTrack]
    t_obs: int
    t_pred: int
    category: SceneCategory

    def __post_init__(self):
        if not self.agents:
            raise ValueError("scene needs at least one agent")
        if not 0 <= self.primary_index < len(self.agents):
            raise ValueError("primary_index out of range")
        if self.t_obs < 2:
            raise ValueError("t_obs must be >= 2")
        window = self.t_obs + self.t_pred
        for track in self.agents:
            if len(track) != window:
                raise ValueError(
                    f"agent {track.agent_id}: {len(track)} frames, expected {window}"
                )

    @property
    def primary(self) -> AgentTrack:
        return self.agents[self.primary_index]

    @property
    def frame_rate(self) -> float:
        return self.agents[0].frame_rate

    @property
    def n_joints(self) -> int:
        return self.agents[0].poses[0].n_joints

    @property
    def pose_dims(self) -> int:
        return self.agents[0].poses[0].dims

    def neighbours(self) -> list[AgentTrack]:
        return [a for i, a in enumerate(self.agents) if i != self.primary_index]

    def __eq__(self, other):
        return (
            isinstance(other, Scene)
            and self.primary_index == other.primary_index
            and self.t_obs == other.t_obs
            and self.t_pred == other.t_pred
            and self.category == other.category
            and self.agents == other.agents
        )


@dataclass
class CategorizerConfig:
    """Thresholds for the four-way trajectory categorization."""

    static_eps: float = 1.0  # m, net primary displacement over the window
    linear_eps: float = 0.5  # m, max future deviation from constant velocity
    interaction_radius: float = 3.0  # m, neighbour proximity at any frame

    def to_dict(self) -> dict:
        return {
            "static_eps": self.static_eps,
            "linear_eps": self.linear_eps,
            "interaction_radius": self.interaction_radius,
        }


def categorize(scene: Scene, cfg: CategorizerConfig | None = None) -> SceneCategory:
    """Classify a scene as static / linear / interaction / other.

    Static: net primary displacement over the full window below static_eps.
    Linear: the primary's future stays within linear_eps of the constant
    velocity extrapolation of its observation.  Interaction: some neighbour
    comes within interaction_radius of the primary at any frame.  Checked in
    that order; anything left is Other.
    """
    cfg = cfg or CategorizerConfig()
    primary = scene.primary.positions
    if np.linalg.norm(primary[-1] - primary[0]) < cfg.static_eps:
        return SceneCategory.STATIC
    if scene.t_obs < 2:
        return SceneCategory.STATIC

    last_obs = primary[scene.t_obs - 1]
    velocity = (last_obs - primary[0]) / (scene.t_obs - 1)
    steps = np.arange(1, scene.t_pred + 1)[:, None]
    extrapolated = last_obs[None, :] + steps * velocity[None, :]
    future = primary[scene.t_obs :]
    if len(future) and np.linalg.norm(future - extrapolated, axis=1).max() < cfg.linear_eps:
        return SceneCategory.LINEAR

    for neighbour in scene.neighbours():
        distances = np.linalg.norm(neighbour.positions - primary, axis=1)
        if distances.min() < cfg.interaction_radius:
            return SceneCategory.INTERACTION
    return SceneCategory.OTHER


def slice_scenes(
    tracks: list[AgentTrack],
    t_obs: int = 9,
    t_pred: int = 12,
    stride: int = 1,
    categorizer: CategorizerConfig | None = None,
) -> list[Scene]:
    """Cut synchronized tracks into prediction scenes with sliding windows.

    One scene per (window, eligible primary).  An agent is eligible as
    primary only if it is observed (some joint visible) at every frame of
    the window; all other agents ride along as neighbours.
    """
    if t_obs < 2:
        raise ValueError("t_obs must be >= 2")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if not tracks:
        return []
    window = t_obs + t_pred
    n_frames = len(tracks[0])
    for track in tracks:
        if len(track) != n_frames:
            raise ValueError("all tracks must cover the same frames")
    if n_frames < window:
        raise ValueError(f"tracks have {n_frames} frames, need >= {window}")

    observed = np.stack([t.frame_observed() for t in tracks])  # (n_agents, T)
    scenes = []
    for start in range(0, n_frames - window + 1, stride):
        cut = [t.window(start, window) for t in tracks]
        for agent_index in range(len(tracks)):
            if not observed[agent_index, start : start + window].all():
                continue
            scene = Scene(
                primary_index=agent_index,
                agents=[t.window(0, window) for t in cut],
                t_obs=t_obs,
                t_pred=t_pred,
                category=SceneCategory.OTHER,
            )
            scene.category = categorize(scene, categorizer)
            scenes.append(scene)
    return scenes


def to_local_pose(
    world_joints: np.ndarray, pelvis_index: int = PELVIS, mask: np.ndarray | None = None
) -> np.ndarray:
    """Re-express world joint coordinates relative to the pelvis joint.

    The pelvis row of the output is exactly zero and pairwise joint
    distances are preserved.  If a mask is given, the pelvis must be
    observed (otherwise the whole frame should be masked by the caller);
    masked joints come back as zeros.
    """
    world_joints = np.asarray(world_joints, dtype=np.float64)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask[pelvis_index]:
            raise ValueError("pelvis joint is masked; mask the whole frame instead")
    local = world_joints - world_joints[pelvis_index]
    local[pelvis_index] = 0.0
    if mask is not None:
        local = np.where(mask[:, None], local, 0.0)
    return local


# ---------------------------------------------------------------------------
# persistence: line-delimited JSON, one scene per line


def _scene_to_record(scene: Scene) -> dict:
    return {
        "version": SCENE_FILE_VERSION,
        "frame_rate": scene.frame_rate,
        "t_obs": scene.t_obs,
        "t_pred": scene.t_pred,
        "primary": scene.primary_index,
        "category": scene.category.value,
        "pose_dims": scene.pose_dims,
        "agents": [
            {
                "id": track.agent_id,
                "xy": track.positions.tolist(),
                "pose": [f.joints.tolist() for f in track.poses],
                "mask": [f.mask.tolist() for f in track.poses],
            }
            for track in scene.agents
        ],
    }


def _scene_from_record(record: dict) -> Scene:
    version = record.get("version")
    if version != SCENE_FILE_VERSION:
        raise DataError(f"unsupported scene file version {version!r}")
    frame_rate = float(record["frame_rate"])
    agents = []
    for raw in record["agents"]:
        poses = [
            PoseFrame(np.array(joints, dtype=np.float64), np.array(mask, dtype=bool))
            for joints, mask in zip(raw["pose"], raw["mask"], strict=True)
        ]
        agents.append(
            AgentTrack(
                agent_id=str(raw["id"]),
                positions=np.array(raw["xy"], dtype=np.float64),
                poses=poses,
                frame_rate=frame_rate,
            )
        )
    return Scene(
        primary_index=int(record["primary"]),
        agents=agents,
        t_obs=int(record["t_obs"]),
        t_pred=int(record["t_pred"]),
        category=SceneCategory(record["category"]),
    )


def write_scenes(scenes: list[Scene], path) -> None:
    """Write scenes as JSONL.  Floats round-trip bit-exactly."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for scene in scenes:
            handle.write(json.dumps(_scene_to_record(scene)))
            handle.write("\n")


def read_scenes(path) -> list[Scene]:
    """Read a JSONL scene file; malformed lines raise DataError with the line number."""
    path = Path(path)
    scenes = []
    with path.open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                scenes.append(_scene_from_record(record))
            except DataError:
                raise
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path.name} line {line_number}: {exc}") from exc
    return scenes
