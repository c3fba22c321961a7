"""Synthetic multi-agent pedestrian scenes with articulated walking poses.

Agents follow piecewise-constant-velocity paths with rate-limited (smoothed)
heading changes.  The skeleton is posed by a deterministic gait oscillator
around the path point; the upper body (shoulders, arms, head) is oriented
toward the heading the agent will have ``lead_time`` seconds later, so an
upcoming turn is visible in the pose before it shows in the trajectory.
That anticipation is the predictive signal the rest of the toolkit is built
to detect.

Everything is bit-deterministic under the configured seed; scene ``i`` draws
from an independent stream keyed by ``(seed, i)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scenes import (
    JOINT_INDEX,
    JOINT_NAMES,
    AgentTrack,
    CategorizerConfig,
    PoseFrame,
    Scene,
    SceneCategory,
    categorize,
)

PELVIS_HEIGHT = 0.95  # m, pelvis above ground for 3D world joints
NEIGHBOR_REPULSION_RADIUS = 1.5  # m, collision-avoiding steering kicks in
BOUNDS_MARGIN = 0.6  # m, start steering back toward the arena center
REFERENCE_SPEED = 1.2  # m/s, gait amplitudes scale with speed relative to this


def _default_phase_offsets() -> dict[str, float]:
    # left/right ankles must be half a cycle apart; arms swing opposite legs
    return {
        "left_ankle": 0.0,
        "right_ankle": math.pi,
        "left_knee": 0.0,
        "right_knee": math.pi,
        "left_wrist": math.pi,
        "right_wrist": 0.0,
        "left_elbow": math.pi,
        "right_elbow": 0.0,
    }


@dataclass
class GaitModel:
    """Deterministic walking oscillator."""

    step_frequency: float = 1.8  # Hz
    stride_amplitude: float = 0.5  # m, peak-to-peak ankle travel at reference speed
    limb_phase_offsets: dict[str, float] = field(default_factory=_default_phase_offsets)
    lead_time: float = 0.8  # s, how far ahead the upper body pre-rotates
    noise_std: float = 0.0  # m, i.i.d. jitter on non-pelvis joints

    def __post_init__(self):
        if self.step_frequency <= 0:
            raise ValueError("step_frequency must be positive")
        if self.lead_time < 0:
            raise ValueError("lead_time must be >= 0")
        delta = (self.limb_phase_offsets["left_ankle"]
                 - self.limb_phase_offsets["right_ankle"]) % (2 * math.pi)
        if abs(delta - math.pi) > 1e-9:
            raise ValueError("left/right ankle phases must differ by pi")

    def to_dict(self) -> dict:
        return {
            "step_frequency": self.step_frequency,
            "stride_amplitude": self.stride_amplitude,
            "lead_time": self.lead_time,
            "noise_std": self.noise_std,
        }


@dataclass
class WorldConfig:
    """Arena and crowd parameters for the random walker world."""

    n_agents: tuple[int, int] = (1, 3)
    speed: tuple[float, float] = (0.9, 1.5)  # m/s
    turn_prob: float = 0.15  # expected turns per second per agent
    turn_angle: tuple[float, float] = (0.7, 2.0)  # radians
    bounds: tuple[float, float, float, float] = (-12.0, -12.0, 12.0, 12.0)
    frame_rate: float = 2.5  # Hz
    turn_rate: float = 1.6  # rad/s heading slew limit (turn smoothing)
    seed: int = 0

    def __post_init__(self):
        if self.speed[1] < self.speed[0] or self.speed[0] <= 0:
            raise ValueError(f"infeasible speed range {self.speed}")
        if self.n_agents[1] < self.n_agents[0] or self.n_agents[0] < 1:
            raise ValueError(f"infeasible n_agents range {self.n_agents}")
        xmin, ymin, xmax, ymax = self.bounds
        if xmax <= xmin or ymax <= ymin:
            raise ValueError("degenerate arena bounds")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")

    def to_dict(self) -> dict:
        return {
            "n_agents": list(self.n_agents),
            "speed": list(self.speed),
            "turn_prob": self.turn_prob,
            "turn_angle": list(self.turn_angle),
            "bounds": list(self.bounds),
            "frame_rate": self.frame_rate,
            "turn_rate": self.turn_rate,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# path simulation


def _spawn(rng, world: WorldConfig, horizon_s: float):
    """Start position, heading and speed whose straight path stays in bounds."""
    xmin, ymin, xmax, ymax = world.bounds
    for _ in range(64):
        pos = np.array([
            rng.uniform(xmin + BOUNDS_MARGIN, xmax - BOUNDS_MARGIN),
            rng.uniform(ymin + BOUNDS_MARGIN, ymax - BOUNDS_MARGIN),
        ])
        heading = rng.uniform(0.0, 2 * math.pi)
        speed = rng.uniform(*world.speed)
        end = pos + speed * horizon_s * np.array([math.cos(heading), math.sin(heading)])
        if (xmin + BOUNDS_MARGIN <= end[0] <= xmax - BOUNDS_MARGIN
                and ymin + BOUNDS_MARGIN <= end[1] <= ymax - BOUNDS_MARGIN):
            return pos, heading, speed
    # fall back to aiming at the arena center
    center = np.array([(xmin + xmax) / 2, (ymin + ymax) / 2])
    heading = math.atan2(center[1] - pos[1], center[0] - pos[0])
    return pos, heading, speed


def simulate_paths(
    rng,
    world: WorldConfig,
    n_agents: int,
    n_frames: int,
    scripted_turns: dict[int, list[tuple[float, float]]] | None = None,
    starts=None,
    headings=None,
    speeds=None,
):
    """Simulate agent paths frame by frame.

    scripted_turns maps agent index -> [(time_s, delta_angle)], with each
    turn ramp centered on its scripted time.  Returns (positions, headings,
    speeds) with shapes (A, T, 2), (A, T) and (A,); headings are continuous
    (unwrapped) angles.

    Collision-avoiding steering nudges the heading away from any neighbour
    closer than NEIGHBOR_REPULSION_RADIUS.
    """
    dt = 1.0 / world.frame_rate
    # spawn must keep the whole path in bounds, including the steering probe
    horizon_s = n_frames * dt + 1.5
    pos = np.zeros((n_agents, 2))
    heading = np.zeros(n_agents)
    target = np.zeros(n_agents)
    speed = np.zeros(n_agents)
    for a in range(n_agents):
        p, h, s = _spawn(rng, world, horizon_s)
        if starts is not None:
            p = np.asarray(starts[a], dtype=float).copy()
        if headings is not None:
            h = float(headings[a])
        if speeds is not None:
            s = float(speeds[a])
        pos[a], heading[a], speed[a] = p, h, s
        target[a] = heading[a]

    # scripted ramps start half their duration early so they center on time_s;
    # each fires once, during the integration step containing its start time
    pending: list[list[tuple[float, float]]] = [[] for _ in range(n_agents)]
    if scripted_turns:
        for a, turns in scripted_turns.items():
            for time_s, delta in turns:
                duration = abs(delta) / world.turn_rate
                pending[a].append((time_s - duration / 2.0, delta))

    p_turn = min(1.0, world.turn_prob * dt)
    xmin, ymin, xmax, ymax = world.bounds
    center = np.array([(xmin + xmax) / 2, (ymin + ymax) / 2])

    positions = np.zeros((n_agents, n_frames, 2))
    headings_out = np.zeros((n_agents, n_frames))
    positions[:, 0] = pos
    headings_out[:, 0] = heading

    for t in range(1, n_frames):
        now = (t - 1) * dt
        turn_draw = rng.random(n_agents)
        for a in range(n_agents):
            due = [r for r in pending[a] if r[0] < now + dt]
            for ramp in due:
                target[a] += ramp[1]
                pending[a].remove(ramp)
            if scripted_turns is None or a not in scripted_turns:
                if turn_draw[a] < p_turn:
                    magnitude = rng.uniform(*world.turn_angle)
                    target[a] += magnitude * (1 if rng.random() < 0.5 else -1)

            steer = target[a]
            # steer back toward the center when the near future leaves the arena
            ahead = pos[a] + speed[a] * 1.5 * np.array(
                [math.cos(heading[a]), math.sin(heading[a])]
            )
            if not (xmin + BOUNDS_MARGIN <= ahead[0] <= xmax - BOUNDS_MARGIN
                    and ymin + BOUNDS_MARGIN <= ahead[1] <= ymax - BOUNDS_MARGIN):
                back = math.atan2(center[1] - pos[a][1], center[0] - pos[a][0])
                # move the persistent target so the agent keeps the new course
                target[a] += _wrap_angle(back - target[a])
                steer = target[a]

            # gentle dodge away from the nearest close neighbour
            if n_agents > 1:
                offsets = pos - pos[a]
                distances = np.linalg.norm(offsets, axis=1)
                distances[a] = np.inf
                j = int(np.argmin(distances))
                if distances[j] < NEIGHBOR_REPULSION_RADIUS:
                    away = math.atan2(-offsets[j][1], -offsets[j][0])
                    push = 0.5 * (NEIGHBOR_REPULSION_RADIUS - distances[j])
                    steer = steer + push * _wrap_angle(away - heading[a])

            delta = np.clip(steer - heading[a], -world.turn_rate * dt, world.turn_rate * dt)
            heading[a] += delta
            pos[a] = pos[a] + speed[a] * dt * np.array(
                [math.cos(heading[a]), math.sin(heading[a])]
            )
            pos[a] = np.clip(pos[a], [xmin, ymin], [xmax, ymax])
            positions[a, t] = pos[a]
            headings_out[a, t] = heading[a]

    return positions, headings_out, speed


def _wrap_angle(angle: float) -> float:
    return (angle + math.pi) % (2 * math.pi) - math.pi


# ---------------------------------------------------------------------------
# skeleton synthesis

# body-frame template offsets relative to the pelvis: x forward, y left, z up
_TEMPLATE = {
    "pelvis": (0.0, 0.0, 0.0),
    "left_hip": (0.0, 0.11, -0.08),
    "left_knee": (0.0, 0.12, -0.48),
    "left_ankle": (0.0, 0.13, -0.88),
    "right_hip": (0.0, -0.11, -0.08),
    "right_knee": (0.0, -0.12, -0.48),
    "right_ankle": (0.0, -0.13, -0.88),
    "spine": (0.0, 0.0, 0.24),
    "thorax": (0.0, 0.0, 0.44),
    "neck": (0.0, 0.0, 0.57),
    "head": (0.0, 0.0, 0.72),
    "left_shoulder": (0.0, 0.21, 0.50),
    "left_elbow": (0.0, 0.27, 0.24),
    "left_wrist": (0.02, 0.28, 0.00),
    "right_shoulder": (0.0, -0.21, 0.50),
    "right_elbow": (0.0, -0.27, 0.24),
    "right_wrist": (0.02, -0.28, 0.00),
}
_LOWER_BODY = {"pelvis", "left_hip", "left_knee", "left_ankle",
               "right_hip", "right_knee", "right_ankle"}


def synthesize_pose_track(
    positions: np.ndarray,
    headings: np.ndarray,
    lead_headings: np.ndarray,
    speed: float,
    gait: GaitModel,
    frame_rate: float,
    phase: float = 0.0,
    rng=None,
) -> np.ndarray:
    """Pelvis-relative (T, 17, 3) joints for one agent.

    Lower-body joints follow the current heading, the upper body (spine and
    above, including arms) follows ``lead_headings``.  Limb oscillation
    amplitudes scale with walking speed.
    """
    n_frames = len(positions)
    times = np.arange(n_frames) / frame_rate
    phi = 2 * math.pi * gait.step_frequency * times + phase
    scale = float(np.clip(speed / REFERENCE_SPEED, 0.5, 1.5))
    ankle_amp = 0.5 * gait.stride_amplitude * scale
    wrist_amp = 0.35 * ankle_amp

    forward_osc = np.zeros((n_frames, len(JOINT_NAMES)))
    lift_osc = np.zeros((n_frames, len(JOINT_NAMES)))
    for name, offset in gait.limb_phase_offsets.items():
        j = JOINT_INDEX[name]
        if name.endswith("ankle"):
            forward_osc[:, j] = ankle_amp * np.sin(phi + offset)
            lift_osc[:, j] = 0.03 * scale * (1 + np.cos(2 * (phi + offset))) / 2
        elif name.endswith("knee"):
            forward_osc[:, j] = 0.5 * ankle_amp * np.sin(phi + offset + 0.4)
            lift_osc[:, j] = 0.02 * scale * (1 + np.cos(2 * (phi + offset))) / 2
        elif name.endswith("wrist"):
            forward_osc[:, j] = wrist_amp * np.sin(phi + offset)
        elif name.endswith("elbow"):
            forward_osc[:, j] = 0.5 * wrist_amp * np.sin(phi + offset)

    joints = np.zeros((n_frames, len(JOINT_NAMES), 3))
    for j, name in enumerate(JOINT_NAMES):
        local_x, local_y, local_z = _TEMPLATE[name]
        yaw = headings if name in _LOWER_BODY else lead_headings
        cos_y, sin_y = np.cos(yaw), np.sin(yaw)
        fx = local_x + forward_osc[:, j]
        joints[:, j, 0] = cos_y * fx - sin_y * local_y
        joints[:, j, 1] = sin_y * fx + cos_y * local_y
        joints[:, j, 2] = local_z + lift_osc[:, j]

    joints[:, JOINT_INDEX["pelvis"], :] = 0.0
    if gait.noise_std > 0 and rng is not None:
        noise = rng.normal(0.0, gait.noise_std, joints.shape)
        noise[:, JOINT_INDEX["pelvis"], :] = 0.0
        joints = joints + noise
    return joints


def shoulder_yaw(pose: np.ndarray) -> float:
    """Facing angle implied by the shoulder line of one pelvis-relative pose."""
    left = pose[JOINT_INDEX["left_shoulder"], :2]
    right = pose[JOINT_INDEX["right_shoulder"], :2]
    line = left - right  # points to the agent's left
    return math.atan2(line[1], line[0]) - math.pi / 2


def _lead_headings(headings: np.ndarray, frame_rate: float, lead_time: float) -> np.ndarray:
    """Heading at t + lead_time, linearly interpolated on the unwrapped profile."""
    n = len(headings)
    times = np.arange(n) / frame_rate
    return np.interp(times + lead_time, times, headings)


def _build_scene(
    rng,
    world: WorldConfig,
    gait: GaitModel,
    t_obs: int,
    t_pred: int,
    categorizer: CategorizerConfig | None,
    n_agents: int | None = None,
) -> Scene:
    window = t_obs + t_pred
    lead_frames = int(math.ceil(gait.lead_time * world.frame_rate)) + 1
    total = window + lead_frames
    if n_agents is None:
        n_agents = int(rng.integers(world.n_agents[0], world.n_agents[1] + 1))
    positions, headings, speeds = simulate_paths(rng, world, n_agents, total)

    agents = []
    for a in range(n_agents):
        lead = _lead_headings(headings[a], world.frame_rate, gait.lead_time)
        phase = rng.uniform(0.0, 2 * math.pi)
        joints = synthesize_pose_track(
            positions[a], headings[a], lead, speeds[a], gait, world.frame_rate,
            phase=phase, rng=rng,
        )
        poses = [
            PoseFrame(joints[t], np.ones(len(JOINT_NAMES), dtype=bool))
            for t in range(window)
        ]
        agents.append(AgentTrack(
            agent_id=f"a{a}",
            positions=positions[a, :window],
            poses=poses,
            frame_rate=world.frame_rate,
        ))
    scene = Scene(
        primary_index=0, agents=agents, t_obs=t_obs, t_pred=t_pred,
        category=SceneCategory.OTHER,
    )
    scene.category = categorize(scene, categorizer)
    return scene


def generate_corpus(
    world: WorldConfig,
    gait: GaitModel,
    n_scenes: int,
    t_obs: int = 9,
    t_pred: int = 12,
    categorizer: CategorizerConfig | None = None,
) -> list[Scene]:
    """Generate independent scenes; scene i uses the rng stream (seed, i)."""
    if n_scenes < 1:
        raise ValueError("n_scenes must be >= 1")
    scenes = []
    for i in range(n_scenes):
        rng = np.random.default_rng([world.seed, i])
        scenes.append(_build_scene(rng, world, gait, t_obs, t_pred, categorizer))
    return scenes


# ---------------------------------------------------------------------------
# crossing-traffic scenes for the navigation suite


def generate_crossing_corpus(
    n_scenes: int,
    seed: int = 0,
    frame_rate: float = 2.5,
    t_obs: int = 9,
    t_pred: int = 12,
    n_crossers: tuple[int, int] = (2, 3),
    crosser_speed: tuple[float, float] = (1.2, 1.7),
    gait: GaitModel | None = None,
) -> list[Scene]:
    """Scenes where pedestrians cut across the corridor behind the ego agent.

    The ego walks +y and reaches y=0 at the last observed frame, so a robot
    episode anchored at the ego's last observed position runs the corridor
    x=x_ego, y in [-5, +5].  Crossers are timed to reach that corridor while
    a v0=1.2 m/s robot is nearby, which makes purely reactive avoidance
    fail often enough to measure the value of prediction.
    """
    gait = gait or GaitModel()
    dt = 1.0 / frame_rate
    window = t_obs + t_pred
    lead_frames = int(math.ceil(gait.lead_time * frame_rate)) + 1
    total = window + lead_frames
    t_anchor = (t_obs - 1) * dt  # replay time of the last observed frame

    scenes = []
    for i in range(n_scenes):
        rng = np.random.default_rng([seed, i])
        ego_speed = rng.uniform(1.1, 1.3)
        ego_x = rng.uniform(-1.0, 1.0)
        n_cross = int(rng.integers(n_crossers[0], n_crossers[1] + 1))

        starts = [np.array([ego_x, -ego_speed * t_anchor])]
        heads = [math.pi / 2]
        speeds = [ego_speed]
        for _ in range(n_cross):
            side = 1 if rng.random() < 0.5 else -1
            speed = rng.uniform(*crosser_speed)
            t_hit = rng.uniform(0.8, 4.6)  # episode time of corridor crossing
            # robot budget: starts 5 m behind the anchor at ~1.2 m/s
            y_cross = -5.0 + 1.2 * t_hit - 0.45 + rng.uniform(-0.35, 0.35)
            x_start = side * (speed * (t_anchor + t_hit))
            starts.append(np.array([ego_x + x_start, y_cross]))
            heads.append(math.pi if side > 0 else 0.0)
            speeds.append(speed)

        world = WorldConfig(
            n_agents=(1, 1 + n_cross),
            speed=(min(speeds), max(speeds)),
            turn_prob=0.0,
            bounds=(-60.0, -60.0, 60.0, 60.0),
            frame_rate=frame_rate,
            seed=seed,
        )
        positions, headings, spd = simulate_paths(
            rng, world, 1 + n_cross, total,
            scripted_turns={a: [] for a in range(1 + n_cross)},
            starts=starts, headings=heads, speeds=speeds,
        )
        agents = []
        for a in range(1 + n_cross):
            lead = _lead_headings(headings[a], frame_rate, gait.lead_time)
            phase = rng.uniform(0.0, 2 * math.pi)
            joints = synthesize_pose_track(
                positions[a], headings[a], lead, spd[a], gait, frame_rate,
                phase=phase, rng=rng,
            )
            poses = [PoseFrame(joints[t], np.ones(len(JOINT_NAMES), dtype=bool))
                     for t in range(window)]
            agents.append(AgentTrack(
                agent_id=f"a{a}", positions=positions[a, :window],
                poses=poses, frame_rate=frame_rate,
            ))
        scene = Scene(primary_index=0, agents=agents, t_obs=t_obs, t_pred=t_pred,
                      category=SceneCategory.OTHER)
        scene.category = categorize(scene)
        scenes.append(scene)
    return scenes


# ---------------------------------------------------------------------------
# camera projection


@dataclass
class CameraConfig:
    """Pinhole camera producing normalized image coordinates."""

    position: tuple[float, float, float] = (0.0, -20.0, 16.0)
    look_at: tuple[float, float, float] = (0.0, 0.0, 1.0)
    focal: float = 1.0
    pelvis_height: float = PELVIS_HEIGHT

    def basis(self):
        position = np.asarray(self.position, dtype=float)
        forward = np.asarray(self.look_at, dtype=float) - position
        forward = forward / np.linalg.norm(forward)
        world_up = np.array([0.0, 0.0, 1.0])
        right = np.cross(forward, world_up)
        if np.linalg.norm(right) < 1e-9:
            right = np.array([1.0, 0.0, 0.0])
        right = right / np.linalg.norm(right)
        up = np.cross(right, forward)
        return position, forward, right, up

    def to_dict(self) -> dict:
        return {
            "position": list(self.position),
            "look_at": list(self.look_at),
            "focal": self.focal,
            "pelvis_height": self.pelvis_height,
        }


def project_to_2d(scene: Scene, cam: CameraConfig) -> Scene:
    """Project a 3D-pose scene to 2D image-space poses; trajectories unchanged.

    World joints are reconstructed from the trajectory point plus the
    pelvis-relative offsets, projected through the pinhole, then made
    pelvis-relative again in image coordinates.  Joints behind the camera
    are masked; a frame whose pelvis falls behind the camera is fully
    masked.
    """
    if scene.pose_dims != 3:
        raise ValueError("project_to_2d needs 3D poses")
    position, forward, right, up = cam.basis()

    agents = []
    for track in scene.agents:
        poses_2d = []
        for t, frame in enumerate(track.poses):
            pelvis_world = np.array([
                track.positions[t, 0], track.positions[t, 1], cam.pelvis_height,
            ])
            world = pelvis_world[None, :] + frame.joints
            offset = world - position[None, :]
            depth = offset @ forward
            visible = frame.mask & (depth > 1e-6)
            safe_depth = np.where(depth > 1e-6, depth, 1.0)
            u = cam.focal * (offset @ right) / safe_depth
            v = cam.focal * (offset @ up) / safe_depth
            if not visible[0]:
                poses_2d.append(PoseFrame(
                    np.zeros((frame.n_joints, 2)),
                    np.zeros(frame.n_joints, dtype=bool),
                ))
                continue
            image = np.stack([u - u[0], v - v[0]], axis=1)
            poses_2d.append(PoseFrame(image, visible))
        agents.append(AgentTrack(
            agent_id=track.agent_id,
            positions=track.positions.copy(),
            poses=poses_2d,
            frame_rate=track.frame_rate,
        ))
    return Scene(
        primary_index=scene.primary_index,
        agents=agents,
        t_obs=scene.t_obs,
        t_pred=scene.t_pred,
        category=scene.category,
    )
