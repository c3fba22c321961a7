"""Social-force robot navigation through replayed pedestrian scenes.

A point robot crosses a recorded scene from 5 m behind the primary
pedestrian's last observed position to 5 m ahead of it.  Pedestrians replay
their recorded tracks (they do not react).  The robot feels a goal
attraction force and exponential repulsion from each pedestrian's current
position; optionally it also feels discounted repulsion from *predicted*
future positions, supplied either by a trained model or by the ground-truth
replay (oracle).  Metrics are completion time and collision rate.

Integration is semi-implicit Euler: acceleration updates velocity first
(clipped to 1.3 v0), then the new velocity moves the robot.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .backbones import collate
from .errors import ConfigError
from .scenes import PoseFrame, Scene

log = logging.getLogger(__name__)

PREDICTORS = ("none", "model", "oracle")
COMPLETION_RADIUS = 0.5  # m
TIMEOUT_S = 30.0
SPEED_CAP_FACTOR = 1.3
PREDICTION_DISCOUNT = 0.85


@dataclass
class SFMParams:
    """Force-model constants; repulsion is A * exp((2r - d) / B)."""

    relaxation_time: float = 0.5  # s
    repulsion_strength: float = 2.0  # m/s^2
    repulsion_range: float = 0.8  # m
    agent_radius: float = 0.3  # m
    desired_speed: float = 1.2  # m/s
    dt: float = 0.1  # s
    prediction_force_scale: float = 0.6
    prediction_horizon_used: int = 12  # frames

    def __post_init__(self):
        values = (self.relaxation_time, self.repulsion_strength,
                  self.repulsion_range, self.agent_radius,
                  self.desired_speed, self.dt)
        if any(v <= 0 for v in values) or self.prediction_horizon_used < 1:
            raise ValueError("all force parameters must be positive")
        if self.prediction_force_scale < 0:
            raise ValueError("prediction_force_scale must be >= 0")
        if self.dt > 0.4:
            raise ValueError("dt above 0.4 s is unstable")

    def to_dict(self) -> dict:
        return {
            "relaxation_time": self.relaxation_time,
            "repulsion_strength": self.repulsion_strength,
            "repulsion_range": self.repulsion_range,
            "agent_radius": self.agent_radius,
            "desired_speed": self.desired_speed,
            "dt": self.dt,
            "prediction_force_scale": self.prediction_force_scale,
            "prediction_horizon_used": self.prediction_horizon_used,
        }


def _unit_from(offset: np.ndarray, j: int) -> np.ndarray:
    """Unit vector along offset; coincident points get a fixed fallback."""
    norm = np.linalg.norm(offset)
    if norm < 1e-12:
        angle = 1e-3 * (j + 1)  # deterministic tiny spread per neighbour
        log.warning("coincident robot/neighbour %d: using fallback direction", j)
        return np.array([math.cos(angle), math.sin(angle)])
    return offset / norm


def social_force_step(
    position: np.ndarray,
    velocity: np.ndarray,
    neighbors_now: np.ndarray,
    goal: np.ndarray,
    params: SFMParams,
) -> np.ndarray:
    """Instantaneous acceleration: goal attraction plus neighbour repulsion."""
    to_goal = _unit_from(goal - position, -1)
    accel = (params.desired_speed * to_goal - velocity) / params.relaxation_time
    for j, neighbor in enumerate(np.atleast_2d(neighbors_now) if len(neighbors_now) else []):
        offset = position - neighbor
        d = np.linalg.norm(offset)
        magnitude = params.repulsion_strength * math.exp(
            (2 * params.agent_radius - d) / params.repulsion_range
        )
        accel = accel + magnitude * _unit_from(offset, j)
    return accel


def augment_with_predictions(
    accel: np.ndarray,
    position: np.ndarray,
    predicted_tracks: np.ndarray | None,
    params: SFMParams,
) -> np.ndarray:
    """Add discounted repulsion from predicted future neighbour positions.

    predicted_tracks is (n_agents, n_frames, 2); future frame t (1-based)
    is weighted by 0.85^t.  None or empty predictions leave the forces
    unchanged.
    """
    if predicted_tracks is None or len(predicted_tracks) == 0:
        return accel
    horizon = min(params.prediction_horizon_used, predicted_tracks.shape[1])
    out = accel
    for j, track in enumerate(predicted_tracks):
        for t in range(1, horizon + 1):
            offset = position - track[t - 1]
            d = np.linalg.norm(offset)
            magnitude = params.repulsion_strength * math.exp(
                (2 * params.agent_radius - d) / params.repulsion_range
            )
            weight = params.prediction_force_scale * PREDICTION_DISCOUNT ** t
            out = out + weight * magnitude * _unit_from(offset, j)
    return out


# ---------------------------------------------------------------------------
# scene replay


class _Replay:
    """Continuous-time view of a scene: linear interpolation between frames,
    holding the last frame forever after the recording ends."""

    def __init__(self, scene: Scene):
        self.scene = scene
        self.fps = scene.frame_rate
        self.tracks = np.stack([a.positions for a in scene.agents])  # (A, T, 2)
        self.n_frames = self.tracks.shape[1]
        self.neighbor_idx = [i for i in range(len(scene.agents))
                             if i != scene.primary_index]

    def positions_at(self, time_s: float) -> np.ndarray:
        frame = time_s * self.fps
        lo = int(math.floor(frame))
        if lo >= self.n_frames - 1:
            return self.tracks[:, -1]
        if lo < 0:
            return self.tracks[:, 0]
        frac = frame - lo
        return (1 - frac) * self.tracks[:, lo] + frac * self.tracks[:, lo + 1]

    def frame_index_at(self, time_s: float) -> int:
        return min(int(math.floor(time_s * self.fps)), self.n_frames - 1)

    def held_frame(self, index: int) -> int:
        return min(index, self.n_frames - 1)


def _window_scenes(replay: _Replay, end_frame: int) -> list[Scene]:
    """One scene per pedestrian (as primary) from the latest t_obs frames.

    The replaced ego is left out entirely — after the episode starts its
    recorded track is counterfactual.  Future frames are placeholders (the
    predictor only reads observations).
    """
    scene = replay.scene
    t_obs, t_pred = scene.t_obs, scene.t_pred
    frames = [replay.held_frame(end_frame - t_obs + 1 + i) for i in range(t_obs)]
    agents = []
    for track in scene.neighbours():
        positions = np.concatenate([
            track.positions[frames],
            np.tile(track.positions[frames[-1]], (t_pred, 1)),
        ])
        poses = [PoseFrame(track.poses[f].joints.copy(), track.poses[f].mask.copy())
                 for f in frames]
        poses += [
            PoseFrame(np.zeros_like(track.poses[0].joints),
                      np.zeros_like(track.poses[0].mask))
            for _ in range(t_pred)
        ]
        agents.append(type(track)(track.agent_id, positions, poses, track.frame_rate))
    windows = []
    for primary in range(len(agents)):
        windows.append(Scene(
            primary_index=primary,
            agents=[type(a)(a.agent_id, a.positions.copy(),
                            [PoseFrame(p.joints.copy(), p.mask.copy()) for p in a.poses],
                            a.frame_rate) for a in agents],
            t_obs=t_obs, t_pred=t_pred, category=scene.category,
        ))
    return windows


def _query_model(model, replay: _Replay, end_frame: int) -> np.ndarray | None:
    scene = replay.scene
    if model.cfg.t_obs != scene.t_obs:
        raise ConfigError(
            f"predictor expects {model.cfg.t_obs} observed frames, scene has {scene.t_obs}"
        )
    if model.cfg.use_pose and model.cfg.pose_dims != scene.pose_dims:
        raise ConfigError(
            f"predictor expects {model.cfg.pose_dims}D poses, scene has {scene.pose_dims}D"
        )
    windows = _window_scenes(replay, end_frame)
    if not windows:
        return None
    batch = collate(windows, use_pose=model.cfg.use_pose)
    model.eval()
    with torch.no_grad():
        pred = model.predict(batch).cpu().numpy()
    return pred  # (neighbours, t_pred, 2)


def _query_oracle(replay: _Replay, end_frame: int) -> np.ndarray | None:
    t_pred = replay.scene.t_pred
    idx = replay.neighbor_idx
    if not idx:
        return None
    frames = [replay.held_frame(end_frame + 1 + t) for t in range(t_pred)]
    return replay.tracks[np.ix_(idx, frames)]


@dataclass
class NavEpisode:
    """One robot run: trace, outcome flags and the force log."""

    predictor: str
    goal: np.ndarray
    positions: np.ndarray  # (ticks + 1, 2)
    velocities: np.ndarray
    completion_time: float | None
    collision: bool
    min_distance: float
    ticks: list[dict] = field(default_factory=list, repr=False)

    @property
    def timed_out(self) -> bool:
        return self.completion_time is None


def run_episode(
    scene: Scene,
    predictor: str = "none",
    params: SFMParams | None = None,
    model=None,
    seed: int = 0,
    start: np.ndarray | None = None,
    goal: np.ndarray | None = None,
) -> NavEpisode:
    """Drive the robot through one replayed scene.

    The robot takes over the primary pedestrian's journey: by default it
    starts 5 m behind the primary's last observed position and aims 5 m
    past it, and only the *neighbours* are replayed as obstacles.  The
    episode clock starts at that last observed frame, and the predictor is
    re-queried every frame interval with the latest observation window.
    """
    if predictor not in PREDICTORS:
        raise ConfigError(f"unknown predictor {predictor!r}, pick from {PREDICTORS}")
    if predictor == "model" and model is None:
        raise ConfigError("model predictor needs a model")
    params = params or SFMParams()

    replay = _Replay(scene)
    anchor = scene.primary.positions[scene.t_obs - 1]
    if start is None:
        start = anchor + np.array([0.0, -5.0])
    if goal is None:
        goal = anchor + np.array([0.0, 5.0])
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    t_offset = (scene.t_obs - 1) / scene.frame_rate
    refresh_every = 1.0 / scene.frame_rate

    position = start.astype(float).copy()
    velocity = np.zeros(2)
    positions = [position.copy()]
    velocities = [velocity.copy()]
    ticks: list[dict] = []
    predictions = None
    next_refresh = 0.0
    completion_time = None
    collision = False
    min_distance = math.inf

    n_ticks = int(round(TIMEOUT_S / params.dt))
    for tick in range(n_ticks):
        t_ep = tick * params.dt
        replay_time = t_offset + t_ep

        if predictor != "none" and t_ep >= next_refresh - 1e-9:
            end_frame = replay.frame_index_at(replay_time)
            if predictor == "oracle":
                predictions = _query_oracle(replay, end_frame)
            else:
                predictions = _query_model(model, replay, end_frame)
            next_refresh += refresh_every

        neighbors_now = replay.positions_at(replay_time)[replay.neighbor_idx]
        accel = social_force_step(position, velocity, neighbors_now, goal, params)
        plain = accel.copy()
        accel = augment_with_predictions(accel, position, predictions, params)

        velocity = velocity + accel * params.dt
        speed = np.linalg.norm(velocity)
        cap = SPEED_CAP_FACTOR * params.desired_speed
        if speed > cap:
            velocity = velocity * (cap / speed)
        position = position + velocity * params.dt

        if len(neighbors_now):
            d = float(np.linalg.norm(neighbors_now - position, axis=1).min())
            min_distance = min(min_distance, d)
            if d < 2 * params.agent_radius:
                collision = True
        else:
            d = math.inf

        positions.append(position.copy())
        velocities.append(velocity.copy())
        ticks.append({
            "tick": tick,
            "t": round(t_ep + params.dt, 10),
            "position": [float(position[0]), float(position[1])],
            "velocity": [float(velocity[0]), float(velocity[1])],
            "accel_social": [float(plain[0]), float(plain[1])],
            "accel_total": [float(accel[0]), float(accel[1])],
            "min_distance": d if math.isfinite(d) else None,
        })

        if np.linalg.norm(goal - position) < COMPLETION_RADIUS:
            completion_time = (tick + 1) * params.dt
            break

    return NavEpisode(
        predictor=predictor,
        goal=goal,
        positions=np.array(positions),
        velocities=np.array(velocities),
        completion_time=completion_time,
        collision=collision,
        min_distance=min_distance,
        ticks=ticks,
    )


def run_suite(
    scenes: list[Scene],
    predictor: str = "none",
    params: SFMParams | None = None,
    model=None,
    seed: int = 0,
) -> list[NavEpisode]:
    return [run_episode(s, predictor=predictor, params=params, model=model, seed=seed)
            for s in scenes]


def evaluate_navigation(episodes: list[NavEpisode],
                        exclude_timeouts: bool = False) -> dict:
    """Mean completion time (timeouts count as the 30 s cap) and collision rate.

    With exclude_timeouts, timed-out episodes leave the collision-rate
    denominator; they always count toward completion time.
    """
    if not episodes:
        raise ValueError("need at least one episode")
    times = [e.completion_time if e.completion_time is not None else TIMEOUT_S
             for e in episodes]
    pool = [e for e in episodes if not (exclude_timeouts and e.timed_out)]
    rate = sum(e.collision for e in pool) / len(pool) if pool else 0.0
    return {
        "completion_time_mean": float(np.mean(times)),
        "collision_rate": float(rate),
        "n_episodes": len(episodes),
        "n_timeouts": sum(e.timed_out for e in episodes),
    }


def write_episode_log(episode: NavEpisode, path) -> None:
    """Tick-by-tick JSONL: position, velocity and active forces."""
    path = Path(path)
    header = {
        "predictor": episode.predictor,
        "goal": [float(episode.goal[0]), float(episode.goal[1])],
        "completion_time": episode.completion_time,
        "collision": episode.collision,
        "min_distance": episode.min_distance if math.isfinite(episode.min_distance) else None,
    }
    with path.open("w", encoding="utf-8") as handle:
        handle.write(json.dumps(header))
        handle.write("\n")
        for row in episode.ticks:
            handle.write(json.dumps(row))
            handle.write("\n")
