"""Figure rendering for corpora, evaluations, attention and navigation.

Color convention for trajectory comparisons: ground truth green, the
no-pose baseline red, the pose-augmented model blue, any further models
gray.  Rendering is deterministic for fixed inputs and style.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .scenes import JOINT_INDEX, JOINT_NAMES

GT_COLOR = "tab:green"
BASELINE_COLOR = "tab:red"
POSE_COLOR = "tab:blue"
EXTRA_COLOR = "0.55"

# Bone list for skeleton sketches.
SKELETON_EDGES = (
    ("pelvis", "left_hip"), ("left_hip", "left_knee"), ("left_knee", "left_ankle"),
    ("pelvis", "right_hip"), ("right_hip", "right_knee"), ("right_knee", "right_ankle"),
    ("pelvis", "spine"), ("spine", "thorax"), ("thorax", "neck"), ("neck", "head"),
    ("thorax", "left_shoulder"), ("left_shoulder", "left_elbow"), ("left_elbow", "left_wrist"),
    ("thorax", "right_shoulder"), ("right_shoulder", "right_elbow"), ("right_elbow", "right_wrist"),
)

# Frontal (lateral, height) layout of a standing figure, for heatmaps.
_LAYOUT = {
    "pelvis": (0.0, 0.0),
    "left_hip": (0.11, -0.03), "left_knee": (0.12, -0.45), "left_ankle": (0.13, -0.88),
    "right_hip": (-0.11, -0.03), "right_knee": (-0.12, -0.45), "right_ankle": (-0.13, -0.88),
    "spine": (0.0, 0.22), "thorax": (0.0, 0.44), "neck": (0.0, 0.57), "head": (0.0, 0.72),
    "left_shoulder": (0.21, 0.50), "left_elbow": (0.26, 0.22), "left_wrist": (0.28, -0.05),
    "right_shoulder": (-0.21, 0.50), "right_elbow": (-0.26, 0.22), "right_wrist": (-0.28, -0.05),
}


def model_color(index: int, is_pose: bool) -> str:
    if index == 0 and not is_pose:
        return BASELINE_COLOR
    if is_pose and index <= 1:
        return POSE_COLOR
    return EXTRA_COLOR


def plot_trajectories(observed, future, predictions, path, title=None):
    """One scene: observed track, ground truth and model rollouts.

    predictions is a list of (label, color, (T, 2) or (k, T, 2)) entries;
    multi-sample entries draw every sample with the first emphasized.
    """
    observed = np.asarray(observed)
    future = np.asarray(future)
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    ax.plot(observed[:, 0], observed[:, 1], color="k", lw=1.2, ls=":", label="observed")
    gt = np.concatenate([observed[-1:], future])
    ax.plot(gt[:, 0], gt[:, 1], color=GT_COLOR, lw=2.0, label="ground truth")
    for label, color, track in predictions:
        samples = np.asarray(track)
        if samples.ndim == 2:
            samples = samples[None]
        for j, sample in enumerate(samples):
            line = np.concatenate([observed[-1:], sample])
            ax.plot(line[:, 0], line[:, 1], color=color, lw=1.6 if j == 0 else 0.7,
                    alpha=1.0 if j == 0 else 0.45, label=label if j == 0 else None)
    ax.scatter(*observed[-1], color="k", s=18, zorder=5)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_attention(scores, path, title=None, highlight=()):
    """Skeleton with one marker per joint, sized and colored by its score."""
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (len(JOINT_NAMES),):
        raise ValueError(f"expected {len(JOINT_NAMES)} joint scores, got {scores.shape}")
    fig, ax = plt.subplots(figsize=(3.6, 5.2))
    for a, b in SKELETON_EDGES:
        xa, ya = _LAYOUT[a]
        xb, yb = _LAYOUT[b]
        ax.plot([xa, xb], [ya, yb], color="0.8", lw=1.5, zorder=1)
    xs = [_LAYOUT[name][0] for name in JOINT_NAMES]
    ys = [_LAYOUT[name][1] for name in JOINT_NAMES]
    sizes = 60 + 900 * scores / max(scores.max(), 1e-12)
    sc = ax.scatter(xs, ys, s=sizes, c=scores, cmap="viridis", zorder=2,
                    edgecolors="k", linewidths=0.5)
    for name in highlight:
        x, y = _LAYOUT[name]
        ax.scatter([x], [y], s=60 + 900 * scores[JOINT_INDEX[name]] / max(scores.max(), 1e-12),
                   facecolors="none", edgecolors="crimson", linewidths=1.6, zorder=3)
    fig.colorbar(sc, ax=ax, shrink=0.7, label="attention share")
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_navigation(robot_paths, goal, neighbor_tracks, path, title=None):
    """Robot runs over the replayed pedestrians.

    robot_paths is a list of (label, color, (T, 2)) traces; neighbor
    tracks draw in gray with their start marked.
    """
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    for track in neighbor_tracks:
        track = np.asarray(track)
        ax.plot(track[:, 0], track[:, 1], color="0.7", lw=1.0)
        ax.scatter(*track[0], color="0.7", s=12)
    seen = set()
    for label, color, trace in robot_paths:
        trace = np.asarray(trace)
        show = label not in seen
        seen.add(label)
        ax.plot(trace[:, 0], trace[:, 1], color=color, lw=1.8,
                label=label if show else None)
        ax.scatter(*trace[0], color=color, s=20, marker="o", zorder=5)
    goal = np.asarray(goal)
    ax.scatter(*goal, color="k", marker="*", s=140, zorder=6, label="goal")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
