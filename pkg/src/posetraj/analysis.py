"""Robustness perturbations and joint-attribution analysis.

Perturbations rewrite the *observed* part of a scene — detector noise,
structured occlusions, or stripping the pose channel entirely — and leave
trajectories and future frames untouched, so the same ground truth serves
before and after.  All operations return new scenes.

Occluded joints are masked and therefore zeroed; models see zeros, not a
mask token, matching how the encoders embed missing joints.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import torch

from .scenes import LIMBS, Scene, limb_joint_indices

OCCLUSION_SCHEMES = ("random_limb_50", "structured_right_leg", "complete_frame_50")


def _observed_frames(scene: Scene) -> range:
    return range(scene.t_obs)


def apply_noise(scene: Scene, std: float, rng: np.random.Generator) -> Scene:
    """Add i.i.d. Gaussian noise to every unmasked joint coordinate of every
    observed frame, for all agents.  Trajectories are untouched."""
    if std < 0:
        raise ValueError("std must be >= 0")
    out = copy.deepcopy(scene)
    for track in out.agents:
        for t in _observed_frames(out):
            frame = track.poses[t]
            noise = rng.normal(0.0, std, frame.joints.shape)
            frame.joints = np.where(frame.mask[:, None],
                                    frame.joints + noise, frame.joints)
    return out


def occlude(scene: Scene, scheme: str, rng: np.random.Generator) -> Scene:
    """Apply a structured occlusion scheme to the observed pose window.

    random_limb_50
        with probability 0.5 per scene, pick one of the four limbs uniformly
        and mask its three joints in every observed frame of every agent.
    structured_right_leg
        always mask right hip, knee and ankle in every observed frame.
    complete_frame_50
        mask every joint of an observed frame with probability 0.5 per
        frame; the dropped frames are shared by all agents.
    """
    if scheme not in OCCLUSION_SCHEMES:
        raise ValueError(f"unknown occlusion scheme {scheme!r}")
    out = copy.deepcopy(scene)

    if scheme == "random_limb_50":
        if rng.random() >= 0.5:
            return out
        limb = sorted(LIMBS)[int(rng.integers(len(LIMBS)))]
        joints = limb_joint_indices(limb)
        for track in out.agents:
            for t in _observed_frames(out):
                _mask_joints(track.poses[t], joints)
        return out

    if scheme == "structured_right_leg":
        joints = limb_joint_indices("right_leg")
        for track in out.agents:
            for t in _observed_frames(out):
                _mask_joints(track.poses[t], joints)
        return out

    dropped = [t for t in _observed_frames(out) if rng.random() < 0.5]
    for track in out.agents:
        for t in dropped:
            frame = track.poses[t]
            frame.mask = np.zeros_like(frame.mask)
            frame.joints = np.zeros_like(frame.joints)
    return out


def _mask_joints(frame, joints):
    frame.mask = frame.mask.copy()
    frame.mask[joints] = False
    frame.joints = np.where(frame.mask[:, None], frame.joints, 0.0)


def strip_pose(scene: Scene) -> Scene:
    """Mask every joint of every observed frame: the pose channel goes dark."""
    out = copy.deepcopy(scene)
    for track in out.agents:
        for t in _observed_frames(out):
            frame = track.poses[t]
            frame.mask = np.zeros_like(frame.mask)
            frame.joints = np.zeros_like(frame.joints)
    return out


def restrict_joints(scene: Scene, keep: list[int]) -> Scene:
    """Mask all joints outside ``keep`` in the observed window."""
    keep = sorted(set(keep))
    n = scene.n_joints
    if any(j < 0 or j >= n for j in keep):
        raise ValueError("joint index out of range")
    drop = [j for j in range(n) if j not in keep]
    out = copy.deepcopy(scene)
    for track in out.agents:
        for t in _observed_frames(out):
            _mask_joints(track.poses[t], drop)
    return out


@dataclass
class Perturbation:
    """Declarative, seedable corpus perturbation.

    kind: 'noise', 'occlusion' or 'strip'.  Scene i of a corpus uses the
    rng stream (seed, i), so results are reproducible and independent of
    corpus length.
    """

    kind: str
    std: float = 0.2
    scheme: str = "random_limb_50"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("noise", "occlusion", "strip"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "occlusion" and self.scheme not in OCCLUSION_SCHEMES:
            raise ValueError(f"unknown occlusion scheme {self.scheme!r}")

    def apply(self, scenes: list[Scene]) -> list[Scene]:
        out = []
        for i, scene in enumerate(scenes):
            rng = np.random.default_rng([self.seed, i])
            if self.kind == "noise":
                out.append(apply_noise(scene, self.std, rng))
            elif self.kind == "occlusion":
                out.append(occlude(scene, self.scheme, rng))
            else:
                out.append(strip_pose(scene))
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "std": self.std,
                "scheme": self.scheme, "seed": self.seed}


# ---------------------------------------------------------------------------
# joint attribution from encoder attention


def joint_attention(model, scenes: list[Scene], batch_size: int = 64) -> np.ndarray:
    """Average attention received by each joint's tokens, normalized to sum 1.

    For every scene, layer, head and query token, take the attention paid to
    each key token; average everything, fold tokens back to (frame, joint)
    and average over frames.  Requires the per-frame-joint tokenization of
    the primary agent's pose encoder.
    """
    from .backbones import collate  # local import to avoid a cycle

    cfg = model.cfg
    if not cfg.use_pose or cfg.pose_tokenization != "per-frame-joint":
        raise ValueError("joint attribution needs a per-frame-joint pose encoder")
    totals = np.zeros(cfg.n_joints)
    count = 0
    model.eval()
    with torch.no_grad():
        for lo in range(0, len(scenes), batch_size):
            batch = collate(scenes[lo : lo + batch_size])
            for layer_weights in model.attention_maps(batch):
                # (B, H, L, L): average over heads and queries -> received share
                received = layer_weights.mean(dim=(1, 2)).cpu().numpy()  # (B, L)
                received = received.reshape(-1, cfg.t_obs, cfg.n_joints)
                totals += received.mean(axis=1).sum(axis=0)
                count += received.shape[0]
    if count == 0:
        raise ValueError("no scenes given")
    scores = totals / count
    return scores / scores.sum()


def select_top_joints(scores: np.ndarray, k: int) -> list[int]:
    """Indices of the k highest-scoring joints; ties resolve to the lower index."""
    scores = np.asarray(scores)
    if not 1 <= k <= len(scores):
        raise ValueError(f"k must be in 1..{len(scores)}")
    order = np.argsort(-scores, kind="stable")
    return [int(i) for i in order[:k]]
