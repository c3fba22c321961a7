"""Trajectory prediction models.

A model is assembled from four parts:

* a trajectory encoder over observed displacement sequences — one of three
  families: ``recurrent`` (GRU), ``attention`` (self-attention with the
  sinusoidal position code) or ``mlp`` (flattened window through a
  three-layer feed-forward stack);
* an optional pose encoder (see :mod:`posetraj.encoder`) whose output is
  fused with the trajectory feature, for every agent;
* an interaction encoder pooling neighbour features into a context vector
  — ``distance-pool`` (exponential distance weighting), ``spatial-attention``
  (the primary queries all agents) or ``none``;
* an autoregressive displacement decoder shared by all families, teacher
  forced during training and fed back its own outputs at test time.

Inputs are displacements, so predictions are invariant to translating a
whole scene.  With ``noise_dim`` > 0 the decoder accepts a noise vector
per sample, giving best-of-k evaluation; the default 0 is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .encoder import (
    CrossAttentionFusion,
    PoseSequenceEncoder,
    TransformerBlock,
    fuse,
    positional_encoding,
    seeded_init_,
)
from .errors import ConfigError
from .scenes import Scene

FAMILIES = ("recurrent", "attention", "mlp")
INTERACTIONS = ("distance-pool", "spatial-attention", "none")
FUSIONS = ("concat", "cross-attention")

DISTANCE_POOL_SIGMA = 2.0  # m, decay scale of neighbour influence


@dataclass
class ModelConfig:
    """Everything needed to rebuild a model from scratch."""

    family: str = "recurrent"
    embed_dim: int = 64
    hidden_dim: int = 128
    interaction: str = "distance-pool"
    interaction_dim: int | None = None  # None: twice the per-agent feature width
    use_pose: bool = True
    pose_dim: int = 128
    pose_layers: int = 2
    pose_heads: int = 16
    pose_tokenization: str = "per-frame-joint"
    pose_pooling: str = "mean"
    fusion: str = "concat"
    noise_dim: int = 0
    t_obs: int = 9
    t_pred: int = 12
    n_joints: int = 17
    pose_dims: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}, pick from {FAMILIES}")
        if self.interaction not in INTERACTIONS:
            raise ConfigError(
                f"unknown interaction {self.interaction!r}, pick from {INTERACTIONS}"
            )
        if self.fusion not in FUSIONS:
            raise ConfigError(f"unknown fusion {self.fusion!r}, pick from {FUSIONS}")
        if self.t_obs < 2:
            raise ConfigError("t_obs must be >= 2")
        if self.noise_dim < 0:
            raise ConfigError("noise_dim must be >= 0")

    @property
    def feature_dim(self) -> int:
        """Per-agent feature width after (optional) pose fusion."""
        return self.hidden_dim + (self.pose_dim if self.use_pose else 0)

    @property
    def context_dim(self) -> int:
        if self.interaction == "none":
            return 0
        if self.interaction_dim is not None:
            return self.interaction_dim
        return 2 * self.feature_dim

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "interaction": self.interaction,
            "interaction_dim": self.interaction_dim,
            "use_pose": self.use_pose,
            "pose_dim": self.pose_dim,
            "pose_layers": self.pose_layers,
            "pose_heads": self.pose_heads,
            "pose_tokenization": self.pose_tokenization,
            "pose_pooling": self.pose_pooling,
            "fusion": self.fusion,
            "noise_dim": self.noise_dim,
            "t_obs": self.t_obs,
            "t_pred": self.t_pred,
            "n_joints": self.n_joints,
            "pose_dims": self.pose_dims,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


def default_learning_rate(family: str) -> float:
    """The attention family trains with a slightly lower step size."""
    return 7.5e-4 if family == "attention" else 1e-3


# ---------------------------------------------------------------------------
# trajectory encoders


class RecurrentTrajEncoder(nn.Module):
    def __init__(self, embed_dim: int, hidden_dim: int):
        super().__init__()
        self.embed = nn.Sequential(nn.Linear(2, embed_dim), nn.ReLU())
        self.gru = nn.GRU(embed_dim, hidden_dim, batch_first=True)

    def forward(self, disp: torch.Tensor) -> torch.Tensor:
        _, state = self.gru(self.embed(disp))
        return state[0]


class AttentionTrajEncoder(nn.Module):
    def __init__(self, embed_dim: int, hidden_dim: int, n_layers: int = 2,
                 n_heads: int = 4):
        super().__init__()
        self.embed = nn.Linear(2, hidden_dim)
        self.blocks = nn.ModuleList(
            TransformerBlock(hidden_dim, n_heads) for _ in range(n_layers)
        )

    def forward(self, disp: torch.Tensor) -> torch.Tensor:
        x = self.embed(disp)
        x = x + positional_encoding(x.shape[1], x.shape[2], dtype=x.dtype).to(x.device)
        for block in self.blocks:
            x, _ = block(x)
        return x.mean(dim=1)


class MlpTrajEncoder(nn.Module):
    def __init__(self, embed_dim: int, hidden_dim: int, n_steps: int):
        super().__init__()
        self.n_steps = n_steps
        self.net = nn.Sequential(
            nn.Linear(2 * n_steps, hidden_dim), nn.ReLU(),
            nn.Linear(hidden_dim, hidden_dim), nn.ReLU(),
            nn.Linear(hidden_dim, hidden_dim),
        )

    def forward(self, disp: torch.Tensor) -> torch.Tensor:
        return self.net(disp.reshape(disp.shape[0], 2 * self.n_steps))


def _make_traj_encoder(cfg: ModelConfig) -> nn.Module:
    if cfg.family == "recurrent":
        return RecurrentTrajEncoder(cfg.embed_dim, cfg.hidden_dim)
    if cfg.family == "attention":
        return AttentionTrajEncoder(cfg.embed_dim, cfg.hidden_dim)
    return MlpTrajEncoder(cfg.embed_dim, cfg.hidden_dim, cfg.t_obs - 1)


# ---------------------------------------------------------------------------
# interaction encoders


class DistancePoolInteraction(nn.Module):
    """Sum of projected neighbour features weighted by exp(-d / sigma).

    The projection carries no bias, so a scene without neighbours pools to
    an exactly zero context vector.
    """

    def __init__(self, feature_dim: int, context_dim: int,
                 sigma: float = DISTANCE_POOL_SIGMA):
        super().__init__()
        self.proj = nn.Linear(feature_dim, context_dim, bias=False)
        self.sigma = sigma

    def forward(self, features, last_pos, agent_mask):
        # features (B, A, F); last_pos (B, A, 2); agent_mask (B, A) bool
        rel = last_pos - last_pos[:, :1]
        dist = rel.norm(dim=-1)  # (B, A)
        weights = torch.exp(-dist / self.sigma) * agent_mask.to(features.dtype)
        weights[:, 0] = 0.0  # the primary is not its own neighbour
        return (weights[:, :, None] * self.proj(features)).sum(dim=1)


class SpatialAttentionInteraction(nn.Module):
    """The primary agent attends over every agent (itself included)."""

    def __init__(self, feature_dim: int, context_dim: int, n_heads: int = 4):
        super().__init__()
        self.pos_embed = nn.Linear(2, feature_dim)
        self.attn = nn.MultiheadAttention(feature_dim, n_heads, batch_first=True)
        self.out = nn.Linear(feature_dim, context_dim)

    def forward(self, features, last_pos, agent_mask):
        rel = last_pos - last_pos[:, :1]
        keys = features + self.pos_embed(rel)
        query = keys[:, :1]
        attended, _ = self.attn(
            query, keys, keys,
            key_padding_mask=~agent_mask,
            need_weights=False,
        )
        return self.out(attended[:, 0])


# ---------------------------------------------------------------------------
# decoder


class DisplacementDecoder(nn.Module):
    """Autoregressive GRU cell emitting one displacement per future step."""

    def __init__(self, embed_dim: int, hidden_dim: int, state_dim: int,
                 noise_dim: int = 0):
        super().__init__()
        self.noise_dim = noise_dim
        self.embed = nn.Sequential(nn.Linear(2 + noise_dim, embed_dim), nn.ReLU())
        self.cell = nn.GRUCell(embed_dim, hidden_dim)
        self.init_state = nn.Linear(state_dim, hidden_dim)
        self.head = nn.Linear(hidden_dim, 2)

    def _step(self, disp, state, z):
        inp = disp if z is None else torch.cat([disp, z], dim=-1)
        state = self.cell(self.embed(inp), state)
        return self.head(state), state

    def roll(self, context, first_disp, n_steps, teacher=None, z=None):
        """Run the decoder for n_steps.

        teacher, when given, is the (B, n_steps, 2) ground-truth displacement
        sequence used as input after the first step; otherwise the decoder
        feeds back its own output.
        """
        if self.noise_dim and z is None:
            z = torch.zeros(context.shape[0], self.noise_dim, dtype=context.dtype,
                            device=context.device)
        if not self.noise_dim:
            z = None
        state = torch.tanh(self.init_state(context))
        disp, outputs = first_disp, []
        for t in range(n_steps):
            out, state = self._step(disp, state, z)
            outputs.append(out)
            disp = teacher[:, t] if teacher is not None else out
        return torch.stack(outputs, dim=1)


# ---------------------------------------------------------------------------
# full model


class Model(nn.Module):
    """Backbone + optional pose pathway + interaction + decoder."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.traj_encoder = _make_traj_encoder(cfg)
        if cfg.use_pose:
            self.pose_encoder = PoseSequenceEncoder(
                n_joints=cfg.n_joints,
                in_dims=cfg.pose_dims,
                dim=cfg.pose_dim,
                n_layers=cfg.pose_layers,
                n_heads=cfg.pose_heads,
                tokenization=cfg.pose_tokenization,
                pooling=cfg.pose_pooling,
            )
            if cfg.fusion == "cross-attention":
                self.fusion = CrossAttentionFusion(cfg.hidden_dim, cfg.pose_dim)
        if cfg.interaction == "distance-pool":
            self.interaction = DistancePoolInteraction(cfg.feature_dim, cfg.context_dim)
        elif cfg.interaction == "spatial-attention":
            self.interaction = SpatialAttentionInteraction(cfg.feature_dim, cfg.context_dim)
        self.decoder = DisplacementDecoder(
            cfg.embed_dim, cfg.hidden_dim, cfg.feature_dim + cfg.context_dim,
            noise_dim=cfg.noise_dim,
        )

    # -- encoding ----------------------------------------------------------

    def _agent_features(self, obs, pose, return_attention=False):
        """Per-agent fused features.  obs (B, A, T, 2), pose (B, A, T, J, C)."""
        cfg = self.cfg
        b, a = obs.shape[:2]
        disp = obs[:, :, 1:] - obs[:, :, :-1]
        traj_feat = self.traj_encoder(disp.reshape(b * a, cfg.t_obs - 1, 2))
        attentions = None
        if not cfg.use_pose:
            return traj_feat.reshape(b, a, -1), attentions
        flat_pose = pose.reshape(b * a, cfg.t_obs, cfg.n_joints, cfg.pose_dims)
        if cfg.fusion == "cross-attention":
            _, tokens = self.pose_encoder(flat_pose, return_tokens=True)
            fused = self.fusion(traj_feat, tokens)
        elif return_attention:
            pose_feat, attentions = self.pose_encoder(flat_pose, return_attention=True)
            fused = fuse(traj_feat, pose_feat)
        else:
            pose_feat = self.pose_encoder(flat_pose)
            fused = fuse(traj_feat, pose_feat)
        return fused.reshape(b, a, -1), attentions

    def encode(self, batch, return_attention=False):
        """Context vector for the decoder: primary feature (+ interaction)."""
        cfg = self.cfg
        obs, pose = batch["obs"], batch["pose"]
        if cfg.interaction == "none":
            # neighbours are ignored entirely; encode the primary alone
            obs = obs[:, :1]
            pose = pose[:, :1] if cfg.use_pose else pose
        features, attentions = self._agent_features(obs, pose, return_attention)
        primary = features[:, 0]
        if cfg.interaction != "none":
            context = self.interaction(
                features, batch["last_pos"], batch["agent_mask"]
            )
            primary = torch.cat([primary, context], dim=-1)
        return (primary, attentions) if return_attention else primary

    # -- decoding ----------------------------------------------------------

    def forward_teacher(self, batch):
        """Teacher-forced absolute position predictions (B, T_pred, 2)."""
        context = self.encode(batch)
        teacher = batch["future_disp"]
        disp = self.decoder.roll(
            context, batch["last_disp"], self.cfg.t_pred, teacher=teacher
        )
        return batch["last_obs"][:, None, :] + disp.cumsum(dim=1)

    def predict(self, batch, z=None):
        """Closed-loop rollout; z is an optional (B, noise_dim) noise draw."""
        context = self.encode(batch)
        disp = self.decoder.roll(context, batch["last_disp"], self.cfg.t_pred, z=z)
        return batch["last_obs"][:, None, :] + disp.cumsum(dim=1)

    def attention_maps(self, batch):
        """Pose-encoder attention weights for the primary agents of a batch.

        Returns a list (one entry per encoder layer) of (B, heads, L, L)
        tensors over the primary's pose tokens.
        """
        if not self.cfg.use_pose:
            raise ConfigError("model has no pose encoder")
        if self.cfg.fusion == "cross-attention":
            raise ConfigError("attention maps need the concatenation fusion")
        obs, pose = batch["obs"][:, :1], batch["pose"][:, :1]
        _, attentions = self._agent_features(obs, pose, return_attention=True)
        return attentions


def build_model(cfg: ModelConfig) -> Model:
    """Construct and deterministically initialize a model."""
    model = Model(cfg)
    seeded_init_(model, cfg.seed)
    return model


# ---------------------------------------------------------------------------
# batching


def collate(scenes: list[Scene], use_pose: bool = True,
            dtype=np.float32) -> dict:
    """Stack scenes into padded tensors, the primary agent first.

    Returns observation and pose windows, future targets for the primary,
    displacement teacher inputs, and an agent validity mask for padding.
    Poses outside the observation window are never exposed to the model.
    """
    if not scenes:
        raise ValueError("empty batch")
    t_obs, t_pred = scenes[0].t_obs, scenes[0].t_pred
    n_joints = scenes[0].n_joints
    dims = scenes[0].pose_dims
    a_max = max(len(s.agents) for s in scenes)
    b = len(scenes)

    obs = np.zeros((b, a_max, t_obs, 2), dtype=dtype)
    pose = np.zeros((b, a_max, t_obs, n_joints, dims), dtype=dtype)
    fut = np.zeros((b, t_pred, 2), dtype=dtype)
    agent_mask = np.zeros((b, a_max), dtype=bool)

    for i, scene in enumerate(scenes):
        if scene.t_obs != t_obs or scene.t_pred != t_pred:
            raise ValueError("scenes in a batch must share window sizes")
        order = [scene.primary_index] + [
            j for j in range(len(scene.agents)) if j != scene.primary_index
        ]
        for slot, j in enumerate(order):
            track = scene.agents[j]
            obs[i, slot] = track.positions[:t_obs]
            if use_pose:
                pose[i, slot] = track.pose_array()[:t_obs]
            agent_mask[i, slot] = True
        fut[i] = scene.primary.positions[t_obs:]

    obs_t = torch.from_numpy(obs)
    fut_t = torch.from_numpy(fut)
    last_obs = obs_t[:, 0, -1]
    last_disp = obs_t[:, 0, -1] - obs_t[:, 0, -2]
    future_abs = torch.cat([last_obs[:, None], fut_t], dim=1)
    future_disp = future_abs[:, 1:] - future_abs[:, :-1]
    return {
        "obs": obs_t,
        "pose": torch.from_numpy(pose),
        "future": fut_t,
        "future_disp": future_disp,
        "last_obs": last_obs,
        "last_disp": last_disp,
        "last_pos": obs_t[:, :, -1],
        "agent_mask": torch.from_numpy(agent_mask),
        "categories": [s.category for s in scenes],
        "frame_rate": scenes[0].frame_rate,
    }
