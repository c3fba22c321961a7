"""Pose sequence encoder.

Observed body keypoints are embedded into tokens, tagged with a sinusoidal
frame encoding, and passed through a small pre-norm-free transformer
(attention + residual, feed-forward + residual).  The pooled output is a
fixed-width pose feature that is fused with a trajectory feature, by
default through plain concatenation, so the trajectory pathway is left
untouched and the pose pathway can be ablated cleanly.

Two tokenizations are supported:

``per-frame-joint``
    one token per (frame, joint); a shared coordinate projection plus a
    learned joint-identity embedding.  T*J tokens; attention maps over
    these tokens localize which joints the model reads.
``per-frame``
    one token per frame from the flattened joint set.  T tokens; much
    cheaper, no joint-level attribution.

Masked joints arrive as exact zeros and are embedded as such (zero-padding
rather than mask tokens), so occlusions need no side-channel.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .errors import NumericError

TOKENIZATIONS = ("per-frame-joint", "per-frame")
POOLINGS = ("mean", "last")


def positional_encoding(
    n_positions: int,
    dim: int,
    dtype: torch.dtype = torch.float32,
    start: int = 1,
) -> torch.Tensor:
    """Sinusoidal position code, one frequency per channel.

    Channel d of position t is sin(t / 10000^(d/dim)) for even d and
    cos(t / 10000^(d/dim)) for odd d.  Positions count observation frames
    and start at 1; the (unused) position 0 would encode to [0, 1, 0, 1, ...].
    """
    if n_positions < 0 or dim <= 0:
        raise ValueError("need n_positions >= 0 and dim > 0")
    t = torch.arange(start, start + n_positions, dtype=torch.float64)[:, None]
    d = torch.arange(dim, dtype=torch.float64)[None, :]
    angle = t / torch.pow(torch.tensor(10000.0, dtype=torch.float64), d / dim)
    code = torch.where(d % 2 == 0, torch.sin(angle), torch.cos(angle))
    return code.to(dtype)


class PoseTokenEmbedding(nn.Module):
    """Map a (B, T, J, C) pose window to a (B, L, D) token sequence."""

    def __init__(self, n_joints: int, in_dims: int, dim: int,
                 tokenization: str = "per-frame-joint"):
        super().__init__()
        if tokenization not in TOKENIZATIONS:
            raise ValueError(f"unknown tokenization {tokenization!r}")
        self.n_joints = n_joints
        self.in_dims = in_dims
        self.dim = dim
        self.tokenization = tokenization
        if tokenization == "per-frame-joint":
            self.coord_proj = nn.Linear(in_dims, dim)
            self.joint_embed = nn.Embedding(n_joints, dim)
        else:
            self.frame_proj = nn.Linear(n_joints * in_dims, dim)

    def forward(self, pose: torch.Tensor) -> torch.Tensor:
        b, t, j, c = pose.shape
        if j != self.n_joints or c != self.in_dims:
            raise ValueError(
                f"expected (*, *, {self.n_joints}, {self.in_dims}) pose, got {tuple(pose.shape)}"
            )
        position = positional_encoding(t, self.dim, dtype=pose.dtype).to(pose.device)
        if self.tokenization == "per-frame-joint":
            tokens = self.coord_proj(pose)  # (B, T, J, D)
            tokens = tokens + self.joint_embed.weight[None, None, :, :]
            tokens = tokens + position[None, :, None, :]
            return tokens.reshape(b, t * j, self.dim)
        tokens = self.frame_proj(pose.reshape(b, t, j * c))
        return tokens + position[None, :, :]


class TransformerBlock(nn.Module):
    """Self-attention and feed-forward sublayers with residuals, no norm."""

    def __init__(self, dim: int, n_heads: int, ffn_mult: int = 4):
        super().__init__()
        self.attn = nn.MultiheadAttention(dim, n_heads, batch_first=True)
        self.ffn = nn.Sequential(
            nn.Linear(dim, ffn_mult * dim),
            nn.ReLU(),
            nn.Linear(ffn_mult * dim, dim),
        )

    def forward(self, x: torch.Tensor, return_attention: bool = False):
        attended, weights = self.attn(
            x, x, x, need_weights=return_attention, average_attn_weights=False
        )
        x = x + attended
        x = x + self.ffn(x)
        return (x, weights) if return_attention else (x, None)


class PoseSequenceEncoder(nn.Module):
    """Tokenize, encode and pool an observed pose window into one vector.

    forward() returns the pooled (B, dim) feature; ask for the token
    sequence (for cross-attention fusion) or the per-layer attention
    weights (for joint attribution) explicitly.
    """

    def __init__(
        self,
        n_joints: int = 17,
        in_dims: int = 3,
        dim: int = 128,
        n_layers: int = 2,
        n_heads: int = 16,
        tokenization: str = "per-frame-joint",
        pooling: str = "mean",
    ):
        super().__init__()
        if pooling not in POOLINGS:
            raise ValueError(f"unknown pooling {pooling!r}")
        if dim % n_heads:
            raise ValueError(f"dim {dim} not divisible by n_heads {n_heads}")
        self.embed = PoseTokenEmbedding(n_joints, in_dims, dim, tokenization)
        self.layers = nn.ModuleList(
            TransformerBlock(dim, n_heads) for _ in range(n_layers)
        )
        self.pooling = pooling
        self.dim = dim

    def forward(
        self,
        pose: torch.Tensor,
        return_attention: bool = False,
        return_tokens: bool = False,
    ):
        x = self.embed(pose)
        attentions = []
        for i, layer in enumerate(self.layers):
            x, weights = layer(x, return_attention=return_attention)
            if not torch.isfinite(x).all():
                raise NumericError(f"non-finite activations after encoder layer {i}")
            if return_attention:
                attentions.append(weights)
        pooled = x.mean(dim=1) if self.pooling == "mean" else x[:, -1]
        out = [pooled]
        if return_tokens:
            out.append(x)
        if return_attention:
            out.append(attentions)
        return out[0] if len(out) == 1 else tuple(out)


def fuse(traj_feature: torch.Tensor, pose_feature: torch.Tensor) -> torch.Tensor:
    """Default fusion: concatenate trajectory and pose features."""
    return torch.cat([traj_feature, pose_feature], dim=-1)


class CrossAttentionFusion(nn.Module):
    """Alternative fusion: the trajectory feature queries the pose tokens.

    The attended pose summary replaces the pooled pose feature, and the
    output keeps the concatenated width so the downstream decoder is
    unchanged.
    """

    def __init__(self, traj_dim: int, pose_dim: int, n_heads: int = 4):
        super().__init__()
        self.query_proj = nn.Linear(traj_dim, pose_dim)
        self.attn = nn.MultiheadAttention(pose_dim, n_heads, batch_first=True)

    def forward(self, traj_feature: torch.Tensor, pose_tokens: torch.Tensor) -> torch.Tensor:
        query = self.query_proj(traj_feature)[:, None, :]
        attended, _ = self.attn(query, pose_tokens, pose_tokens, need_weights=False)
        return torch.cat([traj_feature, attended[:, 0]], dim=-1)


def seeded_init_(module: nn.Module, seed: int) -> None:
    """Deterministically reinitialize every parameter of a module.

    Each tensor is drawn uniform(-b, b) with b = 1/sqrt(fan) where fan is
    the last dimension for matrices and the length for vectors, from a
    private generator.  Parameters are visited in sorted name order, so
    the result is reproducible bit-for-bit for a fixed architecture.
    """
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, param in sorted(module.named_parameters(), key=lambda kv: kv[0]):
            fan = param.shape[-1] if param.ndim >= 2 else param.shape[0]
            bound = 1.0 / math.sqrt(max(1, fan))
            values = torch.empty(
                param.shape, dtype=torch.float64
            ).uniform_(-bound, bound, generator=generator)
            param.copy_(values.to(param.dtype))
