"""Trajectory prediction error metrics.

All metrics compare a predicted future of shape (T_pred, 2) against the
ground-truth future, in meters.  Multi-sample (best-of-k) evaluation takes
the minimum per scene and per metric before averaging over scenes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Early-horizon checkpoints (seconds) for the speed-weighted average error.
ASWAEE_TIMEPOINTS = (0.44, 0.96, 1.48, 2.00, 2.52)


def ade(pred: np.ndarray, gt: np.ndarray) -> float:
    """Average displacement error: mean L2 distance over all steps."""
    pred, gt = np.asarray(pred, float), np.asarray(gt, float)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    return float(np.linalg.norm(pred - gt, axis=-1).mean())


def fde(pred: np.ndarray, gt: np.ndarray) -> float:
    """Final displacement error: L2 distance at the last step."""
    pred, gt = np.asarray(pred, float), np.asarray(gt, float)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    return float(np.linalg.norm(pred[-1] - gt[-1]))


def aswaee_frames(frame_rate: float, n_steps: int) -> list[int]:
    """0-based prediction-step indices of the five checkpoint times.

    A checkpoint time tau maps to 1-based step floor(tau * fps + 0.5)
    (round-half-up), floored at step 1.  Raises ValueError when the horizon
    is too short to reach the last checkpoint.
    """
    indices = []
    for tau in ASWAEE_TIMEPOINTS:
        step = max(1, math.floor(tau * frame_rate + 0.5))
        if step > n_steps:
            raise ValueError(
                f"horizon of {n_steps} steps at {frame_rate} fps "
                f"({n_steps / frame_rate:.2f} s) does not reach the "
                f"{tau} s checkpoint"
            )
        indices.append(step - 1)
    return indices


def aswaee(pred: np.ndarray, gt: np.ndarray, frame_rate: float) -> float:
    """Mean L2 error over the five early-horizon checkpoints."""
    pred, gt = np.asarray(pred, float), np.asarray(gt, float)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    idx = aswaee_frames(frame_rate, len(pred))
    return float(np.linalg.norm(pred[idx] - gt[idx], axis=-1).mean())


def scene_errors(samples: np.ndarray, gt: np.ndarray, frame_rate: float,
                 with_aswaee: bool = True) -> dict:
    """Best-of-k errors for one scene.

    samples is (k, T, 2) or (T, 2); each metric takes its own minimum over
    the k samples.
    """
    samples = np.asarray(samples, float)
    if samples.ndim == 2:
        samples = samples[None]
    out = {
        "ade": min(ade(s, gt) for s in samples),
        "fde": min(fde(s, gt) for s in samples),
    }
    if with_aswaee:
        out["aswaee"] = min(aswaee(s, gt, frame_rate) for s in samples)
    return out


@dataclass
class MetricsReport:
    """Corpus-level averages, overall and per scene category."""

    ade: float
    fde: float
    aswaee: float | None
    n_scenes: int
    per_category: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ade": self.ade,
            "fde": self.fde,
            "aswaee": self.aswaee,
            "n_scenes": self.n_scenes,
            "per_category": self.per_category,
        }


def evaluate(
    predictions: list,
    ground_truths: list,
    frame_rate: float,
    categories: list | None = None,
) -> MetricsReport:
    """Aggregate best-of-k errors over a corpus.

    predictions: per scene, (k, T, 2) sample stack or a single (T, 2) array.
    The early-horizon metric is reported as None when the horizon is too
    short to reach its last checkpoint.
    """
    if len(predictions) != len(ground_truths):
        raise ValueError("predictions and ground truths must align")
    if not predictions:
        raise ValueError("nothing to evaluate")
    n_steps = len(np.asarray(ground_truths[0]))
    try:
        aswaee_frames(frame_rate, n_steps)
        with_aswaee = True
    except ValueError:
        with_aswaee = False

    rows = [
        scene_errors(p, g, frame_rate, with_aswaee)
        for p, g in zip(predictions, ground_truths)
    ]
    overall = _mean_rows(rows, with_aswaee)

    per_category = {}
    if categories is not None:
        if len(categories) != len(rows):
            raise ValueError("categories must align with predictions")
        labels = [getattr(c, "value", c) for c in categories]
        for label in sorted(set(labels)):
            subset = [r for r, l in zip(rows, labels) if l == label]
            stats = _mean_rows(subset, with_aswaee)
            stats["n_scenes"] = len(subset)
            per_category[label] = stats

    return MetricsReport(
        ade=overall["ade"],
        fde=overall["fde"],
        aswaee=overall.get("aswaee"),
        n_scenes=len(rows),
        per_category=per_category,
    )


def _mean_rows(rows: list, with_aswaee: bool) -> dict:
    out = {
        "ade": float(np.mean([r["ade"] for r in rows])),
        "fde": float(np.mean([r["fde"] for r in rows])),
    }
    if with_aswaee:
        out["aswaee"] = float(np.mean([r["aswaee"] for r in rows]))
    else:
        out["aswaee"] = None
    return out
