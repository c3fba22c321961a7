"""Training and corpus-level evaluation.

Models train with teacher forcing on mean squared error over absolute
future positions, Adam, and a step learning-rate schedule (halved every
``lr_step`` epochs).  Optional noise augmentation perturbs the poses of a
fraction of each batch, which is how robust variants are trained.

Everything is seeded: batch order, augmentation draws and evaluation noise
vectors all come from explicit rng streams, so two runs with the same
configuration produce bit-identical models and metrics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .analysis import apply_noise
from .backbones import Model, collate, default_learning_rate
from .checkpoint import save_checkpoint
from .errors import NumericError
from .metrics import MetricsReport, evaluate
from .scenes import Scene


def set_determinism(seed: int) -> None:
    """Single-threaded, seeded torch: repeated runs match bit-for-bit."""
    torch.manual_seed(seed)
    torch.set_num_threads(1)


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float | None = None  # None: family default
    lr_decay: float = 0.5
    lr_step: int = 10
    seed: int = 0
    noise_frac: float = 0.0  # fraction of each batch given noisy poses
    noise_std: float = 0.2
    early_stop_patience: int | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.noise_frac <= 1.0:
            raise ValueError("noise_frac must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "lr_decay": self.lr_decay,
            "lr_step": self.lr_step,
            "seed": self.seed,
            "noise_frac": self.noise_frac,
            "noise_std": self.noise_std,
            "early_stop_patience": self.early_stop_patience,
        }


def teacher_loss(model: Model, batch: dict) -> torch.Tensor:
    pred = model.forward_teacher(batch)
    return ((pred - batch["future"]) ** 2).mean()


def train(
    model: Model,
    scenes: list[Scene],
    cfg: TrainConfig,
    val_scenes: list[Scene] | None = None,
    run_dir=None,
) -> list[dict]:
    """Train in place; returns per-epoch history rows.

    With ``run_dir`` set, writes ``loss.csv``, a checkpoint per epoch and
    ``model.json`` for the final (or best, under early stopping) weights.
    Raises NumericError if the loss stops being finite.
    """
    if not scenes:
        raise ValueError("no training scenes")
    set_determinism(cfg.seed)
    lr0 = cfg.lr if cfg.lr is not None else default_learning_rate(model.cfg.family)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr0)
    use_pose = model.cfg.use_pose

    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)

    history: list[dict] = []
    best_val = math.inf
    best_state = None
    stale = 0

    for epoch in range(cfg.epochs):
        lr = lr0 * cfg.lr_decay ** (epoch // cfg.lr_step)
        for group in optimizer.param_groups:
            group["lr"] = lr

        rng = np.random.default_rng([cfg.seed, epoch])
        order = rng.permutation(len(scenes))
        model.train()
        losses = []
        for lo in range(0, len(order), cfg.batch_size):
            picked = [scenes[i] for i in order[lo : lo + cfg.batch_size]]
            if use_pose and cfg.noise_frac > 0:
                n_aug = math.ceil(cfg.noise_frac * len(picked))
                chosen = rng.choice(len(picked), size=n_aug, replace=False)
                for i in chosen:
                    picked[i] = apply_noise(picked[i], cfg.noise_std, rng)
            batch = collate(picked, use_pose=use_pose)
            optimizer.zero_grad()
            loss = teacher_loss(model, batch)
            if not torch.isfinite(loss):
                raise NumericError(
                    f"training diverged: non-finite loss at epoch {epoch}"
                )
            loss.backward()
            optimizer.step()
            losses.append(loss.item())

        row = {"epoch": epoch, "lr": lr, "train_loss": float(np.mean(losses))}
        if val_scenes:
            row["val_loss"] = validation_loss(model, val_scenes, cfg.batch_size)
        history.append(row)

        if run_dir is not None:
            save_checkpoint(model, run_dir / f"epoch_{epoch:03d}.json",
                            extra={"epoch": epoch})

        if val_scenes and cfg.early_stop_patience is not None:
            if row["val_loss"] < best_val - 1e-12:
                best_val = row["val_loss"]
                best_state = {k: v.detach().clone()
                              for k, v in model.state_dict().items()}
                stale = 0
            else:
                stale += 1
                if stale > cfg.early_stop_patience:
                    break

    if best_state is not None:
        model.load_state_dict(best_state)

    if run_dir is not None:
        save_checkpoint(model, run_dir / "model.json",
                        extra={"epochs_run": len(history)})
        _write_history(run_dir / "loss.csv", history)
    model.eval()
    return history


def validation_loss(model: Model, scenes: list[Scene], batch_size: int = 256) -> float:
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for lo in range(0, len(scenes), batch_size):
            batch = collate(scenes[lo : lo + batch_size], use_pose=model.cfg.use_pose)
            n = len(batch["future"])
            total += teacher_loss(model, batch).item() * n
            count += n
    return total / count


def _write_history(path: Path, history: list[dict]) -> None:
    fields = ["epoch", "lr", "train_loss"]
    if any("val_loss" in row for row in history):
        fields.append("val_loss")
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fields)
        writer.writeheader()
        for row in history:
            writer.writerow({k: row.get(k, "") for k in fields})


# ---------------------------------------------------------------------------
# prediction and evaluation


def predict_corpus(
    model: Model,
    scenes: list[Scene],
    k: int = 1,
    seed: int = 0,
    batch_size: int = 256,
) -> list[np.ndarray]:
    """Closed-loop predictions, k samples per scene, as (k, T_pred, 2) arrays.

    Sample j for corpus position i draws its noise vector from the stream
    (seed, i, j), so sample sets are nested: the first k samples of a larger
    run are exactly the samples of a smaller one.  Deterministic models
    (noise_dim == 0) return k identical samples.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    model.eval()
    noise_dim = model.cfg.noise_dim
    out: list[list[np.ndarray]] = [[] for _ in scenes]
    with torch.no_grad():
        for lo in range(0, len(scenes), batch_size):
            chunk = scenes[lo : lo + batch_size]
            batch = collate(chunk, use_pose=model.cfg.use_pose)
            for j in range(k):
                z = None
                if noise_dim:
                    rows = [
                        np.random.default_rng([seed, lo + i, j])
                        .standard_normal(noise_dim)
                        for i in range(len(chunk))
                    ]
                    z = torch.tensor(np.stack(rows), dtype=torch.float32)
                pred = model.predict(batch, z=z).cpu().numpy()
                for i in range(len(chunk)):
                    out[lo + i].append(pred[i])
    return [np.stack(samples) for samples in out]


def evaluate_model(
    model: Model,
    scenes: list[Scene],
    k: int = 1,
    seed: int = 0,
) -> MetricsReport:
    """Best-of-k corpus metrics with the per-category breakdown."""
    predictions = predict_corpus(model, scenes, k=k, seed=seed)
    ground_truths = [s.primary.positions[s.t_obs :] for s in scenes]
    return evaluate(
        predictions,
        ground_truths,
        scenes[0].frame_rate,
        categories=[s.category for s in scenes],
    )
