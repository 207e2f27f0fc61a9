"""Training loop (seeded shuffling, length-bucketed padded batches, masked MSE,
Adam) plus the finite-difference gradient verifier."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import NumericError
from .layers import Adam, mse_loss
from .models import Model


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 100
    learning_rate: float = 1e-3
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class TrainHistory:
    epochs: list[dict] = field(default_factory=list)

    def final_train_loss(self) -> float:
        return self.epochs[-1]["train_loss"]

    def to_csv(self, path: str | Path, meta: dict | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            if meta:
                fields = " ".join(f"{k}={meta[k]}" for k in sorted(meta))
                fh.write(f"# {fields}\n")
            fh.write("epoch,train_loss,val_loss\n")
            for row in self.epochs:
                val = "" if row["val_loss"] is None else f"{row['val_loss']:.9g}"
                fh.write(f"{row['epoch']},{row['train_loss']:.9g},{val}\n")


def _bucket_batches(pairs, batch_size: int) -> list[list[int]]:
    """Indices grouped into batches of near-equal input length."""
    order = sorted(range(len(pairs)), key=lambda i: (len(pairs[i][0]), i))
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def _assemble(pairs, idxs, model: Model, dtype):
    """Pad a batch and build the validity mask on the output grid."""
    xs = [np.asarray(pairs[i][0], dtype=dtype) for i in idxs]
    ys = [np.asarray(pairs[i][1], dtype=dtype) for i in idxs]
    t_in = max(len(x) for x in xs)
    t_out = model.output_length(t_in)
    xb = np.zeros((len(xs), t_in, xs[0].shape[1]), dtype=dtype)
    yb = np.zeros((len(ys), t_out, ys[0].shape[1]), dtype=dtype)
    mask = np.zeros((len(xs), t_out), dtype=dtype)
    for row, (x, y) in enumerate(zip(xs, ys)):
        valid = min(model.output_length(len(x)), len(y))
        xb[row, : len(x)] = x
        yb[row, :valid] = y[:valid]
        mask[row, :valid] = 1.0
    return xb, yb, mask


def _epoch_loss(model: Model, pairs, batches, dtype) -> float:
    """Masked MSE over a whole set in inference mode."""
    total_sq = 0.0
    total_count = 0.0
    for idxs in batches:
        xb, yb, mask = _assemble(pairs, idxs, model, dtype)
        pred = model.forward(xb, training=False)
        diff = (pred.astype(np.float64) - yb) * mask[..., None]
        total_sq += float(np.sum(diff * diff))
        total_count += float(mask.sum()) * yb.shape[-1]
    return total_sq / total_count


def train(model: Model, train_pairs, config: TrainConfig, val_pairs=None) -> TrainHistory:
    """Run the epoch loop; deterministic given the config seed.

    Raises NumericError if the loss diverges to NaN/inf.
    """
    if not train_pairs:
        raise ValueError("empty training set")
    dtype = model.params()[0].dtype if model.params() else np.float32
    batches = _bucket_batches(train_pairs, config.batch_size)
    val_batches = _bucket_batches(val_pairs, config.batch_size) if val_pairs else None
    optimizer = Adam(model.params(), lr=config.learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    history = TrainHistory()

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(batches)) if config.shuffle else np.arange(len(batches))
        sq_sum = 0.0
        count_sum = 0.0
        for bi in order:
            xb, yb, mask = _assemble(train_pairs, batches[bi], model, dtype)
            pred = model.forward(xb, training=True)
            loss, grad = mse_loss(pred, yb, mask)
            if not np.isfinite(loss):
                raise NumericError(f"loss diverged (NaN/inf) at epoch {epoch}")
            count = float(mask.sum()) * yb.shape[-1]
            sq_sum += loss * count
            count_sum += count
            model.zero_grad()
            model.backward(grad)
            optimizer.step(model.grads())
        val_loss = _epoch_loss(model, val_pairs, val_batches, dtype) if val_batches else None
        history.epochs.append(
            {"epoch": epoch, "train_loss": sq_sum / count_sum, "val_loss": val_loss}
        )
    return history


def finite_diff_grad_check(
    model: Model,
    x: np.ndarray,
    y: np.ndarray,
    eps: float = 1e-5,
    max_coords: int = 200,
    seed: int = 0,
) -> float:
    """Max relative error of analytic parameter gradients vs central differences.

    Run on float64 models; the loss path is inference-mode (dropout off) so the
    objective is deterministic.
    """
    def loss_of() -> float:
        pred = model.forward(x, training=False)
        loss, _ = mse_loss(pred, y)
        return loss

    model.zero_grad()
    pred = model.forward(x, training=False)
    _, grad = mse_loss(pred, y)
    model.backward(grad)
    analytic = [g.copy() for g in model.grads()]

    coords = [(pi, flat) for pi, p in enumerate(model.params()) for flat in range(p.size)]
    rng = np.random.default_rng(seed)
    if len(coords) > max_coords:
        picks = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in picks]

    params = model.params()
    max_rel = 0.0
    for pi, flat in coords:
        p = params[pi].reshape(-1)
        orig = p[flat]
        p[flat] = orig + eps
        loss_plus = loss_of()
        p[flat] = orig - eps
        loss_minus = loss_of()
        p[flat] = orig
        numeric = (loss_plus - loss_minus) / (2.0 * eps)
        a = float(analytic[pi].reshape(-1)[flat])
        denom = max(abs(a), abs(numeric), 1e-6)
        max_rel = max(max_rel, abs(a - numeric) / denom)
    return max_rel
