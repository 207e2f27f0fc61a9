"""The two trainable architectures and their checkpoint format.

Synthesis: TCN(31->f1) -> upsample x5 -> dropout -> TCN(f1->f2) -> upsample x3
-> time-distributed dense(f2->1), mapping T EEG samples at 1000 Hz to 15*T
audio samples at 15 kHz. Regression: GRU(30->hidden) -> dropout -> dense to the
target feature dimension, frame for frame.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import DataError
from ..serialize import load_container, save_container
from .layers import Dropout, GruLayer, Layer, TcnBlock, TimeDistributedDense, UpsampleRepeat

REGRESSION_OUT_DIMS = (1, 2, 6, 7, 12, 128, 384)


class Model:
    """A stack of layers with shared forward/backward plumbing."""

    kind = "model"

    def __init__(self, layers: list[Layer], config: dict, in_dim: int):
        self.layers = layers
        self.config = dict(config)
        self.in_dim = in_dim

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[None, ...]
        if x.ndim != 3:
            raise ValueError("input must be (batch, time, features)")
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"{self.kind} expects {self.in_dim} input features, got {x.shape[-1]}")
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Inference mode: dropout off, deterministic."""
        return self.forward(x, training=False)

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def param_count(self) -> int:
        return sum(p.size for p in self.params())

    def output_length(self, t: int) -> int:
        for layer in self.layers:
            t = layer.output_length(t)
        return t

    def out_dim(self) -> int:
        return self.config["out_dim"]

    def save(self, path: str | Path) -> None:
        arrays = {}
        for i, layer in enumerate(self.layers):
            for j, p in enumerate(layer.params):
                arrays[f"layer{i:02d}_p{j}"] = p
        save_container(path, self.kind, self.config, arrays)

    def load_params(self, arrays: dict) -> None:
        for i, layer in enumerate(self.layers):
            for j, p in enumerate(layer.params):
                src = arrays[f"layer{i:02d}_p{j}"]
                if tuple(src.shape) != p.shape:
                    raise DataError(f"checkpoint shape mismatch at layer {i} param {j}")
                p[...] = src.astype(p.dtype)


class SynthesisModel(Model):
    kind = "synthesis"
    upsample_factor = 15


class RegressionModel(Model):
    kind = "regression"


def build_synthesis_model(
    seed: int = 0,
    filters: tuple[int, int] = (256, 32),
    kernel_size: int = 3,
    dropout_rate: float = 0.2,
    in_dim: int = 31,
    dense_before_final_upsample: bool = False,
    dtype=np.float32,
) -> SynthesisModel:
    """Figure-style waveform synthesizer: (T x in_dim) -> (15*T x 1)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    f1, f2 = filters
    head = TimeDistributedDense(f2, 1, rng=rng, dtype=dtype)
    up3 = UpsampleRepeat(3)
    layers: list[Layer] = [
        TcnBlock(in_dim, f1, kernel_size, rng=rng, dtype=dtype),
        UpsampleRepeat(5),
        Dropout(dropout_rate, seed=seed + 1),
        TcnBlock(f1, f2, kernel_size, rng=rng, dtype=dtype),
    ]
    layers += [head, up3] if dense_before_final_upsample else [up3, head]
    config = {
        "seed": seed,
        "filters": list(filters),
        "kernel_size": kernel_size,
        "dropout_rate": dropout_rate,
        "in_dim": in_dim,
        "out_dim": 1,
        "dense_before_final_upsample": dense_before_final_upsample,
        "dtype": np.dtype(dtype).name,
    }
    return SynthesisModel(layers, config, in_dim)


def build_regression_model(
    out_dim: int,
    seed: int = 0,
    hidden: int = 128,
    in_dim: int = 30,
    dropout_rate: float = 0.2,
    dtype=np.float32,
) -> RegressionModel:
    """GRU regressor onto one acoustic feature family: (T x in_dim) -> (T x out_dim)."""
    if out_dim not in REGRESSION_OUT_DIMS:
        raise ValueError(f"out_dim must be one of the 16 feature dims {REGRESSION_OUT_DIMS}, got {out_dim}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    layers = [
        GruLayer(in_dim, hidden, rng=rng, dtype=dtype),
        Dropout(dropout_rate, seed=seed + 1),
        TimeDistributedDense(hidden, out_dim, rng=rng, dtype=dtype),
    ]
    config = {
        "seed": seed,
        "hidden": hidden,
        "in_dim": in_dim,
        "out_dim": out_dim,
        "dropout_rate": dropout_rate,
        "dtype": np.dtype(dtype).name,
    }
    return RegressionModel(layers, config, in_dim)


def synthesis_param_count(in_dim: int, filters: tuple[int, int], kernel_size: int) -> int:
    """Closed-form parameter total for the synthesis stack."""
    f1, f2 = filters
    tcn1 = kernel_size * in_dim * f1 + f1 + (in_dim * f1 if in_dim != f1 else 0)
    tcn2 = kernel_size * f1 * f2 + f2 + (f1 * f2 if f1 != f2 else 0)
    dense = f2 * 1 + 1
    return tcn1 + tcn2 + dense


def load_model(path: str | Path):
    """Rebuild a model from a checkpoint container."""
    kind, config, arrays = load_container(path)
    dtype = np.dtype(config.get("dtype", "float32"))
    if kind == "synthesis":
        model = build_synthesis_model(
            seed=config["seed"],
            filters=tuple(config["filters"]),
            kernel_size=config["kernel_size"],
            dropout_rate=config["dropout_rate"],
            in_dim=config["in_dim"],
            dense_before_final_upsample=config.get("dense_before_final_upsample", False),
            dtype=dtype,
        )
    elif kind == "regression":
        model = build_regression_model(
            out_dim=config["out_dim"],
            seed=config["seed"],
            hidden=config["hidden"],
            in_dim=config["in_dim"],
            dropout_rate=config["dropout_rate"],
            dtype=dtype,
        )
    else:
        raise DataError(f"{path}: unknown model kind {kind!r}")
    model.load_params(arrays)
    return model
