"""Small ReLU multilayer perceptron with a hand-written backward pass."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgumentError


@dataclass
class MlpParams:
    layers: list[tuple[np.ndarray, np.ndarray]]

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0][0].shape[1]] + [w.shape[0] for w, _ in self.layers]

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in self.layers])

    @classmethod
    def from_flat(cls, sizes: list[int], theta: np.ndarray) -> "MlpParams":
        layers, pos = [], 0
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            w = theta[pos : pos + n_out * n_in].reshape(n_out, n_in)
            pos += n_out * n_in
            b = theta[pos : pos + n_out]
            pos += n_out
            layers.append((w.copy(), b.copy()))
        if pos != theta.size:
            raise InvalidArgumentError(f"expected {pos} parameters, got {theta.size}")
        return cls(layers)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]  # pre-activation of each layer


def init(layer_sizes, seed: int) -> MlpParams:
    """He-normal weights (std ``sqrt(2 / fan_in)``), zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise InvalidArgumentError(f"need at least two positive layer sizes, got {layer_sizes}")
    rng = np.random.default_rng(seed)
    layers = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in))
        layers.append((w, np.zeros(n_out)))
    return MlpParams(layers)


def forward(params: MlpParams, batch) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.sizes[0]:
        raise InvalidArgumentError(f"expected input of shape (B, {params.sizes[0]}), got {x.shape}")
    inputs, pre = [], []
    h = x
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        inputs.append(h)
        a = h @ w.T + b
        pre.append(a)
        h = a if i == last else np.maximum(a, 0.0)
    return h, ForwardCache(inputs, pre)


def backward(params: MlpParams, cache: ForwardCache, dlogits) -> list[tuple[np.ndarray, np.ndarray]]:
    """Parameter gradients given ``dL/dlogits``.

    ``dlogits`` already carries the batch reduction (e.g. ``1/B`` for a mean loss).
    """
    g = np.asarray(dlogits, dtype=np.float64)
    if len(cache.pre) != len(params.layers) or g.shape != cache.pre[-1].shape:
        raise InvalidArgumentError("cache does not match parameters or dlogits shape")
    grads = [None] * len(params.layers)
    for i in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[i]
        grads[i] = (g.T @ cache.inputs[i], g.sum(axis=0))
        if i > 0:
            g = (g @ w) * (cache.pre[i - 1] > 0)
    return grads


def flatten_grads(grads) -> np.ndarray:
    return np.concatenate([np.concatenate([dw.ravel(), db]) for dw, db in grads])


# Checkpoint layout (little-endian): int32 layer count, int32 sizes, then float64
# parameters layer by layer, weights row-major followed by biases.

def save_checkpoint(params: MlpParams, path) -> None:
    sizes = params.sizes
    header = struct.pack(f"<i{len(sizes)}i", len(sizes), *sizes)
    Path(path).write_bytes(header + params.flat().astype("<f8").tobytes())


def load_checkpoint(path) -> MlpParams:
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise FormatError("checkpoint too short for header", 0)
    (count,) = struct.unpack_from("<i", data, 0)
    if count < 2 or len(data) < 4 + 4 * count:
        raise FormatError(f"bad layer count {count}", 0)
    sizes = list(struct.unpack_from(f"<{count}i", data, 4))
    body = data[4 + 4 * count :]
    n = sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))
    if len(body) != 8 * n:
        raise FormatError(f"expected {n} float64 parameters, found {len(body) / 8:g}", 4 + 4 * count)
    return MlpParams.from_flat(sizes, np.frombuffer(body, dtype="<f8").astype(np.float64))
