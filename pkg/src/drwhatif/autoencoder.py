"""Small fully-connected autoencoder: a nonlinear 2-D reduction backend.

Symmetric layer stack with a 2-unit bottleneck. The encoder half is the
reduction (feature space -> plane), the decoder half is its backward
projection (plane -> feature space). Hidden layers use tanh, the output
layer is linear, and inputs are affinely scaled to [-1, 1] per feature
before training. Training is plain mini-batch SGD with a fixed learning
rate and seeded shuffling, so runs are reproducible bit for bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import ModelError


@dataclass
class TrainingReport:
    epochs: int
    batch: int
    learning_rate: float
    seed: int
    initial_error: float
    final_error: float

    def to_json(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch": self.batch,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "initial_error": self.initial_error,
            "final_error": self.final_error,
        }


def _validate_layers(layer_sizes: list[int]) -> int:
    if len(layer_sizes) < 3 or len(layer_sizes) % 2 == 0:
        raise ModelError(
            f"layer sizes must be an odd-length symmetric stack, got {layer_sizes}",
            code="bad_layers",
        )
    mid = len(layer_sizes) // 2
    if layer_sizes[mid] != 2:
        raise ModelError(f"bottleneck must have 2 units, got {layer_sizes[mid]}", code="bad_layers")
    if layer_sizes != layer_sizes[::-1]:
        raise ModelError(f"layer sizes must be symmetric, got {layer_sizes}", code="bad_layers")
    if any(s < 1 for s in layer_sizes):
        raise ModelError("layer sizes must be positive", code="bad_layers")
    return mid


@dataclass
class AutoencoderModel:
    """Feed-forward weights plus the input normalization used in training.

    ``weights[l]`` maps layer l to layer l+1 (shape n_in x n_out). Encoding
    runs layers 0..mid-1, decoding the rest. ``input_offset`` and
    ``input_factor`` define scaled = (x - offset) * factor.
    """

    layer_sizes: list[int]
    activation: str  # "tanh" | "linear"
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input_offset: np.ndarray
    input_factor: np.ndarray
    seed: int = 0
    training_report: TrainingReport | None = None

    def __post_init__(self) -> None:
        self.bottleneck = _validate_layers(self.layer_sizes)
        if self.activation not in ("tanh", "linear"):
            raise ModelError(f"unknown activation {self.activation!r}", code="bad_activation")
        if len(self.weights) != len(self.layer_sizes) - 1:
            raise ModelError("weight count does not match layer sizes", code="bad_shape")

    @property
    def d(self) -> int:
        return self.layer_sizes[0]

    def _act(self, z: np.ndarray, layer: int) -> np.ndarray:
        # output layer is always linear; hidden layers follow `activation`
        if layer == len(self.weights) - 1 or self.activation == "linear":
            return z
        return np.tanh(z)

    def _forward(self, scaled: np.ndarray, start: int, stop: int) -> np.ndarray:
        h = scaled
        for l in range(start, stop):
            h = self._act(h @ self.weights[l] + self.biases[l], l)
        return h

    def scale_input(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.input_offset) * self.input_factor

    def unscale_output(self, scaled: np.ndarray) -> np.ndarray:
        return scaled / self.input_factor + self.input_offset

    def encode(self, x: np.ndarray) -> np.ndarray:
        """Feature vector(s) -> planar position(s). Pure feed-forward."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ModelError(f"input has {x.shape[-1]} features, model expects {self.d}", code="dim_mismatch")
        if not np.all(np.isfinite(x)):
            raise ModelError("encode input must be finite", code="non_finite_value")
        return self._forward(self.scale_input(x), 0, self.bottleneck)

    def decode(self, y: np.ndarray) -> np.ndarray:
        """Planar position(s) -> feature vector(s): the backward projection."""
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != 2:
            raise ModelError(f"latent input has length {y.shape[-1]}, expected 2", code="dim_mismatch")
        if not np.all(np.isfinite(y)):
            raise ModelError("decode input must be finite", code="non_finite_value")
        scaled = self._forward(y, self.bottleneck, len(self.weights))
        return self.unscale_output(scaled)

    def reconstruction_error(self, values: np.ndarray) -> float:
        """Mean squared reconstruction error in scaled units."""
        scaled = self.scale_input(values)
        out = self._forward(scaled, 0, len(self.weights))
        return float(np.mean((out - scaled) ** 2))

    def to_json(self) -> dict:
        return {
            "type": "autoencoder",
            "layer_sizes": list(self.layer_sizes),
            "activation": self.activation,
            "weights": [[[float(v) for v in row] for row in W] for W in self.weights],
            "biases": [[float(v) for v in b] for b in self.biases],
            "input_scale": {
                "offset": [float(v) for v in self.input_offset],
                "factor": [float(v) for v in self.input_factor],
            },
            "seed": self.seed,
            "training_report": None if self.training_report is None else self.training_report.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict | str) -> "AutoencoderModel":
        if isinstance(obj, str):
            obj = json.loads(obj)
        if obj.get("type") != "autoencoder":
            raise ModelError(f"not an autoencoder model file: type={obj.get('type')!r}")
        report = obj.get("training_report")
        return cls(
            layer_sizes=[int(s) for s in obj["layer_sizes"]],
            activation=obj["activation"],
            weights=[np.array(W, dtype=float) for W in obj["weights"]],
            biases=[np.array(b, dtype=float) for b in obj["biases"]],
            input_offset=np.array(obj["input_scale"]["offset"], dtype=float),
            input_factor=np.array(obj["input_scale"]["factor"], dtype=float),
            seed=int(obj.get("seed", 0)),
            training_report=None if report is None else TrainingReport(**report),
        )


def _init_model(ds: Dataset, layer_sizes: list[int], activation: str, seed: int) -> AutoencoderModel:
    _validate_layers(layer_sizes)
    if layer_sizes[0] != ds.d:
        raise ModelError(
            f"first layer must match feature count {ds.d}, got {layer_sizes[0]}", code="bad_layers"
        )
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-limit, limit, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))

    lo = ds.values.min(axis=0)
    hi = ds.values.max(axis=0)
    offset = (lo + hi) / 2.0
    span = hi - lo
    factor = np.where(span > 0, 2.0 / np.where(span > 0, span, 1.0), 1.0)
    return AutoencoderModel(
        layer_sizes=list(layer_sizes),
        activation=activation,
        weights=weights,
        biases=biases,
        input_offset=offset,
        input_factor=factor,
        seed=seed,
    )


def _loss_and_grads(
    model: AutoencoderModel, scaled: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean squared reconstruction loss and its weight/bias gradients."""
    n_layers = len(model.weights)
    acts = [scaled]
    h = scaled
    for l in range(n_layers):
        h = model._act(h @ model.weights[l] + model.biases[l], l)
        acts.append(h)
    out = acts[-1]
    diff = out - scaled
    loss = float(np.mean(diff**2))

    grad_w: list[np.ndarray] = [np.empty(0)] * n_layers
    grad_b: list[np.ndarray] = [np.empty(0)] * n_layers
    delta = 2.0 * diff / diff.size  # dL/d(out), output layer linear
    for l in range(n_layers - 1, -1, -1):
        grad_w[l] = acts[l].T @ delta
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ model.weights[l].T
            if model.activation == "tanh":
                delta = delta * (1.0 - acts[l] ** 2)
    return loss, grad_w, grad_b


def train(
    ds: Dataset,
    layer_sizes: list[int],
    epochs: int = 500,
    batch: int = 32,
    learning_rate: float = 0.05,
    seed: int = 0,
    activation: str = "tanh",
) -> AutoencoderModel:
    """Mini-batch SGD; deterministic for a given seed. epochs=0 returns the
    untouched initialization."""
    if batch < 1 or batch > ds.n:
        raise ModelError(f"batch size {batch} must be in 1..{ds.n}", code="bad_hyperparams")
    if epochs < 0 or learning_rate <= 0:
        raise ModelError("epochs must be >= 0 and learning_rate > 0", code="bad_hyperparams")
    model = _init_model(ds, layer_sizes, activation, seed)
    scaled = model.scale_input(ds.values)
    initial_error = model.reconstruction_error(ds.values)

    rng = np.random.default_rng(seed + 1)  # shuffling stream, separate from init
    for epoch in range(epochs):
        order = rng.permutation(ds.n)
        for start in range(0, ds.n, batch):
            idx = order[start : start + batch]
            loss, grad_w, grad_b = _loss_and_grads(model, scaled[idx])
            if not np.isfinite(loss):
                raise ModelError(f"training diverged at epoch {epoch}", code="divergence")
            for l in range(len(model.weights)):
                model.weights[l] -= learning_rate * grad_w[l]
                model.biases[l] -= learning_rate * grad_b[l]

    final_error = model.reconstruction_error(ds.values)
    if not np.isfinite(final_error):
        raise ModelError(f"training diverged at epoch {epochs - 1}", code="divergence")
    model.training_report = TrainingReport(
        epochs=epochs,
        batch=batch,
        learning_rate=learning_rate,
        seed=seed,
        initial_error=initial_error,
        final_error=final_error,
    )
    return model


def gradient_check(
    model: AutoencoderModel,
    probe_count: int = 20,
    data: np.ndarray | None = None,
    seed: int = 0,
    step: float = 1e-5,
) -> float:
    """Max relative gap between analytic and central-difference gradients,
    probed on random weight entries."""
    rng = np.random.default_rng(seed)
    if data is None:
        data = rng.standard_normal((8, model.d))
    scaled = model.scale_input(np.asarray(data, dtype=float))

    _, grad_w, _ = _loss_and_grads(model, scaled)
    worst = 0.0
    for _ in range(probe_count):
        l = int(rng.integers(0, len(model.weights)))
        i = int(rng.integers(0, model.weights[l].shape[0]))
        j = int(rng.integers(0, model.weights[l].shape[1]))
        orig = model.weights[l][i, j]
        model.weights[l][i, j] = orig + step
        up, _, _ = _loss_and_grads(model, scaled)
        model.weights[l][i, j] = orig - step
        dn, _, _ = _loss_and_grads(model, scaled)
        model.weights[l][i, j] = orig
        numeric = (up - dn) / (2.0 * step)
        analytic = grad_w[l][i, j]
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-10)
        worst = max(worst, rel)
    return worst


# --- idx image container (big-endian, magic 0x803 images / 0x801 labels) ---


def read_idx(data: bytes) -> np.ndarray:
    """Parse an idx byte blob into a numpy array (uint8 payloads)."""
    if len(data) < 8:
        raise ModelError("idx blob too short", code="bad_idx")
    magic = struct.unpack(">I", data[:4])[0]
    if magic == 0x00000803:
        ndim = 3
    elif magic == 0x00000801:
        ndim = 1
    else:
        raise ModelError(f"unknown idx magic 0x{magic:08x}", code="bad_idx")
    dims = struct.unpack(f">{ndim}I", data[4 : 4 + 4 * ndim])
    expected = int(np.prod(dims))
    payload = np.frombuffer(data, dtype=np.uint8, offset=4 + 4 * ndim)
    if payload.size != expected:
        raise ModelError(
            f"idx payload has {payload.size} bytes, header promises {expected}", code="bad_idx"
        )
    return payload.reshape(dims).copy()


def images_to_dataset(images: np.ndarray, limit: int = 1000, prefix: str = "img") -> Dataset:
    """Flatten an (n, rows, cols) image stack into a Dataset of pixel columns."""
    if images.ndim != 3:
        raise ModelError(f"expected (n, rows, cols) images, got shape {images.shape}", code="bad_idx")
    n = min(limit, images.shape[0])
    flat = images[:n].reshape(n, -1).astype(float)
    row_ids = [f"{prefix}{i}" for i in range(n)]
    feature_names = [f"px{j}" for j in range(flat.shape[1])]
    return Dataset(row_ids, feature_names, flat)
