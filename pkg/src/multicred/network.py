"""From-scratch dense network machinery on numpy.

Supported layer kinds: dense, batchnorm, dropout, relu, softmax. The
loss is implied by the final layer: softmax ends a categorical
cross-entropy classifier, anything else trains against mean squared
error. All randomness (initialization, dropout masks) flows through
explicitly passed numpy generators, so identical seeds give identical
parameters.

Conventions fixed here:
 - inverted dropout: masks scale by 1/(1-rate) at train time, inference
   is the identity;
 - batchnorm normalizes with biased batch statistics in train mode and
   running statistics in inference mode; running statistics are
   non-trainable and receive no gradient;
 - dense weights initialize from N(0, 2/fan_in), biases at zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .domain import DomainError

FORMAT_VERSION = 1

TRAIN = "train"
INFERENCE = "inference"

_LOG_CLAMP = 1e-12  # floors probabilities inside log so a confident miss stays finite

_KINDS = ("dense", "batchnorm", "dropout", "relu", "softmax")


class ShapeError(ValueError):
    """An array dimension does not match the layer graph."""


class StateError(RuntimeError):
    """An operation ran against stale or inconsistent model state."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where the math requires finite ones."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    input_dim: int
    output_dim: int
    dropout_rate: float = 0.0
    momentum: float = 0.99
    epsilon: float = 1e-3

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown layer kind: {self.kind!r}")
        if self.input_dim < 1 or self.output_dim < 1:
            raise DomainError(f"{self.kind} dimensions must be >= 1")
        if self.kind != "dense" and self.input_dim != self.output_dim:
            raise DomainError(f"{self.kind} cannot change dimension")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise DomainError("dropout_rate must lie in [0, 1)")


def dense(input_dim: int, output_dim: int) -> LayerSpec:
    return LayerSpec("dense", input_dim, output_dim)


def batchnorm(dim: int, momentum: float = 0.99, epsilon: float = 1e-3) -> LayerSpec:
    return LayerSpec("batchnorm", dim, dim, momentum=momentum, epsilon=epsilon)


def dropout(dim: int, rate: float = 0.3) -> LayerSpec:
    return LayerSpec("dropout", dim, dim, dropout_rate=rate)


def relu(dim: int) -> LayerSpec:
    return LayerSpec("relu", dim, dim)


def softmax(dim: int) -> LayerSpec:
    return LayerSpec("softmax", dim, dim)


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if not isinstance(self.layers, tuple):
            object.__setattr__(self, "layers", tuple(self.layers))
        for i in range(1, len(self.layers)):
            prev, cur = self.layers[i - 1], self.layers[i]
            if prev.output_dim != cur.input_dim:
                raise DomainError(
                    f"layer {i} expects input {cur.input_dim}, "
                    f"layer {i - 1} produces {prev.output_dim}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim


def count_params(spec: NetworkSpec) -> tuple[int, int]:
    """Total and trainable parameter counts for a layer graph.

    Dense: in*out weights plus out biases, all trainable. Batchnorm:
    scale and shift are trainable, the running mean/variance pair is not.
    """
    total = trainable = 0
    for layer in spec.layers:
        if layer.kind == "dense":
            n = layer.input_dim * layer.output_dim + layer.output_dim
            total += n
            trainable += n
        elif layer.kind == "batchnorm":
            total += 4 * layer.output_dim
            trainable += 2 * layer.output_dim
    return total, trainable


class Model:
    """A layer graph plus its parameters, running statistics, and mode."""

    def __init__(self, spec: NetworkSpec, rng: Optional[np.random.Generator] = None):
        self.spec = spec
        self.mode = TRAIN
        self.params: list[dict[str, np.ndarray]] = []
        self.running: list[Optional[dict[str, np.ndarray]]] = []
        self._version = 0
        rng = rng if rng is not None else np.random.default_rng(0)
        for layer in spec.layers:
            if layer.kind == "dense":
                std = np.sqrt(2.0 / layer.input_dim)
                self.params.append({
                    "weight": rng.normal(0.0, std, size=(layer.input_dim, layer.output_dim)),
                    "bias": np.zeros(layer.output_dim),
                })
                self.running.append(None)
            elif layer.kind == "batchnorm":
                self.params.append({
                    "scale": np.ones(layer.output_dim),
                    "shift": np.zeros(layer.output_dim),
                })
                self.running.append({
                    "mean": np.zeros(layer.output_dim),
                    "var": np.ones(layer.output_dim),
                })
            else:
                self.params.append({})
                self.running.append(None)

    def train_mode(self) -> "Model":
        self.mode = TRAIN
        return self

    def inference_mode(self) -> "Model":
        self.mode = INFERENCE
        return self

    def copy_params(self) -> list[dict[str, np.ndarray]]:
        return [{k: v.copy() for k, v in p.items()} for p in self.params]

    def load_params(self, params: list[dict[str, np.ndarray]]) -> None:
        for own, new in zip(self.params, params):
            for key in own:
                own[key][...] = new[key]
        self._version += 1

    def copy_running(self) -> list[Optional[dict[str, np.ndarray]]]:
        return [None if r is None else {k: v.copy() for k, v in r.items()} for r in self.running]

    def load_running(self, running: list[Optional[dict[str, np.ndarray]]]) -> None:
        for own, new in zip(self.running, running):
            if own is not None:
                for key in own:
                    own[key][...] = new[key]


@dataclass
class ForwardPass:
    """Per-layer activations and caches from one forward call."""

    model: Model
    mode: str
    version: int
    batch_shape: tuple[int, int]
    inputs: np.ndarray
    layer_outputs: list[np.ndarray]
    caches: list[dict]

    @property
    def outputs(self) -> np.ndarray:
        return self.layer_outputs[-1]


@dataclass(frozen=True)
class LossValue:
    """A batch loss: the mean scalar plus the per-sample values."""

    scalar: float
    per_sample: np.ndarray


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(
    model: Model, inputs: np.ndarray, rng: Optional[np.random.Generator] = None
) -> ForwardPass:
    """Run the network, caching what backward needs.

    Train mode draws fresh dropout masks from ``rng`` and normalizes with
    batch statistics (updating the running ones); inference mode is
    deterministic and ignores ``rng``.
    """
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.spec.input_dim:
        raise ShapeError(
            f"layer 0 expects width {model.spec.input_dim}, got {x.shape[1]}"
        )

    train = model.mode == TRAIN
    outputs: list[np.ndarray] = []
    caches: list[dict] = []
    original = x
    for i, layer in enumerate(model.spec.layers):
        if x.shape[1] != layer.input_dim:
            raise ShapeError(f"layer {i} expects width {layer.input_dim}, got {x.shape[1]}")
        params = model.params[i]
        cache: dict = {}
        if layer.kind == "dense":
            cache["x"] = x
            x = x @ params["weight"] + params["bias"]
        elif layer.kind == "relu":
            cache["z"] = x
            x = np.maximum(x, 0.0)
        elif layer.kind == "softmax":
            x = _softmax_rows(x)
            cache["probs"] = x
        elif layer.kind == "dropout":
            if train and layer.dropout_rate > 0.0:
                if rng is None:
                    raise StateError(f"layer {i}: dropout in train mode needs an rng")
                keep = 1.0 - layer.dropout_rate
                mask = (rng.random(x.shape) < keep) / keep
                cache["mask"] = mask
                x = x * mask
            # inference (or rate 0): identity, inverted scaling already paid at train time
        elif layer.kind == "batchnorm":
            stats = model.running[i]
            if train:
                mu = x.mean(axis=0)
                var = x.var(axis=0)
                inv_std = 1.0 / np.sqrt(var + layer.epsilon)
                x_hat = (x - mu) * inv_std
                cache.update(x=x, mu=mu, var=var, inv_std=inv_std, x_hat=x_hat)
                m = layer.momentum
                stats["mean"][...] = m * stats["mean"] + (1.0 - m) * mu
                stats["var"][...] = m * stats["var"] + (1.0 - m) * var
            else:
                x_hat = (x - stats["mean"]) / np.sqrt(stats["var"] + layer.epsilon)
            x = params["scale"] * x_hat + params["shift"]
        outputs.append(x)
        caches.append(cache)

    return ForwardPass(
        model=model,
        mode=model.mode,
        version=model._version,
        batch_shape=original.shape,
        inputs=original,
        layer_outputs=outputs,
        caches=caches,
    )


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> LossValue:
    """Categorical cross-entropy of predicted rows against one-hot targets.

    Per-sample loss is -sum_c y_c log(max(p_c, 1e-12)); the scalar is the
    batch mean.
    """
    p = np.asarray(probs, dtype=float)
    y = np.asarray(targets, dtype=float)
    if p.shape != y.shape:
        raise ShapeError(f"probs shape {p.shape} != targets shape {y.shape}")
    if not np.all(np.isfinite(p)):
        raise NumericError("probabilities contain non-finite values")
    if not np.allclose(p.sum(axis=1), 1.0, atol=1e-6):
        raise DomainError("probability rows must sum to 1")
    per_sample = -(y * np.log(np.maximum(p, _LOG_CLAMP))).sum(axis=1)
    return LossValue(scalar=float(per_sample.mean()), per_sample=per_sample)


def mean_squared_error(outputs: np.ndarray, targets: np.ndarray) -> LossValue:
    """Squared Euclidean distance per sample, averaged over the batch."""
    o = np.asarray(outputs, dtype=float)
    t = np.asarray(targets, dtype=float)
    if o.shape != t.shape:
        raise ShapeError(f"outputs shape {o.shape} != targets shape {t.shape}")
    per_sample = ((o - t) ** 2).sum(axis=1)
    return LossValue(scalar=float(per_sample.mean()), per_sample=per_sample)


def loss_for(model: Model, activations: ForwardPass, targets: np.ndarray) -> LossValue:
    """The loss the network trains against: CE after softmax, else MSE."""
    if model.spec.layers[-1].kind == "softmax":
        return cross_entropy(activations.outputs, targets)
    return mean_squared_error(activations.outputs, targets)


def backward(
    model: Model, activations: ForwardPass, targets: np.ndarray
) -> list[dict[str, np.ndarray]]:
    """Backpropagate the implied loss; returns per-layer parameter gradients.

    Requires activations from a train-mode forward on this exact model
    state; running statistics receive no gradient.
    """
    if activations.model is not model:
        raise StateError("activations came from a different model")
    if activations.mode != TRAIN:
        raise StateError("backward needs activations from a train-mode forward")
    if activations.version != model._version:
        raise StateError("activations are stale: parameters changed since forward")
    y = np.asarray(targets, dtype=float)
    if y.shape != activations.outputs.shape:
        raise ShapeError(
            f"targets shape {y.shape} != outputs shape {activations.outputs.shape}"
        )

    batch = activations.batch_shape[0]
    layers = model.spec.layers
    grads: list[dict[str, np.ndarray]] = [{} for _ in layers]

    last = len(layers) - 1
    if layers[last].kind == "softmax":
        # Combined softmax + cross-entropy gradient w.r.t. the logits.
        delta = (activations.caches[last]["probs"] - y) / batch
        start = last - 1
    else:
        delta = 2.0 * (activations.outputs - y) / batch
        start = last

    for i in range(start, -1, -1):
        layer = layers[i]
        cache = activations.caches[i]
        if layer.kind == "dense":
            x = cache["x"]
            grads[i]["weight"] = x.T @ delta
            grads[i]["bias"] = delta.sum(axis=0)
            delta = delta @ model.params[i]["weight"].T
        elif layer.kind == "relu":
            delta = delta * (cache["z"] > 0.0)
        elif layer.kind == "dropout":
            if "mask" in cache:
                delta = delta * cache["mask"]
        elif layer.kind == "batchnorm":
            x_hat, inv_std = cache["x_hat"], cache["inv_std"]
            x, mu = cache["x"], cache["mu"]
            n = x.shape[0]
            grads[i]["scale"] = (delta * x_hat).sum(axis=0)
            grads[i]["shift"] = delta.sum(axis=0)
            dx_hat = delta * model.params[i]["scale"]
            dvar = (dx_hat * (x - mu)).sum(axis=0) * (-0.5) * inv_std**3
            dmu = (-dx_hat * inv_std).sum(axis=0) + dvar * (-2.0 * (x - mu)).sum(axis=0) / n
            delta = dx_hat * inv_std + dvar * 2.0 * (x - mu) / n + dmu / n
        elif layer.kind == "softmax":
            raise StateError("softmax is only supported as the final layer")

    return grads


@dataclass
class AdamState:
    """First and second moment estimates plus the shared step counter."""

    m: list[dict[str, np.ndarray]]
    v: list[dict[str, np.ndarray]]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(model: Model, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    zeros = lambda: [{k: np.zeros_like(a) for k, a in p.items()} for p in model.params]
    return AdamState(m=zeros(), v=zeros(), beta1=beta1, beta2=beta2, eps=eps)


def adam_step(
    model: Model, grads: list[dict[str, np.ndarray]], state: AdamState, lr: float
) -> tuple[Model, AdamState]:
    """One bias-corrected Adam update, in place, incrementing the step count."""
    if lr <= 0.0:
        raise DomainError(f"learning rate must be positive, got {lr}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for i, layer_grads in enumerate(grads):
        for key, g in layer_grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for layer {i} parameter {key!r}")
            m = state.m[i][key]
            v = state.v[i][key]
            m[...] = b1 * m + (1.0 - b1) * g
            v[...] = b2 * v + (1.0 - b2) * g**2
            m_hat = m / (1.0 - b1**state.t)
            v_hat = v / (1.0 - b2**state.t)
            model.params[i][key] -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    model._version += 1
    return model, state


def lr_at(epoch: int, initial: float = 0.01, decay: float = 0.9) -> float:
    """Per-epoch staircase schedule: initial * decay**epoch."""
    if epoch < 0:
        raise DomainError(f"epoch must be nonnegative, got {epoch}")
    return initial * decay**epoch


def grad_check(
    model: Model, batch: tuple[np.ndarray, np.ndarray], eps: float = 1e-5
) -> float:
    """Max relative error between analytic and central-difference gradients.

    A verification oracle for small networks: perturbs every parameter by
    +/- eps and compares (L(t+eps)-L(t-eps))/(2 eps) against backward's
    output. Dropout must be disabled and eps must lie in [1e-6, 1e-4].
    """
    if not 1e-6 <= eps <= 1e-4:
        raise DomainError(f"eps must lie in [1e-6, 1e-4], got {eps}")
    total, _ = count_params(model.spec)
    if total > 10_000:
        raise DomainError(f"model too large for finite differences: {total} parameters")
    if any(l.kind == "dropout" and l.dropout_rate > 0.0 for l in model.spec.layers):
        raise DomainError("disable dropout before gradient checking")

    inputs, targets = batch
    saved_mode = model.mode
    saved_running = model.copy_running()
    model.train_mode()
    try:
        activations = forward(model, inputs)
        analytic = backward(model, activations, targets)

        def loss_now() -> float:
            return loss_for(model, forward(model, inputs), targets).scalar

        worst = 0.0
        for i, layer_grads in enumerate(analytic):
            for key, grad in layer_grads.items():
                param = model.params[i][key]
                it = np.nditer(param, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    orig = param[idx]
                    param[idx] = orig + eps
                    plus = loss_now()
                    param[idx] = orig - eps
                    minus = loss_now()
                    param[idx] = orig
                    numeric = (plus - minus) / (2.0 * eps)
                    a = float(grad[idx])
                    rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                    worst = max(worst, rel)
        return worst
    finally:
        model.load_running(saved_running)
        model.mode = saved_mode


def spec_to_json(spec: NetworkSpec) -> list[dict]:
    out = []
    for layer in spec.layers:
        entry = {"kind": layer.kind, "input_dim": layer.input_dim,
                 "output_dim": layer.output_dim}
        if layer.kind == "dropout":
            entry["dropout_rate"] = layer.dropout_rate
        if layer.kind == "batchnorm":
            entry["momentum"] = layer.momentum
            entry["epsilon"] = layer.epsilon
        out.append(entry)
    return out


def spec_from_json(data: Sequence[dict]) -> NetworkSpec:
    layers = []
    for entry in data:
        layers.append(LayerSpec(
            kind=entry["kind"],
            input_dim=entry["input_dim"],
            output_dim=entry["output_dim"],
            dropout_rate=entry.get("dropout_rate", 0.0),
            momentum=entry.get("momentum", 0.99),
            epsilon=entry.get("epsilon", 1e-3),
        ))
    return NetworkSpec(tuple(layers))


def model_to_dict(model: Model, artifact_kind: str) -> dict:
    """Serialize to the versioned JSON document format.

    Parameter arrays are flattened row-major; ``artifact_kind`` tags what
    the network is (e.g. "classifier" vs "autoencoder") so artifacts
    cannot be loaded into the wrong slot.
    """
    return {
        "format_version": FORMAT_VERSION,
        "artifact_kind": artifact_kind,
        "layers": spec_to_json(model.spec),
        "parameters": [
            {k: v.ravel(order="C").tolist() for k, v in p.items()} for p in model.params
        ],
        "running_stats": [
            None if r is None else {k: v.tolist() for k, v in r.items()}
            for r in model.running
        ],
    }


def model_from_dict(data: dict, expected_kind: Optional[str] = None) -> Model:
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise StateError(
            f"unsupported model format version {version!r}, expected {FORMAT_VERSION}"
        )
    kind = data.get("artifact_kind")
    if expected_kind is not None and kind != expected_kind:
        raise StateError(f"artifact kind {kind!r} where {expected_kind!r} was expected")

    spec = spec_from_json(data["layers"])
    model = Model(spec, rng=np.random.default_rng(0))
    for i, layer in enumerate(spec.layers):
        stored = data["parameters"][i]
        for key, arr in model.params[i].items():
            flat = np.asarray(stored[key], dtype=float)
            if flat.size != arr.size:
                raise ShapeError(f"layer {i} parameter {key!r} has {flat.size} values, "
                                 f"expected {arr.size}")
            arr[...] = flat.reshape(arr.shape, order="C")
        if model.running[i] is not None:
            stats = data["running_stats"][i]
            model.running[i]["mean"][...] = np.asarray(stats["mean"], dtype=float)
            model.running[i]["var"][...] = np.asarray(stats["var"], dtype=float)
    model.inference_mode()
    return model


def save_model(model: Model, path: str | Path, artifact_kind: str) -> None:
    Path(path).write_text(
        json.dumps(model_to_dict(model, artifact_kind), sort_keys=True), "utf-8"
    )


def load_model(path: str | Path, expected_kind: Optional[str] = None) -> Model:
    return model_from_dict(json.loads(Path(path).read_text("utf-8")), expected_kind)
