"""Small dense networks with explicit reverse-mode gradients and Adam.

Parameters are stored as float64 numpy arrays. ``forward`` returns the output
together with a :class:`GradientTape` holding the per-layer activations;
``backward`` consumes that tape to produce parameter and input gradients.
Everything works on a single vector ``(in,)`` or a batch ``(batch, in)``.
Parameter gradients are summed over the batch.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError, TrainingError, UsageError

HIDDEN_ACTIVATIONS = ("tanh", "relu")
OUTPUT_ACTIVATIONS = ("identity", "tanh")
CHECKPOINT_FORMAT = "capslab-mlp"
CHECKPOINT_VERSION = 1


@dataclass(eq=False)
class Mlp:
    layer_sizes: list[int]
    weights: list[np.ndarray]  # weights[i] has shape (layer_sizes[i+1], layer_sizes[i])
    biases: list[np.ndarray]
    hidden_activation: str = "tanh"
    output_activation: str = "identity"
    # bumped on every in-place parameter change; tapes from older versions are stale
    version: int = field(default=0, repr=False)

    @property
    def in_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_size(self) -> int:
        return self.layer_sizes[-1]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in the order ``[W0, b0, W1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.output_activation,
        )

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)[0]


@dataclass(eq=False)
class GradientTape:
    """Activations cached by one forward pass."""

    net: Mlp
    version: int
    inputs: list[np.ndarray]
    outputs: list[np.ndarray]
    squeeze: bool


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray], **hyper) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **hyper,
        )

    def apply(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """In-place bias-corrected Adam update of ``params``."""
        if len(params) != len(self.m) or len(grads) != len(params):
            raise ShapeError("optimizer state does not match the parameter list")
        self.step += 1
        c1 = 1.0 - self.beta1**self.step
        c2 = 1.0 - self.beta2**self.step
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init(
    layer_sizes,
    hidden_activation: str = "tanh",
    output_activation: str = "identity",
    seed: int | np.random.Generator = 0,
) -> Mlp:
    """Glorot-uniform weights, zero biases, deterministic for a given seed."""
    sizes = [int(n) for n in layer_sizes]
    if len(sizes) < 2 or any(n <= 0 for n in sizes):
        raise ConfigError(f"need at least two positive layer sizes, got {list(layer_sizes)}")
    if hidden_activation not in HIDDEN_ACTIVATIONS:
        raise ConfigError(f"unknown hidden activation {hidden_activation!r}")
    if output_activation not in OUTPUT_ACTIVATIONS:
        raise ConfigError(f"unknown output activation {output_activation!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights = [_glorot(rng, a, b) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    return Mlp(sizes, weights, biases, hidden_activation, output_activation)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(y: np.ndarray, kind: str) -> np.ndarray | None:
    # derivative written in terms of the activation output
    if kind == "tanh":
        return 1.0 - y * y
    if kind == "relu":
        return (y > 0.0).astype(y.dtype)
    return None


def forward(net: Mlp, x) -> tuple[np.ndarray, GradientTape]:
    h = np.asarray(x, dtype=np.float64)
    squeeze = h.ndim == 1
    if squeeze:
        h = h[None, :]
    if h.ndim != 2 or h.shape[1] != net.in_size:
        raise ShapeError(f"expected input of size {net.in_size}, got shape {np.shape(x)}")
    inputs, outputs = [], []
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        kind = net.output_activation if i == last else net.hidden_activation
        h = _activate(h @ w.T + b, kind)
        outputs.append(h)
    tape = GradientTape(net, net.version, inputs, outputs, squeeze)
    return (h[0] if squeeze else h), tape


def backward(net: Mlp, tape: GradientTape, output_grad) -> tuple[list[np.ndarray], np.ndarray]:
    """Chain rule through the cached pass.

    Returns parameter gradients ordered like :meth:`Mlp.params` and the
    gradient with respect to the input (same leading shape as the input).
    """
    if tape.net is not net or tape.version != net.version:
        raise UsageError("gradient tape does not belong to the current state of this network")
    g = np.asarray(output_grad, dtype=np.float64)
    if tape.squeeze:
        g = g[None, :] if g.ndim == 1 else g
    if g.shape != tape.outputs[-1].shape:
        raise ShapeError(f"output gradient shape {np.shape(output_grad)} does not match output")
    last = len(net.weights) - 1
    grads: list[np.ndarray] = [None] * (2 * len(net.weights))  # type: ignore[list-item]
    d = _activation_grad(tape.outputs[-1], net.output_activation)
    delta = g if d is None else g * d
    for i in range(last, -1, -1):
        grads[2 * i] = delta.T @ tape.inputs[i]
        grads[2 * i + 1] = delta.sum(axis=0)
        delta_in = delta @ net.weights[i]
        if i > 0:
            delta = delta_in * _activation_grad(tape.outputs[i - 1], net.hidden_activation)
    return grads, (delta_in[0] if tape.squeeze else delta_in)


def global_norm(grads: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_by_global_norm(grads: list[np.ndarray], max_norm: float) -> list[np.ndarray]:
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return [g * scale for g in grads]


def check_finite(grads: list[np.ndarray]) -> None:
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in layer {i // 2}", layer=i // 2)


def adam_step(
    net: Mlp,
    state: AdamState,
    param_grads: list[np.ndarray],
    max_norm: float | None = None,
) -> tuple[Mlp, AdamState]:
    """Apply one Adam update to ``net`` in place (and return both)."""
    check_finite(param_grads)
    if max_norm is not None:
        param_grads = clip_by_global_norm(param_grads, max_norm)
    state.apply(net.params(), param_grads)
    net.version += 1
    return net, state


def adam_for(net: Mlp, lr: float = 1e-3, **hyper) -> AdamState:
    return AdamState.for_params(net.params(), lr=lr, **hyper)


def soft_update(target: Mlp, source: Mlp, rho: float) -> None:
    """target <- rho * target + (1 - rho) * source, in place."""
    for t, s in zip(target.params(), source.params()):
        t *= rho
        t += (1.0 - rho) * s
    target.version += 1


def to_dict(net: Mlp) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(net.layer_sizes),
        "hidden_activation": net.hidden_activation,
        "output_activation": net.output_activation,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def from_dict(data: dict) -> Mlp:
    if data.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError("not a network checkpoint")
    if data.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {data.get('version')}")
    sizes = [int(n) for n in data["layer_sizes"]]
    weights = [np.array(w, dtype=np.float64).reshape(b, a) for w, a, b in zip(data["weights"], sizes[:-1], sizes[1:])]
    biases = [np.array(b, dtype=np.float64).reshape(n) for b, n in zip(data["biases"], sizes[1:])]
    return Mlp(sizes, weights, biases, data["hidden_activation"], data["output_activation"])


def save(net: Mlp, path) -> None:
    # json floats round-trip exactly through repr
    Path(path).write_text(json.dumps(to_dict(net)))


def load(path) -> Mlp:
    return from_dict(json.loads(Path(path).read_text()))
