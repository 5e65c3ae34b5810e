"""Action-smoothness regularisers and the spectral smoothness metric.

Temporal term: distance between the actions a policy picks on consecutive
states. Spatial term: distance between the action on a state and the action
on a Gaussian-perturbed copy of it. Both use the Euclidean norm. The policy
objective becomes ``J - lambda_t * L_t - lambda_s * L_s``.

The smoothness score of a control signal is the amplitude-weighted mean
frequency of its single-sided spectrum, normalised by the Nyquist frequency::

    sm = 2 / (n * f_s) * sum_i M_i * f_i

over the ``n`` non-DC bins. Lower is smoother.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ConfigError, MetricError, ShapeError

# below this distance the norm's gradient is taken as diff / radius (finite at 0)
NORM_SMOOTHING_RADIUS = 1e-8


@dataclass(frozen=True)
class CapsConfig:
    lambda_t: float = 0.0
    lambda_s: float = 0.0
    sigma: float = 0.0
    perturbations_per_state: int = 1

    def __post_init__(self):
        for name in ("lambda_t", "lambda_s", "sigma"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be a finite non-negative number, got {value}")
        if self.perturbations_per_state < 1:
            raise ConfigError("perturbations_per_state must be >= 1")

    @property
    def is_vanilla(self) -> bool:
        return self.lambda_t == 0.0 and self.lambda_s == 0.0

    def masked(self, temporal: bool, spatial: bool) -> "CapsConfig":
        return CapsConfig(
            self.lambda_t if temporal else 0.0,
            self.lambda_s if spatial else 0.0,
            self.sigma,
            self.perturbations_per_state,
        )


def _distance(diff: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise Euclidean norm and its (smoothed-at-zero) gradient."""
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    grad = diff / np.maximum(d, NORM_SMOOTHING_RADIUS)[..., None]
    return d, grad


def temporal_loss(a_t, a_next) -> tuple[float, np.ndarray, np.ndarray]:
    """``||a_t - a_next||_2`` with gradients w.r.t. both arguments.

    For batches of shape ``(batch, dim)`` the loss is the batch mean.
    """
    a = np.asarray(a_t, dtype=np.float64)
    b = np.asarray(a_next, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"action shapes differ: {a.shape} vs {b.shape}")
    d, g = _distance(a - b)
    if a.ndim == 1:
        return float(d), g, -g
    batch = a.shape[0]
    return float(d.mean()), g / batch, -g / batch


def perturb_state(s, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Draw ``s + eps`` with ``eps ~ N(0, sigma^2 I)``."""
    if sigma < 0:
        raise ConfigError("sigma must be non-negative")
    s = np.asarray(s, dtype=np.float64)
    return s + sigma * rng.standard_normal(s.shape)


def spatial_loss(policy: nn.Mlp, s, cfg: CapsConfig, rng: np.random.Generator):
    """Mean ``||pi(s) - pi(s_bar)||`` over states and perturbation draws.

    Returns ``(loss, param_grads)``; gradients flow through both forward
    passes of ``policy``.
    """
    states = np.atleast_2d(np.asarray(s, dtype=np.float64))
    k = cfg.perturbations_per_state
    tiled = np.repeat(states, k, axis=0)
    perturbed = perturb_state(tiled, cfg.sigma, rng)
    out_clean, tape_clean = nn.forward(policy, tiled)
    out_pert, tape_pert = nn.forward(policy, perturbed)
    loss, g_clean, g_pert = temporal_loss(out_clean, out_pert)
    grads_clean, _ = nn.backward(policy, tape_clean, g_clean)
    grads_pert, _ = nn.backward(policy, tape_pert, g_pert)
    return loss, [a + b for a, b in zip(grads_clean, grads_pert)]


@dataclass
class CapsPenalty:
    """Weighted penalty terms on a batch, ready to add to a loss to minimise."""

    l_t: float
    l_s: float
    grad_s: np.ndarray
    grad_next: np.ndarray | None
    grad_bar: np.ndarray | None

    def value(self, cfg: CapsConfig) -> float:
        return cfg.lambda_t * self.l_t + cfg.lambda_s * self.l_s


def caps_penalty(a_s, a_next, a_bar, cfg: CapsConfig) -> CapsPenalty:
    """Gradients of ``lambda_t*L_t + lambda_s*L_s`` w.r.t. each action block.

    ``a_s`` holds the actions on the batch states (batch, dim). ``a_next`` the
    actions on their successors (or None when lambda_t is 0). ``a_bar`` the
    actions on perturbed copies, laid out as ``perturbations_per_state``
    consecutive rows per state (or None when lambda_s is 0).
    """
    grad_s = np.zeros_like(a_s)
    l_t = l_s = 0.0
    grad_next = grad_bar = None
    if a_next is not None and cfg.lambda_t > 0:
        l_t, g_a, g_b = temporal_loss(a_s, a_next)
        grad_s += cfg.lambda_t * g_a
        grad_next = cfg.lambda_t * g_b
    if a_bar is not None and cfg.lambda_s > 0:
        k = cfg.perturbations_per_state
        tiled = np.repeat(a_s, k, axis=0)
        l_s, g_a, g_b = temporal_loss(tiled, a_bar)
        grad_s += cfg.lambda_s * g_a.reshape(a_s.shape[0], k, -1).sum(axis=1)
        grad_bar = cfg.lambda_s * g_b
    return CapsPenalty(l_t, l_s, grad_s, grad_next, grad_bar)


def caps_objective(j, l_t, l_s, cfg: CapsConfig, j_grad=None, l_t_grad=None, l_s_grad=None):
    """Combine ``J - lambda_t*L_t - lambda_s*L_s`` and, if given, its gradient.

    Gradients are lists of arrays (e.g. per-parameter); missing terms count
    as zero. Returns ``(value, grad)`` with ``grad`` None when no gradients
    were supplied.
    """
    value = float(j) - cfg.lambda_t * float(l_t) - cfg.lambda_s * float(l_s)
    parts = [(1.0, j_grad), (-cfg.lambda_t, l_t_grad), (-cfg.lambda_s, l_s_grad)]
    parts = [(c, g) for c, g in parts if g is not None]
    if not parts:
        return value, None
    template = parts[0][1]
    grad = [np.zeros_like(np.asarray(g, dtype=np.float64)) for g in template]
    for coeff, g in parts:
        for acc, gi in zip(grad, g):
            acc += coeff * np.asarray(gi, dtype=np.float64)
    return value, grad


def _as_channels(signal) -> np.ndarray:
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise MetricError(f"signal must be 1-D or (samples, channels), got shape {x.shape}")
    if x.shape[0] < 2:
        raise MetricError("signal needs at least two samples")
    if not np.all(np.isfinite(x)):
        raise MetricError("signal contains non-finite values")
    return x


def amplitude_spectrum(signal, f_s: float, window: str | None = None):
    """Single-sided amplitude spectrum without the DC bin.

    Returns ``(amplitudes, frequencies)`` for bins ``k = 1 .. N//2`` at
    ``k * f_s / N``. A sinusoid of amplitude A on an exact bin reads A; the
    Nyquist bin of an even-length signal is scaled 1/N rather than 2/N so an
    alternating +-A sequence also reads A. Multi-channel input
    ``(samples, channels)`` gives amplitudes of shape ``(bins, channels)``.
    ``window="hann"`` applies a Hann window with coherent-gain correction.
    """
    if not f_s > 0:
        raise MetricError("sampling frequency must be positive")
    squeeze = np.ndim(signal) == 1
    x = _as_channels(signal)
    n_samples = x.shape[0]
    x = x - x.mean(axis=0)
    if window == "hann":
        w = np.hanning(n_samples)
        x = x * (w / w.mean())[:, None]
    elif window is not None:
        raise MetricError(f"unknown window {window!r}")
    spec = np.fft.rfft(x, axis=0)[1:]
    amps = np.abs(spec) * (2.0 / n_samples)
    if n_samples % 2 == 0:
        amps[-1] *= 0.5
    freqs = np.arange(1, n_samples // 2 + 1) * (f_s / n_samples)
    return (amps[:, 0] if squeeze else amps), freqs


@dataclass
class SmoothnessReport:
    f_s: float
    n: int
    frequencies: np.ndarray
    amplitudes: np.ndarray  # (n,) or (n, channels)
    channel_sm: list[float]
    sm: float
    channel_names: list[str] = field(default_factory=list)

    def names(self) -> list[str]:
        if self.channel_names:
            return list(self.channel_names)
        return [f"ch{i}" for i in range(len(self.channel_sm))]

    def to_csv(self) -> str:
        amps = self.amplitudes.reshape(self.n, -1)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["freq"] + self.names())
        for f, row in zip(self.frequencies, amps):
            writer.writerow([repr(float(f))] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "f_s": self.f_s,
            "n": self.n,
            "channels": dict(zip(self.names(), self.channel_sm)),
            "mean_sm": self.sm,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def smoothness(signal, f_s: float, window: str | None = None, channel_names=None) -> SmoothnessReport:
    """Smoothness score per channel and its mean across channels."""
    amps, freqs = amplitude_spectrum(signal, f_s, window)
    n = freqs.size
    per_channel = (2.0 / (n * f_s)) * (freqs @ amps.reshape(n, -1))
    channel_sm = [float(v) for v in per_channel]
    return SmoothnessReport(
        f_s=float(f_s),
        n=n,
        frequencies=freqs,
        amplitudes=amps,
        channel_sm=channel_sm,
        sm=float(np.mean(per_channel)),
        channel_names=list(channel_names or []),
    )
