"""Self-contained math kernels: LR scheduler, Adam step, BCE, mel centroid,
guided-backprop gating, Score-CAM combination, and filter-pruning salience.

All functions are pure and operate on plain numpy arrays. Filter banks and
response matrices can be exchanged through a small binary array container
(magic "SEBF", u32 rank, u32 dims, float64 little-endian, row-major).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DegenerateFilter,
    EmptyMaps,
    ParseError,
    ShapeError,
)

BCE_EPS = 1e-7
SV_REL_TOL = 1e-3


@dataclass
class SchedulerConfig:
    """Cyclic cosine-annealing schedule with linear warm-up.

    One cycle spans T_cycle steps: the learning rate climbs linearly from
    eta_init to eta_max over the first T_warmup steps, then follows a half
    cosine from eta_max down to eta_min over the remaining steps, and the
    cycle restarts.
    """

    eta_init: float
    eta_max: float
    eta_min: float
    t_cycle: int
    t_warmup: int = 0

    def __post_init__(self):
        if min(self.eta_init, self.eta_max, self.eta_min) <= 0:
            raise ConfigError("learning rates must be positive")
        if not self.eta_min <= self.eta_init <= self.eta_max:
            raise ConfigError("need eta_min <= eta_init <= eta_max")
        if self.t_cycle < 1:
            raise ConfigError("t_cycle must be positive")
        if not 0 <= self.t_warmup < self.t_cycle:
            raise ConfigError("need 0 <= t_warmup < t_cycle")


def lr_at_step(cfg: SchedulerConfig, t: int) -> float:
    """Learning rate at integer step t (cycle-periodic in t)."""
    if t < 0:
        raise ConfigError("step index must be >= 0")
    t_cycle = t % cfg.t_cycle
    if t_cycle <= cfg.t_warmup:
        if cfg.t_warmup == 0:
            return cfg.eta_init
        return cfg.eta_init + (t_cycle / cfg.t_warmup) * (cfg.eta_max - cfg.eta_init)
    frac = (t_cycle - cfg.t_warmup) / (cfg.t_cycle - cfg.t_warmup)
    return cfg.eta_min + 0.5 * (cfg.eta_max - cfg.eta_min) * (1.0 + math.cos(math.pi * frac))


@dataclass
class AdamState:
    """Adam optimizer state; adam_step returns a new state per update."""

    theta: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-6

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.m = np.asarray(self.m, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if not (self.theta.shape == self.m.shape == self.v.shape):
            raise ShapeError("theta, m, v must share one shape")

    @classmethod
    def init(cls, theta, **kwargs) -> "AdamState":
        theta = np.asarray(theta, dtype=np.float64)
        return cls(theta=theta, m=np.zeros_like(theta), v=np.zeros_like(theta), **kwargs)


def adam_step(state: AdamState, grad, eta: float) -> AdamState:
    """One decoupled-weight-decay Adam update at learning rate eta.

    g = grad + weight_decay * theta feeds exponential first/second moment
    estimates; bias-corrected estimates drive
    theta <- theta - eta * m_hat / (sqrt(v_hat) + eps).
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.theta.shape:
        raise ShapeError(f"grad shape {grad.shape} != theta shape {state.theta.shape}")
    t = state.t + 1
    g = grad + state.weight_decay * state.theta
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    theta = state.theta - eta * m_hat / (np.sqrt(v_hat) + state.eps)
    return AdamState(theta=theta, m=m, v=v, t=t, beta1=state.beta1,
                     beta2=state.beta2, eps=state.eps, weight_decay=state.weight_decay)


def bce_loss(p: float, y: int) -> float:
    """Binary cross-entropy -[y ln p + (1-y) ln(1-p)], p clamped away from {0,1}."""
    if y not in (0, 1):
        raise ValueError("y must be 0 or 1")
    p = min(max(float(p), BCE_EPS), 1.0 - BCE_EPS)
    return -(y * math.log(p) + (1 - y) * math.log(1.0 - p))


@dataclass
class MelFilter:
    """One spectral filter: weights over frequency bins with bin centers in Hz."""

    weights: np.ndarray
    center_freqs_hz: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.center_freqs_hz = np.asarray(self.center_freqs_hz, dtype=np.float64)
        if self.weights.shape != self.center_freqs_hz.shape:
            raise ShapeError("weights and center_freqs_hz must have equal length")


def mel_centroid(filt: MelFilter) -> float:
    """Weight-averaged center frequency of one filter, in Hz."""
    total = float(np.sum(filt.weights))
    if total == 0.0:
        raise DegenerateFilter("filter weights sum to zero")
    return float(np.sum(filt.center_freqs_hz * filt.weights) / total)


def guided_backprop_gate(x, delta_in) -> np.ndarray:
    """Backward ReLU gate keeping only positive gradients at positive inputs."""
    x = np.asarray(x, dtype=np.float64)
    delta_in = np.asarray(delta_in, dtype=np.float64)
    if x.shape != delta_in.shape:
        raise ShapeError(f"x shape {x.shape} != delta shape {delta_in.shape}")
    return delta_in * (x > 0) * (delta_in > 0)


def upsample_bilinear(arr, out_shape: tuple[int, int]) -> np.ndarray:
    """Separable linear interpolation onto out_shape (endpoints aligned)."""
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape
    out_h, out_w = out_shape
    rows = np.linspace(0.0, h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    cols = np.linspace(0.0, w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    tmp = np.empty((h, out_w))
    for i in range(h):
        tmp[i] = np.interp(cols, np.arange(w), arr[i])
    out = np.empty((out_h, out_w))
    for j in range(out_w):
        out[:, j] = np.interp(rows, np.arange(h), tmp[:, j])
    return out


def _min_max_normalize(arr: np.ndarray) -> np.ndarray:
    lo = arr.min()
    hi = arr.max()
    if hi == lo:
        return np.zeros_like(arr)  # constant maps carry no spatial signal
    return (arr - lo) / (hi - lo)


def score_cam(maps, input_map, score_fn):
    """Gradient-free class activation map from masked-input scores.

    Each activation map is bilinearly upsampled to the input shape and
    min-max normalized; the input masked by each map is scored by
    ``score_fn`` and a softmax over those scores weights the normalized
    maps into the final CAM. Returns (cam, weights).
    """
    maps = [np.asarray(m, dtype=np.float64) for m in maps]
    if len(maps) == 0:
        raise EmptyMaps("need at least one activation map")
    input_map = np.asarray(input_map, dtype=np.float64)
    ups = [_min_max_normalize(upsample_bilinear(m, input_map.shape)) for m in maps]
    scores = np.array([float(score_fn(input_map * a)) for a in ups])
    shifted = np.exp(scores - scores.max())
    weights = shifted / shifted.sum()
    cam = np.zeros_like(input_map)
    for alpha, a in zip(weights, ups):
        cam += alpha * a
    return cam, weights


@dataclass
class FilterBank:
    """Convolutional filter bank [n_filters, in_channels, k_h, k_w]."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 4:
            raise ShapeError("filter bank must be 4-D")
        n, c, kh, kw = self.weights.shape
        if min(n, c, kh, kw) < 1:
            raise ShapeError("all filter-bank dimensions must be >= 1")


def operator_norm_salience(bank: FilterBank) -> np.ndarray:
    """Data-free per-filter salience from channel-wise SVD.

    For each input channel, rows of V are the vectorized filter slices;
    after V = U S Vt the singular values are normalized to sum 1 and each
    filter accumulates sum_j s_hat_j * |U_ij| across channels. Scores are
    non-negative and invariant to global positive scaling of the weights.
    """
    n, c, kh, kw = bank.weights.shape
    salience = np.zeros(n)
    for ch in range(c):
        v = bank.weights[:, ch].reshape(n, kh * kw)
        u, s, _ = np.linalg.svd(v, full_matrices=False)
        total = s.sum()
        if total == 0.0:
            continue  # all-zero channel contributes nothing
        s_hat = s / total
        salience += np.abs(u) @ s_hat
    return salience


@dataclass
class ResponseMatrix:
    """Per-filter activation matrix [examples x features], column Z-scored."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.size == 0:
            raise ShapeError("response matrix must be non-empty and 2-D")

    @classmethod
    def from_responses(cls, raw) -> "ResponseMatrix":
        """Z-score raw responses column-wise (constant columns become zero)."""
        raw = np.asarray(raw, dtype=np.float64)
        mean = raw.mean(axis=0)
        std = raw.std(axis=0)
        std_safe = np.where(std > 0, std, 1.0)
        return cls((raw - mean) / std_safe)


def significant_sv_count(resp, rel_tol: float = SV_REL_TOL) -> int:
    """Number of singular values above rel_tol * sigma_max (numerical rank)."""
    values = resp.values if isinstance(resp, ResponseMatrix) else np.asarray(resp, dtype=np.float64)
    if values.size == 0:
        raise ShapeError("response matrix must be non-empty")
    s = np.linalg.svd(values, compute_uv=False)
    if len(s) == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def prune_mask(scores, keep_fraction: float) -> np.ndarray:
    """Boolean keep-mask for the ceil(keep_fraction * n) highest saliences.

    Ties break toward the lower filter index.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("scores must be non-empty")
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    n = len(scores)
    k = int(math.ceil(keep_fraction * n))
    order = np.argsort(-scores, kind="stable")
    mask = np.zeros(n, dtype=bool)
    mask[order[:k]] = True
    return mask


SEBF_MAGIC = b"SEBF"


def write_sebf(arr, path) -> None:
    """Write an array in the portable binary container (f64 LE, row-major)."""
    arr = np.asarray(arr, dtype=np.float64)
    header = SEBF_MAGIC + struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + np.ascontiguousarray(arr).astype("<f8").tobytes())


def read_sebf(path) -> np.ndarray:
    """Read an array written by write_sebf."""
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != SEBF_MAGIC:
        raise ParseError(f"{path}: missing SEBF magic")
    (rank,) = struct.unpack_from("<I", raw, 4)
    if rank < 1 or len(raw) < 8 + 4 * rank:
        raise ParseError(f"{path}: truncated SEBF header")
    dims = struct.unpack_from(f"<{rank}I", raw, 8)
    count = int(np.prod(dims))
    body = raw[8 + 4 * rank:]
    if len(body) != 8 * count:
        raise ParseError(f"{path}: payload size mismatch for dims {dims}")
    return np.frombuffer(body, dtype="<f8").reshape(dims).copy()
