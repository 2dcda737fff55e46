"""Training objectives: negative SI-SDR, multi-resolution delta spectrum,
their hybrid, and binary cross-entropy. All return scalar Tensors."""

from typing import Callable, Tuple, Union

import numpy as np

from .core.config import HybridLossConfig
from .core.errors import InvalidInputError
from .media.signal import AudioClip
from .nn import functional as F
from .nn.spectral import magnitude_frames
from .nn.tensor import Tensor, as_tensor, no_grad

Signal = Union[AudioClip, np.ndarray, Tensor]
PROB_CLAMP = 1e-7


def _as_signal(value: Signal) -> Tensor:
    if isinstance(value, AudioClip):
        return Tensor(value.samples)
    return as_tensor(value)


def _check_pair(target: Tensor, estimate: Tensor) -> None:
    if target.ndim != 1 or target.shape != estimate.shape:
        raise InvalidInputError(
            f"Expected equal-length mono signals, got {target.shape} and {estimate.shape}"
        )


def si_sdr_loss(target: Signal, estimate: Signal, eps: float = 1e-8) -> Tensor:
    """-10 log10(|proj|^2 / |resid|^2), differentiable in ``estimate``.

    The residual energy and the ratio are floored at eps**2, so a perfect
    estimate gives a large finite negative loss and an orthogonal one a large
    finite positive loss.
    """
    s, s_hat = _as_signal(target), _as_signal(estimate)
    _check_pair(s, s_hat)
    energy = float(np.dot(s.data, s.data))
    if energy <= 0.0:
        raise InvalidInputError("SI-SDR is undefined for a zero-energy reference")
    alpha = F.sum(s_hat * s) / energy
    projection = alpha * s
    residual = s_hat - projection
    ratio = F.sum(projection * projection) / F.maximum(F.sum(residual * residual), eps**2)
    return -10.0 * F.log10(F.maximum(ratio, eps**2))


def si_sdr_metric(target: Signal, estimate: Signal, eps: float = 1e-8) -> float:
    """SI-SDR in dB; the exact negation of ``si_sdr_loss``."""
    with no_grad():
        return -si_sdr_loss(target, estimate, eps).item()


def freq_delta_loss(
    target: Signal,
    estimate: Signal,
    resolution: Tuple[int, int, int],
    magnitude: str = "linear",
    distance: str = "l1",
    eps: float = 1e-8,
) -> Tensor:
    """Distance between temporal first differences of magnitude spectrograms."""
    s, s_hat = _as_signal(target), _as_signal(estimate)
    _check_pair(s, s_hat)
    fft_size, hop_size, window_length = resolution
    ref = magnitude_frames(s, fft_size, hop_size, window_length, eps)
    est = magnitude_frames(s_hat, fft_size, hop_size, window_length, eps)
    if magnitude == "log":
        ref, est = F.log(ref), F.log(est)
    elif magnitude != "linear":
        raise InvalidInputError(f"Unknown delta magnitude {magnitude!r}")
    if ref.shape[0] < 2:
        return Tensor(0.0)
    diff = (est[1:] - est[:-1]) - (ref[1:] - ref[:-1])
    if distance == "l1":
        return F.mean(F.abs(diff))
    if distance == "l2":
        return F.mean(diff * diff)
    raise InvalidInputError(f"Unknown delta distance {distance!r}")


def hybrid_loss(target: Signal, estimate: Signal, cfg: HybridLossConfig = HybridLossConfig()) -> Tensor:
    loss = si_sdr_loss(target, estimate, cfg.eps)
    if cfg.gamma == 0.0 or not cfg.resolutions:
        return loss
    delta = None
    for resolution in cfg.resolutions:
        term = freq_delta_loss(
            target,
            estimate,
            tuple(resolution),
            cfg.delta_magnitude,
            cfg.delta_distance,
            cfg.magnitude_eps,
        )
        delta = term if delta is None else delta + term
    return loss + (cfg.gamma / cfg.M) * delta


def extraction_objective(cfg: HybridLossConfig) -> Callable[[Signal, Signal], Tensor]:
    """Loss used to train extractors, selected by ``cfg.kind``."""
    if cfg.kind == "si_sdr":
        return lambda target, estimate: si_sdr_loss(target, estimate, cfg.eps)
    return lambda target, estimate: hybrid_loss(target, estimate, cfg)


def bce_loss(label: float, probability: Union[Tensor, float]) -> Tensor:
    """-y log p - (1 - y) log(1 - p) with p clamped to [1e-7, 1 - 1e-7]."""
    if label not in (0, 1):
        raise InvalidInputError(f"Label must be 0 or 1, got {label}")
    p = F.clip(as_tensor(probability), PROB_CLAMP, 1.0 - PROB_CLAMP)
    if label == 1:
        return F.sum(-F.log(p))
    return F.sum(-F.log(1.0 - p))
