"""Differentiable STFT analysis and synthesis built from real DFT matrices.

The synthesis path reproduces ``media.signal.istft`` exactly, so a model's
decoder output matches the plain-numpy inverse of the same frames.
"""

from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.signal import get_window

from ..core.config import StftConfig
from ..core.errors import InvalidInputError
from ..media.signal import OLA_GUARD, analysis_window, num_frames, ola_envelope
from . import functional as F
from .tensor import Tensor, as_tensor


@lru_cache(maxsize=16)
def _forward_basis(fft_size: int, rows: int) -> Tuple[np.ndarray, np.ndarray]:
    """cos and -sin kernels for the first ``rows`` samples of an fft_size frame."""
    angle = 2.0 * np.pi * np.outer(np.arange(rows), np.arange(fft_size // 2 + 1)) / fft_size
    cos, sin = np.cos(angle), -np.sin(angle)
    cos.setflags(write=False)
    sin.setflags(write=False)
    return cos, sin


@lru_cache(maxsize=16)
def _inverse_basis(fft_size: int, rows: int) -> Tuple[np.ndarray, np.ndarray]:
    """Real inverse DFT restricted to the first ``rows`` output samples.

    Interior bins count twice (conjugate symmetry); the imaginary parts of DC
    and Nyquist drop out because their sine kernels vanish.
    """
    bins = fft_size // 2 + 1
    weight = np.full(bins, 2.0)
    weight[0] = 1.0
    if fft_size % 2 == 0:
        weight[-1] = 1.0
    angle = 2.0 * np.pi * np.outer(np.arange(bins), np.arange(rows)) / fft_size
    cos = weight[:, None] * np.cos(angle) / fft_size
    sin = -weight[:, None] * np.sin(angle) / fft_size
    cos.setflags(write=False)
    sin.setflags(write=False)
    return cos, sin


def stft_parts(signal: Tensor, cfg: StftConfig) -> Tuple[Tensor, Tensor]:
    """Real and imaginary T x F parts, framed like ``media.signal.stft``."""
    signal = as_tensor(signal)
    length = signal.shape[0]
    count = num_frames(length, cfg)
    padded_len = (count - 1) * cfg.hop_size + cfg.window_size
    if padded_len > length:
        signal = F.pad(signal, [(0, padded_len - length)])
    frames = F.frame(signal, cfg.window_size, cfg.hop_size) * analysis_window(cfg)
    cos, sin = _forward_basis(cfg.fft_size, cfg.window_size)
    return F.matmul(frames, Tensor(cos)), F.matmul(frames, Tensor(sin))


def istft_parts(real: Tensor, imag: Tensor, cfg: StftConfig, length: int) -> Tensor:
    """Inverse of ``stft_parts``: window, overlap-add, envelope-normalize, truncate."""
    if real.shape != imag.shape or real.ndim != 2 or real.shape[1] != cfg.num_bins:
        raise InvalidInputError(
            f"Expected matching T x {cfg.num_bins} parts, got {real.shape} and {imag.shape}"
        )
    cos, sin = _inverse_basis(cfg.fft_size, cfg.window_size)
    frames = (F.matmul(real, Tensor(cos)) + F.matmul(imag, Tensor(sin))) * analysis_window(cfg)
    signal = F.overlap_add(frames, cfg.hop_size)
    envelope = ola_envelope(real.shape[0], cfg)
    scale = np.where(envelope > OLA_GUARD, 1.0 / np.maximum(envelope, OLA_GUARD), 1.0)
    return (signal * scale)[:length]


@lru_cache(maxsize=16)
def centered_hann(fft_size: int, window_length: int) -> Tuple[np.ndarray, int]:
    """Periodic Hann of ``window_length`` and its offset when centered in fft_size."""
    window = get_window("hann", window_length, fftbins=True)
    window.setflags(write=False)
    return window, (fft_size - window_length) // 2


def magnitude_frames(
    signal: Tensor, fft_size: int, hop_size: int, window_length: int, eps: float = 1e-8
) -> Tensor:
    """|STFT| with a centered Hann window, no padding: 1 + (N - fft_size) // hop frames.

    Only the non-zero window span is transformed; the dropped offset is a pure
    phase shift and leaves magnitudes unchanged.
    """
    signal = as_tensor(signal)
    length = signal.shape[0]
    if length < fft_size:
        raise InvalidInputError(
            f"Clip of {length} samples is shorter than one {fft_size}-point frame"
        )
    if window_length > fft_size:
        raise InvalidInputError(f"Window {window_length} exceeds FFT size {fft_size}")
    window, offset = centered_hann(fft_size, window_length)
    count = 1 + (length - fft_size) // hop_size
    frames = F.frame(signal[offset:], window_length, hop_size)[:count] * window
    cos, sin = _forward_basis(fft_size, window_length)
    real, imag = F.matmul(frames, Tensor(cos)), F.matmul(frames, Tensor(sin))
    return F.sqrt(real * real + imag * imag + eps)
