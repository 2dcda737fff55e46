"""Analysis-synthesis, mixing and interpolation primitives on plain arrays."""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.signal import get_window

from ..core.config import SAMPLE_RATE, StftConfig
from ..core.errors import InvalidInputError

OLA_GUARD = 1e-8


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform with its sample rate."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidInputError(f"AudioClip must be mono, got shape {samples.shape}")
        if samples.size == 0:
            raise InvalidInputError("AudioClip must hold at least one sample")
        if self.sample_rate <= 0:
            raise InvalidInputError(f"Invalid sample rate {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError("AudioClip contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def energy(self) -> float:
        return float(np.dot(self.samples, self.samples))

    def truncate(self, seconds: float) -> "AudioClip":
        keep = max(1, int(round(seconds * self.sample_rate)))
        return AudioClip(self.samples[:keep], self.sample_rate)


@dataclass(frozen=True)
class Spectrogram:
    frames: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    original_length: int = 0

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_bins(self) -> int:
        return self.frames.shape[1]


@lru_cache(maxsize=32)
def _window(kind: str, size: int) -> np.ndarray:
    if kind == "sqrt_hann":
        # Hann sampled at half-sample offsets: non-zero at both ends, and the
        # squared window still sums to one at 50% overlap.
        window = np.sin(np.pi * (np.arange(size) + 0.5) / size)
    elif kind == "sqrt_hann_periodic":
        window = np.sqrt(get_window("hann", size, fftbins=True))
    else:
        raise InvalidInputError(f"Unknown window {kind!r}")
    window.setflags(write=False)
    return window


def analysis_window(cfg: StftConfig) -> np.ndarray:
    return _window(cfg.window, cfg.window_size)


def num_frames(length: int, cfg: StftConfig) -> int:
    """Frames starting at t*hop, tail zero-padded until every sample is covered."""
    if length <= cfg.window_size:
        return 1
    return 1 + -(-(length - cfg.window_size) // cfg.hop_size)


def frame_indices(count: int, size: int, hop: int) -> np.ndarray:
    return hop * np.arange(count)[:, None] + np.arange(size)[None, :]


def ola_envelope(count: int, cfg: StftConfig) -> np.ndarray:
    """Overlap-added squared synthesis window."""
    window = analysis_window(cfg)
    length = (count - 1) * cfg.hop_size + cfg.window_size
    envelope = np.zeros(length)
    np.add.at(envelope, frame_indices(count, cfg.window_size, cfg.hop_size), window**2)
    return envelope


def stft(clip: AudioClip, cfg: StftConfig = StftConfig()) -> Spectrogram:
    x = np.asarray(clip.samples, dtype=np.float64)
    if x.size == 0:
        raise InvalidInputError("Cannot analyse an empty clip")
    count = num_frames(x.size, cfg)
    padded = np.zeros((count - 1) * cfg.hop_size + cfg.window_size)
    padded[: x.size] = x
    frames = padded[frame_indices(count, cfg.window_size, cfg.hop_size)]
    spectra = np.fft.rfft(frames * analysis_window(cfg), n=cfg.fft_size, axis=-1)
    return Spectrogram(frames=spectra, config=cfg, original_length=x.size)


def istft(spec: Spectrogram, cfg: StftConfig | None = None) -> AudioClip:
    if cfg is not None and cfg != spec.config:
        raise InvalidInputError("Spectrogram was produced with a different STFT config")
    cfg = spec.config
    if spec.frames.ndim != 2 or spec.num_bins != cfg.num_bins:
        raise InvalidInputError(
            f"Expected T x {cfg.num_bins} bins, got shape {spec.frames.shape}"
        )
    count = spec.num_frames
    frames = np.fft.irfft(spec.frames, n=cfg.fft_size, axis=-1)[:, : cfg.window_size]
    signal = np.zeros((count - 1) * cfg.hop_size + cfg.window_size)
    np.add.at(
        signal,
        frame_indices(count, cfg.window_size, cfg.hop_size),
        frames * analysis_window(cfg),
    )
    envelope = ola_envelope(count, cfg)
    covered = envelope > OLA_GUARD
    signal[covered] /= envelope[covered]
    length = spec.original_length or signal.size
    return AudioClip(signal[:length])


def snr_db(target: np.ndarray, interferer: np.ndarray) -> float:
    return float(10.0 * np.log10(np.dot(target, target) / np.dot(interferer, interferer)))


def mix_at_snr(
    target: AudioClip, interferer: AudioClip, snr: float
) -> Tuple[AudioClip, AudioClip]:
    """Scale the interferer so the pair sits at ``snr`` dB and add them."""
    if len(target) != len(interferer):
        raise InvalidInputError(
            f"Length mismatch: target {len(target)} vs interferer {len(interferer)}"
        )
    if target.sample_rate != interferer.sample_rate:
        raise InvalidInputError("Sample rates differ")
    e_target, e_interferer = target.energy, interferer.energy
    if e_target <= 0.0 or e_interferer <= 0.0:
        raise InvalidInputError("Cannot mix zero-energy signals")
    alpha = np.sqrt(e_target / e_interferer) * 10.0 ** (-snr / 20.0)
    scaled = AudioClip(alpha * interferer.samples, interferer.sample_rate)
    return AudioClip(target.samples + scaled.samples, target.sample_rate), scaled


def interp_positions(source_len: int, target_len: int) -> Tuple[np.ndarray, np.ndarray]:
    """Lower row index and fractional offset for each output row."""
    if source_len < 1 or target_len < 1:
        raise InvalidInputError(
            f"Interpolation lengths must be >= 1, got {source_len} -> {target_len}"
        )
    if source_len == 1:
        return np.zeros(target_len, dtype=np.int64), np.zeros(target_len)
    positions = np.linspace(0.0, source_len - 1, target_len)
    lower = np.minimum(np.floor(positions).astype(np.int64), source_len - 2)
    return lower, positions - lower


def interp_time(features: np.ndarray, target_len: int) -> np.ndarray:
    """Piecewise-linear resampling of an L x D array along its first axis."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, None]
    lower, frac = interp_positions(features.shape[0], target_len)
    if features.shape[0] == 1:
        return np.repeat(features, target_len, axis=0)
    start = features[lower]
    return start + frac[:, None] * (features[lower + 1] - start)
