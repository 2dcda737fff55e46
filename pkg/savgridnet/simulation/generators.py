"""Seeded synthetic sources: speech-like targets and interferers, noise-like
interferers and face tracks driven by the target's loudness."""

import numpy as np
from scipy.signal import butter, get_window, sosfilt

from ..core.config import SAMPLE_RATE, VIDEO_FPS
from ..core.errors import InvalidInputError
from ..media.facetrack import FaceTrack, expected_frames
from ..media.signal import AudioClip

F0_RANGE = (80.0, 300.0)
SYLLABLE_RATE = (3.0, 6.0)
AM_FLOOR = 0.05
TILT_RANGE_DB = (-3.0, 3.0)
HIGHPASS_HZ = 200.0
FORMANTS = ((300.0, 900.0, 120.0), (900.0, 2500.0, 200.0), (2300.0, 3500.0, 300.0))


def _num_samples(duration: float, sample_rate: int) -> int:
    if duration <= 0:
        raise InvalidInputError(f"Duration must be positive, got {duration}")
    return max(1, int(round(duration * sample_rate)))


def _peak_normalize(samples: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(samples))
    return samples / peak if peak > 0 else samples


def gen_speechlike(rng: np.random.Generator, duration: float, sample_rate: int = SAMPLE_RATE) -> AudioClip:
    """Harmonic source with a drifting F0, moving formants and syllabic AM."""
    n = _num_samples(duration, sample_rate)
    t = np.arange(n) / sample_rate

    base = rng.uniform(100.0, 220.0)
    drift_rate = rng.uniform(0.5, 2.0)
    f0 = base * (1.0 + 0.2 * np.sin(2 * np.pi * drift_rate * t + rng.uniform(0, 2 * np.pi)))
    f0 = np.clip(f0, *F0_RANGE)
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate

    centers, widths = [], []
    for low, high, width in FORMANTS:
        start, stop = rng.uniform(low, high, size=2)
        centers.append(start + (stop - start) * t / max(t[-1], 1e-9))
        widths.append(width)

    signal = np.zeros(n)
    for k in range(1, int(0.45 * sample_rate // F0_RANGE[0]) + 1):
        frequency = k * f0
        envelope = sum(
            np.exp(-0.5 * ((frequency - center) / width) ** 2) for center, width in zip(centers, widths)
        )
        audible = frequency < 0.45 * sample_rate
        signal += audible * (envelope + 0.02) * np.sin(k * phase) / np.sqrt(k)

    rate = rng.uniform(*SYLLABLE_RATE)
    modulation = 0.5 * (1.0 - np.cos(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)))
    signal *= AM_FLOOR + (1.0 - AM_FLOOR) * modulation
    return AudioClip(_peak_normalize(signal), sample_rate)


def gen_noiselike(
    rng: np.random.Generator,
    duration: float,
    sample_rate: int = SAMPLE_RATE,
    impulsive_probability: float = 0.3,
) -> AudioClip:
    """Tilted, high-passed broadband noise with optional impulsive bursts."""
    n = _num_samples(duration, sample_rate)
    white = rng.standard_normal(n)
    tilt = rng.uniform(*TILT_RANGE_DB)
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    # dB per octave -> amplitude exponent
    gain = (np.maximum(freqs, 50.0) / 1000.0) ** (tilt / (20.0 * np.log10(2.0)))
    shaped = np.fft.irfft(np.fft.rfft(white) * gain, n=n)
    shaped = sosfilt(butter(4, HIGHPASS_HZ, btype="highpass", fs=sample_rate, output="sos"), shaped)

    if rng.random() < impulsive_probability:
        level = 3.0 * np.std(shaped)
        for _ in range(rng.integers(1, 4)):
            length = min(n, int(rng.uniform(0.02, 0.06) * sample_rate))
            start = rng.integers(0, n - length + 1)
            burst = rng.standard_normal(length) * get_window("hann", length, fftbins=False)
            shaped[start : start + length] += level * burst
    return AudioClip(_peak_normalize(shaped), sample_rate)


def loudness_envelope(target: AudioClip, fps: int = VIDEO_FPS) -> np.ndarray:
    """Per-video-frame RMS of the target, scaled so the loudest frame is 1."""
    frames = expected_frames(len(target), target.sample_rate, fps)
    hop = target.sample_rate / fps
    envelope = np.zeros(frames)
    for i in range(frames):
        segment = target.samples[int(round(i * hop)) : int(round((i + 1) * hop))]
        if segment.size:
            envelope[i] = np.sqrt(np.mean(segment**2))
    peak = envelope.max()
    return envelope / peak if peak > 0 else envelope


def gen_face_track(
    target: AudioClip,
    rng: np.random.Generator,
    height: int = 16,
    width: int = 16,
    fps: int = VIDEO_FPS,
) -> FaceTrack:
    """Face crops whose mouth region brightens with the target's loudness."""
    envelope = loudness_envelope(target, fps)
    texture = 0.1 * rng.random((height, width))
    rows, cols = np.mgrid[0:height, 0:width]
    mouth = np.exp(
        -0.5 * (((rows - 0.7 * height) / (0.12 * height)) ** 2 + ((cols - 0.5 * width) / (0.2 * width)) ** 2)
    )
    frames = 0.2 + texture[None] + 0.6 * envelope[:, None, None] * mouth[None]
    # stored as f32 on disk; keep memory and disk copies identical
    frames = np.clip(frames, 0.0, 1.0).astype(np.float32).astype(np.float64)
    return FaceTrack(frames, fps)
