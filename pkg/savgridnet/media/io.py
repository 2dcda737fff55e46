"""File boundary: 16-bit PCM WAV audio and FTRK face-track files."""

import struct
from pathlib import Path

import numpy as np
import soundfile as sf

from ..core.config import SAMPLE_RATE
from ..core.errors import InvalidInputError
from .facetrack import FaceTrack
from .signal import AudioClip

PCM_SCALE = 32768.0
FTRK_MAGIC = b"FTRK"
_FTRK_HEADER = struct.Struct("<4sIIII")


def quantize_pcm16(samples: np.ndarray) -> np.ndarray:
    """Map float samples onto the int16 grid used on disk."""
    ints = np.round(np.asarray(samples, dtype=np.float64) * PCM_SCALE)
    return np.clip(ints, -PCM_SCALE, PCM_SCALE - 1).astype(np.int16)


def write_wav_pcm16(path: Path, pcm: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), np.asarray(pcm, dtype=np.int16), sample_rate, subtype="PCM_16", format="WAV")


def write_wav(path: Path, clip: AudioClip) -> None:
    write_wav_pcm16(path, quantize_pcm16(clip.samples), clip.sample_rate)


def read_wav(path: Path, sample_rate: int = SAMPLE_RATE) -> AudioClip:
    """Read a mono 16-bit PCM WAV file, rejecting any other encoding."""
    try:
        info = sf.info(str(path))
    except (RuntimeError, OSError) as exc:
        raise InvalidInputError(f"Cannot read WAV file {path}: {exc}") from exc
    if info.format != "WAV" or info.subtype != "PCM_16":
        raise InvalidInputError(
            f"{path}: expected RIFF/WAVE PCM 16-bit, got {info.format}/{info.subtype}"
        )
    if info.channels != 1:
        raise InvalidInputError(f"{path}: expected mono audio, got {info.channels} channels")
    if info.samplerate != sample_rate:
        raise InvalidInputError(
            f"{path}: expected {sample_rate} Hz, got {info.samplerate} Hz"
        )
    pcm, _ = sf.read(str(path), dtype="int16")
    return AudioClip(pcm.astype(np.float64) / PCM_SCALE, info.samplerate)


def write_face_track(path: Path, track: FaceTrack) -> None:
    frames = track.frames.astype("<f4")
    tv, height, width = frames.shape
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(_FTRK_HEADER.pack(FTRK_MAGIC, tv, height, width, track.fps))
        handle.write(frames.tobytes())


def read_face_track(path: Path) -> FaceTrack:
    try:
        payload = Path(path).read_bytes()
    except OSError as exc:
        raise InvalidInputError(f"Cannot read face track {path}: {exc}") from exc
    if len(payload) < _FTRK_HEADER.size:
        raise InvalidInputError(f"{path}: truncated FTRK header")
    magic, tv, height, width, fps = _FTRK_HEADER.unpack_from(payload)
    if magic != FTRK_MAGIC:
        raise InvalidInputError(f"{path}: bad magic {magic!r}, expected {FTRK_MAGIC!r}")
    expected = _FTRK_HEADER.size + 4 * tv * height * width
    if tv < 1 or fps < 1 or len(payload) != expected:
        raise InvalidInputError(
            f"{path}: header declares {tv}x{height}x{width} frames but payload has "
            f"{len(payload)} bytes"
        )
    frames = np.frombuffer(payload, dtype="<f4", offset=_FTRK_HEADER.size)
    return FaceTrack(frames.reshape(tv, height, width).astype(np.float64), fps)
