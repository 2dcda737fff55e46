from dataclasses import dataclass

import numpy as np

from ..core.config import VIDEO_FPS
from ..core.errors import InvalidInputError


@dataclass(frozen=True)
class FaceTrack:
    """Grayscale face crops, one Hpx x Wpx frame per video frame."""

    frames: np.ndarray
    fps: int = VIDEO_FPS

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3:
            raise InvalidInputError(f"FaceTrack expects Tv x H x W, got {frames.shape}")
        if frames.shape[0] < 1:
            raise InvalidInputError("FaceTrack must hold at least one frame")
        if not np.all(np.isfinite(frames)) or frames.min() < 0.0 or frames.max() > 1.0:
            raise InvalidInputError("FaceTrack pixels must be finite and within [0, 1]")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.fps

    def truncate(self, seconds: float) -> "FaceTrack":
        keep = max(1, int(round(seconds * self.fps)))
        return FaceTrack(self.frames[:keep], self.fps)


def expected_frames(num_samples: int, sample_rate: int, fps: int = VIDEO_FPS) -> int:
    return max(1, int(round(num_samples / sample_rate * fps)))


def check_alignment(num_samples: int, sample_rate: int, track: FaceTrack) -> None:
    """Reject tracks whose duration is off by more than one video frame."""
    expected = expected_frames(num_samples, sample_rate, track.fps)
    if abs(len(track) - expected) > 1:
        raise InvalidInputError(
            f"Face track has {len(track)} frames but the audio needs {expected}"
        )
