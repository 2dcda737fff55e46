from .facetrack import FaceTrack, check_alignment, expected_frames
from .signal import AudioClip, Spectrogram, interp_time, istft, mix_at_snr, stft

__all__ = [
    "AudioClip",
    "FaceTrack",
    "Spectrogram",
    "check_alignment",
    "expected_frames",
    "interp_time",
    "istft",
    "mix_at_snr",
    "stft",
]
