import numpy as np
import pytest
import soundfile as sf

from savgridnet.core.errors import InvalidInputError
from savgridnet.media.facetrack import FaceTrack
from savgridnet.media.io import (
    PCM_SCALE,
    quantize_pcm16,
    read_face_track,
    read_wav,
    write_face_track,
    write_wav,
)
from savgridnet.media.signal import AudioClip


def test_wav_keeps_pcm_grid(tmp_path, rng):
    clip = AudioClip(rng.uniform(-0.9, 0.9, 1600))
    path = tmp_path / "clip.wav"
    write_wav(path, clip)
    loaded = read_wav(path)
    np.testing.assert_array_equal(loaded.samples * PCM_SCALE, quantize_pcm16(clip.samples))
    assert np.max(np.abs(loaded.samples - clip.samples)) <= 0.5 / PCM_SCALE + 1e-15


def test_quantize_clips_full_scale():
    assert quantize_pcm16(np.array([1.0]))[0] == 32767
    assert quantize_pcm16(np.array([-1.0]))[0] == -32768


def test_rejects_float_wav(tmp_path):
    path = tmp_path / "float.wav"
    sf.write(str(path), np.zeros(160), 16000, subtype="FLOAT")
    with pytest.raises(InvalidInputError):
        read_wav(path)


def test_rejects_stereo_and_wrong_rate(tmp_path):
    stereo = tmp_path / "stereo.wav"
    sf.write(str(stereo), np.zeros((160, 2)), 16000, subtype="PCM_16")
    with pytest.raises(InvalidInputError):
        read_wav(stereo)
    slow = tmp_path / "8k.wav"
    sf.write(str(slow), np.zeros(80), 8000, subtype="PCM_16")
    with pytest.raises(InvalidInputError):
        read_wav(slow)


def test_missing_wav(tmp_path):
    with pytest.raises(InvalidInputError):
        read_wav(tmp_path / "missing.wav")


class TestFaceTrackFile:
    def test_written_frames_load_back_as_float32_values(self, tmp_path, rng):
        track = FaceTrack(rng.random((5, 8, 8)))
        path = tmp_path / "face.ftrk"
        write_face_track(path, track)
        loaded = read_face_track(path)
        assert loaded.fps == track.fps
        np.testing.assert_array_equal(loaded.frames, track.frames.astype(np.float32))

    def test_bad_magic(self, tmp_path, rng):
        path = tmp_path / "face.ftrk"
        write_face_track(path, FaceTrack(rng.random((2, 4, 4))))
        payload = bytearray(path.read_bytes())
        payload[:4] = b"XXXX"
        path.write_bytes(bytes(payload))
        with pytest.raises(InvalidInputError, match="magic"):
            read_face_track(path)

    def test_truncated_payload(self, tmp_path, rng):
        path = tmp_path / "face.ftrk"
        write_face_track(path, FaceTrack(rng.random((2, 4, 4))))
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(InvalidInputError):
            read_face_track(path)
