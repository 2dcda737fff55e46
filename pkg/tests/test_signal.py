import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from savgridnet.core.config import StftConfig
from savgridnet.core.errors import InvalidInputError
from savgridnet.media.facetrack import FaceTrack, check_alignment, expected_frames
from savgridnet.media.signal import (
    AudioClip,
    Spectrogram,
    interp_time,
    istft,
    mix_at_snr,
    num_frames,
    snr_db,
    stft,
)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


class TestAudioClip:
    def test_rejects_stereo_empty_and_nan(self):
        with pytest.raises(InvalidInputError):
            AudioClip(np.zeros((2, 10)))
        with pytest.raises(InvalidInputError):
            AudioClip(np.zeros(0))
        with pytest.raises(InvalidInputError):
            AudioClip(np.array([0.0, np.nan]))

    def test_duration_and_truncate(self):
        clip = AudioClip(np.ones(16000))
        assert clip.duration == 1.0
        assert len(clip.truncate(0.25)) == 4000


class TestStft:
    def test_frame_count_with_tail_padding(self):
        cfg = StftConfig()
        assert num_frames(256, cfg) == 1
        assert num_frames(257, cfg) == 2
        assert num_frames(16000, cfg) == 1 + int(np.ceil((16000 - 256) / 128))

    def test_impulse_round_trip(self):
        signal = np.zeros(1024)
        signal[300] = 1.0
        out = istft(stft(AudioClip(signal)))
        np.testing.assert_allclose(out.samples, signal, atol=1e-12)

    def test_silent_clip_round_trips_to_silence(self):
        out = istft(stft(AudioClip(np.zeros(700))))
        assert np.all(out.samples == 0.0)

    def test_one_sample_clip(self):
        spec = stft(AudioClip(np.array([0.5])))
        assert spec.num_frames == 1
        np.testing.assert_allclose(istft(spec).samples, [0.5], atol=1e-12)

    @given(
        length=st.integers(min_value=8000, max_value=48000),
        seed=st.integers(min_value=0, max_value=2**16),
    )
    def test_round_trip_is_exact(self, length, seed):
        rng = np.random.default_rng(seed)
        signal = rng.standard_normal(length)
        out = istft(stft(AudioClip(signal)))
        assert len(out) == length
        assert relative_error(out.samples, signal) < 1e-6

    @pytest.mark.parametrize(
        "cfg",
        [
            StftConfig(window_size=64, hop_size=32, fft_size=64),
            StftConfig(window_size=128, hop_size=32, fft_size=256),
        ],
    )
    def test_round_trip_other_configs(self, cfg, rng):
        signal = rng.standard_normal(5000)
        out = istft(stft(AudioClip(signal), cfg))
        assert relative_error(out.samples, signal) < 1e-6

    def test_mismatched_bins_rejected(self):
        spec = Spectrogram(frames=np.zeros((3, 10), dtype=complex), config=StftConfig())
        with pytest.raises(InvalidInputError):
            istft(spec)

    def test_config_mismatch_rejected(self, rng):
        spec = stft(AudioClip(rng.standard_normal(1000)))
        with pytest.raises(InvalidInputError):
            istft(spec, StftConfig(window_size=64, hop_size=32, fft_size=64))


class TestMixing:
    @pytest.mark.parametrize("snr", [-15.0, -7.3, 0.0, 5.0, 10.0])
    def test_achieved_snr_matches_request(self, snr, rng):
        target = AudioClip(rng.standard_normal(8000))
        interferer = AudioClip(rng.standard_normal(8000) * 3.0)
        mixture, scaled = mix_at_snr(target, interferer, snr)
        assert abs(snr_db(target.samples, scaled.samples) - snr) < 1e-9
        np.testing.assert_array_equal(mixture.samples, target.samples + scaled.samples)

    def test_zero_energy_interferer_rejected(self):
        with pytest.raises(InvalidInputError):
            mix_at_snr(AudioClip(np.ones(10)), AudioClip(np.zeros(10)), 0.0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            mix_at_snr(AudioClip(np.ones(10)), AudioClip(np.ones(11)), 0.0)


class TestInterpolation:
    def test_endpoints_are_preserved(self):
        features = np.arange(10.0).reshape(5, 2)
        out = interp_time(features, 9)
        np.testing.assert_allclose(out[0], features[0])
        np.testing.assert_allclose(out[-1], features[-1])
        np.testing.assert_allclose(out[1], (features[0] + features[1]) / 2)

    def test_single_frame_is_repeated(self):
        out = interp_time(np.array([[1.0, 2.0]]), 4)
        np.testing.assert_allclose(out, np.tile([1.0, 2.0], (4, 1)))


class TestFaceTrack:
    def test_expected_frames(self):
        assert expected_frames(16000, 16000) == 25
        assert expected_frames(4000, 16000) == 6

    def test_alignment_tolerates_one_frame(self, rng):
        track = FaceTrack(rng.random((24, 4, 4)))
        check_alignment(16000, 16000, track)
        with pytest.raises(InvalidInputError):
            check_alignment(16000, 16000, FaceTrack(rng.random((20, 4, 4))))

    def test_pixels_must_be_in_unit_range(self):
        with pytest.raises(InvalidInputError):
            FaceTrack(np.full((2, 4, 4), 1.5))
