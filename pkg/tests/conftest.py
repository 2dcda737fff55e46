from dataclasses import dataclass
from typing import Optional

import hypothesis
import numpy as np
import pytest

from savgridnet.core.config import (
    ClassifierConfig,
    GridNetConfig,
    HybridLossConfig,
    SceneSpec,
    Settings,
    StftConfig,
    TrainingConfig,
    VisualConfig,
)
from savgridnet.media.facetrack import FaceTrack, expected_frames
from savgridnet.media.signal import AudioClip
from savgridnet.nn.tensor import set_default_dtype, set_detect_anomaly
from savgridnet.schemas import ScenarioPrediction
from savgridnet.simulation.scenes import generate_scene, scenario_labels

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture(autouse=True)
def engine_defaults():
    set_default_dtype("float64")
    set_detect_anomaly(True)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_stft():
    return StftConfig(window_size=64, hop_size=32, fft_size=64)


@pytest.fixture
def tiny_visual():
    return VisualConfig(height=8, width=8, conv3d_channels=2, stub_channels=(4, 4, 4), Dv=4, R=2)


@pytest.fixture
def tiny_gridnet(small_stft, tiny_visual):
    return GridNetConfig(D=4, B=1, I=3, J=1, H=4, L=2, E=2, stft=small_stft, visual=tiny_visual)


@pytest.fixture
def tiny_classifier(tiny_visual):
    return ClassifierConfig(
        audio_channels=4,
        tcn_hidden=8,
        max_dilation=2,
        backend_hidden=8,
        backend_max_dilation=2,
        visual=tiny_visual,
    )


@pytest.fixture
def small_loss():
    return HybridLossConfig(resolutions=[(64, 16, 32), (128, 32, 64)])


@pytest.fixture
def toy_settings(tiny_gridnet, tiny_classifier, small_loss, tiny_visual):
    return Settings(
        gridnet=tiny_gridnet,
        classifier=tiny_classifier,
        loss=small_loss,
        simulation=SceneSpec(count=4, duration_s=0.5, seed=3),
        training=TrainingConfig(max_epochs=2, extractor_clip_s=0.1, classifier_clip_s=0.1),
    )


def make_clip(rng: np.random.Generator, seconds: float = 0.1, sample_rate: int = 16000) -> AudioClip:
    return AudioClip(rng.standard_normal(int(round(seconds * sample_rate))) * 0.1, sample_rate)


def make_track(
    rng: np.random.Generator, clip: AudioClip, height: int = 8, width: int = 8
) -> FaceTrack:
    frames = expected_frames(len(clip), clip.sample_rate)
    return FaceTrack(rng.random((frames, height, width)))


@pytest.fixture
def clip_and_track(rng):
    clip = make_clip(rng)
    return clip, make_track(rng, clip)


@pytest.fixture
def scene_spec():
    return SceneSpec(count=6, duration_s=0.5, seed=11)


@pytest.fixture
def toy_scenes(scene_spec, tiny_visual):
    labels = scenario_labels(scene_spec)
    return [generate_scene(scene_spec, i, label, tiny_visual) for i, label in enumerate(labels)]


@dataclass
class FixedExtractor:
    """Returns a fixed waveform (or the mixture scaled) regardless of the track."""

    output: Optional[np.ndarray] = None
    gain: float = 1.0
    calls: int = 0

    def extract(self, mixture, track=None):
        self.calls += 1
        if self.output is not None:
            return AudioClip(np.asarray(self.output, dtype=np.float64), mixture.sample_rate)
        return AudioClip(mixture.samples * self.gain, mixture.sample_rate)


@dataclass
class FixedClassifier:
    probability: float
    calls: int = 0

    def classify(self, mixture, track=None):
        self.calls += 1
        return ScenarioPrediction(probability=self.probability)


@dataclass
class StubBundle:
    universal: FixedExtractor
    expert_speech: FixedExtractor
    expert_noise: FixedExtractor
    classifier: FixedClassifier
