"""Labeled audio-visual scenes and on-the-fly dynamic mixing."""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import SceneSpec, VisualConfig
from ..core.errors import InvalidInputError
from ..media.facetrack import FaceTrack
from ..media.signal import AudioClip, mix_at_snr
from ..schemas import Scenario
from .generators import gen_face_track, gen_noiselike, gen_speechlike

logger = logging.getLogger(__name__)

MIXTURE_PEAK = 0.9


@dataclass(frozen=True)
class Scene:
    scene_id: str
    target: AudioClip
    interferer: AudioClip
    face_track: FaceTrack
    scenario: Scenario
    snr_db: float
    mixture: AudioClip

    @property
    def label(self) -> int:
        return self.scenario.target

    def truncate(self, seconds: float) -> "Scene":
        """Keep the first ``seconds`` of every stream."""
        if seconds >= self.mixture.duration:
            return self
        return replace(
            self,
            target=self.target.truncate(seconds),
            interferer=self.interferer.truncate(seconds),
            mixture=self.mixture.truncate(seconds),
            face_track=self.face_track.truncate(seconds),
        )


def scene_id_for(index: int, prefix: str = "scene") -> str:
    return f"{prefix}_{index:05d}"


def snr_range(spec: SceneSpec, scenario: Scenario) -> Tuple[float, float]:
    return spec.noise_snr_range if scenario is Scenario.NOISE else spec.speech_snr_range


def compose_scene(
    scene_id: str,
    target: AudioClip,
    interferer: AudioClip,
    face_track: FaceTrack,
    scenario: Scenario,
    snr_db: float,
) -> Scene:
    """Mix at ``snr_db`` after scaling the target so the mixture peaks at 0.9.

    The scene keeps the interferer as mixed, so ``mixture == target + interferer``.
    """
    mixture, scaled = mix_at_snr(target, interferer, snr_db)
    peak = float(np.max(np.abs(mixture.samples)))
    if peak > 0:
        target = AudioClip(target.samples * (MIXTURE_PEAK / peak), target.sample_rate)
        mixture, scaled = mix_at_snr(target, interferer, snr_db)
    return Scene(scene_id, target, scaled, face_track, scenario, float(snr_db), mixture)


def scenario_labels(spec: SceneSpec) -> List[Scenario]:
    """Exactly round(count * noise_ratio) noise scenes, shuffled by the seed."""
    noise = int(round(spec.count * spec.noise_ratio))
    labels = [Scenario.NOISE] * noise + [Scenario.SPEECH] * (spec.count - noise)
    order = np.random.default_rng(spec.seed).permutation(spec.count)
    return [labels[i] for i in order]


def generate_scene(
    spec: SceneSpec,
    index: int,
    scenario: Scenario,
    visual: VisualConfig = VisualConfig(),
) -> Scene:
    """Scene ``index`` drawn from its own rng stream (seed, index)."""
    rng = np.random.default_rng([spec.seed, index])
    target = gen_speechlike(rng, spec.duration_s, spec.sample_rate)
    if scenario is Scenario.NOISE:
        interferer = gen_noiselike(rng, spec.duration_s, spec.sample_rate, spec.impulsive_probability)
    else:
        interferer = gen_speechlike(rng, spec.duration_s, spec.sample_rate)
    snr = rng.uniform(*snr_range(spec, scenario))
    track = gen_face_track(target, rng, visual.height, visual.width, visual.fps)
    return compose_scene(scene_id_for(index), target, interferer, track, scenario, snr)


def generate_scenes(spec: SceneSpec, visual: VisualConfig = VisualConfig()) -> List[Scene]:
    return [generate_scene(spec, i, label, visual) for i, label in enumerate(scenario_labels(spec))]


@dataclass
class ScenePool:
    """Sources for dynamic mixing: target/face pairs and interferers per scenario."""

    targets: List[Tuple[AudioClip, FaceTrack]] = field(default_factory=list)
    speech_interferers: List[AudioClip] = field(default_factory=list)
    noise_interferers: List[AudioClip] = field(default_factory=list)

    @classmethod
    def from_scenes(cls, scenes: Sequence[Scene]) -> "ScenePool":
        pool = cls()
        for scene in scenes:
            pool.targets.append((scene.target, scene.face_track))
            if scene.scenario is Scenario.NOISE:
                pool.noise_interferers.append(scene.interferer)
            else:
                pool.speech_interferers.append(scene.interferer)
        return pool

    def interferers(self, scenario: Scenario) -> List[AudioClip]:
        return self.noise_interferers if scenario is Scenario.NOISE else self.speech_interferers


def dynamic_mix(
    rng: np.random.Generator,
    pool: ScenePool,
    spec: SceneSpec = SceneSpec(),
    scenarios: Optional[Sequence[Scenario]] = None,
    scene_id: str = "dm",
) -> Scene:
    """Draw a fresh target, interferer and SNR from ``pool`` without touching disk.

    ``scenarios`` restricts the draw (expert training); otherwise the scenario
    follows ``spec.noise_ratio``.
    """
    available = [
        s for s in (scenarios or (Scenario.SPEECH, Scenario.NOISE)) if pool.interferers(s)
    ]
    if not pool.targets or not available:
        raise InvalidInputError("Dynamic mixing needs at least one target and one interferer")
    if len(available) == 2 and scenarios is None:
        scenario = Scenario.NOISE if rng.random() < spec.noise_ratio else Scenario.SPEECH
    else:
        scenario = available[rng.integers(len(available))]
    target, track = pool.targets[rng.integers(len(pool.targets))]
    interferers = pool.interferers(scenario)
    interferer = interferers[rng.integers(len(interferers))]
    length = min(len(target), len(interferer))
    if length < len(target):
        seconds = length / target.sample_rate
        target, track = target.truncate(seconds), track.truncate(seconds)
    interferer = AudioClip(interferer.samples[:length], interferer.sample_rate)
    snr = rng.uniform(*snr_range(spec, scenario))
    return compose_scene(scene_id, target, interferer, track, scenario, snr)


class DynamicMixer:
    """Iterator of freshly mixed scenes for one training run."""

    def __init__(
        self,
        pool: ScenePool,
        spec: SceneSpec,
        seed: int,
        scenarios: Optional[Sequence[Scenario]] = None,
    ):
        self.pool = pool
        self.spec = spec
        self.scenarios = scenarios
        self.rng = np.random.default_rng(seed)
        self.drawn = 0

    def draw(self) -> Scene:
        scene = dynamic_mix(
            self.rng, self.pool, self.spec, self.scenarios, scene_id_for(self.drawn, prefix="dm")
        )
        self.drawn += 1
        return scene

    def take(self, count: int) -> List[Scene]:
        return [self.draw() for _ in range(count)]
