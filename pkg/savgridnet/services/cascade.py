"""Scenario-aware routing between the universal extractor and the experts."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple

from ..core.errors import InvalidInputError
from ..losses import si_sdr_loss
from ..media.facetrack import FaceTrack
from ..media.signal import AudioClip
from ..nn.tensor import no_grad
from ..schemas import ModelRole, RoutingDecision, Scenario, ScenarioPrediction, Strategy

logger = logging.getLogger(__name__)


class Extractor(Protocol):
    def extract(self, mixture: AudioClip, track: Optional[FaceTrack] = None) -> AudioClip: ...


class Classifier(Protocol):
    def classify(self, mixture: AudioClip, track: Optional[FaceTrack] = None) -> ScenarioPrediction: ...


class Bundle(Protocol):
    universal: Extractor
    expert_speech: Extractor
    expert_noise: Extractor
    classifier: Classifier


@dataclass(frozen=True)
class RoutingInput:
    """A mixture to route; ``scenario`` is only needed for oracle routing."""

    scene_id: str
    mixture: AudioClip
    face_track: Optional[FaceTrack] = None
    scenario: Optional[Scenario] = None


@dataclass(frozen=True)
class RoutedOutput:
    scene_id: str
    estimate: AudioClip
    decision: RoutingDecision


def _loss(reference: AudioClip, estimate: AudioClip, eps: float) -> float:
    with no_grad():
        return si_sdr_loss(reference, estimate, eps).item()


def universal_agrees_with_noise(
    universal: AudioClip, noise_output: AudioClip, speech_output: AudioClip, eps: float = 1e-8
) -> bool:
    """The universal output is closer to the noise expert than to the speech expert."""
    return _loss(universal, noise_output, eps) < _loss(universal, speech_output, eps)


def mixture_far_from_noise(
    mixture: AudioClip, noise_output: AudioClip, speech_output: AudioClip, eps: float = 1e-8
) -> bool:
    """The noise expert removed more from the mixture than the speech expert did."""
    return _loss(mixture, noise_output, eps) > _loss(mixture, speech_output, eps)


class CascadeService:
    """Classifier-gated expert routing with optional post-processing checks.

    Ties in either check count as not confirmed, so the noise prediction is
    overturned and the universal output is emitted.
    """

    def __init__(self, bundle: Bundle, eps: float = 1e-8, workers: int = 1):
        self.bundle = bundle
        self.eps = eps
        self.workers = workers

    def _expert(self, label: Scenario) -> Tuple[ModelRole, Extractor]:
        role = ModelRole.for_scenario(label)
        return role, getattr(self.bundle, role.value)

    def _dispatch(
        self,
        scene_id: str,
        mixture: AudioClip,
        track: Optional[FaceTrack],
        prediction: ScenarioPrediction,
    ) -> Tuple[AudioClip, RoutingDecision]:
        role, expert = self._expert(prediction.label)
        decision = RoutingDecision(
            scene_id=scene_id,
            probability=prediction.probability,
            classifier_label=prediction.label,
            final_label=prediction.label,
            chosen_model=role,
        )
        return expert.extract(mixture, track), decision

    def route_plain(
        self, mixture: AudioClip, track: Optional[FaceTrack] = None, scene_id: str = ""
    ) -> Tuple[AudioClip, RoutingDecision]:
        """Run exactly one expert, chosen by the classifier."""
        prediction = self.bundle.classifier.classify(mixture, track)
        return self._dispatch(scene_id, mixture, track, prediction)

    def _post_process(
        self,
        mixture: AudioClip,
        track: Optional[FaceTrack],
        scene_id: str,
        use_mixture_check: bool,
    ) -> Tuple[AudioClip, RoutingDecision]:
        prediction = self.bundle.classifier.classify(mixture, track)
        if prediction.label is Scenario.SPEECH:
            return self._dispatch(scene_id, mixture, track, prediction)

        universal = self.bundle.universal.extract(mixture, track)
        noise_output = self.bundle.expert_noise.extract(mixture, track)
        speech_output = self.bundle.expert_speech.extract(mixture, track)
        universal_check = universal_agrees_with_noise(universal, noise_output, speech_output, self.eps)
        mixture_check = (
            mixture_far_from_noise(mixture, noise_output, speech_output, self.eps)
            if use_mixture_check
            else None
        )
        confirmed = universal_check or bool(mixture_check)
        decision = RoutingDecision(
            scene_id=scene_id,
            probability=prediction.probability,
            classifier_label=Scenario.NOISE,
            final_label=Scenario.NOISE if confirmed else Scenario.SPEECH,
            chosen_model=ModelRole.EXPERT_NOISE if confirmed else ModelRole.UNIVERSAL,
            universal_check=universal_check,
            mixture_check=mixture_check,
        )
        if not confirmed:
            logger.debug("%s: noise prediction overturned, using the universal output", scene_id)
        return (noise_output if confirmed else universal), decision

    def post_proc1(
        self, mixture: AudioClip, track: Optional[FaceTrack] = None, scene_id: str = ""
    ) -> Tuple[AudioClip, RoutingDecision]:
        """Keep a noise prediction only when the universal output agrees with the noise expert."""
        return self._post_process(mixture, track, scene_id, use_mixture_check=False)

    def post_proc2(
        self, mixture: AudioClip, track: Optional[FaceTrack] = None, scene_id: str = ""
    ) -> Tuple[AudioClip, RoutingDecision]:
        """Like ``post_proc1``, also keeping noise when the noise expert moved
        further from the mixture than the speech expert."""
        return self._post_process(mixture, track, scene_id, use_mixture_check=True)

    def route_oracle(
        self,
        mixture: AudioClip,
        track: Optional[FaceTrack],
        scenario: Scenario,
        scene_id: str = "",
    ) -> Tuple[AudioClip, RoutingDecision]:
        """Bypass the classifier and route on the ground-truth scenario."""
        role, expert = self._expert(scenario)
        decision = RoutingDecision(
            scene_id=scene_id,
            classifier_label=scenario,
            final_label=scenario,
            chosen_model=role,
        )
        return expert.extract(mixture, track), decision

    def route(self, item: RoutingInput, strategy: Strategy) -> RoutedOutput:
        strategy = Strategy(strategy)
        if strategy is Strategy.ORACLE:
            if item.scenario is None:
                raise InvalidInputError(f"{item.scene_id}: oracle routing needs a scenario label")
            estimate, decision = self.route_oracle(
                item.mixture, item.face_track, item.scenario, item.scene_id
            )
        else:
            handlers: Dict[Strategy, Callable] = {
                Strategy.PLAIN: self.route_plain,
                Strategy.PP1: self.post_proc1,
                Strategy.PP2: self.post_proc2,
            }
            estimate, decision = handlers[strategy](item.mixture, item.face_track, item.scene_id)
        logger.debug(
            "%s: %s -> %s via %s",
            item.scene_id,
            decision.classifier_label.value,
            decision.final_label.value,
            decision.chosen_model.value,
        )
        return RoutedOutput(item.scene_id, estimate, decision)

    def batch_route(self, items: Sequence[RoutingInput], strategy: Strategy) -> List[RoutedOutput]:
        """Route every item, returning outputs sorted by scene id."""
        strategy = Strategy(strategy)
        if strategy is Strategy.ORACLE:
            unlabeled = [item.scene_id for item in items if item.scenario is None]
            if unlabeled:
                raise InvalidInputError(f"Oracle routing needs scenario labels; missing for {unlabeled}")
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            outputs = list(pool.map(lambda item: self.route(item, strategy), items))
        return sorted(outputs, key=lambda output: output.scene_id)


def routing_inputs(scenes: Sequence, labeled: bool = True) -> List[RoutingInput]:
    """Wrap scenes for routing, dropping their labels when ``labeled`` is False."""
    return [
        RoutingInput(
            scene.scene_id,
            scene.mixture,
            scene.face_track,
            scene.scenario if labeled else None,
        )
        for scene in scenes
    ]
