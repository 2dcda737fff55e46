"""Training drivers for the extractors and the scenario classifier."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..core.config import Settings, get_settings
from ..core.errors import ConfigurationError
from ..losses import bce_loss, extraction_objective
from ..models.base import Model
from ..models.factory import ModelFactory
from ..nn.optim import Adam, LrAction, PlateauScheduler
from ..nn.tensor import Tensor, no_grad
from ..schemas import ModelRole, Scenario
from ..simulation.scenes import DynamicMixer, Scene, ScenePool

logger = logging.getLogger(__name__)

SceneLoss = Callable[[Model, Scene], Tensor]

ROLE_SCENARIOS = {
    ModelRole.UNIVERSAL: (Scenario.SPEECH, Scenario.NOISE),
    ModelRole.EXPERT_SPEECH: (Scenario.SPEECH,),
    ModelRole.EXPERT_NOISE: (Scenario.NOISE,),
}


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    dev_loss: float
    lr: float
    action: LrAction


@dataclass
class TrainingResult:
    model: Model
    checkpoint: Path
    best_dev_loss: float
    history: List[EpochLog] = field(default_factory=list)
    stopped_early: bool = False
    optimizer_steps: int = 0

    @property
    def epochs(self) -> int:
        return len(self.history)


def scenes_for_role(scenes: Sequence[Scene], role: ModelRole) -> List[Scene]:
    """Experts see only their own scenario; the universal model sees both."""
    role = ModelRole(role)
    if role not in ROLE_SCENARIOS:
        raise ConfigurationError(f"{role.value} is not an extractor role")
    allowed = ROLE_SCENARIOS[role]
    selected = [scene for scene in scenes if scene.scenario in allowed]
    if not selected:
        wanted = "/".join(s.value for s in allowed)
        raise ConfigurationError(f"No {wanted} scenes available to train {role.value}")
    dropped = len(scenes) - len(selected)
    if dropped:
        logger.warning(
            "Dropped %d of %d scenes outside the %s scenario set", dropped, len(scenes), role.value
        )
    return selected


def extractor_loss(settings: Settings) -> SceneLoss:
    objective = extraction_objective(settings.loss)

    def scene_loss(model: Model, scene: Scene) -> Tensor:
        return objective(scene.target, model(scene.mixture, scene.face_track))

    return scene_loss


def classifier_loss(model: Model, scene: Scene) -> Tensor:
    return bce_loss(scene.scenario.target, model(scene.mixture, scene.face_track))


class TrainingService:
    """Adam with a plateau schedule, keeping the best development checkpoint."""

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()

    @property
    def config(self):
        return self.settings.training

    def _mean_loss(self, model: Model, scenes: Sequence[Scene], loss_fn: SceneLoss) -> float:
        with no_grad():
            return float(np.mean([loss_fn(model, scene).item() for scene in scenes]))

    def _train_epoch(
        self,
        model: Model,
        optimizer: Adam,
        scenes: Sequence[Scene],
        loss_fn: SceneLoss,
        rng: np.random.Generator,
    ) -> float:
        order = rng.permutation(len(scenes)) if self.config.shuffle else np.arange(len(scenes))
        batch_size = self.config.batch_size
        total = 0.0
        for start in range(0, len(order), batch_size):
            batch = [scenes[i] for i in order[start : start + batch_size]]
            optimizer.zero_grad()
            for scene in batch:
                loss = loss_fn(model, scene) * (1.0 / len(batch))
                loss.backward()
                total += loss.item() * len(batch)
            optimizer.step()
        return total / max(len(order), 1)

    def fit(
        self,
        model: Model,
        role: ModelRole,
        draw_epoch: Callable[[int], Sequence[Scene]],
        dev_scenes: Sequence[Scene],
        loss_fn: SceneLoss,
        checkpoint: Path,
    ) -> TrainingResult:
        """Train until the schedule stops or ``max_epochs`` is reached.

        The checkpoint always holds the weights with the best development loss,
        and those weights are loaded back into ``model`` before returning.
        """
        config = self.config
        optimizer = Adam(
            model.trainable_parameters(),
            lr=config.lr,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.adam_eps,
        )
        scheduler = PlateauScheduler(config.halve_patience, config.stop_patience)
        rng = np.random.default_rng(config.seed)
        result = TrainingResult(model=model, checkpoint=Path(checkpoint), best_dev_loss=float("inf"))

        for epoch in range(1, config.max_epochs + 1):
            train_loss = self._train_epoch(model, optimizer, draw_epoch(epoch), loss_fn, rng)
            dev_loss = self._mean_loss(model, dev_scenes, loss_fn)
            action = scheduler.update(dev_loss)
            if scheduler.improved:
                result.best_dev_loss = dev_loss
                model.save(checkpoint, role.value)
            result.history.append(EpochLog(epoch, train_loss, dev_loss, optimizer.lr, action))
            logger.info(
                "%s epoch %d: train %.4f dev %.4f lr %.2e %s",
                role.value,
                epoch,
                train_loss,
                dev_loss,
                optimizer.lr,
                action.value,
            )
            if action is LrAction.HALVE:
                optimizer.set_lr(optimizer.lr / 2.0)
                logger.info("Development loss plateaued; learning rate halved to %.2e", optimizer.lr)
            elif action is LrAction.STOP:
                logger.info("Early stop after %d epochs without improvement", scheduler.bad_epochs)
                result.stopped_early = True
                break

        result.optimizer_steps = optimizer.state.step
        model.load_weights(checkpoint)
        return result

    def train_extractor(
        self,
        train_scenes: Sequence[Scene],
        role: ModelRole,
        checkpoint: Path,
        dev_scenes: Optional[Sequence[Scene]] = None,
        init: Optional[Path] = None,
        dynamic_mixing: bool = False,
    ) -> TrainingResult:
        """Train the universal model or one scenario expert.

        ``init`` warm-starts from another extractor checkpoint; the optimizer
        always starts fresh.
        """
        role = ModelRole(role)
        clip = self.config.extractor_clip_s
        train = [scene.truncate(clip) for scene in scenes_for_role(train_scenes, role)]
        dev = [scene.truncate(clip) for scene in scenes_for_role(dev_scenes, role)] if dev_scenes else train

        model = ModelFactory.create_model(role, self.settings)
        if init is not None:
            model.load_weights(init)
            logger.info("Warm start of %s from %s; optimizer state re-initialized", role.value, init)

        if dynamic_mixing:
            mixer = DynamicMixer(
                ScenePool.from_scenes(train),
                self.settings.simulation,
                seed=self.config.seed,
                scenarios=None if role is ModelRole.UNIVERSAL else ROLE_SCENARIOS[role],
            )
            steps = self.config.dynamic_mixing_steps

            def draw_epoch(epoch: int) -> List[Scene]:
                return mixer.take(steps)

        else:

            def draw_epoch(epoch: int) -> List[Scene]:
                return train

        logger.info("Training %s on %d scenes (dynamic mixing: %s)", role.value, len(train), dynamic_mixing)
        return self.fit(model, role, draw_epoch, dev, extractor_loss(self.settings), checkpoint)

    def train_classifier(
        self,
        train_scenes: Sequence[Scene],
        checkpoint: Path,
        dev_scenes: Optional[Sequence[Scene]] = None,
    ) -> TrainingResult:
        clip = self.config.classifier_clip_s
        train = [scene.truncate(clip) for scene in train_scenes]
        if not train:
            raise ConfigurationError("No scenes available to train the classifier")
        dev = [scene.truncate(clip) for scene in dev_scenes] if dev_scenes else train
        if len({scene.scenario for scene in train}) < 2:
            logger.warning("Classifier training set holds a single scenario; the model cannot learn a boundary")
        model = ModelFactory.create_model(ModelRole.CLASSIFIER, self.settings)
        logger.info("Training classifier on %d scenes", len(train))
        return self.fit(model, ModelRole.CLASSIFIER, lambda epoch: train, dev, classifier_loss, checkpoint)
