import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Type

from pydantic import ValidationError

from ..core.config import Settings, get_settings
from ..core.errors import ConfigurationError
from ..nn.checkpoint import read_manifest
from ..schemas import ModelRole
from .base import Model
from .classifier import ScenarioClassifier
from .gridnet import AVGridNet

logger = logging.getLogger(__name__)


class ModelRegistry:
    """Registry of model kinds stored in checkpoint manifests."""

    models: Dict[str, Type[Model]] = {}

    @classmethod
    def register(cls, name: str, model_class: Type[Model]) -> None:
        cls.models[name] = model_class

    @classmethod
    def create(cls, name: str, **kwargs) -> Model:
        if name not in cls.models:
            raise ConfigurationError(f"Unknown model kind: {name}")
        return cls.models[name](**kwargs)


ModelRegistry.register(AVGridNet.kind, AVGridNet)
ModelRegistry.register(ScenarioClassifier.kind, ScenarioClassifier)


class ModelFactory:
    """Factory for creating and loading model instances."""

    @classmethod
    def create_model(cls, role: ModelRole, settings: Optional[Settings] = None) -> Model:
        """Fresh model for a role, configured from settings."""
        settings = settings or get_settings()
        seed = settings.nn.init_seed
        if role is ModelRole.CLASSIFIER:
            return ModelRegistry.create(ScenarioClassifier.kind, cfg=settings.classifier, seed=seed)
        return ModelRegistry.create(AVGridNet.kind, cfg=settings.gridnet, seed=seed)

    @classmethod
    def load(cls, path: Path, expected_kind: Optional[str] = None) -> Model:
        """Rebuild a model from its manifest, then load the weights."""
        manifest = read_manifest(path)
        kind = manifest.get("kind")
        if expected_kind and kind != expected_kind:
            raise ConfigurationError(f"{path} holds a {kind!r} model, expected {expected_kind!r}")
        if kind not in ModelRegistry.models:
            raise ConfigurationError(f"{path}: unknown model kind {kind!r}")
        model_class = ModelRegistry.models[kind]
        try:
            config = model_class.config_class.model_validate(manifest.get("config", {}))
            seed = int(manifest.get("seed", 0))
        except (ValidationError, ValueError) as exc:
            raise ConfigurationError(f"{path}: invalid manifest: {exc}") from exc
        model = ModelRegistry.create(kind, cfg=config, seed=seed)
        model.load_weights(path)
        logger.info("Loaded %s model from %s", kind, path)
        return model


@dataclass
class ExpertBundle:
    """Universal extractor, the two scenario experts and the classifier."""

    universal: AVGridNet
    expert_speech: AVGridNet
    expert_noise: AVGridNet
    classifier: ScenarioClassifier

    def extractor(self, role: ModelRole) -> AVGridNet:
        return {
            ModelRole.UNIVERSAL: self.universal,
            ModelRole.EXPERT_SPEECH: self.expert_speech,
            ModelRole.EXPERT_NOISE: self.expert_noise,
        }[role]

    @classmethod
    def load(
        cls,
        universal: Path,
        expert_speech: Path,
        expert_noise: Path,
        classifier: Path,
    ) -> "ExpertBundle":
        paths = {
            "universal": universal,
            "expert_speech": expert_speech,
            "expert_noise": expert_noise,
            "classifier": classifier,
        }
        missing = [f"{role}={path}" for role, path in paths.items() if not Path(path).exists()]
        if missing:
            raise ConfigurationError(f"Missing checkpoints: {', '.join(missing)}")
        extractors = {
            role: ModelFactory.load(paths[role], expected_kind=AVGridNet.kind)
            for role in ("universal", "expert_speech", "expert_noise")
        }
        configs = {model.config.model_dump_json() for model in extractors.values()}
        if len(configs) != 1:
            raise ConfigurationError("Universal and expert checkpoints use different GridNet configs")
        return cls(
            classifier=ModelFactory.load(paths["classifier"], expected_kind=ScenarioClassifier.kind),
            **extractors,
        )

    @classmethod
    def from_directory(cls, directory: Path) -> "ExpertBundle":
        directory = Path(directory)
        return cls.load(
            directory / "universal.savg",
            directory / "expert_speech.savg",
            directory / "expert_noise.savg",
            directory / "classifier.savg",
        )
