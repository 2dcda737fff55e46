from .base import Model
from .classifier import ScenarioClassifier
from .factory import ExpertBundle, ModelFactory, ModelRegistry
from .gridnet import AVGridNet
from .visual import VisualFrontend

__all__ = [
    "AVGridNet",
    "ExpertBundle",
    "Model",
    "ModelFactory",
    "ModelRegistry",
    "ScenarioClassifier",
    "VisualFrontend",
]
