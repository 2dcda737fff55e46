from .cascade import CascadeService, RoutedOutput, RoutingInput
from .evaluation_service import EvaluationService, SystemRegistry
from .scene_store import SceneStore
from .training_service import TrainingService

__all__ = [
    "CascadeService",
    "EvaluationService",
    "RoutedOutput",
    "RoutingInput",
    "SceneStore",
    "SystemRegistry",
    "TrainingService",
]
