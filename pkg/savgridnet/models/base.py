from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, ClassVar, Dict, Optional, Type

from pydantic import BaseModel as PydanticBaseModel

from ..core.errors import ConfigurationError
from ..nn.checkpoint import load_checkpoint, save_checkpoint, write_manifest
from ..nn.layers import Module


class Model(Module, ABC):
    """Abstract base class for networks that are saved with a manifest."""

    kind: ClassVar[str]
    config_class: ClassVar[Type[PydanticBaseModel]]

    def __init__(self, config: PydanticBaseModel, seed: int = 0):
        self.config = config
        self.seed = seed

    @abstractmethod
    def forward(self, *args: Any, **kwargs: Any) -> Any:
        """Differentiable forward pass."""

    def manifest(self, role: Optional[str] = None) -> Dict[str, Any]:
        values: Dict[str, Any] = {"kind": self.kind, "seed": self.seed}
        if role:
            values["role"] = role
        values["config"] = self.config.model_dump(mode="json")
        return values

    def save(self, path: Path, role: Optional[str] = None) -> None:
        """Write weights plus a key=value manifest next to them."""
        save_checkpoint(path, self.state_dict())
        write_manifest(path, self.manifest(role))

    def load_weights(self, path: Path) -> None:
        try:
            self.load_state_dict(load_checkpoint(path))
        except ConfigurationError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
