"""Settings for every savgridnet component.

Values resolve from, highest priority first: explicit overrides, ``SAVG_``
environment variables (``__`` separates nested keys), a key=value config file,
``.env`` and the defaults below.
"""

import json
from contextvars import ContextVar
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic.fields import FieldInfo
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
)

from .errors import ConfigurationError

SAMPLE_RATE = 16000
VIDEO_FPS = 25


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class StftConfig(_Section):
    window_size: int = Field(default=256, gt=0)
    hop_size: int = Field(default=128, gt=0)
    fft_size: int = Field(default=256, gt=0)
    window: Literal["sqrt_hann", "sqrt_hann_periodic"] = "sqrt_hann"

    @model_validator(mode="after")
    def _check_sizes(self) -> "StftConfig":
        if not self.hop_size <= self.window_size <= self.fft_size:
            raise ValueError("expected hop_size <= window_size <= fft_size")
        return self

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1


class VisualConfig(_Section):
    height: int = Field(default=16, gt=0)
    width: int = Field(default=16, gt=0)
    fps: int = Field(default=VIDEO_FPS, gt=0)
    conv3d_channels: int = Field(default=8, gt=0)
    stub_channels: Tuple[int, int, int] = (16, 16, 16)
    Dv: int = Field(default=16, gt=0)
    R: int = Field(default=2, ge=0)
    vtcn_kernel: int = Field(default=3, gt=0)


class GridNetConfig(_Section):
    D: int = Field(default=8, gt=0)
    B: int = Field(default=2, gt=0)
    I: int = Field(default=4, gt=0)  # noqa: E741
    J: int = Field(default=1, gt=0)
    H: int = Field(default=16, gt=0)
    L: int = Field(default=4, gt=0)
    E: int = Field(default=4, gt=0)
    use_visual: bool = True
    stft: StftConfig = StftConfig()
    visual: VisualConfig = VisualConfig()

    @model_validator(mode="after")
    def _check_structure(self) -> "GridNetConfig":
        if self.J > self.I:
            raise ValueError("deconvolution stride J must not exceed kernel I")
        if self.D % self.L:
            raise ValueError("attention heads L must divide embedding channels D")
        return self

    @classmethod
    def full_size(cls) -> "GridNetConfig":
        return cls(D=48, B=6, I=4, J=1, H=192, L=4, E=4, visual=VisualConfig(R=5))


class HybridLossConfig(_Section):
    kind: Literal["hybrid", "si_sdr"] = "hybrid"
    gamma: float = Field(default=1.0, ge=0.0)
    resolutions: List[Tuple[int, int, int]] = [
        (512, 50, 240),
        (1024, 120, 600),
        (2048, 240, 1200),
    ]
    delta_magnitude: Literal["linear", "log"] = "linear"
    delta_distance: Literal["l1", "l2"] = "l1"
    eps: float = Field(default=1e-8, gt=0.0)
    magnitude_eps: float = Field(default=1e-8, gt=0.0)

    @property
    def M(self) -> int:
        return len(self.resolutions)


class ClassifierConfig(_Section):
    """Layer plan of the scenario classifier."""

    audio_channels: int = Field(default=16, gt=0)
    audio_kernel: int = Field(default=40, gt=0)
    audio_stride: int = Field(default=20, gt=0)
    audio_pool: int = Field(default=4, gt=0)
    tcn_hidden: int = Field(default=32, gt=0)
    tcn_kernel: int = Field(default=3, gt=0)
    max_dilation: int = Field(default=8, gt=0)
    tcn_repeats: int = Field(default=1, gt=0)
    backend_hidden: int = Field(default=32, gt=0)
    backend_max_dilation: int = Field(default=4, gt=0)
    use_visual: bool = True
    visual: VisualConfig = VisualConfig()
    threshold: float = 0.5

    @classmethod
    def full_size(cls) -> "ClassifierConfig":
        return cls(
            audio_channels=256,
            tcn_hidden=512,
            max_dilation=128,
            backend_hidden=256,
            backend_max_dilation=128,
            visual=VisualConfig(R=5),
        )


class SceneSpec(_Section):
    count: int = Field(default=100, ge=0)
    duration_s: float = Field(default=1.0, ge=0.5)
    sample_rate: int = Field(default=SAMPLE_RATE, gt=0)
    noise_ratio: float = Field(default=0.5, ge=0.0, le=1.0)
    seed: int = 7
    speech_snr_range: Tuple[float, float] = (-15.0, 5.0)
    noise_snr_range: Tuple[float, float] = (-10.0, 10.0)
    impulsive_probability: float = Field(default=0.3, ge=0.0, le=1.0)


class TrainingConfig(_Section):
    lr: float = Field(default=1e-3, gt=0.0)
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    halve_patience: int = Field(default=6, gt=0)
    stop_patience: int = Field(default=20, gt=0)
    max_epochs: int = Field(default=200, gt=0)
    batch_size: int = Field(default=1, gt=0)
    extractor_clip_s: float = Field(default=1.0, gt=0.0)
    classifier_clip_s: float = Field(default=2.0, gt=0.0)
    dynamic_mixing_steps: int = Field(default=64, gt=0)
    shuffle: bool = True
    seed: int = 0


class EvaluationConfig(_Section):
    outlier_threshold_db: float = 0.0
    percentiles: Tuple[int, int, int] = (10, 50, 90)


class NnConfig(_Section):
    dtype: Literal["float64", "float32"] = "float64"
    detect_anomaly: bool = True
    init_seed: int = 0


def check_known_keys(values: Mapping[str, Any], settings_cls: type[BaseModel]) -> None:
    unknown = set(values) - set(settings_cls.model_fields)
    if unknown:
        raise ConfigurationError(f"Unknown configuration keys: {sorted(unknown)}")


_config_file: ContextVar[Optional[Path]] = ContextVar("savg_config_file", default=None)


class KeyValueConfigSource(PydanticBaseSettingsSource):
    """Settings source reading a ``[section]`` / ``key = value`` text file."""

    def __init__(self, settings_cls: type[BaseSettings], path: Optional[Path]):
        super().__init__(settings_cls)
        self.values = read_key_value_file(path) if path else {}
        check_known_keys(self.values, settings_cls)

    def get_field_value(self, field: FieldInfo, field_name: str) -> Tuple[Any, str, bool]:
        return self.values.get(field_name), field_name, False

    def __call__(self) -> Dict[str, Any]:
        return dict(self.values)


class Settings(BaseSettings):
    # General
    log_level: str = "INFO"
    workers: int = Field(default=1, gt=0)
    data_dir: Path = Path("./data")

    # Components
    nn: NnConfig = NnConfig()
    gridnet: GridNetConfig = GridNetConfig()
    loss: HybridLossConfig = HybridLossConfig()
    classifier: ClassifierConfig = ClassifierConfig()
    simulation: SceneSpec = SceneSpec()
    training: TrainingConfig = TrainingConfig()
    evaluation: EvaluationConfig = EvaluationConfig()

    model_config = SettingsConfigDict(
        env_prefix="SAVG_",
        env_nested_delimiter="__",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        return (
            init_settings,
            env_settings,
            KeyValueConfigSource(settings_cls, _config_file.get()),
            dotenv_settings,
            file_secret_settings,
        )


def _parse_value(raw: str) -> Any:
    raw = raw.strip()
    if raw[:1] in "[{(":
        try:
            return json.loads(raw.replace("(", "[").replace(")", "]"))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"Malformed value {raw!r}: {exc}") from exc
    return raw


def _assign(tree: Dict[str, Any], dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigurationError(f"Key {dotted!r} conflicts with a scalar value")
        node = child
    node[parts[-1]] = value


def parse_key_value_text(text: str) -> Dict[str, Any]:
    """Parse key=value lines with optional ``[section]`` headers into a tree."""
    tree: Dict[str, Any] = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"Line {lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        dotted = f"{section}.{key}" if section else key
        _assign(tree, dotted, _parse_value(raw))
    return tree


def read_key_value_file(path: Path) -> Dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"Cannot read config file {path}: {exc}") from exc
    return parse_key_value_text(text)


def flatten(values: Mapping[str, Any], prefix: str = "") -> Dict[str, str]:
    """Flatten a nested mapping into dotted keys with text values."""
    flat: Dict[str, str] = {}
    for key, value in values.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten(value, f"{dotted}."))
        elif isinstance(value, (list, tuple)):
            flat[dotted] = json.dumps(value)
        else:
            flat[dotted] = str(value)
    return flat


def format_key_value_text(values: Mapping[str, Any]) -> str:
    return "".join(f"{key} = {value}\n" for key, value in flatten(values).items())


def parse_overrides(pairs: Optional[List[str]]) -> Dict[str, Any]:
    tree: Dict[str, Any] = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigurationError(f"Override {pair!r} must look like key=value")
        key, raw = pair.split("=", 1)
        _assign(tree, key.strip(), _parse_value(raw))
    return tree


def load_settings(
    config_file: Optional[Path] = None, overrides: Optional[List[str]] = None
) -> Settings:
    """Resolve settings from all sources, mapping validation failures to
    ConfigurationError."""
    token = _config_file.set(Path(config_file) if config_file else None)
    try:
        values = parse_overrides(overrides)
        check_known_keys(values, Settings)
        return Settings(**values)
    except ValidationError as exc:
        raise ConfigurationError(f"Invalid configuration: {exc}") from exc
    finally:
        _config_file.reset(token)


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return load_settings()
