"""Record types shared by the cascade, training and evaluation services."""

from enum import Enum
from typing import Iterable, Optional

from pydantic import BaseModel, Field, computed_field, model_validator

from .core.errors import InvalidInputError


class Scenario(str, Enum):
    """Interference type. Noise is the positive class."""

    SPEECH = "speech"
    NOISE = "noise"

    @property
    def target(self) -> int:
        return 1 if self is Scenario.NOISE else 0


class ModelRole(str, Enum):
    UNIVERSAL = "universal"
    EXPERT_SPEECH = "expert_speech"
    EXPERT_NOISE = "expert_noise"
    CLASSIFIER = "classifier"

    @classmethod
    def for_scenario(cls, scenario: Scenario) -> "ModelRole":
        return cls.EXPERT_NOISE if scenario is Scenario.NOISE else cls.EXPERT_SPEECH


class Strategy(str, Enum):
    PLAIN = "plain"
    PP1 = "pp1"
    PP2 = "pp2"
    ORACLE = "oracle"


class ScenarioPrediction(BaseModel):
    probability: float = Field(ge=0.0, le=1.0)
    threshold: float = 0.5

    @computed_field  # type: ignore[misc]
    @property
    def label(self) -> Scenario:
        # ties go to noise
        return Scenario.NOISE if self.probability >= self.threshold else Scenario.SPEECH


class RoutingDecision(BaseModel):
    scene_id: str
    probability: Optional[float] = None
    classifier_label: Scenario
    final_label: Scenario
    chosen_model: ModelRole
    universal_check: Optional[bool] = None
    mixture_check: Optional[bool] = None

    @model_validator(mode="after")
    def _check_consistency(self) -> "RoutingDecision":
        if self.chosen_model is ModelRole.EXPERT_NOISE and self.final_label is not Scenario.NOISE:
            raise ValueError("expert_noise may only serve a final noise label")
        overturned = self.classifier_label is Scenario.NOISE and self.final_label is Scenario.SPEECH
        if overturned and self.chosen_model is not ModelRole.UNIVERSAL:
            raise ValueError("an overturned noise prediction must fall back to the universal model")
        return self


class EvalRecord(BaseModel):
    scene_id: str
    scenario: Scenario
    si_sdr_in: float
    si_sdr_out: float
    si_sdr_improvement: float = 0.0
    decision: Optional[RoutingDecision] = None

    @model_validator(mode="before")
    @classmethod
    def _fill_improvement(cls, values: dict) -> dict:
        if isinstance(values, dict) and "si_sdr_improvement" not in values:
            values = dict(values)
            values["si_sdr_improvement"] = values["si_sdr_out"] - values["si_sdr_in"]
        return values

    @model_validator(mode="after")
    def _check_improvement(self) -> "EvalRecord":
        if abs(self.si_sdr_improvement - (self.si_sdr_out - self.si_sdr_in)) > 1e-9:
            raise ValueError("si_sdr_improvement must equal si_sdr_out - si_sdr_in")
        return self


class ConfusionMatrix(BaseModel):
    """Scenario confusion counts with noise as the positive class."""

    tp: int = Field(default=0, ge=0)
    fp: int = Field(default=0, ge=0)
    fn: int = Field(default=0, ge=0)
    tn: int = Field(default=0, ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @classmethod
    def from_labels(cls, predicted: Iterable[Scenario], truth: Iterable[Scenario]) -> "ConfusionMatrix":
        counts = {"tp": 0, "fp": 0, "fn": 0, "tn": 0}
        predicted, truth = list(predicted), list(truth)
        if len(predicted) != len(truth):
            raise InvalidInputError(f"{len(predicted)} predictions vs {len(truth)} labels")
        for guess, actual in zip(predicted, truth):
            guess, actual = Scenario(guess), Scenario(actual)
            if guess is Scenario.NOISE:
                counts["tp" if actual is Scenario.NOISE else "fp"] += 1
            else:
                counts["fn" if actual is Scenario.NOISE else "tn"] += 1
        return cls(**counts)
