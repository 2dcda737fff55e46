"""SI-SDR evaluation of extraction systems and the scenario analysis reports."""

import logging
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Type

import numpy as np
import pandas as pd

from ..core.config import Settings, get_settings
from ..core.errors import InvalidInputError
from ..losses import si_sdr_metric
from ..media.signal import AudioClip
from ..schemas import ConfusionMatrix, EvalRecord, RoutingDecision, Scenario, Strategy
from ..simulation.scenes import Scene
from .cascade import CascadeService, Extractor, RoutingInput

logger = logging.getLogger(__name__)

OVERALL = "overall"
RECORD_COLUMNS = [
    "scene_id",
    "scenario",
    "si_sdr_in",
    "si_sdr_out",
    "si_sdr_improvement",
    "classifier_label",
    "final_label",
    "chosen_model",
]

SystemOutput = Tuple[AudioClip, Optional[RoutingDecision]]


class ExtractionSystem(ABC):
    """Something that turns a scene's mixture into an estimate of its target."""

    name: str = ""

    @abstractmethod
    def run(self, scene: Scene) -> SystemOutput:
        """Estimate for one scene, with the routing decision when one was made."""


class IdentitySystem(ExtractionSystem):
    name = "identity"

    def run(self, scene: Scene) -> SystemOutput:
        return scene.mixture, None


class OracleSystem(ExtractionSystem):
    name = "oracle"

    def run(self, scene: Scene) -> SystemOutput:
        return scene.target, None


class ModelSystem(ExtractionSystem):
    name = "model"

    def __init__(self, extractor: Extractor):
        self.extractor = extractor

    def run(self, scene: Scene) -> SystemOutput:
        return self.extractor.extract(scene.mixture, scene.face_track), None


class CascadeSystem(ExtractionSystem):
    name = "cascade"

    def __init__(self, cascade: CascadeService, strategy: Strategy = Strategy.PLAIN):
        self.cascade = cascade
        self.strategy = Strategy(strategy)

    def run(self, scene: Scene) -> SystemOutput:
        item = RoutingInput(scene.scene_id, scene.mixture, scene.face_track, scene.scenario)
        output = self.cascade.route(item, self.strategy)
        return output.estimate, output.decision


class SystemRegistry:
    """Registry of evaluable systems, addressed by name on the command line."""

    systems: Dict[str, Type[ExtractionSystem]] = {}

    @classmethod
    def register(cls, name: str, system_class: Type[ExtractionSystem]) -> None:
        cls.systems[name] = system_class

    @classmethod
    def create(cls, name: str, **kwargs) -> ExtractionSystem:
        if name not in cls.systems:
            raise InvalidInputError(f"Unknown system {name!r}; choose from {sorted(cls.systems)}")
        return cls.systems[name](**kwargs)


SystemRegistry.register(IdentitySystem.name, IdentitySystem)
SystemRegistry.register(OracleSystem.name, OracleSystem)
SystemRegistry.register(ModelSystem.name, ModelSystem)
SystemRegistry.register(CascadeSystem.name, CascadeSystem)


@dataclass
class EvaluationReport:
    records: List[EvalRecord]
    summary: pd.DataFrame
    classifier_confusion: Optional[ConfusionMatrix] = None
    final_confusion: Optional[ConfusionMatrix] = None

    @property
    def decisions(self) -> List[RoutingDecision]:
        return [record.decision for record in self.records if record.decision is not None]


@dataclass
class OutlierReport:
    threshold_db: float
    count: int = 0
    per_scenario: Dict[str, int] = field(default_factory=dict)
    scene_ids: List[str] = field(default_factory=list)


@dataclass
class StrategyComparison:
    wins: int
    losses: int
    ties: int
    mean_delta_db: float
    outliers_a: int
    outliers_b: int
    per_scene: pd.DataFrame

    @property
    def outlier_delta(self) -> int:
        return self.outliers_b - self.outliers_a


def score_scene(scene: Scene, estimate: AudioClip, decision: Optional[RoutingDecision] = None) -> EvalRecord:
    if getattr(scene, "target", None) is None:
        raise InvalidInputError(f"{scene.scene_id}: evaluation needs the reference target")
    return EvalRecord(
        scene_id=scene.scene_id,
        scenario=scene.scenario,
        si_sdr_in=si_sdr_metric(scene.target, scene.mixture),
        si_sdr_out=si_sdr_metric(scene.target, estimate),
        decision=decision,
    )


def records_frame(records: Iterable[EvalRecord]) -> pd.DataFrame:
    rows = []
    for record in records:
        decision = record.decision
        rows.append(
            {
                "scene_id": record.scene_id,
                "scenario": record.scenario.value,
                "si_sdr_in": record.si_sdr_in,
                "si_sdr_out": record.si_sdr_out,
                "si_sdr_improvement": record.si_sdr_improvement,
                "classifier_label": decision.classifier_label.value if decision else None,
                "final_label": decision.final_label.value if decision else None,
                "chosen_model": decision.chosen_model.value if decision else None,
            }
        )
    return pd.DataFrame(rows, columns=RECORD_COLUMNS)


def summarize(records: Sequence[EvalRecord], percentiles: Sequence[int] = (10, 50, 90)) -> pd.DataFrame:
    """Count, mean and percentiles of SI-SDR and SI-SDRi per scenario and overall."""
    frame = records_frame(records)

    def stats(group: pd.DataFrame) -> Dict[str, float]:
        row: Dict[str, float] = {
            "count": len(group),
            "si_sdr_in": group["si_sdr_in"].mean(),
            "si_sdr_out": group["si_sdr_out"].mean(),
            "si_sdr_improvement": group["si_sdr_improvement"].mean(),
        }
        for q in percentiles:
            row[f"si_sdri_p{q}"] = (
                float(np.percentile(group["si_sdr_improvement"], q)) if len(group) else np.nan
            )
        return row

    rows = {scenario: stats(group) for scenario, group in frame.groupby("scenario", sort=True)}
    rows[OVERALL] = stats(frame)
    summary = pd.DataFrame.from_dict(rows, orient="index")
    summary.index.name = "scenario"
    summary["count"] = summary["count"].astype(int)
    return summary


def analyze_outliers(records: Sequence[EvalRecord], threshold_db: float = 0.0) -> OutlierReport:
    """Scenes whose SI-SDR improvement falls below ``threshold_db``."""
    report = OutlierReport(threshold_db=threshold_db)
    for record in sorted(records, key=lambda r: r.scene_id):
        if record.si_sdr_improvement < threshold_db:
            report.count += 1
            report.scene_ids.append(record.scene_id)
            key = record.scenario.value
            report.per_scenario[key] = report.per_scenario.get(key, 0) + 1
    return report


def compare_strategies(
    records_a: Sequence[EvalRecord],
    records_b: Sequence[EvalRecord],
    threshold_db: float = 0.0,
) -> StrategyComparison:
    """Per-scene SI-SDRi of ``records_b`` against ``records_a``; a win means b is better."""
    frame_a = records_frame(records_a).set_index("scene_id")
    frame_b = records_frame(records_b).set_index("scene_id")
    if set(frame_a.index) != set(frame_b.index):
        raise InvalidInputError("Strategy comparison needs records for the same scenes")
    per_scene = pd.DataFrame(
        {
            "scenario": frame_a["scenario"],
            "si_sdri_a": frame_a["si_sdr_improvement"],
            "si_sdri_b": frame_b["si_sdr_improvement"].reindex(frame_a.index),
        }
    ).sort_index()
    per_scene["delta"] = per_scene["si_sdri_b"] - per_scene["si_sdri_a"]
    return StrategyComparison(
        wins=int((per_scene["delta"] > 0).sum()),
        losses=int((per_scene["delta"] < 0).sum()),
        ties=int((per_scene["delta"] == 0).sum()),
        mean_delta_db=float(per_scene["delta"].mean()) if len(per_scene) else 0.0,
        outliers_a=analyze_outliers(records_a, threshold_db).count,
        outliers_b=analyze_outliers(records_b, threshold_db).count,
        per_scene=per_scene,
    )


def confusion(
    decisions: Sequence[RoutingDecision],
    truth: Mapping[str, Scenario],
    use_final: bool = True,
) -> ConfusionMatrix:
    """Confusion counts of the final (or raw classifier) labels, noise positive."""
    by_id = {decision.scene_id: decision for decision in decisions}
    if len(by_id) != len(decisions) or set(by_id) != set(truth):
        raise InvalidInputError("Decision trail and ground truth cover different scene ids")
    ids = sorted(by_id)
    predicted = [by_id[i].final_label if use_final else by_id[i].classifier_label for i in ids]
    return ConfusionMatrix.from_labels(predicted, [truth[i] for i in ids])


def write_records(path: Path, records: Iterable[EvalRecord]) -> Path:
    frame = records_frame(records).sort_values("scene_id")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    return Path(path)


def read_records(path: Path) -> List[EvalRecord]:
    if not Path(path).exists():
        raise InvalidInputError(f"No evaluation records at {path}")
    frame = pd.read_csv(path)
    missing = {"scene_id", "scenario", "si_sdr_in", "si_sdr_out"} - set(frame.columns)
    if missing:
        raise InvalidInputError(f"{path}: missing columns {sorted(missing)}")
    return [
        EvalRecord(
            scene_id=str(row["scene_id"]),
            scenario=Scenario(row["scenario"]),
            si_sdr_in=float(row["si_sdr_in"]),
            si_sdr_out=float(row["si_sdr_out"]),
        )
        for _, row in frame.iterrows()
    ]


class EvaluationService:
    """Scores systems on scene sets and builds the scenario reports."""

    def __init__(self, settings: Optional[Settings] = None, workers: Optional[int] = None):
        self.settings = settings or get_settings()
        self.workers = workers or self.settings.workers

    def evaluate(self, scenes: Sequence[Scene], system: ExtractionSystem) -> EvaluationReport:
        def run(scene: Scene) -> EvalRecord:
            estimate, decision = system.run(scene)
            return score_scene(scene, estimate, decision)

        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            records = sorted(pool.map(run, scenes), key=lambda record: record.scene_id)
        logger.info("Evaluated %s on %d scenes", system.name or type(system).__name__, len(records))

        report = EvaluationReport(
            records=records,
            summary=summarize(records, self.settings.evaluation.percentiles),
        )
        if report.decisions:
            truth = {record.scene_id: record.scenario for record in records}
            report.classifier_confusion = confusion(report.decisions, truth, use_final=False)
            report.final_confusion = confusion(report.decisions, truth, use_final=True)
        return report

    def outliers(self, records: Sequence[EvalRecord]) -> OutlierReport:
        return analyze_outliers(records, self.settings.evaluation.outlier_threshold_db)
