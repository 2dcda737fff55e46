import numpy as np
import pytest

from savgridnet.core.errors import InvalidInputError
from savgridnet.schemas import ConfusionMatrix, EvalRecord, ModelRole, RoutingDecision, Scenario, Strategy
from savgridnet.services.cascade import CascadeService
from savgridnet.services.evaluation_service import (
    OVERALL,
    CascadeSystem,
    EvaluationService,
    IdentitySystem,
    ModelSystem,
    OracleSystem,
    SystemRegistry,
    analyze_outliers,
    compare_strategies,
    confusion,
    read_records,
    summarize,
    write_records,
)
from tests.conftest import FixedClassifier, FixedExtractor, StubBundle


def record(scene_id, improvement, scenario=Scenario.SPEECH, si_sdr_in=-5.0):
    return EvalRecord(
        scene_id=scene_id,
        scenario=scenario,
        si_sdr_in=si_sdr_in,
        si_sdr_out=si_sdr_in + improvement,
    )


def decision(scene_id, classifier_label, final_label):
    if final_label is Scenario.NOISE:
        model = ModelRole.EXPERT_NOISE
    elif classifier_label is Scenario.NOISE:
        model = ModelRole.UNIVERSAL
    else:
        model = ModelRole.EXPERT_SPEECH
    return RoutingDecision(
        scene_id=scene_id,
        classifier_label=classifier_label,
        final_label=final_label,
        chosen_model=model,
    )


@pytest.fixture
def service(toy_settings):
    return EvaluationService(toy_settings, workers=2)


class TestSystems:
    def test_identity_has_zero_improvement(self, service, toy_scenes):
        report = service.evaluate(toy_scenes, IdentitySystem())
        assert all(r.si_sdr_improvement == 0.0 for r in report.records)
        assert report.classifier_confusion is None

    def test_oracle_is_an_upper_bound(self, service, toy_scenes):
        oracle = service.evaluate(toy_scenes, OracleSystem())
        scaled = service.evaluate(toy_scenes, ModelSystem(FixedExtractor(gain=0.5)))
        for best, other in zip(oracle.records, scaled.records):
            assert best.si_sdr_out > 100.0
            assert best.si_sdr_out >= other.si_sdr_out

    def test_records_are_sorted(self, service, toy_scenes):
        report = service.evaluate(list(reversed(toy_scenes)), IdentitySystem())
        ids = [r.scene_id for r in report.records]
        assert ids == sorted(ids)

    def test_cascade_reports_confusions(self, service, toy_scenes):
        bundle = StubBundle(
            universal=FixedExtractor(gain=0.5),
            expert_speech=FixedExtractor(gain=0.8),
            expert_noise=FixedExtractor(gain=0.2),
            classifier=FixedClassifier(0.7),
        )
        report = service.evaluate(toy_scenes, CascadeSystem(CascadeService(bundle), Strategy.PLAIN))
        noise = sum(scene.scenario is Scenario.NOISE for scene in toy_scenes)
        assert report.classifier_confusion == ConfusionMatrix(tp=noise, fp=len(toy_scenes) - noise)
        assert report.final_confusion == report.classifier_confusion
        assert len(report.decisions) == len(toy_scenes)

    def test_unknown_system(self):
        with pytest.raises(InvalidInputError, match="Unknown system"):
            SystemRegistry.create("wiener")

    def test_registry_builds_with_arguments(self):
        system = SystemRegistry.create("model", extractor=FixedExtractor())
        assert isinstance(system, ModelSystem)


class TestSummaries:
    def test_per_scenario_and_overall(self):
        records = [
            record("a", 1.0),
            record("b", 3.0),
            record("c", -2.0, Scenario.NOISE),
        ]
        summary = summarize(records)
        assert list(summary.index) == ["noise", "speech", OVERALL]
        assert summary.loc["speech", "count"] == 2
        assert summary.loc["speech", "si_sdr_improvement"] == pytest.approx(2.0)
        assert summary.loc[OVERALL, "count"] == 3
        assert summary.loc[OVERALL, "si_sdri_p50"] == pytest.approx(1.0)

    def test_outliers_use_a_strict_threshold(self):
        records = [record("a", -1.0), record("b", 0.0), record("c", -0.5, Scenario.NOISE), record("d", 2.0)]
        report = analyze_outliers(records, threshold_db=0.0)
        assert report.count == 2
        assert report.scene_ids == ["a", "c"]
        assert report.per_scenario == {"speech": 1, "noise": 1}

    def test_outlier_threshold_from_settings(self, service):
        assert service.outliers([record("a", -0.1)]).count == 1

    def test_compare_strategies(self):
        first = [record("a", 1.0), record("b", -3.0), record("c", 2.0)]
        second = [record("c", 2.0), record("a", 0.0), record("b", 1.0)]
        comparison = compare_strategies(first, second)
        assert (comparison.wins, comparison.losses, comparison.ties) == (1, 1, 1)
        assert comparison.mean_delta_db == pytest.approx((4.0 - 1.0) / 3)
        assert comparison.outlier_delta == -1
        assert list(comparison.per_scene.index) == ["a", "b", "c"]

    def test_compare_needs_same_scenes(self):
        with pytest.raises(InvalidInputError):
            compare_strategies([record("a", 1.0)], [record("b", 1.0)])


class TestConfusion:
    def test_final_and_classifier_labels(self):
        decisions = [
            decision("a", Scenario.NOISE, Scenario.NOISE),
            decision("b", Scenario.NOISE, Scenario.SPEECH),
            decision("c", Scenario.SPEECH, Scenario.SPEECH),
            decision("d", Scenario.NOISE, Scenario.NOISE),
        ]
        truth = {"a": Scenario.NOISE, "b": Scenario.SPEECH, "c": Scenario.NOISE, "d": Scenario.SPEECH}
        assert confusion(decisions, truth, use_final=False) == ConfusionMatrix(tp=1, fp=2, fn=1, tn=0)
        final = confusion(decisions, truth)
        assert final == ConfusionMatrix(tp=1, fp=1, fn=1, tn=1)
        assert final.accuracy == pytest.approx(0.5)

    def test_mismatched_ids(self):
        with pytest.raises(InvalidInputError):
            confusion([decision("a", Scenario.NOISE, Scenario.NOISE)], {"b": Scenario.NOISE})

    def test_empty_matrix(self):
        assert ConfusionMatrix().accuracy == 0.0


class TestRecordFiles:
    def test_round_trip(self, tmp_path):
        records = [record("b", np.pi, Scenario.NOISE), record("a", -1.0 / 3.0)]
        path = write_records(tmp_path / "out" / "records.csv", records)
        loaded = read_records(path)
        assert [r.scene_id for r in loaded] == ["a", "b"]
        assert loaded[1].si_sdr_improvement == records[0].si_sdr_improvement
        assert loaded[0].scenario is Scenario.SPEECH

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidInputError):
            read_records(tmp_path / "absent.csv")

    def test_improvement_must_be_consistent(self):
        with pytest.raises(ValueError):
            EvalRecord(
                scene_id="x",
                scenario=Scenario.SPEECH,
                si_sdr_in=0.0,
                si_sdr_out=1.0,
                si_sdr_improvement=2.0,
            )
