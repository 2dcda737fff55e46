import logging

import pytest

from savgridnet.core.config import TrainingConfig
from savgridnet.core.errors import ConfigurationError
from savgridnet.models import AVGridNet, ModelFactory, ScenarioClassifier
from savgridnet.models.base import Model
from savgridnet.nn.optim import LrAction
from savgridnet.schemas import ModelRole, Scenario
from savgridnet.services.training_service import TrainingService, classifier_loss, scenes_for_role


def with_training(settings, **updates):
    training = TrainingConfig(extractor_clip_s=0.1, classifier_clip_s=0.1, **updates)
    return settings.model_copy(update={"training": training})


def only(scenes, scenario):
    return [scene for scene in scenes if scene.scenario is scenario]


class TestSceneSelection:
    def test_experts_see_their_scenario(self, toy_scenes):
        speech = scenes_for_role(toy_scenes, ModelRole.EXPERT_SPEECH)
        assert speech and all(scene.scenario is Scenario.SPEECH for scene in speech)
        assert len(scenes_for_role(toy_scenes, ModelRole.UNIVERSAL)) == len(toy_scenes)

    def test_expert_selection_logs_dropped_scenes(self, toy_scenes, caplog):
        noise_count = len(only(toy_scenes, Scenario.NOISE))
        with caplog.at_level(logging.WARNING, logger="savgridnet.services.training_service"):
            scenes_for_role(toy_scenes, ModelRole.EXPERT_SPEECH)
        assert f"Dropped {noise_count} of {len(toy_scenes)} scenes" in caplog.text

    def test_universal_selection_is_silent(self, toy_scenes, caplog):
        with caplog.at_level(logging.WARNING, logger="savgridnet.services.training_service"):
            scenes_for_role(toy_scenes, ModelRole.UNIVERSAL)
        assert "Dropped" not in caplog.text

    def test_classifier_is_not_an_extractor(self, toy_scenes):
        with pytest.raises(ConfigurationError):
            scenes_for_role(toy_scenes, ModelRole.CLASSIFIER)

    def test_no_matching_scenes(self, toy_scenes):
        with pytest.raises(ConfigurationError, match="noise"):
            scenes_for_role(only(toy_scenes, Scenario.SPEECH), ModelRole.EXPERT_NOISE)


class TestSchedule:
    def test_plateau_halves_then_stops(self, toy_settings, toy_scenes, tmp_path):
        settings = with_training(toy_settings, halve_patience=1, stop_patience=3, max_epochs=10)
        service = TrainingService(settings)
        model = ModelFactory.create_model(ModelRole.CLASSIFIER, settings)
        dev = [scene.truncate(0.1) for scene in toy_scenes[:2]]
        result = service.fit(
            model, ModelRole.CLASSIFIER, lambda epoch: [], dev, classifier_loss, tmp_path / "c.savg"
        )
        assert [log.action for log in result.history] == [
            LrAction.NONE,
            LrAction.HALVE,
            LrAction.NONE,
            LrAction.STOP,
        ]
        assert result.stopped_early
        assert result.history[1].lr == pytest.approx(1e-3)
        assert result.history[2].lr == pytest.approx(5e-4)
        assert result.optimizer_steps == 0


class TestClassifierTraining:
    def test_keeps_best_checkpoint(self, toy_settings, toy_scenes, tmp_path):
        settings = with_training(toy_settings, max_epochs=2)
        service = TrainingService(settings)
        checkpoint = tmp_path / "classifier.savg"
        result = service.train_classifier(toy_scenes, checkpoint)
        assert result.epochs == 2
        assert result.optimizer_steps == 2 * len(toy_scenes)
        assert result.best_dev_loss == min(log.dev_loss for log in result.history)
        dev = [scene.truncate(0.1) for scene in toy_scenes]
        assert service._mean_loss(result.model, dev, classifier_loss) == pytest.approx(result.best_dev_loss)
        assert isinstance(ModelFactory.load(checkpoint, expected_kind=ScenarioClassifier.kind), ScenarioClassifier)

    def test_single_scenario_warns(self, toy_settings, toy_scenes, tmp_path, caplog):
        service = TrainingService(with_training(toy_settings, max_epochs=1))
        with caplog.at_level(logging.WARNING, logger="savgridnet.services.training_service"):
            service.train_classifier(only(toy_scenes, Scenario.SPEECH), tmp_path / "c.savg")
        assert "single scenario" in caplog.text

    def test_empty_training_set(self, toy_settings, tmp_path):
        with pytest.raises(ConfigurationError):
            TrainingService(toy_settings).train_classifier([], tmp_path / "c.savg")


class TestExtractorTraining:
    def test_warm_start_uses_a_fresh_optimizer(self, toy_settings, toy_scenes, tmp_path, mocker):
        settings = with_training(toy_settings, max_epochs=1)
        service = TrainingService(settings)
        universal = tmp_path / "universal.savg"
        first = service.train_extractor(toy_scenes[:2], ModelRole.UNIVERSAL, universal)
        assert first.optimizer_steps == 2
        assert isinstance(first.model, AVGridNet)

        load = mocker.spy(Model, "load_weights")
        speech = only(toy_scenes, Scenario.SPEECH)[:2]
        result = service.train_extractor(speech, ModelRole.EXPERT_SPEECH, tmp_path / "speech.savg", init=universal)
        assert load.call_args_list[0].args[1] == universal
        assert result.optimizer_steps == len(speech)

    def test_dynamic_mixing_sets_the_epoch_size(self, toy_settings, toy_scenes, tmp_path):
        settings = with_training(toy_settings, max_epochs=1, dynamic_mixing_steps=2)
        result = TrainingService(settings).train_extractor(
            toy_scenes, ModelRole.EXPERT_NOISE, tmp_path / "noise.savg", dynamic_mixing=True
        )
        assert result.optimizer_steps == 2
        assert (tmp_path / "noise.savg").exists()
