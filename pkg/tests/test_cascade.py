import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from savgridnet.core.errors import InvalidInputError
from savgridnet.media.signal import AudioClip
from savgridnet.schemas import ModelRole, Scenario, Strategy
from savgridnet.services.cascade import (
    CascadeService,
    RoutingInput,
    mixture_far_from_noise,
    routing_inputs,
    universal_agrees_with_noise,
)
from tests.conftest import FixedClassifier, FixedExtractor, StubBundle

LENGTH = 64


def make_bundle(universal, noise, speech, probability=0.9):
    return StubBundle(
        universal=FixedExtractor(universal),
        expert_speech=FixedExtractor(speech),
        expert_noise=FixedExtractor(noise),
        classifier=FixedClassifier(probability),
    )


@pytest.fixture
def signals():
    rng = np.random.default_rng(99)
    return {name: rng.standard_normal(LENGTH) for name in ("x", "a", "b")}


class TestChecks:
    def test_self_agreement(self, signals):
        u = AudioClip(signals["a"])
        assert universal_agrees_with_noise(u, u, AudioClip(signals["b"]))
        assert not universal_agrees_with_noise(u, AudioClip(signals["b"]), u)

    def test_ties_are_not_confirmed(self, signals):
        clip = AudioClip(signals["a"])
        assert not universal_agrees_with_noise(clip, clip, clip)
        assert not mixture_far_from_noise(clip, clip, clip)

    def test_mixture_check(self, signals):
        x = AudioClip(signals["x"])
        assert mixture_far_from_noise(x, AudioClip(signals["a"]), x)
        assert not mixture_far_from_noise(x, x, AudioClip(signals["a"]))


class TestPostProcessing:
    # (universal, noise, speech) built from the mixture x and unrelated a, b
    @pytest.mark.parametrize(
        "layout, universal_check, mixture_check, confirmed",
        [
            (("x", "x", "a"), True, False, True),
            (("x", "a", "x"), False, True, True),
            (("a", "x", "a"), False, False, False),
            (("b", "b", "x"), True, True, True),
        ],
    )
    def test_truth_table(self, signals, layout, universal_check, mixture_check, confirmed):
        u, n, s = (signals[name] for name in layout)
        service = CascadeService(make_bundle(u, n, s))
        mixture = AudioClip(signals["x"])
        estimate, decision = service.post_proc2(mixture, scene_id="s1")
        assert (decision.universal_check, decision.mixture_check) == (universal_check, mixture_check)
        assert decision.classifier_label is Scenario.NOISE
        expected = n if confirmed else u
        np.testing.assert_array_equal(estimate.samples, expected)
        assert decision.chosen_model is (ModelRole.EXPERT_NOISE if confirmed else ModelRole.UNIVERSAL)
        assert decision.final_label is (Scenario.NOISE if confirmed else Scenario.SPEECH)

    def test_pp1_ignores_the_mixture_check(self, signals):
        service = CascadeService(make_bundle(signals["x"], signals["a"], signals["x"]))
        estimate, decision = service.post_proc1(AudioClip(signals["x"]))
        assert decision.mixture_check is None
        assert decision.chosen_model is ModelRole.UNIVERSAL
        np.testing.assert_array_equal(estimate.samples, signals["x"])

    def test_full_tie_falls_back_to_universal(self, signals):
        a = signals["a"]
        _, decision = CascadeService(make_bundle(a, a, a)).post_proc2(AudioClip(signals["x"]))
        assert decision.final_label is Scenario.SPEECH
        assert decision.chosen_model is ModelRole.UNIVERSAL

    def test_speech_predictions_skip_the_checks(self, signals):
        bundle = make_bundle(signals["a"], signals["b"], signals["x"], probability=0.2)
        service = CascadeService(bundle)
        mixture = AudioClip(signals["x"])
        outputs = [
            service.route_plain(mixture, scene_id="s"),
            service.post_proc1(mixture, scene_id="s"),
            service.post_proc2(mixture, scene_id="s"),
        ]
        for estimate, decision in outputs:
            np.testing.assert_array_equal(estimate.samples, outputs[0][0].samples)
            assert decision == outputs[0][1]
            assert decision.universal_check is None and decision.mixture_check is None
        assert bundle.universal.calls == 0
        assert bundle.expert_noise.calls == 0

    def test_plain_noise_prediction_uses_noise_expert(self, signals):
        bundle = make_bundle(signals["a"], signals["b"], signals["x"], probability=0.5)
        estimate, decision = CascadeService(bundle).route_plain(AudioClip(signals["x"]))
        assert decision.chosen_model is ModelRole.EXPERT_NOISE
        np.testing.assert_array_equal(estimate.samples, signals["b"])
        assert bundle.universal.calls == bundle.expert_speech.calls == 0

    @given(
        st.lists(
            arrays(np.float64, LENGTH, elements=st.floats(-1.0, 1.0, allow_nan=False)),
            min_size=4,
            max_size=4,
        )
    )
    def test_mixture_check_only_adds_confirmations(self, candidates):
        if any(np.dot(c, c) < 1e-6 for c in candidates):
            return
        u, n, s, x = candidates
        service = CascadeService(make_bundle(u, n, s))
        _, first = service.post_proc1(AudioClip(x))
        _, second = service.post_proc2(AudioClip(x))
        if first.final_label is Scenario.NOISE:
            assert second.final_label is Scenario.NOISE
        assert first.universal_check == second.universal_check


class TestRouting:
    def test_oracle_bypasses_the_classifier(self, signals):
        bundle = make_bundle(signals["a"], signals["b"], signals["x"])
        estimate, decision = CascadeService(bundle).route_oracle(
            AudioClip(signals["x"]), None, Scenario.SPEECH, "s"
        )
        assert bundle.classifier.calls == 0
        assert decision.probability is None
        assert decision.chosen_model is ModelRole.EXPERT_SPEECH
        np.testing.assert_array_equal(estimate.samples, signals["x"])

    def test_oracle_needs_labels(self, signals):
        service = CascadeService(make_bundle(signals["a"], signals["b"], signals["x"]))
        item = RoutingInput("s", AudioClip(signals["x"]))
        with pytest.raises(InvalidInputError):
            service.route(item, Strategy.ORACLE)
        with pytest.raises(InvalidInputError, match="missing for"):
            service.batch_route([item], Strategy.ORACLE)

    @pytest.mark.parametrize("strategy", list(Strategy))
    def test_batch_route_is_sorted_and_complete(self, toy_scenes, strategy):
        bundle = StubBundle(
            universal=FixedExtractor(gain=0.5),
            expert_speech=FixedExtractor(gain=0.8),
            expert_noise=FixedExtractor(gain=0.2),
            classifier=FixedClassifier(0.7),
        )
        items = list(reversed(routing_inputs(toy_scenes)))
        outputs = CascadeService(bundle, workers=3).batch_route(items, strategy)
        assert [o.scene_id for o in outputs] == sorted(scene.scene_id for scene in toy_scenes)
        assert all(o.decision.scene_id == o.scene_id for o in outputs)

    def test_oracle_matches_expert_outputs(self, toy_scenes):
        bundle = StubBundle(
            universal=FixedExtractor(gain=0.5),
            expert_speech=FixedExtractor(gain=0.8),
            expert_noise=FixedExtractor(gain=0.2),
            classifier=FixedClassifier(0.7),
        )
        outputs = CascadeService(bundle).batch_route(routing_inputs(toy_scenes), Strategy.ORACLE)
        by_id = {scene.scene_id: scene for scene in toy_scenes}
        for output in outputs:
            scene = by_id[output.scene_id]
            gain = 0.2 if scene.scenario is Scenario.NOISE else 0.8
            np.testing.assert_array_equal(output.estimate.samples, scene.mixture.samples * gain)

    def test_unlabeled_inputs(self, toy_scenes):
        assert all(item.scenario is None for item in routing_inputs(toy_scenes, labeled=False))
