import numpy as np
import pytest

from savgridnet.core.config import StftConfig
from savgridnet.core.errors import InvalidInputError, NumericalError, ShapeError
from savgridnet.media.signal import AudioClip, Spectrogram, istft, stft
from savgridnet.nn import catalogue
from savgridnet.nn import functional as F
from savgridnet.nn.gradcheck import grad_check
from savgridnet.nn.spectral import istft_parts, magnitude_frames, stft_parts
from savgridnet.nn.tensor import Tensor, no_grad, set_detect_anomaly

TOL = 1e-5


def leaf(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def weighted_sum(out: Tensor, seed: int = 7) -> Tensor:
    weights = np.random.default_rng(seed).standard_normal(out.shape)
    return F.sum(out * weights)


def check_kind(kind, inputs, params=None, **hyper):
    def fragment(*xs):
        return weighted_sum(catalogue.forward(kind, xs, params, **hyper))

    return grad_check(fragment, inputs, params=params)


class TestTape:
    def test_broadcast_gradients(self, rng):
        a = leaf(rng, 3, 4)
        b = leaf(rng, 4)
        F.sum(a * b + b).backward()
        np.testing.assert_allclose(a.grad, np.broadcast_to(b.data, (3, 4)))
        np.testing.assert_allclose(b.grad, a.data.sum(axis=0) + 3.0)

    def test_shared_node_accumulates(self, rng):
        x = leaf(rng, 5)
        y = x * x
        F.sum(y + y).backward()
        np.testing.assert_allclose(x.grad, 4.0 * x.data)

    def test_repeated_backward_accumulates(self, rng):
        x = leaf(rng, 3)
        F.sum(x * 2.0).backward()
        F.sum(x * 2.0).backward()
        np.testing.assert_allclose(x.grad, np.full(3, 4.0))

    def test_no_grad_records_nothing(self, rng):
        x = leaf(rng, 3)
        with no_grad():
            y = F.sum(x * x)
        assert not y.requires_grad
        y.backward()
        assert x.grad is None

    def test_non_scalar_backward_rejected(self, rng):
        with pytest.raises(InvalidInputError):
            (leaf(rng, 3) * 2.0).backward()

    def test_non_finite_output_raises(self):
        with pytest.raises(NumericalError, match="log"):
            F.log(Tensor([-1.0, 1.0]))

    def test_anomaly_detection_can_be_disabled(self):
        set_detect_anomaly(False)
        out = F.log(Tensor([-1.0]))
        assert np.isnan(out.data[0])

    def test_shape_errors_name_the_op(self, rng):
        with pytest.raises(ShapeError, match="matmul"):
            F.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        with pytest.raises(ShapeError, match="concat"):
            F.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2)))], axis=0)

    def test_unknown_kind(self):
        with pytest.raises(InvalidInputError):
            catalogue.forward("maxout", [Tensor([1.0])])


class TestCatalogueGradients:
    def test_linear(self, rng):
        params = {"weight": leaf(rng, 4, 3), "bias": leaf(rng, 3)}
        assert check_kind("linear", [leaf(rng, 2, 4)], params) < TOL

    @pytest.mark.parametrize(
        "nd, spatial, hyper",
        [
            (1, (9,), {"stride": 2, "padding": 1, "dilation": 2}),
            (1, (8,), {"groups": 2}),
            (2, (5, 6), {"stride": (1, 2), "padding": (1, 0)}),
            (3, (3, 4, 4), {"padding": 1}),
        ],
    )
    def test_conv(self, rng, nd, spatial, hyper):
        groups = hyper.get("groups", 1)
        params = {"weight": leaf(rng, 4, 4 // groups, *(3,) * nd), "bias": leaf(rng, 4)}
        x = leaf(rng, 2, 4, *spatial)
        assert check_kind(f"conv{nd}d", [x], params, **hyper) < TOL

    @pytest.mark.parametrize("nd, spatial", [(1, (5,)), (2, (3, 4))])
    def test_transposed_conv(self, rng, nd, spatial):
        params = {"weight": leaf(rng, 3, 2, *(3,) * nd), "bias": leaf(rng, 2)}
        x = leaf(rng, 2, 3, *spatial)
        assert check_kind(f"transposed_conv{nd}d", [x], params, stride=2) < TOL

    def test_transposed_conv_output_length(self, rng):
        out = catalogue.forward(
            "transposed_conv1d",
            [Tensor(np.ones((1, 2, 6)))],
            {"weight": Tensor(np.ones((2, 1, 4)))},
            stride=2,
            padding=1,
        )
        assert out.shape == (1, 1, (6 - 1) * 2 + 4 - 2)

    def test_lstm_step(self, rng):
        params = {"w_ih": leaf(rng, 3, 8), "w_hh": leaf(rng, 2, 8), "bias": leaf(rng, 8)}
        inputs = [leaf(rng, 2, 3), leaf(rng, 2, 2), leaf(rng, 2, 2)]
        assert check_kind("lstm_step", inputs, params) < TOL

    def test_lstm_sequence(self, rng):
        params = {"w_ih": leaf(rng, 3, 8), "w_hh": leaf(rng, 2, 8), "bias": leaf(rng, 8)}
        assert check_kind("lstm_sequence", [leaf(rng, 2, 5, 3)], params) < TOL

    def test_lstm_sequence_matches_steps(self, rng):
        params = {"w_ih": leaf(rng, 3, 8), "w_hh": leaf(rng, 2, 8), "bias": leaf(rng, 8)}
        x = Tensor(rng.standard_normal((1, 4, 3)))
        sequence = catalogue.forward("lstm_sequence", [x], params)
        h = c = Tensor(np.zeros((1, 2)))
        for t in range(4):
            state = catalogue.forward("lstm_step", [x[:, t], h, c], params)
            h, c = state[:, :2], state[:, 2:]
            np.testing.assert_allclose(sequence.data[:, t], h.data, atol=1e-12)

    def test_blstm_sequence(self, rng):
        params = {}
        for direction in ("forward", "backward"):
            params[f"{direction}.w_ih"] = leaf(rng, 3, 8)
            params[f"{direction}.w_hh"] = leaf(rng, 2, 8)
            params[f"{direction}.bias"] = leaf(rng, 8)
        out = catalogue.forward("blstm_sequence", [Tensor(np.ones((1, 4, 3)))], params)
        assert out.shape == (1, 4, 4)
        assert check_kind("blstm_sequence", [leaf(rng, 1, 4, 3)], params) < TOL

    def test_layer_norm(self, rng):
        params = {"gamma": leaf(rng, 5), "beta": leaf(rng, 5)}
        assert check_kind("layer_norm", [leaf(rng, 3, 5)], params) < TOL

    def test_attention(self, rng):
        params = {name: leaf(rng, 4, 4) for name in ("w_q", "w_k", "w_v", "w_o")}
        assert check_kind("multi_head_self_attention", [leaf(rng, 2, 3, 4)], params, heads=2) < TOL

    @pytest.mark.parametrize("kind", ["relu", "sigmoid", "tanh", "softmax"])
    def test_activations(self, rng, kind):
        assert check_kind(kind, [leaf(rng, 3, 4)]) < TOL

    def test_prelu(self, rng):
        params = {"alpha": leaf(rng, 3)}
        assert check_kind("prelu", [leaf(rng, 2, 3, 4)], params, axis=1) < TOL

    def test_pooling(self, rng):
        assert check_kind("avg_pool1d", [leaf(rng, 2, 3, 8)], kernel=2) < TOL
        assert check_kind("adaptive_avg_pool1d", [leaf(rng, 2, 3, 7)], out_len=3) < TOL

    def test_plumbing(self, rng):
        assert check_kind("concat", [leaf(rng, 2, 3), leaf(rng, 2, 2)], axis=1) < TOL
        assert check_kind("elementwise_add", [leaf(rng, 2, 3), leaf(rng, 2, 3)]) < TOL
        assert check_kind("reshape", [leaf(rng, 2, 3, 4)], shape=(6, 4)) < TOL
        assert check_kind("transpose", [leaf(rng, 2, 3, 4)], axes=(2, 0, 1)) < TOL

    def test_elementwise_add_requires_equal_shapes(self, rng):
        with pytest.raises(ShapeError):
            catalogue.forward("elementwise_add", [leaf(rng, 2, 3), leaf(rng, 3)])


class TestSignalOps:
    def test_edge_pad_and_interpolation(self, rng):
        x = leaf(rng, 3, 2)

        def fragment(t):
            return weighted_sum(F.interp_rows(F.pad(t, [(1, 2), (0, 0)], mode="edge"), 9))

        assert grad_check(fragment, [x]) < TOL

    def test_frame_and_overlap_add(self, rng):
        x = leaf(rng, 20)
        assert grad_check(lambda t: weighted_sum(F.overlap_add(F.frame(t, 8, 4), 4)), [x]) < TOL

    def test_stft_parts_match_numpy(self, rng, small_stft):
        signal = rng.standard_normal(300)
        real, imag = stft_parts(Tensor(signal), small_stft)
        spec = stft(AudioClip(signal), small_stft)
        np.testing.assert_allclose(real.data, spec.frames.real, atol=1e-10)
        np.testing.assert_allclose(imag.data, spec.frames.imag, atol=1e-10)

    def test_istft_parts_match_numpy(self, rng, small_stft):
        spec = stft(AudioClip(rng.standard_normal(300)), small_stft)
        frames = spec.frames * np.exp(0.3j)
        out = istft_parts(Tensor(frames.real), Tensor(frames.imag), small_stft, 300)
        expected = istft(Spectrogram(frames=frames, config=small_stft, original_length=300))
        np.testing.assert_allclose(out.data, expected.samples, atol=1e-10)

    def test_spectral_gradients(self, rng):
        cfg = StftConfig(window_size=16, hop_size=8, fft_size=16)
        x = leaf(rng, 50)

        def fragment(t):
            real, imag = stft_parts(t, cfg)
            return weighted_sum(istft_parts(real * 0.5, imag, cfg, 50))

        assert grad_check(fragment, [x]) < TOL
        assert grad_check(lambda t: weighted_sum(magnitude_frames(t, 32, 8, 16)), [x]) < TOL

    def test_magnitude_frames_count(self, rng):
        out = magnitude_frames(Tensor(rng.standard_normal(100)), 32, 8, 16)
        assert out.shape == (1 + (100 - 32) // 8, 17)
        with pytest.raises(InvalidInputError):
            magnitude_frames(Tensor(np.ones(10)), 32, 8, 16)
