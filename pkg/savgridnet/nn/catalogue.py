"""Registry of layer kinds. Every parameterized layer dispatches its forward
pass through ``forward(kind, inputs, params)``."""

import logging
from typing import Callable, Dict, Mapping, Optional, Sequence

from ..core.errors import InvalidInputError, ShapeError
from . import functional as F
from .tensor import Tensor

logger = logging.getLogger(__name__)

LayerFn = Callable[..., Tensor]


class LayerCatalogue:
    """Registry for the layer kinds the networks are built from."""

    kinds: Dict[str, LayerFn] = {}

    @classmethod
    def register(cls, name: str) -> Callable[[LayerFn], LayerFn]:
        def decorator(fn: LayerFn) -> LayerFn:
            cls.kinds[name] = fn
            return fn

        return decorator

    @classmethod
    def forward(
        cls,
        kind: str,
        inputs: Sequence[Tensor],
        params: Optional[Mapping[str, Tensor]] = None,
        **hyper: object,
    ) -> Tensor:
        if kind not in cls.kinds:
            raise InvalidInputError(f"Unknown layer kind: {kind}")
        return cls.kinds[kind](list(inputs), dict(params or {}), **hyper)


def forward(
    kind: str,
    inputs: Sequence[Tensor],
    params: Optional[Mapping[str, Tensor]] = None,
    **hyper: object,
) -> Tensor:
    return LayerCatalogue.forward(kind, inputs, params, **hyper)


def _single(kind: str, inputs: Sequence[Tensor]) -> Tensor:
    if len(inputs) != 1:
        raise ShapeError(kind, f"expected one input, got {len(inputs)}")
    return inputs[0]


@LayerCatalogue.register("linear")
def _linear(inputs, params):
    x = _single("linear", inputs)
    weight = params["weight"]
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError("linear", f"input features {x.shape[-1]} vs weight {weight.shape}")
    out = F.matmul(x, weight) if x.ndim > 1 else F.reshape(F.matmul(F.reshape(x, (1, -1)), weight), (-1,))
    return out + params["bias"] if "bias" in params else out


def _register_conv(nd: int) -> None:
    @LayerCatalogue.register(f"conv{nd}d")
    def _conv(inputs, params, stride=1, padding=0, dilation=1, groups=1):
        weight = params["weight"]
        if weight.ndim != nd + 2:
            raise ShapeError(f"conv{nd}d", f"weight {weight.shape} is not {nd}-d")
        return F.conv(
            _single(f"conv{nd}d", inputs),
            weight,
            params.get("bias"),
            stride=stride,
            padding=padding,
            dilation=dilation,
            groups=groups,
        )


def _register_conv_transpose(nd: int) -> None:
    @LayerCatalogue.register(f"transposed_conv{nd}d")
    def _conv_transpose(inputs, params, stride=1, padding=0):
        weight = params["weight"]
        if weight.ndim != nd + 2:
            raise ShapeError(f"transposed_conv{nd}d", f"weight {weight.shape} is not {nd}-d")
        return F.conv_transpose(
            _single(f"transposed_conv{nd}d", inputs),
            weight,
            params.get("bias"),
            stride=stride,
            padding=padding,
        )


for _nd in (1, 2, 3):
    _register_conv(_nd)
for _nd in (1, 2):
    _register_conv_transpose(_nd)


@LayerCatalogue.register("lstm_step")
def _lstm_step(inputs, params):
    """Inputs (x, h, c); output is [h', c'] concatenated on the last axis."""
    if len(inputs) != 3:
        raise ShapeError("lstm_step", f"expected (x, h, c), got {len(inputs)} inputs")
    h, c = F.lstm_step(*inputs, params["w_ih"], params["w_hh"], params["bias"])
    return F.concat([h, c], axis=-1)


@LayerCatalogue.register("lstm_sequence")
def _lstm_sequence(inputs, params):
    return F.lstm_sequence(_single("lstm_sequence", inputs), params["w_ih"], params["w_hh"], params["bias"])


@LayerCatalogue.register("blstm_sequence")
def _blstm_sequence(inputs, params):
    """Two directional passes over (N, L, C), concatenated to (N, L, 2H)."""
    x = _single("blstm_sequence", inputs)
    forward_pass = F.lstm_sequence(x, params["forward.w_ih"], params["forward.w_hh"], params["forward.bias"])
    backward_pass = F.lstm_sequence(
        F.flip(x, axis=1), params["backward.w_ih"], params["backward.w_hh"], params["backward.bias"]
    )
    return F.concat([forward_pass, F.flip(backward_pass, axis=1)], axis=-1)


@LayerCatalogue.register("layer_norm")
def _layer_norm(inputs, params, eps=1e-5):
    return F.layer_norm(_single("layer_norm", inputs), params.get("gamma"), params.get("beta"), eps=eps)


@LayerCatalogue.register("multi_head_self_attention")
def _mhsa(inputs, params, heads=1):
    x = _single("multi_head_self_attention", inputs)
    if x.ndim != 3:
        raise ShapeError("multi_head_self_attention", f"expected (N, L, C), got {x.shape}")
    return F.multi_head_self_attention(x, params["w_q"], params["w_k"], params["w_v"], params["w_o"], heads)


@LayerCatalogue.register("relu")
def _relu(inputs, params):
    return F.relu(_single("relu", inputs))


@LayerCatalogue.register("prelu")
def _prelu(inputs, params, axis=-1):
    return F.prelu(_single("prelu", inputs), params["alpha"], axis=axis)


@LayerCatalogue.register("sigmoid")
def _sigmoid(inputs, params):
    return F.sigmoid(_single("sigmoid", inputs))


@LayerCatalogue.register("tanh")
def _tanh(inputs, params):
    return F.tanh(_single("tanh", inputs))


@LayerCatalogue.register("softmax")
def _softmax(inputs, params, axis=-1):
    return F.softmax(_single("softmax", inputs), axis=axis)


@LayerCatalogue.register("avg_pool1d")
def _avg_pool1d(inputs, params, kernel=2, stride=None):
    return F.avg_pool1d(_single("avg_pool1d", inputs), kernel, stride)


@LayerCatalogue.register("adaptive_avg_pool1d")
def _adaptive_avg_pool1d(inputs, params, out_len=1):
    return F.adaptive_avg_pool1d(_single("adaptive_avg_pool1d", inputs), out_len)


@LayerCatalogue.register("concat")
def _concat(inputs, params, axis=-1):
    return F.concat(inputs, axis=axis)


@LayerCatalogue.register("elementwise_add")
def _elementwise_add(inputs, params):
    if len(inputs) != 2:
        raise ShapeError("elementwise_add", f"expected two inputs, got {len(inputs)}")
    if inputs[0].shape != inputs[1].shape:
        raise ShapeError("elementwise_add", f"{inputs[0].shape} vs {inputs[1].shape}")
    return inputs[0] + inputs[1]


@LayerCatalogue.register("reshape")
def _reshape(inputs, params, shape=(-1,)):
    return F.reshape(_single("reshape", inputs), shape)


@LayerCatalogue.register("transpose")
def _transpose(inputs, params, axes=None):
    return F.transpose(_single("transpose", inputs), axes)
