"""Parameters, the Module base class and the trainable layers."""

import hashlib
import math
from typing import Any, Dict, Iterator, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import ConfigurationError
from . import catalogue
from .tensor import Tensor, default_dtype

IntOrTuple = Union[int, Sequence[int]]


class Parameter(Tensor):
    """A named leaf tensor owned by a Module.

    ``init`` is one of ``uniform`` (U(-k, k), k = fan_in ** -0.5), ``zeros`` or
    ``constant``. Frozen parameters never receive optimizer updates and do not
    record gradients.
    """

    __slots__ = ("name", "frozen", "init", "fan_in", "fill")

    def __init__(
        self,
        shape: Tuple[int, ...],
        init: str = "uniform",
        fan_in: Optional[int] = None,
        fill: float = 0.0,
        frozen: bool = False,
    ):
        super().__init__(np.zeros(shape), requires_grad=not frozen)
        self.name = ""
        self.frozen = frozen
        self.init = init
        self.fan_in = fan_in
        self.fill = fill

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, frozen={self.frozen})"

    def freeze(self) -> None:
        self.frozen = True
        self.requires_grad = False
        self.grad = None

    def initialize(self, seed: int) -> None:
        """Deterministic init seeded from (seed, hash of the parameter path)."""
        if self.init == "zeros":
            values = np.zeros(self.shape)
        elif self.init == "constant":
            values = np.full(self.shape, self.fill)
        elif self.init == "uniform":
            digest = hashlib.sha256(self.name.encode("utf-8")).digest()
            rng = np.random.default_rng([seed, int.from_bytes(digest[:4], "little")])
            bound = 1.0 / math.sqrt(self.fan_in or 1)
            values = rng.uniform(-bound, bound, size=self.shape)
        else:
            raise ConfigurationError(f"Unknown initializer {self.init!r} for {self.name}")
        self.data = values.astype(default_dtype())


class Module:
    """Base class for everything holding parameters.

    Parameters are discovered by walking attributes; lists of modules are
    addressed by index (``blocks.0.fusion.weight``).
    """

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            if isinstance(value, Parameter):
                yield f"{prefix}{attr}", value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{attr}.")
            elif isinstance(value, (list, tuple)):
                for index, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{attr}.{index}.")

    def parameters(self) -> Dict[str, Parameter]:
        return dict(self.named_parameters())

    def trainable_parameters(self) -> Dict[str, Parameter]:
        return {name: p for name, p in self.named_parameters() if not p.frozen}

    def reset_parameters(self, seed: int = 0) -> None:
        for name, param in self.named_parameters():
            param.name = name
            param.initialize(seed)
            param.grad = None

    def freeze(self) -> None:
        for _, param in self.named_parameters():
            param.freeze()

    def zero_grad(self) -> None:
        for _, param in self.named_parameters():
            param.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray], strict: bool = True) -> None:
        params = self.parameters()
        if strict:
            missing = sorted(set(params) - set(state))
            unexpected = sorted(set(state) - set(params))
            if missing or unexpected:
                raise ConfigurationError(
                    f"Checkpoint does not match model: missing {missing}, unexpected {unexpected}"
                )
        for name, values in state.items():
            if name not in params:
                continue
            if tuple(values.shape) != params[name].shape:
                raise ConfigurationError(
                    f"Shape mismatch for {name}: checkpoint {values.shape} vs model {params[name].shape}"
                )
            params[name].data = np.asarray(values, dtype=default_dtype()).copy()
            params[name].grad = None

    def _params(self) -> Dict[str, Tensor]:
        return {name: p for name, p in vars(self).items() if isinstance(p, Parameter)}


class Linear(Module):
    """y = x W + b with W stored as (in, out)."""

    def __init__(self, in_features: int, out_features: int, bias: bool = True):
        self.weight = Parameter((in_features, out_features), fan_in=in_features)
        if bias:
            self.bias = Parameter((out_features,), init="zeros")

    def forward(self, x: Tensor) -> Tensor:
        return catalogue.forward("linear", [x], self._params())


class _ConvNd(Module):
    nd = 1

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: IntOrTuple,
        stride: IntOrTuple = 1,
        padding: IntOrTuple = 0,
        dilation: IntOrTuple = 1,
        groups: int = 1,
        bias: bool = True,
        frozen: bool = False,
    ):
        kernel = (kernel_size,) * self.nd if isinstance(kernel_size, int) else tuple(kernel_size)
        if in_channels % groups or out_channels % groups:
            raise ConfigurationError(f"groups={groups} must divide {in_channels} and {out_channels}")
        fan_in = in_channels // groups * math.prod(kernel)
        self.weight = Parameter((out_channels, in_channels // groups) + kernel, fan_in=fan_in, frozen=frozen)
        if bias:
            self.bias = Parameter((out_channels,), init="zeros", frozen=frozen)
        self.hyper = dict(stride=stride, padding=padding, dilation=dilation, groups=groups)

    def forward(self, x: Tensor) -> Tensor:
        return catalogue.forward(f"conv{self.nd}d", [x], self._params(), **self.hyper)


class Conv1d(_ConvNd):
    nd = 1


class Conv2d(_ConvNd):
    nd = 2


class Conv3d(_ConvNd):
    nd = 3


class _ConvTransposeNd(Module):
    nd = 1

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: IntOrTuple,
        stride: IntOrTuple = 1,
        padding: IntOrTuple = 0,
        bias: bool = True,
    ):
        kernel = (kernel_size,) * self.nd if isinstance(kernel_size, int) else tuple(kernel_size)
        self.weight = Parameter((in_channels, out_channels) + kernel, fan_in=in_channels * math.prod(kernel))
        if bias:
            self.bias = Parameter((out_channels,), init="zeros")
        self.hyper = dict(stride=stride, padding=padding)

    def forward(self, x: Tensor) -> Tensor:
        return catalogue.forward(f"transposed_conv{self.nd}d", [x], self._params(), **self.hyper)


class ConvTranspose1d(_ConvTransposeNd):
    nd = 1


class ConvTranspose2d(_ConvTransposeNd):
    nd = 2


class LSTM(Module):
    """Unidirectional LSTM; gates are packed input, forget, cell, output."""

    def __init__(self, input_size: int, hidden_size: int):
        self.w_ih = Parameter((input_size, 4 * hidden_size), fan_in=input_size)
        self.w_hh = Parameter((hidden_size, 4 * hidden_size), fan_in=hidden_size)
        self.bias = Parameter((4 * hidden_size,), init="zeros")

    def forward(self, x: Tensor) -> Tensor:
        return catalogue.forward("lstm_sequence", [x], self._params())

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> Tensor:
        return catalogue.forward("lstm_step", [x, h, c], self._params())


class BLSTM(Module):
    def __init__(self, input_size: int, hidden_size: int):
        self.forward_lstm = LSTM(input_size, hidden_size)
        self.backward_lstm = LSTM(input_size, hidden_size)

    def forward(self, x: Tensor) -> Tensor:
        params = {f"forward.{k}": v for k, v in self.forward_lstm._params().items()}
        params.update({f"backward.{k}": v for k, v in self.backward_lstm._params().items()})
        return catalogue.forward("blstm_sequence", [x], params)


class LayerNorm(Module):
    """Normalization over the last axis."""

    def __init__(self, channels: int, eps: float = 1e-5):
        self.gamma = Parameter((channels,), init="constant", fill=1.0)
        self.beta = Parameter((channels,), init="zeros")
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return catalogue.forward("layer_norm", [x], self._params(), eps=self.eps)


class PReLU(Module):
    def __init__(self, channels: int, axis: int = -1):
        self.alpha = Parameter((channels,), init="constant", fill=0.25)
        self.axis = axis

    def forward(self, x: Tensor) -> Tensor:
        return catalogue.forward("prelu", [x], self._params(), axis=self.axis)


class MultiHeadSelfAttention(Module):
    def __init__(self, channels: int, heads: int):
        if channels % heads:
            raise ConfigurationError(f"{heads} heads do not divide {channels} channels")
        for name in ("w_q", "w_k", "w_v", "w_o"):
            setattr(self, name, Parameter((channels, channels), fan_in=channels))
        self.heads = heads

    def forward(self, x: Tensor) -> Tensor:
        return catalogue.forward("multi_head_self_attention", [x], self._params(), heads=self.heads)
