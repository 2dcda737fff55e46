"""Dense tensors with tape-based reverse-mode differentiation."""

import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import InvalidInputError, NumericalError

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_state = threading.local()
_options = {"dtype": np.float64, "detect_anomaly": True}


def set_default_dtype(dtype: str) -> None:
    _options["dtype"] = np.dtype(dtype).type


def default_dtype() -> type:
    return _options["dtype"]


def set_detect_anomaly(enabled: bool) -> None:
    _options["detect_anomaly"] = enabled


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording for the current thread."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=default_dtype())
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None
        self.op = "leaf"

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Populate ``grad`` on every leaf reachable from this scalar."""
        if self.data.size != 1:
            raise InvalidInputError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        pending: Dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(_toposort(self)):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node._backward is None:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + parent_grad if key in pending else parent_grad

    # operator sugar; implementations live in functional
    def __add__(self, other: ArrayLike) -> "Tensor":
        from . import functional as F

        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        from . import functional as F

        return F.sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        from . import functional as F

        return F.sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        from . import functional as F

        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        from . import functional as F

        return F.div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        from . import functional as F

        return F.div(other, self)

    def __neg__(self) -> "Tensor":
        from . import functional as F

        return F.neg(self)

    def __pow__(self, exponent: float) -> "Tensor":
        from . import functional as F

        return F.power(self, exponent)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from . import functional as F

        return F.matmul(self, other)

    def __getitem__(self, index: object) -> "Tensor":
        from . import functional as F

        return F.getitem(self, index)

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        from . import functional as F

        return F.sum(self, axis, keepdims)

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        from . import functional as F

        return F.mean(self, axis, keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        from . import functional as F

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        from . import functional as F

        return F.transpose(self, axes or None)


def as_tensor(value: Union["Tensor", ArrayLike]) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def make_result(
    op: str,
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward: BackwardFn,
) -> Tensor:
    """Wrap an op's output, recording the tape entry when any parent needs it."""
    if _options["detect_anomaly"] and not np.all(np.isfinite(data)):
        raise NumericalError(f"{op}: produced non-finite values")
    out = Tensor(data)
    out.op = op
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _toposort(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order
