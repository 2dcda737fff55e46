"""Central finite-difference verification of analytic gradients."""

import logging
from typing import Callable, Dict, Mapping, Optional, Sequence

import numpy as np

from .layers import Module, Parameter
from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


def _targets(
    fragment: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    params: Optional[Mapping[str, Tensor]],
) -> Dict[str, Tensor]:
    targets: Dict[str, Tensor] = {}
    if isinstance(fragment, Module):
        targets.update(fragment.trainable_parameters())
    for name, tensor in (params or {}).items():
        if not (isinstance(tensor, Parameter) and tensor.frozen):
            targets[name] = tensor
    for index, tensor in enumerate(inputs):
        if tensor.requires_grad:
            targets[f"input.{index}"] = tensor
    return targets


def grad_check(
    fragment: Callable[..., Tensor],
    inputs: Sequence[Tensor] = (),
    eps: float = 1e-6,
    tol: float = 1e-3,
    params: Optional[Mapping[str, Tensor]] = None,
    samples: int = 12,
    seed: int = 0,
) -> float:
    """Max relative error |analytic - cd| / max(|analytic|, |cd|, 1e-8).

    Checks sampled coordinates of every non-frozen parameter of ``fragment``
    (when it is a Module), of ``params``, and of inputs with requires_grad.
    """
    if not 1e-6 <= eps <= 1e-3:
        logger.warning("grad_check eps %.1e is outside [1e-6, 1e-3]", eps)
    targets = _targets(fragment, inputs, params)
    for tensor in targets.values():
        tensor.grad = None
    fragment(*inputs).backward()
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in targets.items()
    }

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, tensor in targets.items():
        tensor.data = np.array(tensor.data, copy=True)
        flat = tensor.data.reshape(-1)
        count = min(samples, flat.size)
        for index in rng.choice(flat.size, size=count, replace=False):
            original = flat[index]
            flat[index] = original + eps
            with no_grad():
                upper = fragment(*inputs).item()
                flat[index] = original - eps
                lower = fragment(*inputs).item()
            flat[index] = original
            numeric = (upper - lower) / (2.0 * eps)
            exact = analytic[name].reshape(-1)[index]
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-8)
            if error > worst:
                worst = error
                logger.debug("%s[%d]: analytic %.6e numeric %.6e", name, index, exact, numeric)
    if worst > tol:
        logger.warning("grad_check max relative error %.3e exceeds %.1e", worst, tol)
    return worst
