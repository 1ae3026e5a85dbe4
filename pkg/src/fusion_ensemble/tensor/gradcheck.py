"""Central finite-difference gradient checking.

The analytic side always runs in float64. The difference quotient can
optionally be evaluated in a wider type (``difference_dtype=np.longdouble``):
for coordinates whose true gradient is below ~1e-7 the float64 quotient is
dominated by rounding of the loss itself, not by any error in the gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Tape, Tensor, backward

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4


def relative_error(analytic, numeric) -> np.ndarray:
    a = np.abs(analytic)
    n = np.abs(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.maximum(a, n), 1e-8)


@dataclass
class Offender:
    name: str
    index: tuple
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradcheckReport:
    max_rel_error: float = 0.0
    checked: int = 0
    tolerance: float = DEFAULT_TOLERANCE
    offenders: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def worst(self, n: int = 5) -> list:
        return sorted(self.offenders, key=lambda o: -o.rel_error)[:n]

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "max_rel_error": self.max_rel_error,
            "checked": self.checked,
            "tolerance": self.tolerance,
            "worst": [vars(o) for o in self.worst()],
        }


def gradcheck(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    names: Optional[Sequence[str]] = None,
    step: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
    max_per_tensor: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    difference_dtype=np.float64,
) -> GradcheckReport:
    """Compare tape gradients of ``loss_fn()`` with central differences.

    ``loss_fn`` must rebuild the graph from the current values of ``tensors``
    each call. With ``max_per_tensor`` only that many coordinates per tensor are
    probed (chosen by ``rng``); by default every coordinate is. Tensors are
    cast to ``difference_dtype`` while differencing and restored afterwards.
    """
    names = list(names) if names is not None else [f"t{i}" for i in range(len(tensors))]
    for t in tensors:
        if t.dtype != np.float64:
            raise TypeError("gradcheck needs float64 tensors")
        t.requires_grad = True
        t.grad = None
    with Tape() as tape:
        loss = loss_fn()
    backward(loss, tape)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    report = GradcheckReport(tolerance=tolerance)
    rng = rng or np.random.default_rng(0)
    originals = [t.data for t in tensors]
    wide = np.dtype(difference_dtype)
    h = wide.type(step)
    try:
        for t in tensors:
            t.data = t.data.astype(wide)
        _difference(loss_fn, tensors, names, analytic, h, max_per_tensor, rng, report)
    finally:
        for t, orig in zip(tensors, originals):
            t.data = orig
            t.grad = None
    report.offenders = report.worst(16)
    return report


def _loss_value(loss_fn):
    return loss_fn().data.reshape(-1)[0]


def _difference(loss_fn, tensors, names, analytic, h, max_per_tensor, rng, report) -> None:
    for t, name, ga in zip(tensors, names, analytic):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_per_tensor is not None and flat.size > max_per_tensor:
            idx = np.sort(rng.choice(flat.size, size=max_per_tensor, replace=False))
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = _loss_value(loss_fn)
            flat[i] = orig - h
            down = _loss_value(loss_fn)
            flat[i] = orig
            num = float((up - down) / (2 * h))
            ana = float(ga.reshape(-1)[i])
            err = float(relative_error(ana, num))
            report.checked += 1
            if err > report.max_rel_error:
                report.max_rel_error = err
            report.offenders.append(
                Offender(name, tuple(int(j) for j in np.unravel_index(i, t.shape)), ana, num, err)
            )
            if len(report.offenders) > 64:
                report.offenders = report.worst(16)
