"""Central-difference verification of analytic gradients.

The analytic side is ordinary float64 backprop. The numeric side evaluates
``(f(θ+h) - f(θ-h)) / 2h`` with the checked parameters promoted to
``numpy.longdouble`` by default: at ``h = 1e-6`` float64 roundoff in ``f`` alone
leaves an absolute error near 1e-10, which would swamp the relative error of any
gradient entry smaller than about 1e-5. Pass ``oracle_dtype=np.float64`` for a
plain double-precision oracle. On platforms where ``longdouble`` is an alias of
``float64`` both settings coincide.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from ..errors import ContractError, NumericError
from .tensor import Graph, Tensor, backward


@dataclass
class GradcheckReport:
    max_relative_error: float
    offending_parameter: str | None
    offending_index: tuple[int, ...] | None
    evaluations: int

    def passed(self, tolerance: float) -> bool:
        return self.max_relative_error < tolerance


def relative_error(analytic, numeric) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def _scalar(fn, params):
    out = fn(params)
    if out.size != 1:
        raise ContractError(f"gradcheck function must return a scalar, got {list(out.shape)}")
    return out.data.reshape(-1)[0]


def gradcheck(fn: Callable[[Mapping[str, Tensor]], Tensor], params: Mapping[str, Tensor],
              step: float = 1e-6, tolerance: float | None = None,
              oracle_dtype=np.longdouble) -> GradcheckReport:
    """Compare backprop gradients of ``fn(params)`` with central differences.

    Every entry of every tensor in ``params`` with ``requires_grad`` is perturbed
    by ``±step``. If ``tolerance`` is given and the worst relative error reaches it,
    :class:`NumericError` is raised.
    """
    live = {k: p for k, p in params.items() if p.requires_grad}
    for p in live.values():
        p.grad = None
    with Graph() as g:
        loss = fn(params)
    if loss.size != 1:
        raise ContractError(f"gradcheck function must return a scalar, got {list(loss.shape)}")
    backward(loss, g)
    analytic = {k: (np.zeros(p.shape) if p.grad is None else p.grad) for k, p in live.items()}
    for k, a in analytic.items():
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite analytic gradient for {k}")

    originals = {k: p.data for k, p in live.items()}
    worst, worst_name, worst_idx, evals = 0.0, None, None, 0
    try:
        for p in live.values():
            p.data = np.array(p.data, dtype=oracle_dtype, order="C")
        h = oracle_dtype(step)
        for name, p in live.items():
            flat = p.data.reshape(-1)
            numeric = np.empty(flat.shape, dtype=oracle_dtype)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = _scalar(fn, params)
                flat[i] = orig - h
                fm = _scalar(fn, params)
                flat[i] = orig
                evals += 2
                if not (np.isfinite(fp) and np.isfinite(fm)):
                    raise NumericError(f"non-finite loss while perturbing {name}[{i}]")
                numeric[i] = (fp - fm) / (2 * h)
            err = relative_error(analytic[name].reshape(-1), numeric)
            if err.size and err.max() > worst:
                k = int(err.argmax())
                worst, worst_name = float(err[k]), name
                worst_idx = tuple(int(v) for v in np.unravel_index(k, p.shape))
    finally:
        for k, p in live.items():
            p.data = originals[k]
            p.grad = None

    report = GradcheckReport(worst, worst_name, worst_idx, evals)
    if tolerance is not None and not report.passed(tolerance):
        raise NumericError(
            f"gradient mismatch {worst:.3e} >= {tolerance:g} at {worst_name}{list(worst_idx or ())}"
        )
    return report
