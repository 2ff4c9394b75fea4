"""Central finite-difference audit of autodiff gradients."""

from __future__ import annotations

from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from pointformer.autodiff.tensor import Graph, Tensor, backward, using_dtype, zero_grad

# Relative error uses max(|analytic|, |numeric|, floor) as its denominator.
MAGNITUDE_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    tolerance: float
    max_rel_error: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(err < self.tolerance for err in self.max_rel_error.values())

    def failures(self) -> dict[str, float]:
        return {k: v for k, v in self.max_rel_error.items() if v >= self.tolerance}


def finite_diff_check(
    builder: Callable[[], Tensor],
    params: Mapping[str, Tensor] | Iterable[tuple[str, Tensor]],
    h: float = 1e-4,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare autodiff gradients with ``(f(p+h) - f(p-h)) / 2h`` in float64.

    *builder* must rebuild the scalar loss deterministically from the current
    parameter values. Frozen tensors are left out of the report.
    """
    named = list(params.items()) if isinstance(params, Mapping) else list(params)
    originals = {name: p.data for name, p in named}
    report = GradCheckReport(tolerance=tolerance)
    try:
        with using_dtype(np.float64):
            for _, p in named:
                p.data = p.data.astype(np.float64)
            zero_grad(p for _, p in named)
            with Graph() as graph:
                loss = builder()
            backward(graph, loss)

            for name, p in named:
                if not p.requires_grad:
                    continue
                analytic = np.zeros_like(p.data) if p.grad is None else p.grad
                flat = p.data.reshape(-1)
                worst = 0.0
                for i in range(flat.size):
                    saved = flat[i]
                    flat[i] = saved + h
                    f_plus = float(builder().data)
                    flat[i] = saved - h
                    f_minus = float(builder().data)
                    flat[i] = saved
                    numeric = (f_plus - f_minus) / (2.0 * h)
                    exact = float(analytic.reshape(-1)[i])
                    denom = max(abs(numeric), abs(exact), MAGNITUDE_FLOOR)
                    worst = max(worst, abs(numeric - exact) / denom)
                report.max_rel_error[name] = worst
    finally:
        for name, p in named:
            p.data = originals[name]
            p.grad = None
    return report
