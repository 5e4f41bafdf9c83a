"""Central-difference validation of analytic gradients.

The checker treats the function under test as a black box from leaf
tensors to a scalar, so it exercises whatever graph the function builds,
including graphs that internally run a differentiable backward sweep
(second-order paths).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import grad_of


@dataclass
class GradCheckReport:
    max_rel_error: float = 0.0
    checked: int = 0
    failures: list = field(default_factory=list)  # (input idx, coord, analytic, numeric, err)
    tol: float = 1e-5

    @property
    def passed(self) -> bool:
        return not self.failures

    def __str__(self):
        status = "ok" if self.passed else f"{len(self.failures)} failing coordinates"
        return (f"gradcheck: {status}, {self.checked} coordinates, "
                f"max rel error {self.max_rel_error:.3e}")


def finite_diff_grad_check(fn, inputs, h: float = 1e-5, tol: float = 1e-5) -> GradCheckReport:
    """Compare analytic gradients of scalar fn(inputs) with central differences.

    `inputs` are leaf tensors; only those with requires_grad are perturbed.
    Inputs must be float64 and evaluated away from kinks (relu/|.| zeros)
    for the h-step differences to be meaningful. Report-only: never raises
    on mismatch.
    """
    inputs = list(inputs)
    for t in inputs:
        if t.requires_grad and t.data.dtype != np.float64:
            raise TypeError("finite_diff_grad_check requires float64 inputs")

    loss = fn(inputs)
    analytic = grad_of(loss, [t for t in inputs if t.requires_grad])

    report = GradCheckReport(tol=tol)
    ai = 0
    for idx, t in enumerate(inputs):
        if not t.requires_grad:
            continue
        grad = analytic[ai].data
        ai += 1
        flat = t.data.reshape(-1)
        for coord in range(flat.shape[0]):
            orig = flat[coord]
            flat[coord] = orig + h
            up = float(fn(inputs).data)
            flat[coord] = orig - h
            down = float(fn(inputs).data)
            flat[coord] = orig
            numeric = (up - down) / (2.0 * h)
            a = float(grad.reshape(-1)[coord])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            report.checked += 1
            report.max_rel_error = max(report.max_rel_error, err)
            if err > tol:
                report.failures.append((idx, coord, a, numeric, err))
    return report
