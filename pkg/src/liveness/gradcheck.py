"""Finite-difference verification of analytic gradients.

Run everything in float64: the central-difference truncation error at
step 1e-5 is far below the 1e-3 relative tolerance used throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def finite_difference_gradient(loss_fn, tensor: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of scalar loss_fn() w.r.t. `tensor`, perturbed in place.

    loss_fn must recompute the loss from the tensor's current values on
    every call and must be deterministic apart from that dependence.
    """
    grad = np.zeros_like(tensor)
    flat = tensor.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        above = loss_fn()
        flat[i] = orig - step
        below = loss_fn()
        flat[i] = orig
        gflat[i] = (above - below) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray,
                       floor: float = 1e-6) -> float:
    """Elementwise |a - n| / max(|a| + |n|, floor), reduced with max."""
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


@dataclass
class GradCheckReport:
    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def __str__(self) -> str:
        lines = [f"{name}: rel_err={err:.3e}" for name, err in sorted(self.errors.items())]
        verdict = "PASS" if self.passed else "FAIL"
        return f"gradient check [{verdict}] tol={self.tolerance:g}\n" + "\n".join(lines)


def gradient_check(loss_fn, tensors: dict[str, np.ndarray],
                   analytic: dict[str, np.ndarray], step: float = 1e-5,
                   tolerance: float = 1e-3) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    `tensors` maps names to the float64 arrays the loss depends on (inputs
    and parameters); `analytic` maps the same names to the gradients under
    test. Reports the max relative error per tensor.
    """
    report = GradCheckReport(tolerance=tolerance)
    for name, tensor in tensors.items():
        numeric = finite_difference_gradient(loss_fn, tensor, step=step)
        report.errors[name] = max_relative_error(analytic[name], numeric)
    return report
