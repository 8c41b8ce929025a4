"""Central-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, no_grad


@dataclass
class CheckReport:
    name: str
    max_rel_error: float
    tolerance: float
    passed: bool
    coords_checked: int

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return "%-40s %s  max_rel_err=%.3e  (tol %.1e, %d coords)" % (
            self.name,
            status,
            self.max_rel_error,
            self.tolerance,
            self.coords_checked,
        )


def finite_diff_check(fn, x, epsilon=1e-4, tolerance=1e-4, name="check"):
    """Compare fn's analytic gradient at x against central differences.

    ``fn`` maps one Tensor to a scalar Tensor and must be deterministic.
    Evaluation runs in double precision.  The relative error per coordinate
    is |a - n| / max(|a|, |n|, 1), so tiny gradients are judged on absolute
    error; the report carries the maximum over all coordinates.
    """
    base = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64).copy()
    probe = Tensor(base.copy(), requires_grad=True)
    out = fn(probe)
    out.backward()
    analytic = probe.grad
    if analytic is None:
        analytic = np.zeros_like(base)
    analytic = np.asarray(analytic, dtype=np.float64).reshape(-1)

    flat = base.reshape(-1)
    numeric = np.zeros_like(flat)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            hi = float(fn(Tensor(base)).data)
            flat[i] = orig - epsilon
            lo = float(fn(Tensor(base)).data)
            flat[i] = orig
            numeric[i] = (hi - lo) / (2.0 * epsilon)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    rel = np.abs(analytic - numeric) / denom
    max_rel = float(rel.max()) if rel.size else 0.0
    return CheckReport(
        name=name,
        max_rel_error=max_rel,
        tolerance=tolerance,
        passed=max_rel < tolerance,
        coords_checked=int(flat.size),
    )
