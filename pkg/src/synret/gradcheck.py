"""Central-difference verification of analytic parameter gradients."""

from __future__ import annotations

import numpy as np

from .errors import NumericalError
from .params import ModelParams


def grad_check(loss_fn, grads: ModelParams, params: ModelParams,
               h: float = 1e-4) -> dict[str, float]:
    """Compare analytic grads against (L(p+h) - L(p-h)) / 2h per tensor.

    Returns {tensor name -> relative error}, where the error is
    ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2) and exactly
    0.0 when both sides vanish. loss_fn is re-evaluated with params mutated
    in place and restored afterwards.
    """
    report: dict[str, float] = {}
    for (name, p), (_, g) in zip(params.named_tensors(), grads.named_tensors()):
        if not np.isfinite(g).all():
            raise NumericalError(f"non-finite analytic gradient in {name}")
        numeric = np.zeros_like(g)
        flat_p = p.reshape(-1)
        flat_n = numeric.reshape(-1)
        for idx in range(flat_p.size):
            orig = flat_p[idx]
            flat_p[idx] = orig + h
            lp = loss_fn()
            flat_p[idx] = orig - h
            lm = loss_fn()
            flat_p[idx] = orig
            flat_n[idx] = (lp - lm) / (2.0 * h)
        na = float(np.linalg.norm(g))
        nn = float(np.linalg.norm(numeric))
        if na == 0.0 and nn == 0.0:
            report[name] = 0.0
        else:
            report[name] = float(np.linalg.norm(g - numeric)) / max(na, nn)
    return report


def max_relative_error(report: dict[str, float]) -> float:
    return max(report.values()) if report else 0.0
