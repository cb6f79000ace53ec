"""Brute-force checks usable from the command line and in CI."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filters import pointwise_potential, select_quantile


@dataclass(frozen=True)
class QuantileCheck:
    index: int
    selected: float
    potential: float
    scan_min: float
    ok: bool


def quantile_oracle(values, weights, T: float, step: float = 1e-3, index: int = 0,
                    slack: float = 1e-12) -> QuantileCheck:
    """Compare the filter's choice with a scan of the pointwise potential over ``[0, 1]``.

    The forces are fixed as ``F2 = 0`` and ``F1 = 2 T - 1`` with
    ``lambda_tilde = 1``, which reproduces threshold ``T``.  The selected
    value must do at least as well as every scanned ``xi``.
    """
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    F1, F2 = 2.0 * T - 1.0, 0.0
    sel = select_quantile(values, w, T)
    grid = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    scan = pointwise_potential(grid, values, w, F1, F2, 1.0)
    j_sel = float(pointwise_potential(sel, values, w, F1, F2, 1.0))
    j_min = float(scan.min())
    return QuantileCheck(index, sel, j_sel, j_min, j_sel <= j_min + slack * max(1.0, abs(j_min)))


def check_quantile_samples(samples, step: float = 1e-3) -> list[QuantileCheck]:
    """Run :func:`quantile_oracle` on dicts with ``values``, ``weights`` and ``T``."""
    out = []
    for i, s in enumerate(samples):
        try:
            values, weights, T = s["values"], s["weights"], float(s["T"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"sample {i} needs 'values', 'weights' and 'T'") from exc
        if len(values) != len(weights) or not len(values):
            raise ValueError(f"sample {i}: values and weights must be non-empty and equal length")
        if min(weights) < 0 or sum(weights) <= 0:
            raise ValueError(f"sample {i}: weights must be nonnegative with positive sum")
        out.append(quantile_oracle(values, weights, T, step, i))
    return out

