"""Interface update operators.

* :func:`binary_td_step` -- convolution followed by pointwise thresholding.
* :func:`weighted_quantile_step` -- the continuous median filter: each node
  takes the weighted quantile of its (interpolated) neighbours at level ``T``.
* :func:`quadratic_quantile_step` -- the same quantile taken from a piecewise
  quadratic reconstruction of the level-set function on a circle.
* :func:`volume_constrained_step` -- quantile filter with a global threshold
  offset found by bisection so that the volume hits a target.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .grid import ConfigurationError, Grid2D, KernelMask, circle_mask, convolve, pad

FILTER_KINDS = ("binary_td", "weighted_quantile", "quadratic")
KERNEL_KINDS = ("gaussian", "circle")
# what a node becomes when its threshold leaves (0, 1]: T <= 0 gives 1 / max
# neighbour, T > 1 gives 0 / min neighbour
SATURATION_MODES = ("unit", "neighbors")


class VolumeUnreachableError(RuntimeError):
    """No threshold offset brackets the requested volume."""


@dataclass
class SolverConfig:
    """Parameters shared by every driver.

    ``lambda_tilde`` is the effective perimeter weight ``lambda * sqrt(pi / tau)``.
    ``kernel`` picks the mask used by the quantile filter and the energy:
    the sampled heat kernel or ``M`` points on the circle of radius
    ``sqrt(2 tau)`` read through bilinear interpolation.  ``saturation``
    fixes the quantile filter's output where ``T`` leaves ``(0, 1]``.
    """

    tau: float = 1e-3
    lambda_tilde: float = 0.6
    M: int = 8
    epsilon: float = 1e-6
    K_max: int = 200
    filter_kind: str = "weighted_quantile"
    kernel: str = "gaussian"
    truncation: float = 4.0
    saturation: str = "unit"

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        if not self.lambda_tilde > 0:
            raise ConfigurationError(f"lambda_tilde must be positive, got {self.lambda_tilde}")
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if self.K_max < 0:
            raise ConfigurationError(f"K_max must be >= 0, got {self.K_max}")
        if self.filter_kind not in FILTER_KINDS:
            raise ConfigurationError(f"filter_kind must be one of {FILTER_KINDS}")
        if self.kernel not in KERNEL_KINDS:
            raise ConfigurationError(f"kernel must be one of {KERNEL_KINDS}")
        if self.saturation not in SATURATION_MODES:
            raise ConfigurationError(f"saturation must be one of {SATURATION_MODES}")

    def mask(self, grid: Grid2D) -> KernelMask:
        from .grid import gaussian_kernel_mask

        if self.kernel == "circle":
            return circle_mask(self.tau, self.M, grid)
        return gaussian_kernel_mask(self.tau, grid, self.truncation)


def threshold_field(F1: np.ndarray, F2: np.ndarray, lambda_tilde: float) -> np.ndarray:
    """Local threshold ``T = 1/2 + (F1 - F2) / (2 lambda_tilde)`` (unclamped)."""
    F1 = np.asarray(F1, dtype=float)
    F2 = np.asarray(F2, dtype=float)
    if F1.shape != F2.shape:
        raise ValueError(f"F1 and F2 shapes differ: {F1.shape} vs {F2.shape}")
    return 0.5 + (F1 - F2) / (2.0 * lambda_tilde)


def binary_td_step(u: np.ndarray, T: np.ndarray, mask: KernelMask,
                   boundary: str = "mirror") -> np.ndarray:
    """One threshold-dynamics step: ``u' = 1[G * u >= T]``."""
    return (convolve(u, mask, boundary) >= T).astype(float)


def _split_offsets(mask: KernelMask):
    base = np.floor(mask.offsets).astype(np.int64)
    frac = mask.offsets - base
    width = int(np.max(np.abs(base))) + 2
    return width, base[:, 0].copy(), base[:, 1].copy(), frac[:, 0].copy(), frac[:, 1].copy()


def _unit_flag(saturation):
    if saturation not in SATURATION_MODES:
        raise ConfigurationError(f"saturation must be one of {SATURATION_MODES}")
    return saturation == "unit"


def weighted_quantile_step(phi: np.ndarray, T: np.ndarray, mask: KernelMask,
                           boundary: str = "mirror", saturation: str = "unit") -> np.ndarray:
    """Continuous median filter.

    At each node the neighbour samples ``v_j = phi(x + y_j)`` are ordered
    decreasingly and the first ``v_(m)`` whose cumulative weight reaches
    ``T(x)`` is returned.

    Where ``T <= 0`` every level qualifies and where ``T > 1`` none does.
    With ``saturation="unit"`` these nodes become 1 and 0, which is the
    minimizer of the pointwise potential over ``[0, 1]``.  With
    ``"neighbors"`` they take the largest and smallest sample instead, so
    the output never leaves the range of ``phi``.
    """
    unit = _unit_flag(saturation)
    phi = np.ascontiguousarray(phi, dtype=float)
    T = np.ascontiguousarray(np.broadcast_to(T, phi.shape), dtype=float)
    width, ox, oy, fx, fy = _split_offsets(mask)
    P = pad(phi, width, boundary)
    out = np.empty_like(phi)
    _kernels.weighted_quantile_field(P, width, ox, oy, fx, fy, mask.weights, T, out, unit)
    return out


def select_quantile(values, weights, T: float, saturation: str = "unit") -> float:
    """Weighted quantile of a single neighbourhood (same rule as the filter)."""
    unit = _unit_flag(saturation)
    vals = np.array(values, dtype=float)
    ws = np.array(weights, dtype=float)
    if T <= 0:
        return 1.0 if unit else float(vals.max())
    if T > 1:
        return 0.0 if unit else float(vals.min())
    if vals.min() == vals.max():
        return float(vals.max())
    return float(_kernels.select_weighted(vals, ws, vals.size, float(T), vals.min()))


def pointwise_potential(xi, neighbors, weights, F1: float, F2: float,
                        lambda_tilde: float):
    """Local potential ``sum_j w_j |xi - v_j| + (xi F1 + (1 - xi) F2) / lambda_tilde``.

    ``xi`` may be an array; the result has its shape.
    """
    xi = np.asarray(xi, dtype=float)
    v = np.asarray(neighbors, dtype=float)
    w = np.asarray(weights, dtype=float)
    spread = np.abs(xi[..., None] - v) @ w
    return spread + (xi * F1 + (1.0 - xi) * F2) / lambda_tilde


def quadratic_quantile_step(phi: np.ndarray, T: np.ndarray, tau: float, grid: Grid2D,
                            boundary: str | None = None) -> np.ndarray:
    """Quantile filter on a piecewise-quadratic circle reconstruction.

    Eight bilinear samples on the circle of radius ``sqrt(2 tau)`` split it
    into four quarter arcs; each arc carries the quadratic through its two
    end samples and its middle sample.  The returned ``phi*`` is the level
    whose super-level arc measure equals ``2 pi clamp(T, 0, 1)``, found by
    bisection between the smallest and largest sample.
    """
    boundary = boundary or grid.boundary
    mask = circle_mask(tau, 8, grid)
    phi = np.ascontiguousarray(phi, dtype=float)
    T = np.ascontiguousarray(np.broadcast_to(T, phi.shape), dtype=float)
    width, ox, oy, fx, fy = _split_offsets(mask)
    P = pad(phi, width, boundary)
    out = np.empty_like(phi)
    _kernels.quadratic_quantile_field(P, width, ox, oy, fx, fy, T, out, 200)
    return out


def volume_constrained_step(phi: np.ndarray, T: np.ndarray, mask: KernelMask,
                            V_target: float, tol: float, grid: Grid2D,
                            max_iter: int = 60,
                            saturation: str = "unit") -> tuple[np.ndarray, float]:
    """Quantile step with threshold ``T + Lambda``, ``Lambda`` set by bisection.

    Volume is non-increasing in ``Lambda``.  Because the filter only returns
    sampled values, the volume jumps where some node's cumulative weight
    crosses ``T + Lambda``; if bisection narrows onto such a jump without
    meeting ``tol``, the nodes that switch across it are blended between
    their two admissible values so that the volume is met exactly.

    The bracket is ``[-2, 2]`` widened to ``[-max T - 1, 2 - min T]`` when
    ``T`` itself leaves ``[-1, 1]``, so both saturated ends are covered.
    Bisection stops once the bracket is narrower than ``1e-9 max(1, |T|)``:
    thresholds closer than that are not resolved by the forces, and nodes
    switching inside the final bracket are blended alike (which keeps
    mirror-symmetric data symmetric despite rounding in ``T``).
    """
    if not 0 < V_target < grid.area:
        raise ConfigurationError(f"V_target must lie in (0, {grid.area}), got {V_target}")
    if not tol > 0:
        raise ConfigurationError("tol must be positive")
    T = np.broadcast_to(np.asarray(T, dtype=float), phi.shape)
    slack = tol * grid.area
    volume_at = _volume_map(phi, T, mask, grid, _unit_flag(saturation))

    # T + Lambda <= 0 everywhere -> pointwise max; >= 1 everywhere -> pointwise min
    lo = min(-2.0, -float(np.max(T)) - 1.0)
    hi = max(2.0, 1.0 - float(np.min(T)) + 1.0)
    phi_lo, v_lo = volume_at(lo)
    phi_hi, v_hi = volume_at(hi)
    if v_lo < V_target - slack or v_hi > V_target + slack:
        raise VolumeUnreachableError(
            f"volume unreachable: target {V_target:.6g} outside [{v_hi:.6g}, {v_lo:.6g}]"
        )
    if abs(v_lo - V_target) <= slack:
        return phi_lo, lo
    if abs(v_hi - V_target) <= slack:
        return phi_hi, hi
    resolution = 1e-9 * max(1.0, float(np.max(np.abs(T))))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= resolution or mid == lo or mid == hi:
            break
        phi_mid, v_mid = volume_at(mid)
        if abs(v_mid - V_target) <= slack:
            return phi_mid, mid
        if v_mid > V_target:
            lo, phi_lo, v_lo = mid, phi_mid, v_mid
        else:
            hi, phi_hi, v_hi = mid, phi_mid, v_mid
    # v_lo > target > v_hi across a jump: blend the switching nodes
    theta = (V_target - v_hi) / (v_lo - v_hi)
    return phi_hi + theta * (phi_lo - phi_hi), 0.5 * (lo + hi)


# sorted-neighbour tables are reused across bisection steps when they fit
_TABLE_LIMIT = 20_000_000


def _volume_map(phi, T, mask, grid, unit):
    """Return ``lam -> (phi', volume)`` for the filter at threshold ``T + lam``."""
    phi = np.ascontiguousarray(phi, dtype=float)
    saturation = "unit" if unit else "neighbors"
    if phi.size * len(mask) > _TABLE_LIMIT:
        def volume_at(lam):
            out = weighted_quantile_step(phi, T + lam, mask, grid.boundary, saturation)
            return out, grid.integrate(out)
        return volume_at

    width, ox, oy, fx, fy = _split_offsets(mask)
    P = pad(phi, width, grid.boundary)
    vals = np.empty((phi.size, len(mask)))
    cum = np.empty_like(vals)
    _kernels.quantile_tables(P, width, ox, oy, fx, fy, mask.weights, vals, cum)
    flat_T = np.ascontiguousarray(T, dtype=float).ravel()

    def volume_at(lam):
        out = np.empty(phi.size)
        _kernels.select_from_tables(vals, cum, flat_T + lam, out, unit)
        out = out.reshape(phi.shape)
        return out, grid.integrate(out)
    return volume_at


def l2_change(a: np.ndarray, b: np.ndarray) -> float:
    """Root-mean-square difference over nodes."""
    return math.sqrt(float(np.mean((a - b) ** 2)))
