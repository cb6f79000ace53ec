"""Two-phase image segmentation driven by the median-filter scheme.

Each iteration updates the region parameters for the current level-set
function, assembles the fidelity forces, converts them to a local threshold
and applies one filter step.  The recorded energy after iteration ``k`` is
``E(phi^{k+1}, c^{k+1})``, so every stage of the alternation can only lower
it.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .energy import EnergyReport, binary_energy, level_set_energy
from .filters import (
    SolverConfig,
    binary_td_step,
    l2_change,
    quadratic_quantile_step,
    threshold_field,
    weighted_quantile_step,
)
from .grid import Grid2D, KernelMask, convolve, gaussian_kernel_mask

logger = logging.getLogger(__name__)

MODELS = ("cv", "lif", "curvature")


class DegeneratePartition(ValueError):
    """One of the two regions has zero volume."""


@dataclass(frozen=True)
class CVParams:
    c1: float
    c2: float


@dataclass(frozen=True)
class LIFParams:
    C1: np.ndarray
    C2: np.ndarray
    sigma: float


def cv_update_params(phi: np.ndarray, I: np.ndarray) -> CVParams:
    """Weighted region means of the image."""
    inside = float(np.sum(phi))
    outside = float(np.sum(1.0 - phi))
    if inside <= 0 or outside <= 0:
        raise DegeneratePartition("degenerate partition: a region has zero volume")
    return CVParams(float(np.sum(phi * I)) / inside, float(np.sum((1.0 - phi) * I)) / outside)


def cv_forces(I: np.ndarray, params: CVParams) -> tuple[np.ndarray, np.ndarray]:
    return (I - params.c1) ** 2, (I - params.c2) ** 2


def lif_update_means(phi: np.ndarray, I: np.ndarray, sigma_mask: KernelMask,
                     boundary: str = "mirror", sigma: float = float("nan")) -> LIFParams:
    """Local region means ``G*(phi I) / G*phi`` and ``G*((1-phi) I) / G*(1-phi)``.

    Where a local denominator falls below ``1e-12`` the global image mean
    is used instead.
    """
    fallback = float(np.mean(I))

    def local_mean(weight):
        num = convolve(weight * I, sigma_mask, boundary)
        den = convolve(weight, sigma_mask, boundary)
        ok = den >= 1e-12
        return np.where(ok, num / np.where(ok, den, 1.0), fallback)

    return LIFParams(local_mean(phi), local_mean(1.0 - phi), sigma)


def lif_forces(I: np.ndarray, params: LIFParams, sigma_mask: KernelMask,
               boundary: str = "mirror") -> tuple[np.ndarray, np.ndarray]:
    """``F_i(y) = sum_x G(x - y) (C_i(x) - I(y))^2`` in expanded form."""
    forces = []
    for C in (params.C1, params.C2):
        forces.append(convolve(C * C, sigma_mask, boundary)
                      - 2.0 * I * convolve(C, sigma_mask, boundary) + I * I)
    return forces[0], forces[1]


def lif_sigma_default(grid: Grid2D, std_cells: float = 10.0) -> float:
    """Time-scale whose kernel standard deviation ``sqrt(2 sigma)`` is ``std_cells`` cells."""
    return 0.5 * (std_cells * grid.h) ** 2


@dataclass
class SegmentationRun:
    """Loop state of one segmentation.

    ``model`` is ``"cv"``, ``"lif"`` or ``"curvature"`` (forces fixed at zero).
    After :func:`segment` the run holds one :class:`EnergyReport` per
    iteration in ``trace`` together with the matching L2 changes and wall
    times, and the last iterate in ``phi_final``.
    """

    config: SolverConfig
    image: np.ndarray
    phi0: np.ndarray
    grid: Grid2D
    model: str = "cv"
    lif_sigma: float | None = None
    trace: list[EnergyReport] = field(default_factory=list)
    changes: list[float] = field(default_factory=list)
    wall_ms: list[int] = field(default_factory=list)
    phi_final: np.ndarray | None = None
    params: CVParams | LIFParams | None = None
    converged: bool = False


def _initial_phi(run: SegmentationRun) -> np.ndarray:
    phi = np.array(run.phi0, dtype=float)
    if phi.shape != run.grid.shape:
        raise ValueError(f"phi0 shape {phi.shape} does not match grid {run.grid.shape}")
    if np.any(phi < 0) or np.any(phi > 1):
        raise ValueError("phi0 must take values in [0, 1]")
    if run.config.filter_kind == "binary_td":
        phi = (phi >= 0.5).astype(float)
    return phi


def segment(run: SegmentationRun,
            callback: Callable[[int, np.ndarray], None] | None = None) -> SegmentationRun:
    """Run the alternating scheme until the L2 change drops below ``epsilon``.

    ``callback(k, phi)`` is invoked after every iteration ``k >= 1``.
    """
    cfg = run.config
    grid = run.grid
    if run.model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {run.model!r}")
    I = np.asarray(run.image, dtype=float)
    mask = cfg.mask(grid)
    sigma_mask = None
    if run.model == "lif":
        if run.lif_sigma is None:
            run.lif_sigma = lif_sigma_default(grid)
        sigma_mask = gaussian_kernel_mask(run.lif_sigma, grid, cfg.truncation)

    phi = _initial_phi(run)
    params = run.params
    run.trace, run.changes, run.wall_ms = [], [], []
    run.converged = False
    zero = np.zeros(grid.shape)

    for k in range(1, cfg.K_max + 1):
        start = time.perf_counter()
        if run.model == "cv":
            try:
                params = cv_update_params(phi, I)
            except DegeneratePartition:
                if params is None:
                    mean = float(np.mean(I))
                    params = CVParams(mean, mean)
                logger.warning("iteration %d: degenerate partition, keeping parameters", k)
            F1, F2 = cv_forces(I, params)
        elif run.model == "lif":
            params = lif_update_means(phi, I, sigma_mask, grid.boundary, run.lif_sigma)
            F1, F2 = lif_forces(I, params, sigma_mask, grid.boundary)
        else:
            F1 = F2 = zero

        T = threshold_field(F1, F2, cfg.lambda_tilde)
        if cfg.filter_kind == "binary_td":
            new = binary_td_step(phi, T, mask, grid.boundary)
            report = binary_energy(new, F1, F2, cfg.lambda_tilde, mask, grid)
        elif cfg.filter_kind == "quadratic":
            new = quadratic_quantile_step(phi, T, cfg.tau, grid)
            report = level_set_energy(new, F1, F2, cfg.lambda_tilde, mask, grid)
        else:
            new = weighted_quantile_step(phi, T, mask, grid.boundary, cfg.saturation)
            report = level_set_energy(new, F1, F2, cfg.lambda_tilde, mask, grid)

        change = l2_change(new, phi)
        phi = new
        run.trace.append(report)
        run.changes.append(change)
        run.wall_ms.append(int(round(1000 * (time.perf_counter() - start))))
        if callback is not None:
            callback(k, phi)
        logger.debug("iter %d total %.10g change %.3g", k, report.total, change)
        if change < cfg.epsilon:
            run.converged = True
            break

    run.params = params
    run.phi_final = phi
    return run


def cone(grid: Grid2D) -> np.ndarray:
    """1 at the domain center, decaying linearly to 0 at the corners."""
    x, y = grid.coordinates()
    cx = 0.5 * grid.nx * grid.h
    cy = 0.5 * grid.ny * grid.h
    r = np.hypot(x - cx, y - cy)
    return np.clip(1.0 - r / np.hypot(cx, cy), 0.0, 1.0)


def square_indicator(grid: Grid2D, margin: float) -> np.ndarray:
    """Binary square inset by ``margin`` (domain units) from every edge."""
    x, y = grid.coordinates()
    Lx = grid.nx * grid.h
    Ly = grid.ny * grid.h
    inside = (x > margin) & (x < Lx - margin) & (y > margin) & (y < Ly - margin)
    return inside.astype(float)


def jaccard(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.count_nonzero(a | b)
    return 1.0 if union == 0 else np.count_nonzero(a & b) / union
