"""Energy functionals and checks of the identities behind the scheme.

Two scalings are in use.  Driver traces report the *weighted* total
``fidelity + lambda_tilde * perimeter`` where ``perimeter`` is half the
kernel interaction (for a binary field and an integer mask this is exactly
``sum (1 - u) (G * u) h^2``).  The *relaxed* total
``interaction + (2 / lambda_tilde) * fidelity`` is the same quantity times
``2 / lambda_tilde``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .filters import _split_offsets
from .grid import Grid2D, KernelMask, convolve, pad


@dataclass(frozen=True)
class EnergyReport:
    fidelity: float
    perimeter: float
    total: float
    volume: float
    multiplier: float = 0.0
    linearized: float | None = None


@dataclass(frozen=True)
class RelaxedEnergy:
    interaction: float
    fidelity: float
    total: float


def interaction_density(phi: np.ndarray, mask: KernelMask, boundary: str = "mirror",
                        center: np.ndarray | None = None) -> np.ndarray:
    """Per-node ``sum_j w_j |c(x) - phi(x + y_j)|`` with ``c = phi`` by default."""
    phi = np.ascontiguousarray(phi, dtype=float)
    center = phi if center is None else np.ascontiguousarray(center, dtype=float)
    width, ox, oy, fx, fy = _split_offsets(mask)
    P = pad(phi, width, boundary)
    out = np.empty_like(phi)
    _kernels.interaction_field(P, width, ox, oy, fx, fy, mask.weights, center, out)
    return out


def interaction(phi: np.ndarray, mask: KernelMask, grid: Grid2D) -> float:
    """``sum_x sum_j w_j |phi(x) - phi(x + y_j)| h^2``."""
    return grid.integrate(interaction_density(phi, mask, grid.boundary))


def fidelity(phi: np.ndarray, F1: np.ndarray, F2: np.ndarray, grid: Grid2D) -> float:
    return grid.integrate(phi * F1 + (1.0 - phi) * F2)


def heat_content_perimeter(u: np.ndarray, tau: float, mask: KernelMask, grid: Grid2D) -> float:
    """``sqrt(pi / tau) * sum (1 - u) (G * u) h^2``, which tends to the perimeter."""
    return math.sqrt(math.pi / tau) * _heat_sum(u, mask, grid)


def _heat_sum(u, mask, grid):
    return grid.integrate((1.0 - u) * convolve(u, mask, grid.boundary))


def binary_energy(u: np.ndarray, F1: np.ndarray, F2: np.ndarray, lambda_tilde: float,
                  mask: KernelMask, grid: Grid2D) -> EnergyReport:
    """Threshold-dynamics energy of a binary field, weighted scaling."""
    fid = fidelity(u, F1, F2, grid)
    per = _heat_sum(u, mask, grid)
    return EnergyReport(fid, per, fid + lambda_tilde * per, grid.integrate(u))


def relaxed_energy(phi: np.ndarray, F1: np.ndarray, F2: np.ndarray, lambda_tilde: float,
                   mask: KernelMask, grid: Grid2D) -> RelaxedEnergy:
    """``interaction + (2 / lambda_tilde) * fidelity`` for a [0, 1]-valued field."""
    inter = interaction(phi, mask, grid)
    fid = fidelity(phi, F1, F2, grid)
    return RelaxedEnergy(inter, fid, inter + 2.0 * fid / lambda_tilde)


def level_set_energy(phi: np.ndarray, F1: np.ndarray, F2: np.ndarray, lambda_tilde: float,
                     mask: KernelMask, grid: Grid2D, multiplier: float = 0.0) -> EnergyReport:
    """Relaxed energy in the weighted scaling used by driver traces."""
    fid = fidelity(phi, F1, F2, grid)
    per = 0.5 * interaction(phi, mask, grid)
    return EnergyReport(fid, per, fid + lambda_tilde * per, grid.integrate(phi), multiplier)


def movement_limiter(phi: np.ndarray, phi_k: np.ndarray, mask: KernelMask,
                     grid: Grid2D) -> float:
    """``sum w (2|phi(x) - phi_k(x+y)| - |phi(x) - phi(x+y)| - |phi_k(x) - phi_k(x+y)|) h^2``."""
    b = grid.boundary
    cross = interaction_density(phi_k, mask, b, center=phi)
    own = interaction_density(phi, mask, b)
    prev = interaction_density(phi_k, mask, b)
    return grid.integrate(2.0 * cross - own - prev)


def coarea_check(phi: np.ndarray, mask: KernelMask, grid: Grid2D,
                 levels: int = 256) -> tuple[float, float]:
    """Both sides of the threshold decomposition of the interaction term.

    ``lhs`` is the interaction of ``phi``; ``rhs`` integrates twice the
    binary heat content of ``{phi >= mu}`` over ``mu`` with the midpoint
    rule on ``levels`` uniform cells of ``[0, 1]``.
    """
    if levels < 16:
        raise ValueError(f"levels must be >= 16, got {levels}")
    lhs = interaction(phi, mask, grid)
    mus = (np.arange(levels) + 0.5) / levels
    rhs = 0.0
    for mu in mus:
        chi = (phi >= mu).astype(float)
        rhs += _heat_sum(chi, mask, grid)
    return lhs, 2.0 * rhs / levels
