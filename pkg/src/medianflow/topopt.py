"""Fluid topology optimization with the volume-constrained median filter.

Each iteration solves the Brinkman-penalized Stokes problem for the current
fluid indicator ``phi``, turns the squared speed into the force
``F2 = alpha_bar / 2 * G * |v|^2`` (``F1 = 0``) and applies one quantile
step with a global threshold offset chosen so that ``int phi = beta |Omega|``.

Trace rows (iterations ``k >= 1``) hold ``phi^k`` and the flow solved for
it.  The data term of the objective is the discrete dissipation of
``v^k``, so ``fidelity`` stores that dissipation and ``total`` is
``dissipation + lambda_tilde * perimeter``.  ``linearized`` keeps
``int (1 - phi^k) F2(v^k)``, the Brinkman part the step actually sees; it
omits the viscous part and is not monotone on its own.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

from .energy import EnergyReport, interaction
from .filters import SolverConfig, l2_change, threshold_field, volume_constrained_step
from .grid import ConfigurationError, Grid2D
from .stokes import (
    BoundarySegment,
    FlowCase,
    StokesSolver,
    StokesState,
    brinkman_alpha,
    dissipation_energy,
    stokes_forces,
)

logger = logging.getLogger(__name__)

# tighter than any reported tolerance so that successive volumes agree
_VOLUME_TOL = 1e-12


def contraction_case(eta: float = 1.0, alpha_bar: float | None = None,
                     beta: float = 0.45) -> FlowCase:
    """Full-height parabolic inflow on the left, outlet of height 1/3 centered on the right."""
    return FlowCase(eta=eta, alpha_bar=alpha_bar, beta=beta, segments=[
        BoundarySegment("left", "inlet", 0.5, 1.0, 1.0),
        BoundarySegment("right", "outlet", 0.5, 1.0 / 3.0, None),
    ])


def double_pipe_case(eta: float = 1.0, alpha_bar: float | None = None,
                     beta: float = 0.35) -> FlowCase:
    """Two inlets on the left and two outlets on the right, each of height 1/6."""
    segs = []
    for c in (0.25, 0.75):
        segs.append(BoundarySegment("left", "inlet", c, 1.0 / 6.0, 1.0))
        segs.append(BoundarySegment("right", "outlet", c, 1.0 / 6.0, None))
    return FlowCase(eta=eta, alpha_bar=alpha_bar, beta=beta, segments=segs)


@dataclass
class TopOptResult:
    phi: np.ndarray
    state: StokesState
    trace: list[EnergyReport] = field(default_factory=list)
    changes: list[float] = field(default_factory=list)
    wall_ms: list[int] = field(default_factory=list)
    converged: bool = False


def random_initial_phi(grid: Grid2D, seed: int) -> np.ndarray:
    """Uniform random values in ``[0, 1]`` from a seeded generator."""
    return np.random.default_rng(seed).random(grid.shape)


def _report(phi, state, alpha, case, F2, lambda_tilde, mask, grid, multiplier):
    diss = dissipation_energy(state, alpha, case.eta)
    per = 0.5 * interaction(phi, mask, grid)
    return EnergyReport(diss, per, diss + lambda_tilde * per, grid.integrate(phi),
                        multiplier, grid.integrate((1.0 - phi) * F2))


def optimize_topology(case: FlowCase, grid: Grid2D, config: SolverConfig,
                      phi0: np.ndarray | None = None, seed: int | None = None,
                      callback: Callable[[int, np.ndarray], None] | None = None) -> TopOptResult:
    """Minimize dissipation plus ``lambda_tilde`` times perimeter at fixed fluid volume.

    Parameters
    ----------
    case : FlowCase
        Viscosity, penalty ``alpha_bar`` (default ``2500 / h``), fluid
        fraction ``beta`` and boundary segments.
    config : SolverConfig
        ``tau``, ``lambda_tilde``, ``epsilon``, ``K_max``, mask choice and
        saturation rule of the quantile filter.
    phi0 : array, optional
        Initial fluid indicator.  Drawn with :func:`random_initial_phi`
        from ``seed`` when omitted.
    """
    if phi0 is None:
        if seed is None:
            raise ConfigurationError("a random initial field needs an explicit seed")
        phi0 = random_initial_phi(grid, seed)
    phi = np.array(phi0, dtype=float)
    if phi.shape != grid.shape:
        raise ValueError(f"phi0 shape {phi.shape} does not match grid {grid.shape}")
    if np.any(phi < 0) or np.any(phi > 1):
        raise ValueError("phi0 must take values in [0, 1]")

    mask = config.mask(grid)
    alpha_bar = case.resolved_alpha_bar(grid)
    solver = StokesSolver(case, grid)
    V_target = case.beta * grid.area
    result = TopOptResult(phi, None)

    if case.beta >= 1.0:
        # all fluid: no design freedom
        phi = np.ones(grid.shape)
        alpha = brinkman_alpha(phi, alpha_bar, mask, grid.boundary)
        result.phi, result.state = phi, solver.solve(alpha)
        result.converged = True
        return result

    alpha = brinkman_alpha(phi, alpha_bar, mask, grid.boundary)
    state = solver.solve(alpha)
    for k in range(1, config.K_max + 1):
        start = time.perf_counter()
        F1, F2 = stokes_forces(state, alpha_bar, mask, grid.boundary)
        T = threshold_field(F1, F2, config.lambda_tilde)
        new, lam = volume_constrained_step(phi, T, mask, V_target, _VOLUME_TOL, grid,
                                           saturation=config.saturation)
        change = l2_change(new, phi)
        phi = new
        alpha = brinkman_alpha(phi, alpha_bar, mask, grid.boundary)
        state = solver.solve(alpha)
        _, F2_new = stokes_forces(state, alpha_bar, mask, grid.boundary)
        report = _report(phi, state, alpha, case, F2_new, config.lambda_tilde, mask, grid, lam)
        result.trace.append(report)
        result.changes.append(change)
        result.wall_ms.append(int(round(1000 * (time.perf_counter() - start))))
        if callback is not None:
            callback(k, phi)
        logger.debug("iter %d total %.10g change %.3g", k, report.total, change)
        if change < config.epsilon:
            result.converged = True
            break
    result.phi, result.state = phi, state
    return result


def _edge_cells(edge: str, grid: Grid2D, lo: float, hi: float) -> tuple:
    s = (np.arange(grid.ny if edge in ("left", "right") else grid.nx) + 0.5) * grid.h
    idx = np.nonzero((s > lo) & (s < hi))[0]
    if edge == "left":
        return np.zeros_like(idx), idx
    if edge == "right":
        return np.full_like(idx, grid.nx - 1), idx
    if edge == "bottom":
        return idx, np.zeros_like(idx)
    return idx, np.full_like(idx, grid.ny - 1)


def fluid_connectivity(phi: np.ndarray, case: FlowCase, grid: Grid2D,
                       level: float = 0.5) -> bool:
    """Whether every inlet reaches some outlet through ``{phi >= level}``.

    Components are 4-connected; a segment touches a component when one of
    the cells along its middle half belongs to it.
    """
    labels, _ = ndimage.label(np.asarray(phi) >= level)

    def touching(seg):
        ii, jj = _edge_cells(seg.edge, grid, seg.center - 0.25 * seg.height,
                             seg.center + 0.25 * seg.height)
        found = set(labels[ii, jj].tolist())
        found.discard(0)
        return found

    outlets = set()
    for seg in case.segments:
        if seg.kind == "outlet":
            outlets |= touching(seg)
    inlets = [touching(seg) for seg in case.segments if seg.kind == "inlet"]
    return bool(inlets) and all(comp & outlets for comp in inlets)
