"""Brinkman-penalized Stokes flow on a MAC (staggered) grid.

Unknowns: ``vx`` on vertical faces, shape ``(nx+1, ny)``; ``vy`` on
horizontal faces, shape ``(nx, ny+1)``; ``p`` at cell centers.  The
momentum equation is taken in Laplacian form ``-eta lap v + alpha v +
grad p = f`` with the five-point stencil; tangential wall conditions use
ghost cells.  Normal velocities on the boundary are prescribed by
:class:`FlowCase` (no-slip walls plus parabolic inlet and outlet
segments).

The discrete dissipation returned by :func:`dissipation_energy` is the
quadratic form of exactly this operator, so a Stokes solution minimizes it
over divergence-free fields with the same boundary data.  The Brinkman
part equals ``sum_c alpha_c s_c h^2 / 2`` with ``s_c`` the mean of the
squared face velocities around cell ``c``; :func:`stokes_forces` smooths
the same ``s_c``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .grid import ConfigurationError, Grid2D, KernelMask, convolve

EDGES = ("left", "right", "bottom", "top")
SEGMENT_KINDS = ("inlet", "outlet")


class StokesSolveError(RuntimeError):
    """The linear solve did not reach the residual tolerance."""


@dataclass(frozen=True)
class BoundarySegment:
    """Parabolic normal-velocity profile on part of one edge.

    ``center`` and ``height`` are measured along the edge in domain units.
    ``peak`` is the centerline speed; for outlets ``None`` means "scale so
    that total outflow equals total inflow".
    """

    edge: str
    kind: str
    center: float
    height: float
    peak: float | None = 1.0

    def __post_init__(self):
        if self.edge not in EDGES:
            raise ConfigurationError(f"edge must be one of {EDGES}, got {self.edge!r}")
        if self.kind not in SEGMENT_KINDS:
            raise ConfigurationError(f"segment kind must be one of {SEGMENT_KINDS}")
        if not self.height > 0:
            raise ConfigurationError("segment height must be positive")
        if self.kind == "inlet" and (self.peak is None or not self.peak > 0):
            raise ConfigurationError("inlet peak speed must be positive")


@dataclass
class FlowCase:
    """Physical parameters and boundary data of a topology-optimization problem."""

    eta: float = 1.0
    alpha_bar: float | None = None
    beta: float = 0.5
    segments: list = field(default_factory=list)
    body_force: tuple | None = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigurationError("eta must be positive")
        if self.alpha_bar is not None and not self.alpha_bar > 0:
            raise ConfigurationError("alpha_bar must be positive")
        if not 0 < self.beta <= 1:
            raise ConfigurationError(f"beta must lie in (0, 1], got {self.beta}")
        self.segments = [s if isinstance(s, BoundarySegment) else BoundarySegment(**s)
                         for s in self.segments]

    def resolved_alpha_bar(self, grid: Grid2D) -> float:
        """``alpha_bar`` or the default ``2500 / h``."""
        return self.alpha_bar if self.alpha_bar is not None else 2500.0 / grid.h

    def inlet_scale(self) -> float:
        peaks = [s.peak for s in self.segments if s.kind == "inlet"]
        return max(peaks) if peaks else 1.0

    def normal_velocity(self, grid: Grid2D) -> dict[str, np.ndarray]:
        """Outward normal velocity on the boundary faces of each edge.

        Outlets without an explicit peak are scaled so the discrete net
        flux vanishes; explicit data must already balance to 1e-12.
        """
        out = {e: np.zeros(grid.ny if e in ("left", "right") else grid.nx) for e in EDGES}
        free = {e: np.zeros_like(v) for e, v in out.items()}
        for seg in self.segments:
            n = out[seg.edge].size
            s = (np.arange(n) + 0.5) * grid.h
            r = (s - seg.center) / (0.5 * seg.height)
            shape = np.where(np.abs(r) < 1.0, 1.0 - r * r, 0.0)
            if seg.kind == "inlet":
                out[seg.edge] -= seg.peak * shape
            elif seg.peak is None:
                free[seg.edge] += shape
            else:
                out[seg.edge] += seg.peak * shape
        fixed = sum(v.sum() for v in out.values())
        loose = sum(v.sum() for v in free.values())
        if loose > 0:
            for e in EDGES:
                out[e] += (-fixed / loose) * free[e]
        elif abs(fixed) > 1e-12 * max(1.0, sum(np.abs(v).sum() for v in out.values())):
            raise ConfigurationError(
                f"boundary flux does not balance: net outflow {fixed * grid.h:.3e}")
        return out


@dataclass
class StokesState:
    vx: np.ndarray
    vy: np.ndarray
    p: np.ndarray
    grid: Grid2D
    residual: float = 0.0
    divergence: float = 0.0

    def cell_velocity(self) -> tuple[np.ndarray, np.ndarray]:
        """Face velocities averaged to cell centers."""
        return 0.5 * (self.vx[:-1] + self.vx[1:]), 0.5 * (self.vy[:, :-1] + self.vy[:, 1:])

    def cell_speed_sq(self) -> np.ndarray:
        """Mean of the squared face velocities on each axis, summed."""
        return (0.5 * (self.vx[:-1] ** 2 + self.vx[1:] ** 2)
                + 0.5 * (self.vy[:, :-1] ** 2 + self.vy[:, 1:] ** 2))

    def divergence_field(self) -> np.ndarray:
        h = self.grid.h
        return (self.vx[1:] - self.vx[:-1]) / h + (self.vy[:, 1:] - self.vy[:, :-1]) / h


def brinkman_alpha(phi: np.ndarray, alpha_bar: float, mask: KernelMask,
                   boundary: str = "mirror") -> np.ndarray:
    """Inverse permeability ``alpha_bar * G * (1 - phi)`` at cell centers."""
    if not alpha_bar > 0:
        raise ConfigurationError("alpha_bar must be positive")
    return alpha_bar * np.clip(convolve(1.0 - np.asarray(phi, float), mask, boundary), 0.0, 1.0)


class _Layout:
    """Index bookkeeping for the interior unknowns."""

    def __init__(self, grid: Grid2D):
        nx, ny = grid.nx, grid.ny
        self.nx, self.ny = nx, ny
        self.n_u = (nx - 1) * ny
        self.n_v = nx * (ny - 1)
        self.n_p = nx * ny
        self.size = self.n_u + self.n_v + self.n_p

    def u(self, i, j):  # vx face (i, j), 1 <= i <= nx-1
        return (i - 1) * self.ny + j

    def v(self, i, j):  # vy face (i, j), 1 <= j <= ny-1
        return self.n_u + i * (self.ny - 1) + (j - 1)

    def p(self, i, j):
        return self.n_u + self.n_v + i * self.ny + j


def _assemble(case: FlowCase, grid: Grid2D):
    """Matrix and right-hand side without the Brinkman term."""
    nx, ny, h = grid.nx, grid.ny, grid.h
    eta = case.eta
    L = _Layout(grid)
    bc = case.normal_velocity(grid)
    # boundary normal face values: outward normal velocity -> signed component
    vx_b = np.zeros((2, ny))
    vx_b[0] = -bc["left"]
    vx_b[1] = bc["right"]
    vy_b = np.zeros((2, nx))
    vy_b[0] = -bc["bottom"]
    vy_b[1] = bc["top"]

    fx = fy = None
    if case.body_force is not None:
        cfx, cfy = (np.asarray(a, float) for a in case.body_force)
        fx = 0.5 * (cfx[:-1] + cfx[1:])  # (nx-1, ny) interior vertical faces
        fy = 0.5 * (cfy[:, :-1] + cfy[:, 1:])

    rows, cols, vals = [], [], []
    rhs = np.zeros(L.size)
    c = eta / (h * h)

    def add(r, col, val):
        rows.append(r)
        cols.append(col)
        vals.append(val)

    # x-momentum on interior vertical faces
    for i in range(1, nx):
        for j in range(ny):
            r = L.u(i, j)
            diag = 4.0 * c
            for ii in (i - 1, i + 1):
                if ii == 0 or ii == nx:
                    rhs[r] += c * vx_b[0 if ii == 0 else 1, j]
                else:
                    add(r, L.u(ii, j), -c)
            for jj in (j - 1, j + 1):
                if 0 <= jj < ny:
                    add(r, L.u(i, jj), -c)
                else:
                    diag += c  # ghost = -interior (no tangential slip)
            add(r, r, diag)
            add(r, L.p(i, j), 1.0 / h)
            add(r, L.p(i - 1, j), -1.0 / h)
            if fx is not None:
                rhs[r] += fx[i - 1, j]
    # y-momentum on interior horizontal faces
    for i in range(nx):
        for j in range(1, ny):
            r = L.v(i, j)
            diag = 4.0 * c
            for jj in (j - 1, j + 1):
                if jj == 0 or jj == ny:
                    rhs[r] += c * vy_b[0 if jj == 0 else 1, i]
                else:
                    add(r, L.v(i, jj), -c)
            for ii in (i - 1, i + 1):
                if 0 <= ii < nx:
                    add(r, L.v(ii, j), -c)
                else:
                    diag += c
            add(r, r, diag)
            add(r, L.p(i, j), 1.0 / h)
            add(r, L.p(i, j - 1), -1.0 / h)
            if fy is not None:
                rhs[r] += fy[i, j - 1]
    # continuity (negated divergence keeps the system symmetric)
    for i in range(nx):
        for j in range(ny):
            r = L.p(i, j)
            if i + 1 < nx:
                add(r, L.u(i + 1, j), -1.0 / h)
            else:
                rhs[r] += vx_b[1, j] / h
            if i > 0:
                add(r, L.u(i, j), 1.0 / h)
            else:
                rhs[r] -= vx_b[0, j] / h
            if j + 1 < ny:
                add(r, L.v(i, j + 1), -1.0 / h)
            else:
                rhs[r] += vy_b[1, i] / h
            if j > 0:
                add(r, L.v(i, j), 1.0 / h)
            else:
                rhs[r] -= vy_b[0, i] / h
    A = sparse.csc_matrix((vals, (rows, cols)), shape=(L.size, L.size))
    return A, rhs, L, vx_b, vy_b


def face_alpha(alpha: np.ndarray) -> np.ndarray:
    """Arithmetic means of ``alpha`` on the interior faces, in unknown order."""
    return np.concatenate([(0.5 * (alpha[:-1] + alpha[1:])).ravel(),
                           (0.5 * (alpha[:, :-1] + alpha[:, 1:])).ravel()])


class StokesSolver:
    """Stokes-Brinkman solver for a fixed flow case and grid.

    The viscous, pressure and continuity blocks do not depend on
    ``alpha`` and are assembled once; each :meth:`solve` only adds the
    Brinkman diagonal.

    The pressure is pinned at one cell, whose (redundant) continuity row
    is dropped; the boundary flux balance makes the reduced system
    consistent and the pressure is shifted to zero mean afterwards.  A
    sparse LU factorization is followed by a few steps of iterative
    refinement.  The relative residual
    ``|A x - b|_inf / (|A|_inf |x|_inf + |b|_inf)`` and the discrete
    divergence scaled by ``h / U`` (``U`` the inlet speed) must both stay
    below ``tol``.
    """

    def __init__(self, case: FlowCase, grid: Grid2D, tol: float = 1e-8, refinements: int = 3):
        self.case, self.grid, self.tol, self.refinements = case, grid, tol, refinements
        A, b, L, self.vx_b, self.vy_b = _assemble(case, grid)
        self.layout = L
        self.keep = np.ones(L.size, dtype=bool)
        self.keep[L.p(0, 0)] = False
        self.base = A.tocsr()[self.keep][:, self.keep].tocsc()
        self.rhs = b[self.keep]

    def solve(self, alpha: np.ndarray) -> StokesState:
        grid, L = self.grid, self.layout
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != grid.shape:
            raise ValueError(f"alpha shape {alpha.shape} does not match grid {grid.shape}")
        d = np.zeros(self.base.shape[0])
        d[: L.n_u + L.n_v] = face_alpha(alpha)
        A = (self.base + sparse.diags(d)).tocsc()
        b = self.rhs
        lu = splu(A, permc_spec="COLAMD")
        xr = lu.solve(b)
        for _ in range(self.refinements):
            xr = xr + lu.solve(b - A @ xr)
        r = A @ xr - b
        a_norm = abs(A).sum(axis=1).max()
        rel = float(np.max(np.abs(r)) / (a_norm * np.max(np.abs(xr)) + np.max(np.abs(b)) + 1e-300))
        x = np.zeros(L.size)
        x[self.keep] = xr

        nx, ny = grid.nx, grid.ny
        vx = np.zeros((nx + 1, ny))
        vx[0] = self.vx_b[0]
        vx[nx] = self.vx_b[1]
        vx[1:nx] = x[: L.n_u].reshape(nx - 1, ny)
        vy = np.zeros((nx, ny + 1))
        vy[:, 0] = self.vy_b[0]
        vy[:, ny] = self.vy_b[1]
        vy[:, 1:ny] = x[L.n_u: L.n_u + L.n_v].reshape(nx, ny - 1)
        p = x[L.n_u + L.n_v:].reshape(nx, ny)
        state = StokesState(vx, vy, p - p.mean(), grid, residual=rel)
        div = float(np.max(np.abs(state.divergence_field())))
        state.divergence = div
        scaled_div = div * grid.h / self.case.inlet_scale()
        if not (np.isfinite(rel) and rel <= self.tol and scaled_div <= self.tol):
            raise StokesSolveError(
                f"Stokes solve failed: relative residual {rel:.3e}, scaled divergence "
                f"{scaled_div:.3e} (tolerance {self.tol:.1e})"
            )
        return state


def solve_stokes(alpha: np.ndarray, case: FlowCase, grid: Grid2D,
                 tol: float = 1e-8) -> StokesState:
    """One-off Stokes-Brinkman solve for cell-centered ``alpha``; see :class:`StokesSolver`."""
    return StokesSolver(case, grid, tol).solve(alpha)


def stokes_forces(state: StokesState, alpha_bar: float, mask: KernelMask,
                  boundary: str = "mirror") -> tuple[np.ndarray, np.ndarray]:
    """``F1 = 0`` and ``F2 = alpha_bar / 2 * G * |v|^2``."""
    F2 = 0.5 * alpha_bar * convolve(state.cell_speed_sq(), mask, boundary)
    return np.zeros_like(F2), F2


def dissipation_energy(state: StokesState, alpha: np.ndarray, eta: float,
                       no_slip: bool = True) -> float:
    """Discrete ``int eta/2 |grad v|^2 + alpha/2 |v|^2``.

    Viscous part: squared differences between neighbouring faces of each
    component, plus ``2 (v - 0)^2`` for the half-cell link to a no-slip
    wall.  Brinkman part: ``alpha_c s_c / 2`` per cell.  With
    ``no_slip=False`` the wall links are left out, which leaves the
    interior strain energy alone (zero for any rigid translation).
    """
    vx, vy = state.vx, state.vy
    h2 = state.grid.cell_area
    visc = (np.sum(np.diff(vx, axis=0) ** 2) + np.sum(np.diff(vx, axis=1) ** 2)
            + np.sum(np.diff(vy, axis=1) ** 2) + np.sum(np.diff(vy, axis=0) ** 2))
    if no_slip:
        visc += 2.0 * (np.sum(vx[1:-1, 0] ** 2) + np.sum(vx[1:-1, -1] ** 2)
                       + np.sum(vy[0, 1:-1] ** 2) + np.sum(vy[-1, 1:-1] ** 2))
    brinkman = float(np.sum(np.asarray(alpha) * state.cell_speed_sq()) * h2)
    return 0.5 * eta * float(visc) + 0.5 * brinkman


def poiseuille_case(peak: float = 1.0, eta: float = 1.0) -> FlowCase:
    """Straight channel: full-height parabolic inlet on the left, matching outlet on the right."""
    return FlowCase(eta=eta, alpha_bar=1.0, beta=1.0, segments=[
        BoundarySegment("left", "inlet", 0.5, 1.0, peak),
        BoundarySegment("right", "outlet", 0.5, 1.0, peak),
    ])


def poiseuille_dissipation(peak: float, eta: float, length: float = 1.0,
                           height: float = 1.0) -> float:
    """``eta/2 int |v'|^2`` for ``v = peak (1 - (2y/H - 1)^2)`` over the channel."""
    return 0.5 * eta * length * 16.0 * peak ** 2 / (3.0 * height)


__all__ = [
    "BoundarySegment", "FlowCase", "StokesSolveError", "StokesSolver", "StokesState",
    "brinkman_alpha", "dissipation_energy", "face_alpha", "poiseuille_case",
    "poiseuille_dissipation", "solve_stokes", "stokes_forces",
]
