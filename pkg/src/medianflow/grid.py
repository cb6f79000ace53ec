"""Uniform grids, kernel masks, convolution and sub-grid interpolation.

Fields are plain ``numpy`` arrays of shape ``(nx, ny)`` indexed ``[ix, iy]``.
Node ``(ix, iy)`` sits at the cell center ``((ix + 1/2) h, (iy + 1/2) h)``;
offsets and sample coordinates are expressed in grid units.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

BOUNDARY_MODES = ("mirror", "periodic")

# numpy.pad / scipy.ndimage names for each boundary extension
_PAD_MODE = {"mirror": "symmetric", "periodic": "wrap"}
_NDI_MODE = {"mirror": "reflect", "periodic": "wrap"}


class ConfigurationError(ValueError):
    """Raised when a grid, mask or solver configuration is inconsistent."""


@dataclass(frozen=True)
class Grid2D:
    """Square-cell grid on ``[0, nx*h] x [0, ny*h]``."""

    nx: int
    ny: int
    h: float
    boundary: str = "mirror"

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ConfigurationError(f"grid needs nx, ny >= 4, got {self.nx}x{self.ny}")
        if not self.h > 0:
            raise ConfigurationError(f"grid spacing must be positive, got {self.h}")
        if self.boundary not in BOUNDARY_MODES:
            raise ConfigurationError(
                f"boundary must be one of {BOUNDARY_MODES}, got {self.boundary!r}"
            )

    @classmethod
    def unit_square(cls, n: int, boundary: str = "mirror") -> "Grid2D":
        return cls(n, n, 1.0 / n, boundary)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @property
    def area(self) -> float:
        return self.nx * self.ny * self.h * self.h

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates as two ``(nx, ny)`` arrays."""
        x = (np.arange(self.nx) + 0.5) * self.h
        y = (np.arange(self.ny) + 0.5) * self.h
        return np.meshgrid(x, y, indexing="ij")

    def integrate(self, f: np.ndarray) -> float:
        return float(np.sum(f) * self.cell_area)


@dataclass(frozen=True)
class KernelMask:
    """Nonnegative weights on a symmetric set of offsets (grid units).

    ``factor`` optionally holds the 1-D weights of a separable mask on the
    square window; it is only used to speed up convolution.
    """

    offsets: np.ndarray
    weights: np.ndarray
    factor: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=float).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=float).ravel()
        if offsets.shape[0] != weights.size or weights.size == 0:
            raise ConfigurationError("offsets and weights must be non-empty and match")
        if np.any(weights < 0):
            raise ConfigurationError("mask weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ConfigurationError(f"mask weights sum to {weights.sum()!r}, not 1")
        # symmetry under (dx, dy) -> (-dx, -dy), matched up to rounding
        key = {tuple(np.round(o, 9)): w for o, w in zip(offsets, weights)}
        for o, w in key.items():
            mirrored = key.get(tuple(np.round(-np.asarray(o), 9) + 0.0))
            if mirrored is None or abs(mirrored - w) > 1e-14:
                raise ConfigurationError(f"mask is not point-symmetric at offset {o}")
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.weights.size

    @property
    def is_integer(self) -> bool:
        return bool(np.all(self.offsets == np.round(self.offsets)))

    @property
    def reach(self) -> int:
        """Largest |offset| component, rounded up."""
        return int(np.ceil(np.max(np.abs(self.offsets)) - 1e-12))

    def dense(self) -> np.ndarray:
        """Weights laid out on a ``(2r+1, 2r+1)`` array; integer masks only."""
        if not self.is_integer:
            raise ConfigurationError("dense layout needs integer offsets")
        r = self.reach
        out = np.zeros((2 * r + 1, 2 * r + 1))
        idx = self.offsets.astype(int) + r
        np.add.at(out, (idx[:, 0], idx[:, 1]), self.weights)
        return out


def gaussian_kernel_mask(tau: float, grid: Grid2D, truncation: float = 4.0) -> KernelMask:
    """Discrete heat kernel ``G_tau`` (variance ``2 tau`` per axis).

    Weights are ``exp(-|x|^2 / (4 tau))`` sampled at integer offsets of the
    square window of half-width ``ceil(truncation * sqrt(2 tau) / h)`` and
    renormalized to sum to one.
    """
    if not tau > 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    if truncation < 3:
        raise ConfigurationError(f"truncation must be >= 3 standard deviations, got {truncation}")
    std = math.sqrt(2.0 * tau) / grid.h
    half = int(math.ceil(truncation * std))
    if 2 * half + 1 > min(grid.nx, grid.ny):
        raise ConfigurationError(
            f"kernel window {2 * half + 1} exceeds grid extent {grid.nx}x{grid.ny}"
        )
    n = np.arange(-half, half + 1)
    g = np.exp(-((n * grid.h) ** 2) / (4.0 * tau))
    g /= g.sum()
    w2 = np.outer(g, g)
    dx, dy = np.meshgrid(n, n, indexing="ij")
    offsets = np.column_stack([dx.ravel(), dy.ravel()]).astype(float)
    weights = w2.ravel() / w2.sum()
    return KernelMask(offsets, weights, factor=g)


def circle_mask(tau: float, M: int, grid: Grid2D) -> KernelMask:
    """``M`` equally weighted points on the circle of radius ``sqrt(2 tau)``."""
    if M < 4 or M % 2:
        raise ConfigurationError(f"circle sample count must be even and >= 4, got {M}")
    radius = math.sqrt(2.0 * tau) / grid.h
    if radius < 1.0 - 1e-12:
        raise ConfigurationError(
            f"radius below grid resolution: sqrt(2 tau) = {radius:.3g} h < h"
        )
    theta = 2.0 * np.pi * np.arange(M) / M
    offsets = radius * np.column_stack([np.cos(theta), np.sin(theta)])
    # exact zeros/antipodes so the symmetry check and integer detection are clean
    offsets[np.abs(offsets) < 1e-12] = 0.0
    offsets[M // 2:] = -offsets[: M // 2]
    return KernelMask(offsets, np.full(M, 1.0 / M))


def pad(f: np.ndarray, width: int, boundary: str = "mirror") -> np.ndarray:
    """Extend ``f`` by ``width`` nodes on each side."""
    return np.pad(f, width, mode=_PAD_MODE[boundary])


def _extend_index(i: np.ndarray, n: int, boundary: str) -> np.ndarray:
    if boundary == "periodic":
        return np.mod(i, n)
    period = 2 * n
    i = np.mod(i, period)
    return np.where(i < n, i, period - 1 - i)


def bilinear_sample(f: np.ndarray, x: float, y: float, boundary: str = "mirror") -> float:
    """Bilinear interpolation of the node values at grid coordinates ``(x, y)``."""
    nx, ny = f.shape
    x0 = math.floor(x)
    y0 = math.floor(y)
    fx = x - x0
    fy = y - y0
    ix = _extend_index(np.array([x0, x0 + 1]), nx, boundary)
    iy = _extend_index(np.array([y0, y0 + 1]), ny, boundary)
    return float(
        (1 - fx) * (1 - fy) * f[ix[0], iy[0]]
        + fx * (1 - fy) * f[ix[1], iy[0]]
        + (1 - fx) * fy * f[ix[0], iy[1]]
        + fx * fy * f[ix[1], iy[1]]
    )


def shifted(f: np.ndarray, dx: float, dy: float, boundary: str = "mirror") -> np.ndarray:
    """Field of samples ``f(x + (dx, dy))`` at every node (bilinear)."""
    nx, ny = f.shape
    x0 = math.floor(dx)
    y0 = math.floor(dy)
    fx = dx - x0
    fy = dy - y0
    w = max(abs(x0), abs(y0)) + 2
    p = pad(f, w, boundary)
    sx = slice(w + x0, w + x0 + nx)
    sy = slice(w + y0, w + y0 + ny)
    sx1 = slice(w + x0 + 1, w + x0 + 1 + nx)
    sy1 = slice(w + y0 + 1, w + y0 + 1 + ny)
    out = (1 - fx) * (1 - fy) * p[sx, sy]
    if fx:
        out = out + fx * (1 - fy) * p[sx1, sy]
    if fy:
        out = out + (1 - fx) * fy * p[sx, sy1]
    if fx and fy:
        out = out + fx * fy * p[sx1, sy1]
    return out


def convolve(f: np.ndarray, mask: KernelMask, boundary: str = "mirror") -> np.ndarray:
    """Masked sum ``out(x) = sum_j w_j f(x + y_j)`` with boundary extension."""
    f = np.asarray(f, dtype=float)
    mode = _NDI_MODE[boundary]
    if mask.factor is not None:
        out = ndimage.correlate1d(f, mask.factor, axis=0, mode=mode)
        return ndimage.correlate1d(out, mask.factor, axis=1, mode=mode)
    if mask.is_integer:
        return ndimage.correlate(f, mask.dense(), mode=mode)
    out = np.zeros_like(f)
    for (dx, dy), w in zip(mask.offsets, mask.weights):
        out += w * shifted(f, dx, dy, boundary)
    return out


def convolve_direct(f: np.ndarray, mask: KernelMask, boundary: str = "mirror") -> np.ndarray:
    """Reference masked summation, one shifted copy per offset."""
    out = np.zeros_like(np.asarray(f, dtype=float))
    for (dx, dy), w in zip(mask.offsets, mask.weights):
        out += w * shifted(f, dx, dy, boundary)
    return out
