"""Input checks shared by the estimators and the drivers."""
from __future__ import annotations

import numpy as np

from .grid import Grid2D


def check_field(values, grid: Grid2D | None = None, name: str = "field") -> np.ndarray:
    """Return ``values`` as a finite 2-D float array, matching ``grid`` if given."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if min(arr.shape) < 4:
        raise ValueError(f"{name} needs at least 4 cells per axis, got {arr.shape}")
    if grid is not None and arr.shape != grid.shape:
        raise ValueError(f"{name} shape {arr.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_level_set(values, grid: Grid2D | None = None, name: str = "phi") -> np.ndarray:
    """A field with every value in ``[0, 1]``."""
    arr = check_field(values, grid, name)
    if arr.min() < 0 or arr.max() > 1:
        raise ValueError(f"{name} must take values in [0, 1], got [{arr.min()}, {arr.max()}]")
    return arr


def check_binary(values, grid: Grid2D | None = None, name: str = "u") -> np.ndarray:
    """A field with values in ``{0, 1}``."""
    arr = check_field(values, grid, name)
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must be binary (values 0 and 1)")
    return arr


def check_image(values, name: str = "image") -> np.ndarray:
    """A finite 2-D image; integer images are rescaled from their dtype range to ``[0, 1]``."""
    arr = np.asarray(values)
    if np.issubdtype(arr.dtype, np.integer):
        info = np.iinfo(arr.dtype)
        arr = (arr.astype(float) - info.min) / (info.max - info.min)
    return check_field(arr, name=name)
