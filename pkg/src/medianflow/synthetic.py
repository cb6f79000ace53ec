"""Seeded synthetic scenes used in place of photographic test images."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .grid import ConfigurationError, Grid2D

SHAPE_KINDS = ("disk", "rect", "annulus")


@dataclass
class ImageSpec:
    """Scene description.

    Parameters
    ----------
    shapes : list of dict
        Each entry has ``kind`` (``disk``, ``rect`` or ``annulus``) and a
        ``center`` in domain units, plus ``radius`` (disk), ``size``
        (rect, full width and height) or ``inner``/``outer`` (annulus).
    contrast : float
        Foreground sits at ``0.5 + contrast / 2``, background at
        ``0.5 - contrast / 2``.
    noise_sigma : float
        Standard deviation of the additive Gaussian noise.
    bias : float
        Amplitude of a smooth multiplicative illumination field
        ``1 + bias * ramp`` with ``ramp`` running from -1 to 1 across the
        diagonal.  Zero disables it.
    seed : int
        Seed of the noise generator.  Required.
    """

    shapes: list = field(default_factory=list)
    contrast: float = 1.0
    noise_sigma: float = 0.0
    bias: float = 0.0
    seed: int | None = None


def shape_mask(shape: dict, grid: Grid2D) -> np.ndarray:
    """Boolean rasterization of one shape at the cell centers."""
    kind = shape.get("kind")
    if kind not in SHAPE_KINDS:
        raise ConfigurationError(f"unknown shape kind {kind!r}; expected one of {SHAPE_KINDS}")
    x, y = grid.coordinates()
    cx, cy = shape["center"]
    if kind == "disk":
        return (x - cx) ** 2 + (y - cy) ** 2 < shape["radius"] ** 2
    if kind == "rect":
        w, hgt = shape["size"]
        return (np.abs(x - cx) < 0.5 * w) & (np.abs(y - cy) < 0.5 * hgt)
    r2 = (x - cx) ** 2 + (y - cy) ** 2
    if not 0 <= shape["inner"] < shape["outer"]:
        raise ConfigurationError(f"annulus needs 0 <= inner < outer, got {shape}")
    return (r2 >= shape["inner"] ** 2) & (r2 < shape["outer"] ** 2)


def ground_truth(shapes: list, grid: Grid2D) -> np.ndarray:
    """Union of the shapes; raises if any two of them overlap."""
    masks = [shape_mask(s, grid) for s in shapes]
    clashes = [(i, j) for i, j in combinations(range(len(masks)), 2)
               if np.any(masks[i] & masks[j])]
    if clashes:
        desc = "; ".join(f"#{i} {shapes[i]['kind']} and #{j} {shapes[j]['kind']}"
                         for i, j in clashes)
        raise ConfigurationError(f"overlapping shapes: {desc}")
    out = np.zeros(grid.shape, dtype=bool)
    for m in masks:
        out |= m
    return out


def generate_synthetic_image(spec: ImageSpec, grid: Grid2D) -> np.ndarray:
    """Deterministic noisy scene with values clipped to ``[0, 1]``."""
    if spec.seed is None:
        raise ConfigurationError("image generation needs an explicit seed")
    if not 0 <= spec.contrast <= 1:
        raise ConfigurationError(f"contrast must lie in [0, 1], got {spec.contrast}")
    if spec.noise_sigma < 0:
        raise ConfigurationError("noise_sigma must be nonnegative")
    truth = ground_truth(spec.shapes, grid)
    img = np.where(truth, 0.5 + 0.5 * spec.contrast, 0.5 - 0.5 * spec.contrast)
    if spec.bias:
        x, y = grid.coordinates()
        ramp = (x + y) / (grid.nx * grid.h + grid.ny * grid.h) * 2.0 - 1.0
        img = img * (1.0 + spec.bias * ramp)
    rng = np.random.default_rng(spec.seed)
    if spec.noise_sigma > 0:
        img = img + rng.normal(0.0, spec.noise_sigma, grid.shape)
    return np.clip(img, 0.0, 1.0)
