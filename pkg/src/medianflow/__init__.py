"""Continuous median-filter threshold dynamics for interface optimization.

Image segmentation (piecewise-constant and local-intensity fitting) and
Stokes-flow topology optimization share one update: every node of a
relaxed level-set function takes the weighted quantile of its neighbours at
a threshold set by the local forces.
"""
from .energy import (
    EnergyReport,
    binary_energy,
    coarea_check,
    heat_content_perimeter,
    interaction,
    level_set_energy,
    movement_limiter,
    relaxed_energy,
)
from .estimators import ChanVeseSegmenter, LIFSegmenter, StokesTopologyOptimizer
from .filters import (
    SolverConfig,
    VolumeUnreachableError,
    binary_td_step,
    pointwise_potential,
    quadratic_quantile_step,
    select_quantile,
    threshold_field,
    volume_constrained_step,
    weighted_quantile_step,
)
from .grid import (
    ConfigurationError,
    Grid2D,
    KernelMask,
    bilinear_sample,
    circle_mask,
    convolve,
    gaussian_kernel_mask,
)
from .segmentation import (
    CVParams,
    LIFParams,
    SegmentationRun,
    cv_forces,
    cv_update_params,
    lif_forces,
    lif_update_means,
    segment,
)
from .stokes import (
    BoundarySegment,
    FlowCase,
    StokesSolveError,
    StokesSolver,
    StokesState,
    brinkman_alpha,
    dissipation_energy,
    solve_stokes,
    stokes_forces,
)
from .synthetic import ImageSpec, generate_synthetic_image, ground_truth
from .topopt import contraction_case, double_pipe_case, optimize_topology

__version__ = "0.1.0"

__all__ = [
    "BoundarySegment", "CVParams", "ChanVeseSegmenter", "ConfigurationError", "EnergyReport",
    "FlowCase", "Grid2D", "ImageSpec", "KernelMask", "LIFParams", "LIFSegmenter",
    "SegmentationRun", "SolverConfig", "StokesSolveError", "StokesSolver", "StokesState",
    "StokesTopologyOptimizer", "VolumeUnreachableError", "bilinear_sample", "binary_energy",
    "binary_td_step", "brinkman_alpha", "circle_mask", "coarea_check", "contraction_case",
    "convolve", "cv_forces", "cv_update_params", "dissipation_energy", "double_pipe_case",
    "gaussian_kernel_mask", "generate_synthetic_image", "ground_truth",
    "heat_content_perimeter", "interaction", "level_set_energy", "lif_forces",
    "lif_update_means", "movement_limiter", "optimize_topology", "pointwise_potential",
    "quadratic_quantile_step", "relaxed_energy", "segment", "select_quantile",
    "solve_stokes", "stokes_forces", "threshold_field", "volume_constrained_step",
    "weighted_quantile_step",
]
