"""Scikit-learn style wrappers around the drivers.

The segmenters treat one image as the data: ``fit(image)`` runs the scheme
and stores the relaxed field in ``phi_``; ``transform`` returns that field
and ``predict`` its ``phi >= 1/2`` mask.  Applied to a different image of
the same shape, ``transform`` re-runs the scheme starting from ``phi_``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .filters import SolverConfig
from .grid import Grid2D
from .segmentation import SegmentationRun, cone, segment, square_indicator
from .topopt import contraction_case, double_pipe_case, optimize_topology
from .validation import check_image, check_level_set


class ChanVeseSegmenter(BaseEstimator, TransformerMixin):
    """Two-phase piecewise-constant segmentation.

    Parameters
    ----------
    tau, lambda_tilde, M, epsilon, K_max, filter_kind, kernel, saturation
        Solver settings, see :class:`~medianflow.filters.SolverConfig`.
    init : {"cone", "square"} or array
        Initial level-set function.
    boundary : {"mirror", "periodic"}
        Grid boundary treatment.
    """

    _model = "cv"

    def __init__(self, tau=1e-3, lambda_tilde=0.6, M=8, epsilon=1e-6, K_max=200,
                 filter_kind="weighted_quantile", kernel="gaussian", saturation="unit",
                 init="cone", boundary="mirror"):
        self.tau = tau
        self.lambda_tilde = lambda_tilde
        self.M = M
        self.epsilon = epsilon
        self.K_max = K_max
        self.filter_kind = filter_kind
        self.kernel = kernel
        self.saturation = saturation
        self.init = init
        self.boundary = boundary

    def _config(self):
        return SolverConfig(tau=self.tau, lambda_tilde=self.lambda_tilde, M=self.M,
                            epsilon=self.epsilon, K_max=self.K_max,
                            filter_kind=self.filter_kind, kernel=self.kernel,
                            saturation=self.saturation)

    def _grid(self, image):
        nx, ny = image.shape
        return Grid2D(nx, ny, 1.0 / nx, self.boundary)

    def _phi0(self, grid):
        if isinstance(self.init, str):
            if self.init == "cone":
                return cone(grid)
            if self.init == "square":
                return square_indicator(grid, 0.1)
            raise ValueError(f"init must be 'cone', 'square' or an array, got {self.init!r}")
        return check_level_set(self.init, grid, "init")

    def _run(self, image, phi0, grid):
        run = SegmentationRun(self._config(), image, phi0, grid, model=self._model,
                              **self._run_kwargs())
        return segment(run)

    def _run_kwargs(self):
        return {}

    def fit(self, X, y=None):
        image = check_image(X)
        grid = self._grid(image)
        run = self._run(image, self._phi0(grid), grid)
        self.image_ = image
        self.grid_ = grid
        self.phi_ = run.phi_final
        self.params_ = run.params
        self.trace_ = run.trace
        self.n_iter_ = len(run.trace)
        self.converged_ = run.converged
        return self

    def transform(self, X):
        check_is_fitted(self, "phi_")
        image = check_image(X)
        if image.shape == self.image_.shape and np.array_equal(image, self.image_):
            return self.phi_.copy()
        if image.shape != self.image_.shape:
            raise ValueError(f"image shape {image.shape} differs from fitted {self.image_.shape}")
        return self._run(image, self.phi_, self.grid_).phi_final

    def predict(self, X):
        return self.transform(X) >= 0.5

    def fit_predict(self, X, y=None):
        return self.fit(X).phi_ >= 0.5

    def score(self, X, y=None):
        """Negative final energy, so larger is better."""
        check_is_fitted(self, "trace_")
        return -self.trace_[-1].total if self.trace_ else float("nan")


class LIFSegmenter(ChanVeseSegmenter):
    """Local-intensity-fitting segmentation for images with uneven illumination.

    ``lif_sigma`` is the time-scale of the local averaging kernel; ``None``
    gives a standard deviation of ten cells.
    """

    _model = "lif"

    def __init__(self, tau=2e-4, lambda_tilde=0.1, M=8, epsilon=1e-6, K_max=200,
                 filter_kind="weighted_quantile", kernel="gaussian", saturation="unit",
                 init="square", boundary="mirror", lif_sigma=None):
        super().__init__(tau=tau, lambda_tilde=lambda_tilde, M=M, epsilon=epsilon,
                         K_max=K_max, filter_kind=filter_kind, kernel=kernel,
                         saturation=saturation, init=init, boundary=boundary)
        self.lif_sigma = lif_sigma

    def _run_kwargs(self):
        return {"lif_sigma": self.lif_sigma}


class StokesTopologyOptimizer(BaseEstimator):
    """Volume-constrained fluid layout minimizing dissipation plus perimeter.

    ``fit()`` takes no data: the problem is fixed by ``case`` (``"contraction"``
    or ``"double_pipe"``), the fluid fraction ``beta`` and the grid size
    ``n``.  ``X`` may be passed as an initial field in ``[0, 1]``.
    """

    def __init__(self, case="contraction", beta=None, eta=1.0, alpha_bar=None, n=96,
                 tau=2e-4, lambda_tilde=100.0, epsilon=1e-6, K_max=200, seed=0):
        self.case = case
        self.beta = beta
        self.eta = eta
        self.alpha_bar = alpha_bar
        self.n = n
        self.tau = tau
        self.lambda_tilde = lambda_tilde
        self.epsilon = epsilon
        self.K_max = K_max
        self.seed = seed

    def _flow_case(self):
        kw = {"eta": self.eta, "alpha_bar": self.alpha_bar}
        if self.beta is not None:
            kw["beta"] = self.beta
        if self.case == "contraction":
            return contraction_case(**kw)
        if self.case == "double_pipe":
            return double_pipe_case(**kw)
        raise ValueError(f"case must be 'contraction' or 'double_pipe', got {self.case!r}")

    def fit(self, X=None, y=None):
        grid = Grid2D.unit_square(self.n)
        phi0 = None if X is None else check_level_set(X, grid, "X")
        config = SolverConfig(tau=self.tau, lambda_tilde=self.lambda_tilde,
                              epsilon=self.epsilon, K_max=self.K_max)
        self.flow_case_ = self._flow_case()
        result = optimize_topology(self.flow_case_, grid, config, phi0=phi0, seed=self.seed)
        self.grid_ = grid
        self.phi_ = result.phi
        self.state_ = result.state
        self.trace_ = result.trace
        self.n_iter_ = len(result.trace)
        self.converged_ = result.converged
        return self

    def predict(self, X=None):
        """Fluid mask ``phi >= 1/2`` of the fitted layout."""
        check_is_fitted(self, "phi_")
        return self.phi_ >= 0.5

    def score(self, X=None, y=None):
        check_is_fitted(self, "trace_")
        return -self.trace_[-1].total if self.trace_ else float("nan")
