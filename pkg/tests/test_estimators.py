import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from medianflow import ChanVeseSegmenter, LIFSegmenter, StokesTopologyOptimizer
from medianflow.grid import Grid2D
from medianflow.segmentation import jaccard
from medianflow.synthetic import ImageSpec, generate_synthetic_image, ground_truth

SHAPES = [{"kind": "disk", "center": (0.5, 0.5), "radius": 0.3}]


def scene(n=64, bias=0.0, noise=0.05):
    g = Grid2D.unit_square(n)
    return generate_synthetic_image(ImageSpec(SHAPES, 0.8, noise, bias, seed=0), g), \
        ground_truth(SHAPES, g)


def test_params_roundtrip():
    est = ChanVeseSegmenter(tau=5e-4, K_max=10)
    params = est.get_params()
    assert params["tau"] == 5e-4 and params["K_max"] == 10
    est.set_params(lambda_tilde=0.3)
    assert clone(est).lambda_tilde == 0.3
    assert "lif_sigma" in LIFSegmenter().get_params()
    assert StokesTopologyOptimizer(n=48).get_params()["n"] == 48


def test_chan_vese_fit_predict():
    img, truth = scene()
    est = ChanVeseSegmenter(tau=1e-3, lambda_tilde=0.6)
    with pytest.raises(NotFittedError):
        est.predict(img)
    mask = est.fit_predict(img)
    assert jaccard(mask, truth) >= 0.98
    assert np.array_equal(est.predict(img), mask)
    assert est.n_iter_ == len(est.trace_) and est.converged_
    assert est.score(img) == -est.trace_[-1].total
    assert est.params_.c1 > est.params_.c2


def test_transform_restarts_from_fitted_field():
    img, _ = scene()
    est = ChanVeseSegmenter(tau=1e-3, K_max=30).fit(img)
    other, _ = scene(noise=0.1)
    out = est.transform(other)
    assert out.shape == img.shape and out.min() >= 0 and out.max() <= 1
    with pytest.raises(ValueError):
        est.transform(np.zeros((32, 32)))


def test_integer_images_and_init_errors():
    img, truth = scene()
    as_u8 = np.rint(255 * img).astype(np.uint8)
    assert jaccard(ChanVeseSegmenter().fit_predict(as_u8), truth) >= 0.98
    with pytest.raises(ValueError):
        ChanVeseSegmenter(init="blob").fit(img)
    with pytest.raises(ValueError):
        ChanVeseSegmenter().fit(np.full((8, 8), np.nan))


def test_lif_segmenter_handles_bias():
    img, truth = scene(128, bias=0.6)
    est = LIFSegmenter(K_max=60).fit(img)
    assert jaccard(est.predict(img), truth) >= 0.9


def test_stokes_optimizer():
    est = StokesTopologyOptimizer(n=24, K_max=4, tau=1e-3, lambda_tilde=20.0, seed=1)
    est.fit()
    assert est.predict().shape == (24, 24)
    assert est.phi_.mean() == pytest.approx(est.flow_case_.beta, abs=1e-5)
    assert np.isfinite(est.score())
    with pytest.raises(ValueError):
        StokesTopologyOptimizer(case="spiral").fit()
