import numpy as np
import pytest

from medianflow.filters import SolverConfig
from medianflow.grid import ConfigurationError, Grid2D
from medianflow.topopt import (
    contraction_case,
    double_pipe_case,
    fluid_connectivity,
    optimize_topology,
    random_initial_phi,
)

CFG = SolverConfig(tau=1e-3, lambda_tilde=20.0, K_max=12)


def test_full_fluid_fraction_is_one_solve():
    g = Grid2D.unit_square(24)
    res = optimize_topology(contraction_case(beta=1.0), g, CFG, seed=0)
    assert np.all(res.phi == 1) and res.trace == [] and res.converged
    assert res.state.residual <= 1e-8


def test_volume_held_every_iteration():
    g = Grid2D.unit_square(32)
    vols = []
    res = optimize_topology(contraction_case(), g, CFG, seed=1,
                            callback=lambda k, phi: vols.append(g.integrate(phi)))
    target = contraction_case().beta * g.area
    assert len(vols) == len(res.trace) > 0
    assert np.max(np.abs(np.array(vols) - target)) <= 1e-5 * g.area
    assert all(abs(r.volume - target) <= 1e-5 * g.area for r in res.trace)


def test_trace_is_monotone_on_small_grid():
    g = Grid2D.unit_square(32)
    res = optimize_topology(double_pipe_case(), g, CFG, seed=2)
    totals = np.array([r.total for r in res.trace])
    assert np.all(np.diff(totals) <= 1e-6 * np.abs(totals[:-1]))
    for r in res.trace:
        assert r.total == pytest.approx(r.fidelity + CFG.lambda_tilde * r.perimeter, rel=1e-12)
        assert 0 < r.linearized < r.fidelity  # Brinkman share of the dissipation


def test_symmetric_start_stays_symmetric():
    g = Grid2D.unit_square(32)
    phi0 = random_initial_phi(g, 3)
    phi0 = 0.5 * (phi0 + phi0[:, ::-1])  # mirror about the horizontal midline
    worst = []
    optimize_topology(double_pipe_case(), g, CFG, phi0=phi0,
                      callback=lambda k, phi: worst.append(np.max(np.abs(phi - phi[:, ::-1]))))
    assert max(worst) <= 1e-10


def test_connectivity_helper():
    g = Grid2D.unit_square(32)
    case = contraction_case()
    x, y = g.coordinates()
    funnel = (np.abs(y - 0.5) < 0.5 - 0.35 * x).astype(float)
    assert fluid_connectivity(funnel, case, g)
    blocked = funnel * (np.abs(x - 0.5) > 0.05)
    assert not fluid_connectivity(blocked, case, g)
    pipes = double_pipe_case()
    both = ((np.abs(y - 0.25) < 0.1) | (np.abs(y - 0.75) < 0.1)).astype(float)
    assert fluid_connectivity(both, pipes, g)
    one = (np.abs(y - 0.25) < 0.1).astype(float)
    assert not fluid_connectivity(one, pipes, g)


def test_bad_inputs():
    g = Grid2D.unit_square(16)
    with pytest.raises(ConfigurationError):
        optimize_topology(contraction_case(), g, CFG)  # no seed, no phi0
    with pytest.raises(ValueError):
        optimize_topology(contraction_case(), g, CFG, phi0=np.full(g.shape, 2.0))
