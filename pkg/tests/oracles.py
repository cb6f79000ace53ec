"""Slow reference implementations written straight from the definitions.

Nothing here imports the package's numerical kernels; each routine loops
over nodes and offsets explicitly so it can serve as an independent check.
"""
import math

import numpy as np


def extend(i, n, boundary):
    """Index extension: half-sample mirror or periodic wrap."""
    if boundary == "periodic":
        return i % n
    i = i % (2 * n)
    return i if i < n else 2 * n - 1 - i


def sample(f, x, y, boundary="mirror"):
    """Bilinear value of node data at grid coordinates ``(x, y)``."""
    nx, ny = f.shape
    x0, y0 = math.floor(x), math.floor(y)
    ax, ay = x - x0, y - y0
    total = 0.0
    for dx, wx in ((0, 1 - ax), (1, ax)):
        for dy, wy in ((0, 1 - ay), (1, ay)):
            if wx * wy:
                total += wx * wy * f[extend(x0 + dx, nx, boundary), extend(y0 + dy, ny, boundary)]
    return total


def convolve_loops(f, offsets, weights, boundary="mirror"):
    nx, ny = f.shape
    out = np.zeros((nx, ny))
    for i in range(nx):
        for j in range(ny):
            out[i, j] = sum(w * sample(f, i + ox, j + oy, boundary)
                            for (ox, oy), w in zip(offsets, weights))
    return out


def potential(xi, values, weights, F1, F2, lam):
    return sum(w * abs(xi - v) for v, w in zip(values, weights)) + (xi * F1 + (1 - xi) * F2) / lam


def potential_scan_min(values, weights, T, step=1e-3):
    """Minimum of the local potential on a uniform grid of ``[0, 1]``.

    Forces are reconstructed from ``T`` with ``lambda_tilde = 1``:
    ``F1 - F2 = 2 T - 1``.
    """
    xs = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    v = np.asarray(values)[None, :]
    w = np.asarray(weights)[None, :]
    J = (np.abs(xs[:, None] - v) * w).sum(axis=1) + xs * (2 * T - 1)
    return float(J.min()), float(xs[J.argmin()])


def weighted_quantile_sorted(values, weights, T):
    """Sort descending and walk the cumulative weight (clamp rule to neighbours)."""
    if T <= 0:
        return max(values)
    if T > 1:
        return min(values)
    order = sorted(range(len(values)), key=lambda k: -values[k])
    acc = 0.0
    for k in order:
        acc += weights[k]
        if acc >= T - 1e-15:
            return values[k]
    return values[order[-1]]


def lif_force_direct(I, C, dense, boundary="periodic"):
    """``F(y) = sum_x G(x - y) (C(x) - I(y))^2`` with a dense integer mask."""
    nx, ny = I.shape
    r = dense.shape[0] // 2
    F = np.zeros((nx, ny))
    for i in range(nx):
        for j in range(ny):
            acc = 0.0
            for a in range(-r, r + 1):
                for b in range(-r, r + 1):
                    w = dense[a + r, b + r]
                    if w:
                        c = C[extend(i + a, nx, boundary), extend(j + b, ny, boundary)]
                        acc += w * (c - I[i, j]) ** 2
            F[i, j] = acc
    return F


def interaction_loops(phi, offsets, weights, boundary="mirror", h=1.0):
    nx, ny = phi.shape
    total = 0.0
    for i in range(nx):
        for j in range(ny):
            for (ox, oy), w in zip(offsets, weights):
                total += w * abs(phi[i, j] - sample(phi, i + ox, j + oy, boundary))
    return total * h * h


def gaussian_cell_weights(tau, h, half, refine=10):
    """Heat-kernel mass over each cell by the midpoint rule on a ``refine``-times finer grid."""
    sub = (np.arange(refine) + 0.5) / refine - 0.5
    out = np.zeros((2 * half + 1, 2 * half + 1))
    for a in range(-half, half + 1):
        for b in range(-half, half + 1):
            xs = (a + sub) * h
            ys = (b + sub) * h
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            out[a + half, b + half] = np.exp(-(X ** 2 + Y ** 2) / (4 * tau)).sum()
    return out / out.sum()


def poiseuille(y, peak, height=1.0):
    return peak * 4.0 * (y / height) * (1.0 - y / height)
