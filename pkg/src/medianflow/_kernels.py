"""Compiled per-pixel loops (numba).

All kernels read from a padded copy of the field so that boundary extension
is resolved before entering compiled code.  Offsets are split into an
integer base and a fractional part in ``[0, 1)``.
"""
import math

import numpy as np
from numba import config, njit, prange

# the system TBB is too old for numba; prefer OpenMP and avoid the warning
config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@njit(cache=True, inline="always")
def _sample(P, r, c, fx, fy):
    if fx == 0.0 and fy == 0.0:
        return P[r, c]
    return ((1.0 - fx) * (1.0 - fy) * P[r, c] + fx * (1.0 - fy) * P[r + 1, c]
            + (1.0 - fx) * fy * P[r, c + 1] + fx * fy * P[r + 1, c + 1])


@njit(cache=True)
def select_weighted(vals, ws, n, t, vmin):
    """Largest v among vals[:n] with sum(w : vals >= v) >= t, for 0 < t.

    Three-way quickselect; reorders ``vals``/``ws`` in place.  Returns
    ``vmin`` when the total weight falls short of ``t`` (t > total).
    """
    lo = 0
    hi = n
    acc = 0.0
    while lo < hi:
        a = vals[lo]
        b = vals[(lo + hi) // 2]
        c = vals[hi - 1]
        # median of three as pivot
        if a > b:
            a, b = b, a
        if b > c:
            b = c
            if a > b:
                b = a
        p = b
        # partition: [lo, gt) > p, [gt, i) == p, [lt_, hi) < p
        gt = lo
        i = lo
        lt_ = hi
        while i < lt_:
            v = vals[i]
            if v > p:
                vals[i], vals[gt] = vals[gt], vals[i]
                ws[i], ws[gt] = ws[gt], ws[i]
                gt += 1
                i += 1
            elif v < p:
                lt_ -= 1
                vals[i], vals[lt_] = vals[lt_], vals[i]
                ws[i], ws[lt_] = ws[lt_], ws[i]
            else:
                i += 1
        wg = 0.0
        for k in range(lo, gt):
            wg += ws[k]
        if acc + wg >= t:
            hi = gt
            continue
        we = 0.0
        for k in range(gt, lt_):
            we += ws[k]
        if acc + wg + we >= t:
            return p
        acc += wg + we
        lo = lt_
    return vmin


@njit(cache=True, parallel=True)
def weighted_quantile_field(P, pad, ox, oy, fx, fy, w, T, out, unit):
    """Per-node weighted quantile.

    Outside ``0 < T <= 1`` the node saturates: to 1 / 0 when ``unit`` is
    set, otherwise to the largest / smallest neighbour sample.
    """
    nx, ny = out.shape
    K = w.size
    for i in prange(nx):
        vals = np.empty(K)
        ws = np.empty(K)
        for j in range(ny):
            vmin = np.inf
            vmax = -np.inf
            for k in range(K):
                v = _sample(P, i + pad + ox[k], j + pad + oy[k], fx[k], fy[k])
                vals[k] = v
                if v < vmin:
                    vmin = v
                if v > vmax:
                    vmax = v
            t = T[i, j]
            if t <= 0.0:
                out[i, j] = 1.0 if unit else vmax
            elif t > 1.0:
                out[i, j] = 0.0 if unit else vmin
            elif vmin == vmax:
                out[i, j] = vmin
            else:
                # two-valued neighbourhoods (common near binary states) need no selection
                top = 0.0
                two = True
                for k in range(K):
                    if vals[k] == vmax:
                        top += w[k]
                    elif vals[k] != vmin:
                        two = False
                        break
                if two:
                    out[i, j] = vmax if top >= t else vmin
                else:
                    for k in range(K):
                        ws[k] = w[k]
                    out[i, j] = select_weighted(vals, ws, K, t, vmin)


@njit(cache=True, parallel=True)
def interaction_field(P, pad, ox, oy, fx, fy, w, center, out):
    """out[x] = sum_j w_j |center[x] - sample_j(x)|."""
    nx, ny = out.shape
    K = w.size
    for i in prange(nx):
        for j in range(ny):
            c = center[i, j]
            s = 0.0
            for k in range(K):
                s += w[k] * abs(c - _sample(P, i + pad + ox[k], j + pad + oy[k], fx[k], fy[k]))
            out[i, j] = s


@njit(cache=True, inline="always")
def _below_fraction(a, b, c, mu):
    """Length of {t in [0, 1] : q(t) < mu}, q through (0,a), (1/2,b), (1,c)."""
    if a == b and b == c:
        return 1.0 if a < mu else 0.0
    A = 2.0 * a - 4.0 * b + 2.0 * c
    B = -3.0 * a + 4.0 * b - c
    C = a - mu
    scale = abs(a) + abs(b) + abs(c) + abs(mu)
    r0 = 2.0
    r1 = 2.0
    if abs(A) <= 1e-14 * scale:
        if B != 0.0:
            r0 = -C / B
    else:
        disc = B * B - 4.0 * A * C
        if disc > 0.0:
            sq = math.sqrt(disc)
            q = -0.5 * (B + sq) if B >= 0.0 else -0.5 * (B - sq)
            r0 = q / A
            r1 = C / q if q != 0.0 else r0
    if r0 > r1:
        r0, r1 = r1, r0
    # breakpoints 0 <= p0 <= p1 <= 1; evaluate the sign on each piece
    p0 = min(max(r0, 0.0), 1.0)
    p1 = min(max(r1, 0.0), 1.0)
    total = 0.0
    lo = 0.0
    for hi in (p0, p1, 1.0):
        if hi > lo:
            m = 0.5 * (lo + hi)
            if (A * m + B) * m + C < 0.0:
                total += hi - lo
            lo = hi
    return total


@njit(cache=True, parallel=True)
def quadratic_quantile_field(P, pad, ox, oy, fx, fy, T, out, iters):
    nx, ny = out.shape
    for i in prange(nx):
        v = np.empty(8)
        for j in range(ny):
            vmin = np.inf
            vmax = -np.inf
            for k in range(8):
                s = _sample(P, i + pad + ox[k], j + pad + oy[k], fx[k], fy[k])
                v[k] = s
                vmin = min(vmin, s)
                vmax = max(vmax, s)
            t = min(max(T[i, j], 0.0), 1.0)
            if vmin == vmax or t == 0.0:
                out[i, j] = vmax
                continue
            if t == 1.0:
                out[i, j] = vmin
                continue
            # measure of {P >= phi*} equals t, i.e. {P < phi*} is 1 - t
            target = 1.0 - t
            lo = vmin
            hi = vmax
            for _ in range(iters):
                mid = 0.5 * (lo + hi)
                f = 0.0
                for s in range(4):
                    f += _below_fraction(v[2 * s], v[2 * s + 1], v[(2 * s + 2) % 8], mid)
                if 0.25 * f < target:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= 1e-15 * (1.0 + abs(hi)):
                    break
            out[i, j] = 0.5 * (lo + hi)


@njit(cache=True, parallel=True)
def quantile_tables(P, pad, ox, oy, fx, fy, w, vals_out, cum_out):
    """Per-node neighbour samples sorted decreasingly, with cumulative weights."""
    nx = P.shape[0] - 2 * pad
    ny = P.shape[1] - 2 * pad
    K = w.size
    for i in prange(nx):
        vals = np.empty(K)
        for j in range(ny):
            row = i * ny + j
            for k in range(K):
                vals[k] = -_sample(P, i + pad + ox[k], j + pad + oy[k], fx[k], fy[k])
            order = np.argsort(vals, kind="mergesort")
            acc = 0.0
            for k in range(K):
                vals_out[row, k] = -vals[order[k]]
                acc += w[order[k]]
                cum_out[row, k] = acc


@njit(cache=True, parallel=True)
def select_from_tables(vals, cum, T, out, unit):
    n, K = vals.shape
    for row in prange(n):
        t = T[row]
        if t <= 0.0:
            out[row] = 1.0 if unit else vals[row, 0]
        elif t > 1.0:
            out[row] = 0.0 if unit else vals[row, K - 1]
        else:
            m = np.searchsorted(cum[row], t)
            if m >= K:
                m = K - 1
            out[row] = vals[row, m]
