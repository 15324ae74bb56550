"""Compiled inner loops for grid interpolation and one Bellman step.

A table has shape ``(ny + 1, nx)``.  Row 0 holds the ``y = 0`` knot and rows
``1..ny`` hold knots ``exp(log_y0 + i * dlog)``.  Between ``0`` and the first
positive knot, interpolation is linear in ``y``.  Above it, interpolation is
linear in ``log y``.  Columns are uniform x knots ``x_lo + j * dx``
(``nx == 1`` means the table does not depend on x).  Queries outside the
grid are clamped to the edge values.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _interp(tab, log_y0, dlog, y_min, x_lo, dx, y, x):
    if y <= 0.0:
        return _interp_log(tab, log_y0, dlog, y_min, x_lo, dx, 0.0, -np.inf, x)
    return _interp_log(tab, log_y0, dlog, y_min, x_lo, dx, y, math.log(y), x)


@njit(cache=True)
def _interp_log(tab, log_y0, dlog, y_min, x_lo, dx, y, logy, x):
    ny = tab.shape[0] - 1
    nx = tab.shape[1]
    if y <= 0.0:
        r0 = 0
        t = 0.0
    elif y < y_min:
        r0 = 0
        t = y / y_min
    else:
        u = (logy - log_y0) / dlog
        if u >= ny - 1:
            r0 = ny
            t = 0.0
        else:
            if u < 0.0:
                u = 0.0
            i = int(u)
            r0 = i + 1
            t = u - i
    if nx == 1:
        a = tab[r0, 0]
        if t > 0.0:
            a = a + t * (tab[r0 + 1, 0] - a)
        return a
    v = (x - x_lo) / dx
    if v <= 0.0:
        c0 = 0
        s = 0.0
    elif v >= nx - 1:
        c0 = nx - 2
        s = 1.0
    else:
        c0 = int(v)
        s = v - c0
    a = tab[r0, c0] + s * (tab[r0, c0 + 1] - tab[r0, c0])
    if t > 0.0:
        b = tab[r0 + 1, c0] + s * (tab[r0 + 1, c0 + 1] - tab[r0 + 1, c0])
        a = a + t * (b - a)
    return a


@njit(cache=True)
def interp_many(tab, log_y0, dlog, y_min, x_lo, dx, y, x):
    out = np.empty(y.shape[0])
    for p in range(y.shape[0]):
        out[p] = _interp(tab, log_y0, dlog, y_min, x_lo, dx, y[p], x[p])
    return out


@njit(cache=True)
def expected_shortfall(tab, log_y0, dlog, y_min, x_lo, dx, s, row, xnext, lam, loglam, wq):
    """E[(l_next(s * Lambda', X') - s * Lambda')^+] at each point.

    ``s`` is ``y + w`` per point.  ``row[p]`` selects the quadrature row of
    ``xnext``/``lam``/``loglam`` (next observation and its likelihood ratio)
    for point p.

    Each row must be sorted by increasing likelihood ratio.  Once ``Y'``
    exceeds the largest table value every later term vanishes.
    """
    out = np.empty(s.shape[0])
    nq = wq.shape[1]
    top = tab.max()
    for p in range(s.shape[0]):
        r = row[p]
        acc = 0.0
        sp = s[p]
        logs = math.log(sp) if sp > 0.0 else -np.inf
        for q in range(nq):
            yp = sp * lam[r, q]
            if yp >= top:
                break
            d = _interp_log(tab, log_y0, dlog, y_min, x_lo, dx, yp, logs + loglam[r, q], xnext[r, q]) - yp
            if d > 0.0:
                acc += wq[r, q] * d
        out[p] = acc
    return out
