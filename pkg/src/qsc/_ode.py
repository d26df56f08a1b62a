"""Adaptive Dormand-Prince 5(4) for complex matrix linear ODEs y' = A(t) y,
plus Gauss-Legendre panel quadrature helpers."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import StepUnderflow

_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b5 - b4 for b5, b4 in zip(_B5, _B4))


def integrate_linear(afun, y0, t0, t1, rtol=1e-10, atol=1e-12, max_steps=200000):
    """Integrate y' = afun(t) @ y from t0 to t1; returns (y1, error_estimate).

    afun returns the (n x n) complex coefficient matrix; y may be a matrix.
    """
    y = np.array(y0, dtype=complex)
    t = float(t0)
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    if span == 0.0:
        return y, 0.0
    h = direction * span * 0.05
    k1 = afun(t) @ y
    acc_err = 0.0
    steps = 0
    while (t1 - t) * direction > 1e-15 * span:
        steps += 1
        if steps > max_steps:
            raise StepUnderflow("maximum number of integrator steps exceeded")
        if (t + h - t1) * direction > 0:
            h = t1 - t
        ks = [k1]
        for i in range(1, 7):
            yi = y + h * sum(aij * kj for aij, kj in zip(_A[i], ks))
            ks.append(afun(t + _C[i] * h) @ yi)
        y5 = y + h * sum(b * k for b, k in zip(_B5, ks))
        err = h * sum(e * k for e, k in zip(_E, ks))
        scale = atol + rtol * max(np.abs(y).max(), np.abs(y5).max())
        enorm = np.abs(err).max() / scale
        if enorm <= 1.0:
            t += h
            y = y5
            k1 = ks[6]  # FSAL
            acc_err += np.abs(err).max()
        factor = 0.9 * (enorm + 1e-300) ** -0.2
        h *= min(5.0, max(0.2, factor))
        if abs(h) < 1e-15 * span:
            raise StepUnderflow("step size underflow in adaptive integrator")
    return y, acc_err


@lru_cache(maxsize=None)
def gauss_nodes(k):
    """Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(k)
    return (x + 1.0) / 2.0, w / 2.0


def graded_panels(n_panels, grading=1.0):
    """Panel breakpoints on [0, 1]; grading > 1 clusters toward t = 1."""
    t = np.linspace(0.0, 1.0, n_panels + 1)
    if grading != 1.0:
        t = 1.0 - (1.0 - t) ** grading
    return t


def panel_nodes(breaks, k):
    """All Gauss nodes/weights for a panel decomposition of [0, 1]."""
    x, w = gauss_nodes(k)
    ts, ws = [], []
    for i in range(len(breaks) - 1):
        a, b = breaks[i], breaks[i + 1]
        ts.extend(a + (b - a) * x)
        ws.extend((b - a) * w)
    return np.asarray(ts), np.asarray(ws)
