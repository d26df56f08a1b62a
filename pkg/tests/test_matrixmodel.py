import math

import numpy as np
import pytest

from qsc import matrixmodel as mm
from qsc.errors import HilbertTransformFailure, NonIntegrableWeight


GAUSS = mm.Potential([0.0, 0.0, 1.0])  # V = x^2
GAUSS_LIN = mm.Potential([0.0, 0.0, 0.5], t_direction=[0.0, 1.0])  # x^2/2 + t x


def test_moments_gaussian():
    mom = mm.moments(GAUSS, 6)
    for k in range(7):
        expect = 0.0 if k % 2 else math.gamma((k + 1) / 2)
        assert abs(mom[k] - expect) < 1e-12


def test_moments_shifted_identity():
    # complete the square: int x^k e^{-x^2/2 - t x} = e^{t^2/2} int (u - t)^k e^{-u^2/2}
    t = 0.35
    V = GAUSS_LIN.with_t(t)
    mom = mm.moments(V, 3)
    base = mm.moments(mm.Potential([0.0, 0.0, 0.5]), 3)
    pref = np.exp(t * t / 2.0)
    expect1 = pref * (base[1] - t * base[0])
    assert abs(mom[1] - expect1) < 1e-10
    expect3 = pref * (base[3] - 3 * t * base[2] + 3 * t * t * base[1] - t**3 * base[0])
    assert abs(mom[3] - expect3) < 1e-9


def test_odd_leading_rejected():
    with pytest.raises(NonIntegrableWeight):
        mm.Potential([0.0, 0.0, 0.0, 1.0])


def test_orthopolys_hermite_recurrence():
    ops = mm.orthopolys(GAUSS, 5)
    for k in range(1, 5):
        assert abs(ops.a[k]) < 1e-10
        assert abs(ops.b[k] - k / 2.0) < 1e-9
    assert abs(ops.h[0] - math.sqrt(math.pi)) < 1e-12


def test_orthopolys_single():
    ops = mm.orthopolys(GAUSS_LIN.with_t(0.2), 1)
    assert abs(ops.h[0] - mm.moments(GAUSS_LIN.with_t(0.2), 0)[0]) < 1e-10


def test_orthogonality_residual_and_hankel():
    ops = mm.orthopolys(GAUSS_LIN.with_t(0.15), 5)
    assert ops.orthogonality_residual() < 1e-10
    hk = ops.hankel_norm_check(4)
    for k in range(1, 5):
        assert abs(hk[k - 1] - ops.h[k]) < 1e-8 * abs(ops.h[k])


def test_partition_log_small_cases():
    v = GAUSS_LIN.with_t(0.1)
    z1 = mm.partition_log(v, 1)
    assert abs(np.exp(z1) - mm.moments(v, 0)[0]) < 1e-10
    # n = 2: 2! h0 h1 equals the 2-fold eigenvalue integral of the squared
    # Vandermonde times the weight
    z2 = mm.partition_log(v, 2)
    xs, ws = mm._grid(v, 400)
    wgt = np.exp(-np.array([v(x) for x in xs]))
    W = np.outer(ws * wgt, ws * wgt)
    vdm = (xs[:, None] - xs[None, :]) ** 2
    direct = np.sum(W * vdm)
    assert abs(np.exp(z2) - direct) < 1e-8 * abs(direct)


def test_mm_frame_det_constant_and_hermite():
    fr = mm.mm_frame(GAUSS, 2)
    dets = [fr.det_at(x) for x in (1.3 + 0.9j, -2.1 + 0.4j, 0.3 - 1.7j)]
    for d in dets:
        assert abs(d - 1.0) < 1e-8
    # psi_2 is the monic Hermite-type polynomial x^2 - 1/2 times exp(-V/2)
    x = 0.7 + 0.0j
    assert abs(fr.psi(2, x) - (x * x - 0.5) * np.exp(-x * x / 2)) < 1e-10
    with pytest.raises(HilbertTransformFailure):
        fr.phi(1, 0.5)


def test_mm_frame_large_x_behavior():
    fr = mm.mm_frame(GAUSS, 2)
    for x in (6.0 + 2.5j, -5.5 + 3.0j):
        ratio = fr.psi(2, x) / (x**2 * np.exp(-fr.V(x) / 2))
        assert abs(ratio - 1) < 0.05


def test_dlogz_dt_identities():
    for n in (1, 2, 3, 4):
        v = GAUSS_LIN.with_t(0.12)
        h = 1e-4
        fd = (mm.partition_log(v.with_t(0.12 + h), n) - mm.partition_log(v.with_t(0.12 - h), n)) / (2 * h)
        dens = mm.dlogz_dt_density(v, n)
        res = mm.dlogz_dt_residue(v, n)
        assert abs(fd - dens) < 2e-6 * max(1.0, abs(fd))
        assert abs(dens - res) < 1e-6 * max(1.0, abs(dens))


def test_resolvent_frame_vs_direct():
    v = GAUSS_LIN.with_t(0.1)
    for n in (1, 2, 3):
        for x in (2.0 + 1.5j, -1.2 + 2.2j):
            lhs = mm.resolvent_frame(v, n, x)
            rhs = mm.resolvent_direct(v, n, x)
            assert abs(lhs - rhs) < 1e-6 * max(1.0, abs(rhs))


def test_determinantal_w2_n2():
    v = GAUSS
    lhs, rhs, err = mm.determinantal_check(v, 2, 2.0j, 1.0 + 1.0j)
    assert err < 1e-5 * max(1.0, abs(rhs))
    # symmetry of both sides
    lhs2, rhs2, _ = mm.determinantal_check(v, 2, 1.0 + 1.0j, 2.0j)
    assert abs(lhs - lhs2) < 1e-10
    assert abs(rhs - rhs2) < 1e-10


def test_determinantal_w2_n1():
    lhs, rhs, err = mm.determinantal_check(GAUSS, 1, 1.8j, 1.1 + 0.8j)
    assert err < 1e-6 * max(1.0, abs(rhs))
