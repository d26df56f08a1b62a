import numpy as np
import pytest

from qsc import liealg
from qsc.errors import DegenerateSpectrum, DimensionMismatch, NonSemisimple

H = np.diag([1.0, -1.0]).astype(complex)
E = np.array([[0, 1], [0, 0]], dtype=complex)
F = np.array([[0, 0], [1, 0]], dtype=complex)


def random_sl(rng, n=2):
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    m -= np.trace(m) / n * np.eye(n)
    return m


def random_group(rng, n=2):
    m = np.eye(n) + 0.4 * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    return m / np.linalg.det(m) ** (1.0 / n)


def test_bracket_chevalley_relations():
    assert np.allclose(liealg.bracket(H, E).entries, 2 * E)
    assert np.allclose(liealg.bracket(E, F).entries, H)
    rng = np.random.default_rng(0)
    a = random_sl(rng)
    assert np.allclose(liealg.bracket(a, a).entries, 0)


def test_bracket_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        liealg.bracket(H, np.zeros((3, 3)))


def test_pairing_chevalley_values():
    assert liealg.pairing(H, H) == pytest.approx(2.0)
    assert liealg.pairing(H, E) == pytest.approx(0.0)
    assert liealg.pairing(E, F) == pytest.approx(1.0)


def test_adjoint_identity_and_invariance():
    rng = np.random.default_rng(1)
    a = random_sl(rng)
    assert np.allclose(liealg.adjoint(np.eye(2), a).entries, a)
    for _ in range(5):
        g = random_group(rng)
        b, c = random_sl(rng), random_sl(rng)
        lhs = liealg.pairing(liealg.adjoint(g, b), liealg.adjoint(g, c))
        assert abs(lhs - liealg.pairing(b, c)) < 1e-10


def test_adjoint_root_action():
    t = 1.7
    g = np.diag([t, 1 / t]).astype(complex)
    assert np.allclose(liealg.adjoint(g, E).entries, t**2 * E)


def test_cartan_decompose_diagonal_input():
    a = np.diag([0.4, -0.4]).astype(complex)
    dec = liealg.cartan_decompose(a)
    assert np.allclose(dec.V.entries, np.eye(2))
    assert np.allclose(dec.alpha.entries, a)


def test_cartan_decompose_roundtrip_random():
    rng = np.random.default_rng(2)
    for _ in range(100):
        a = random_sl(rng)
        dec = liealg.cartan_decompose(a)
        v = dec.V.entries
        rec = v @ dec.alpha.entries @ np.linalg.inv(v)
        assert np.abs(rec - a).max() < 1e-9 * max(1.0, np.abs(a).max())
        assert abs(np.linalg.det(v) - 1) < 1e-10


def test_cartan_decompose_dozz_charge():
    # residue with eigenvalues +/- alpha1 has C_2 value alpha1^2
    a0, a1, ainf = 0.23, 0.17, 0.31
    d0, d1, dinf = a0**2, a1**2, ainf**2
    bc = (2 * d0 * d1 + 2 * d1 * dinf + 2 * dinf * d0 - d0**2 - d1**2 - dinf**2) / (4 * d0)
    B = 0.7
    phi1 = np.array(
        [[-(d0 + d1 - dinf) / (2 * a0), -B], [-bc / B, (d0 + d1 - dinf) / (2 * a0)]],
        dtype=complex,
    )
    dec = liealg.cartan_decompose(phi1)
    eigs = np.diag(dec.alpha.entries)
    assert sorted(np.round(e.real, 10) for e in eigs) == sorted([a1, -a1])
    assert abs(eigs[0] ** 2 - d1) < 1e-12


def test_cartan_decompose_nilpotent_raises():
    with pytest.raises(NonSemisimple):
        liealg.cartan_decompose(E)


def test_cartan_decompose_degenerate_spectrum():
    a = np.diag([0.5, 0.5, -1.0]).astype(complex)
    a[0, 0] += 2e-10
    a[1, 1] -= 2e-10
    with pytest.raises(DegenerateSpectrum):
        liealg.cartan_decompose(a)


def test_dual_basis_sl2_chevalley():
    duals = liealg.dual_basis([H, E, F])
    assert np.allclose(duals[0].entries, H / 2)
    assert np.allclose(duals[1].entries, F)
    assert np.allclose(duals[2].entries, E)


def test_dual_basis_completeness():
    rng = np.random.default_rng(3)
    basis = [liealg.AlgebraElement(random_sl(rng)) for _ in range(3)]
    duals = liealg.dual_basis(basis)
    a = random_sl(rng)
    rec = sum(liealg.pairing(a, b) * d.entries for b, d in zip(basis, duals))
    assert np.abs(rec - a).max() < 1e-10


def test_casimir2_completeness_and_count():
    rng = np.random.default_rng(4)
    for n in (2, 3):
        pairs = liealg.casimir2_pairs(n)
        assert len(pairs) == n * n - 1
        b, c = random_sl(rng, n), random_sl(rng, n)
        s = sum(liealg.pairing(b, v) * liealg.pairing(c, d) for v, d in pairs)
        assert abs(s - liealg.pairing(b, c)) < 1e-10
        # sum_i v_i v^i is the scalar (n^2-1)/n by direct matrix summation
        mat = sum(v.entries @ d.entries for v, d in pairs)
        assert np.abs(mat - (n * n - 1) / n * np.eye(n)).max() < 1e-12


def test_jacobi_identity_random():
    rng = np.random.default_rng(5)
    for _ in range(20):
        a, b, c = (random_sl(rng) for _ in range(3))
        j = (
            liealg.bracket(a, liealg.bracket(b, c)).entries
            + liealg.bracket(b, liealg.bracket(c, a)).entries
            + liealg.bracket(c, liealg.bracket(a, b)).entries
        )
        assert np.abs(j).max() < 1e-12


def test_root_helpers():
    cartan, roots, vectors = liealg.chevalley_basis(2)
    assert len(cartan) == 1 and len(roots) == 2
    alpha = np.diag([0.3, -0.3])
    assert liealg.root_value(alpha, (0, 1)) == pytest.approx(0.6)
    t = liealg.root_metric_dual(2, (0, 1))
    assert liealg.pairing(t, alpha) == pytest.approx(0.6)
