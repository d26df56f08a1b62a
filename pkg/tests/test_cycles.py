import numpy as np
import pytest

from qsc import amplitudes as amp
from qsc import connection as conn_mod
from qsc import cycles as cyc
from qsc import flatsection as fs
from qsc import liealg
from tests.conftest import make_gen3

H = np.diag([1.0, -1.0]).astype(complex)
E = np.array([[0, 1], [0, 0]], dtype=complex)


def keyhole_cycle(conn, j, coord):
    return cyc.GeneralizedCycle(
        [cyc.Term(fs.keyhole_loop(conn, j), np.asarray(coord, complex))], kind="first"
    )


def test_boundary_open_loop_and_centralizer(gen3):
    loop = fs.keyhole_loop(gen3, 1)
    chain = cyc.WeightedChain([cyc.Term(loop, E)])
    s = fs.monodromy(gen3, loop, tol=1e-12)
    b = cyc.boundary(gen3, chain, tol=1e-12)
    assert len(b) == 1
    expect = s @ E @ np.linalg.inv(s) - E
    assert np.abs(b[0][1] - expect).max() < 1e-9 * np.abs(expect).max()
    # centralizer weight on a loop: boundary vanishes
    loc = fs.local_solution(gen3, 1)
    u = np.linalg.inv(loc.C.entries) @ H @ loc.C.entries
    chain2 = cyc.WeightedChain([cyc.Term(loop, u)])
    assert cyc.boundary_norm(gen3, chain2) < 1e-9


def test_boundary_arc_only_at_start(gen3):
    basis = cyc.rigid_basis(gen3)
    arc_term = basis.cycles[0].terms[0]
    b = cyc.boundary(gen3, cyc.WeightedChain([arc_term]))
    assert len(b) == 1  # pole endpoint dropped


def test_rigid_basis_cardinality_and_boundaries(gen3, rand4):
    for conn, expect in ((gen3, 6), (rand4, 10)):
        basis = cyc.rigid_basis(conn)
        assert len(basis.cycles) == expect
        g, g3 = conn_mod.genus_counts(conn)
        assert expect == 2 * g3
        for c in basis.cycles:
            assert cyc.boundary_norm(conn, c) < 1e-10


def test_intersection_antisymmetry_and_disjoint(gen3):
    basis = cyc.rigid_basis(gen3)
    m = len(basis.cycles)
    for a in range(m):
        for b in range(a + 1, m):
            v1 = cyc.intersection(gen3, basis.cycles[a], basis.cycles[b])
            v2 = cyc.intersection(gen3, basis.cycles[b], basis.cycles[a])
            assert abs(v1 + v2) < 1e-9
    # localized circles around different poles are disjoint
    a01 = next(c for c in basis.cycles if c.meta.get("family") == "A" and c.meta["j"] == 0)
    a11 = next(c for c in basis.cycles if c.meta.get("family") == "A" and c.meta["j"] == 1)
    assert cyc.intersection(gen3, a01, a11) == 0


def test_intersection_matrix_nondegenerate(gen3):
    basis = cyc.rigid_basis(gen3)
    I = basis.intersection_matrix()
    assert np.abs(I + I.T).max() < 1e-9
    assert np.linalg.cond(I) < 1e6


def test_darboux_complete_relations(gen3):
    basis = cyc.rigid_basis(gen3)
    dar = cyc.darboux_complete(gen3, basis)
    I = basis.intersection_matrix()
    A, B = dar.A_coeffs, dar.B_coeffs
    g3 = A.shape[0]
    assert g3 == 3
    assert dar.n_leading == 0
    AIB = A @ I @ B.T
    AIA = A @ I @ A.T
    BIB = B @ I @ B.T
    assert np.abs(AIB - np.eye(g3)).max() < 1e-8
    assert np.abs(AIA).max() < 1e-8
    assert np.abs(BIB).max() < 1e-8


def test_darboux_m4_counts(rand4):
    basis = cyc.rigid_basis(rand4)
    dar = cyc.darboux_complete(rand4, basis)
    assert dar.A_coeffs.shape[0] == 5
    assert dar.n_leading == 1


def test_period_w1_over_localized_cycles(gen3):
    """A_{j,s} period of W1 is 2 pi i <alpha_j, H_s> (root-metric normalization)."""
    basis = cyc.rigid_basis(gen3)
    form = amp.w1_form(gen3)
    charges = conn_mod.validate(gen3)
    for c in basis.cycles:
        if c.meta.get("family") != "A":
            continue
        j = c.meta["j"]
        val = cyc.period(gen3, c, form)
        expect = 2j * np.pi * 2 * charges[j][0]  # <alpha_j, H> = 2 alpha_j
        assert abs(val - expect) < 1e-7 * max(1.0, abs(expect))


def test_period_zero_form(gen3):
    basis = cyc.rigid_basis(gen3)
    z = amp.zero_form()
    for c in basis.cycles[:2]:
        assert abs(cyc.period(gen3, c, z)) < 1e-12


def test_squeeze_cartan_weight(gen3):
    loc = fs.local_solution(gen3, 0)
    u = np.linalg.inv(loc.C.entries) @ H @ loc.C.entries
    sq = cyc.squeeze(gen3, 0, u)
    arc = sq.terms[0]
    assert np.abs(arc.weight0).max() < 1e-9  # pure trivial cycle: no arc part


def test_squeeze_factor_value(gen3):
    u = cyc.unsqueeze_coordinate(gen3, 0, E)
    loc = fs.local_solution(gen3, 0)
    c = loc.C.entries
    d = c @ E @ np.linalg.inv(c)
    ad = loc.alpha_diag
    expect = d[0, 1] / (1 - np.exp(2j * np.pi * (ad[0] - ad[1])))
    got = (c @ u @ np.linalg.inv(c))[0, 1]
    assert abs(got - expect) < 1e-12


def test_squeeze_period_identity(gen3):
    """Period of W1 agrees across the keyhole -> arc + circle rewrite."""
    form = amp.w1_form(gen3)
    rng = np.random.default_rng(3)
    coord = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    coord -= np.trace(coord) / 2 * np.eye(2)
    for j in (0, 2):
        key = keyhole_cycle(gen3, j, coord)
        lhs = cyc.period(gen3, key, form)
        s = fs.monodromy(gen3, fs.keyhole_loop(gen3, j), tol=1e-11)
        arc_w = coord - s @ coord @ np.linalg.inv(s)
        loc = fs.local_solution(gen3, j)
        d = loc.C.entries @ coord @ np.linalg.inv(loc.C.entries)
        triv_w = np.linalg.inv(loc.C.entries) @ np.diag(np.diag(d)) @ loc.C.entries
        sq = cyc.squeeze(gen3, j, coord)
        rhs = cyc.period(gen3, sq, form)
        assert abs(lhs - rhs) < 1e-7 * max(1.0, abs(lhs))


def test_tangent_to_cycle_boundary_and_intersection(gen3):
    h = 1e-5
    rng = np.random.default_rng(5)
    d1 = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    d1 -= np.trace(d1) / 2 * np.eye(2)
    d1 *= 0.3
    dphis = [d1, -d1, np.zeros((2, 2))]
    mon_p, mon_m = [], []
    for sgn in (+1, -1):
        poles = [
            (z, conn_mod.liealg.AlgebraElement(r + sgn * h * dphis[k]))
            for k, (z, r) in enumerate(gen3.finite_pole_data())
        ]
        cp = conn_mod.FuchsianConnection(2, poles, gen3.basepoint)
        mons = [fs.monodromy(cp, fs.keyhole_loop(cp, j), tol=1e-12) for j in range(3)]
        (mon_p if sgn > 0 else mon_m).append(mons)
    dS = [(mon_p[0][j] - mon_m[0][j]) / (2 * h) for j in range(3)]
    weights = cyc.monodromy_variation_weights(gen3, dS)
    total = sum(weights)
    scale = max(np.abs(w).max() for w in weights)
    assert np.abs(total).max() < 1e-4 * scale  # O(h^2) closure of the FD weights
    gamma = cyc.tangent_to_cycle(gen3, weights, check=False)
    assert cyc.boundary_norm(gen3, gamma) < 1e-4 * scale
    # paper display: A_{j,s} intersects Gamma_delta in r(Ad_C^-1 d alpha_j)
    basis = cyc.rigid_basis(gen3)
    for c in basis.cycles:
        if c.meta.get("family") != "A":
            continue
        j = c.meta["j"]
        got = cyc.intersection(gen3, c, gamma)
        ap = np.array(
            sorted(np.linalg.eigvals(gen3.poles[j][1].entries + h * dphis[j]).real, reverse=True)
        )
        am = np.array(
            sorted(np.linalg.eigvals(gen3.poles[j][1].entries - h * dphis[j]).real, reverse=True)
        )
        dalpha = (ap[0] - am[0]) / (2 * h)
        expect = 2 * dalpha  # r(d alpha) for the sl2 simple root
        assert abs(got - expect) < 2e-4 * max(0.01, abs(expect))


def test_duality_roundtrip(gen3):
    h = 1e-5
    rng = np.random.default_rng(9)
    d1 = 0.4 * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    d1 -= np.trace(d1) / 2 * np.eye(2)
    d2 = 0.4 * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    d2 -= np.trace(d2) / 2 * np.eye(2)
    dphis = [d1, d2, -d1 - d2]
    mons = {}
    for sgn in (+1, -1):
        poles = [
            (z, r + sgn * h * dphis[k])
            for k, (z, r) in enumerate(gen3.finite_pole_data())
        ]
        cp = conn_mod.FuchsianConnection(2, poles, gen3.basepoint)
        mons[sgn] = [fs.monodromy(cp, fs.keyhole_loop(cp, j), tol=1e-12) for j in range(3)]
    dS = [(mons[1][j] - mons[-1][j]) / (2 * h) for j in range(3)]
    weights = cyc.monodromy_variation_weights(gen3, dS)
    gamma = cyc.tangent_to_cycle(gen3, weights, check=False)
    dphi = cyc.cycle_to_tangent(gen3, gamma)
    # compare delta Phi at sample points
    worst = 0.0
    for x in (2.2 + 0.4j, -1.4 + 1.9j, 0.5 - 1.1j):
        expect = sum(
            dphis[k] / (x - z) for k, (z, _) in enumerate(gen3.finite_pole_data())
        )
        got = dphi(x)
        worst = max(worst, np.abs(got - expect).max() / max(1e-9, np.abs(expect).max()))
    assert worst < 1e-4


def test_cycle_to_tangent_zero_and_simple_poles(gen3):
    zero_gamma = cyc.GeneralizedCycle([], kind="third")
    dphi = cyc.cycle_to_tangent(gen3, zero_gamma)
    assert np.abs(dphi(1.7 + 0.9j)).max() == 0.0
    basis = cyc.rigid_basis(gen3)
    gt = next(c for c in basis.cycles if c.meta.get("family") == "Gt")
    dphi = cyc.cycle_to_tangent(gen3, gt)
    z0 = gen3.finite_pole_data()[2][0]
    vals = [np.abs(dphi(z0 + r * np.exp(0.4j))).max() * r**2 for r in (2e-2, 1e-2)]
    assert vals[1] < 0.6 * vals[0]  # double-pole coefficient shrinks: simple pole only
