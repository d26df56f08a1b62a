"""Fuchsian connections on the Riemann sphere.

A connection is stored as a list of (pole, residue) pairs plus a basepoint.
At most one pole may sit at infinity; when no pole is at infinity the
residues must sum to zero (otherwise the sum including the infinity residue
must vanish).  Internal numerics that need every pole finite move the
infinity pole into a finite chart with a Moebius map (``to_finite_chart``).
"""

from __future__ import annotations

import numpy as np

from . import liealg
from ._geometry import Mobius
from .errors import (
    CoincidentPoles,
    DegenerateCharge,
    EvaluationAtPole,
    NonSemisimpleResidue,
    NonZeroResidueSum,
    QSCError,
    ResonantCharges,
    UnsupportedAlgebra,
    ZeroB,
)

RESONANCE_TOL = 1e-8
SEPARATION_TOL = 1e-9
RESIDUE_SUM_TOL = 1e-12


class SpherePoint:
    """A point of P^1: a finite complex coordinate or the point at infinity."""

    __slots__ = ("z",)

    def __init__(self, z=None, infinity=False):
        if infinity:
            self.z = None
        else:
            zc = complex(z)
            if not (np.isfinite(zc.real) and np.isfinite(zc.imag)):
                raise QSCError("finite sphere point has non-finite coordinate")
            self.z = zc

    @staticmethod
    def infinity():
        return SpherePoint(infinity=True)

    @property
    def is_infinity(self):
        return self.z is None

    def __repr__(self):
        return "SpherePoint(inf)" if self.is_infinity else f"SpherePoint({self.z})"


class FuchsianConnection:
    """Simple-pole sl_n connection d - sum_j Phi_j dx/(x - z_j)."""

    def __init__(self, n, poles, basepoint):
        self.n = int(n)
        norm = []
        for pt, res in poles:
            if not isinstance(pt, SpherePoint):
                pt = SpherePoint(pt)
            if not isinstance(res, liealg.AlgebraElement):
                res = liealg.AlgebraElement(res)
            if res.n != self.n:
                raise QSCError(f"residue dimension {res.n} != algebra dimension {self.n}")
            norm.append((pt, res))
        self.poles = norm
        if not isinstance(basepoint, SpherePoint):
            basepoint = SpherePoint(basepoint)
        self.basepoint = basepoint

    @property
    def M(self):
        return len(self.poles)

    def finite_pole_data(self):
        """List of (z, residue matrix) for the finite poles."""
        return [(pt.z, res.entries) for pt, res in self.poles if not pt.is_infinity]

    def infinity_residue(self):
        """Residue at infinity, or None if infinity is not a pole."""
        for pt, res in self.poles:
            if pt.is_infinity:
                return res
        return None

    def pole_scale(self):
        zs = [z for z, _ in self.finite_pole_data()]
        if len(zs) < 2:
            return 1.0
        return max(1.0, max(abs(a - b) for i, a in enumerate(zs) for b in zs[:i]))

    def min_separation(self):
        zs = [z for z, _ in self.finite_pole_data()]
        if len(zs) < 2:
            return np.inf
        return min(abs(a - b) for i, a in enumerate(zs) for b in zs[:i])


class ChargeSpectrum:
    """Per-pole eigenvalue lists of the residues, in canonical order."""

    def __init__(self, charges):
        self.charges = charges  # list of tuples of complex eigenvalues

    def __getitem__(self, j):
        return self.charges[j]

    def __len__(self):
        return len(self.charges)


def validate(conn):
    """Check all connection invariants; return the charge spectrum."""
    n_inf = sum(1 for pt, _ in conn.poles if pt.is_infinity)
    if n_inf > 1:
        raise CoincidentPoles("more than one pole at infinity")
    zs = [z for z, _ in conn.finite_pole_data()]
    scale = conn.pole_scale()
    for i in range(len(zs)):
        for j in range(i + 1, len(zs)):
            if abs(zs[i] - zs[j]) <= SEPARATION_TOL * scale:
                raise CoincidentPoles("poles coincide", pole_index=j)
    total = sum(res.entries for _, res in conn.poles)
    resmax = max(np.abs(res.entries).max() for _, res in conn.poles)
    if np.abs(total).max() > RESIDUE_SUM_TOL * max(1.0, resmax):
        raise NonZeroResidueSum(
            "residues do not sum to zero"
            + ("" if n_inf else " and infinity is not a listed pole")
        )
    charges = []
    for j, (_, res) in enumerate(conn.poles):
        try:
            dec = liealg.cartan_decompose(res.entries)
        except QSCError as exc:
            raise NonSemisimpleResidue(str(exc), pole_index=j) from exc
        eigs = np.diag(dec.alpha.entries)
        for a in range(conn.n):
            for b in range(conn.n):
                if a == b:
                    continue
                gap = eigs[a] - eigs[b]
                nearest = round(gap.real)
                if nearest != 0 and abs(gap - nearest) < RESONANCE_TOL:
                    raise ResonantCharges(
                        f"eigenvalue gap {gap:.6g} is a nonzero integer", pole_index=j
                    )
        charges.append(tuple(eigs))
    if conn.basepoint.is_infinity:
        raise CoincidentPoles("basepoint at infinity is not supported")
    o = conn.basepoint.z
    for j, z in enumerate(zs):
        if abs(o - z) <= SEPARATION_TOL * scale:
            raise CoincidentPoles("basepoint coincides with a pole", pole_index=j)
    return ChargeSpectrum(charges)


def potential_at(conn, x):
    """Phi(x) = sum over finite poles of Phi_j / (x - z_j) (coefficient of dx)."""
    if isinstance(x, SpherePoint):
        if x.is_infinity:
            raise EvaluationAtPole("potential evaluated at infinity")
        x = x.z
    x = complex(x)
    scale = conn.pole_scale()
    out = np.zeros((conn.n, conn.n), dtype=complex)
    for j, (z, res) in enumerate(conn.finite_pole_data()):
        if abs(x - z) <= SEPARATION_TOL * scale:
            raise EvaluationAtPole("potential evaluated at a pole", pole_index=j)
        out += res / (x - z)
    return liealg.AlgebraElement(out)


def genus_counts(conn):
    """(g, g''') for the quantum spectral curve at genus-0 base."""
    dim_g = conn.n * conn.n - 1
    dim_h = conn.n - 1
    M = conn.M
    g2 = (M - 2) * dim_g - M * dim_h
    if g2 % 2 != 0:
        raise QSCError("genus count is not an integer")
    g = g2 // 2
    return g, g + M * dim_h


def classical_curve(conn, x):
    """y^2(x) = (1/2) Tr Phi(x)^2 via the partial-fraction form (sl2 only)."""
    if conn.n != 2:
        raise UnsupportedAlgebra("classical_curve supports sl2 only")
    if isinstance(x, SpherePoint):
        if x.is_infinity:
            raise EvaluationAtPole("curve evaluated at infinity")
        x = x.z
    x = complex(x)
    data = conn.finite_pole_data()
    scale = conn.pole_scale()
    val = 0j
    for j, (zj, rj) in enumerate(data):
        if abs(x - zj) <= SEPARATION_TOL * scale:
            raise EvaluationAtPole("curve evaluated at a pole", pole_index=j)
        delta = 0.5 * np.trace(rj @ rj)
        beta = sum(
            np.trace(rj @ rk) / (zj - zk) for k, (zk, rk) in enumerate(data) if k != j
        )
        val += delta / (x - zj) ** 2 + beta / (x - zj)
    return complex(val)


def dozz_build(alpha0, alpha1, alpha_inf, B, basepoint=0.35 + 0.2j):
    """Three-point sl2 connection with poles at 0, 1 and infinity.

    Phi_0 is diagonal; the off-diagonal entries of Phi_1 are (-B, -C) with
    C fixed by the BC product formula.
    """
    a0, a1, ai = complex(alpha0), complex(alpha1), complex(alpha_inf)
    if abs(a0) < 1e-12:
        raise DegenerateCharge("alpha0 must be nonzero")
    if abs(complex(B)) < 1e-12:
        raise ZeroB("B must be nonzero")
    d0, d1, di = a0 * a0, a1 * a1, ai * ai
    bc = (2 * d0 * d1 + 2 * d1 * di + 2 * di * d0 - d0**2 - d1**2 - di**2) / (4 * d0)
    C = bc / complex(B)
    phi0 = np.diag([a0, -a0]).astype(complex)
    t = (d0 + d1 - di) / (2 * a0)
    phi1 = np.array([[-t, -B], [-C, t]], dtype=complex)
    phii = -phi0 - phi1
    conn = FuchsianConnection(
        2,
        [(SpherePoint(0.0), phi0), (SpherePoint(1.0), phi1), (SpherePoint.infinity(), phii)],
        SpherePoint(basepoint),
    )
    validate(conn)
    return conn


def to_finite_chart(conn):
    """Move an infinity pole (if any) to a finite point via m(x) = 1/(x - c).

    Returns (new_connection, mobius).  Residues of a one-form are invariant
    under coordinate changes, so the residue matrices are reused as-is.
    The mobius maps old-chart points to new-chart points.
    """
    if conn.infinity_residue() is None:
        return conn, Mobius.identity()
    zs = [z for z, _ in conn.finite_pole_data()]
    o = conn.basepoint.z
    center = sum(zs) / len(zs)
    spread = max(max(abs(z - center) for z in zs), abs(o - center), 1.0)
    best = None
    for k in range(8):
        c = center + 3.0 * spread * np.exp(2j * np.pi * (k + 0.37) / 8)
        m = Mobius(0, 1, 1, -c)  # x -> 1/(x - c)
        pts = [m(z) for z in zs] + [m(None), m(o)]
        sep = min(
            abs(a - b) for i, a in enumerate(pts) for b in pts[:i]
        )
        if best is None or sep > best[0]:
            best = (sep, m)
    m = best[1]
    poles = [(SpherePoint(m(z)), liealg.AlgebraElement(res)) for z, res in conn.finite_pole_data()]
    poles.append((SpherePoint(m(None)), conn.infinity_residue()))
    new = FuchsianConnection(conn.n, poles, SpherePoint(m(o)))
    validate(new)
    return new, m
