"""Amplitudes on the quantum spectral curve: the self-reproducing kernel,
the quantum Liouville form W1, connected and non-connected amplitudes,
Casimir insertion with regularized coincident points, and loop-equation
style checks.

Sign conventions pinned by the abelian oracle and asserted globally:
  SIGN_KERNEL_DIAG (s):   Ad_Psi(kernel_diag) = +Phi(x)
  SIGN_CASIMIR_DET (s2):  casimir2_insert (n=0) = s2 * (-det Phi(x))
"""

from __future__ import annotations

from itertools import permutations

import numpy as np

from . import connection as conn_mod
from . import flatsection as fs
from . import liealg
from ._geometry import segment_crossing
from .errors import EvaluationAtPole, QSCError, UnsupportedAlgebra

SIGN_KERNEL_DIAG = 1
SIGN_CASIMIR_DET = 6


class QSCPoint:
    """A pathed base point together with a Lie algebra weight."""

    __slots__ = ("pathed", "E")

    def __init__(self, pathed, E):
        self.pathed = pathed
        self.E = E.entries if isinstance(E, liealg.AlgebraElement) else np.asarray(E, complex)
        if np.abs(self.E).max() == 0.0:
            raise QSCError("QSC point weight must be nonzero")

    @property
    def x(self):
        return self.pathed.endpoint


class FormEvaluator:
    """A generalized one-form: (x, section value) -> dx coefficient.

    cartan_residue(conn, j) returns the diagonal matrix R0 (in the V_j
    frame) of the simple-pole Laurent datum used by regularized periods,
    or None when unavailable.  support/singular_points feed quadrature
    breakpoints.
    """

    def __init__(self, fn, residue_fn=None, support=(), singular_points=(), label=""):
        self.fn = fn
        self.residue_fn = residue_fn
        self.support = list(support)
        self.singular_points = list(singular_points)
        self.label = label

    def __call__(self, x, sigma):
        return self.fn(x, sigma)

    def cartan_residue(self, conn, j):
        if self.residue_fn is None:
            return None
        return self.residue_fn(conn, j)


def zero_form():
    return FormEvaluator(lambda x, s: 0.0, residue_fn=lambda c, j: np.zeros((c.n, c.n)), label="0")


def w1_form(conn):
    """The quantum Liouville form as a FormEvaluator."""

    def fn(x, sigma):
        return np.trace(conn_mod.potential_at(conn, x).entries @ sigma)

    def residue(c, j):
        return fs.local_solution(c, j).alpha.entries

    return FormEvaluator(fn, residue_fn=residue, label="W1")


def w2_slice_form(conn, Y, tol=1e-11):
    """x -> W2(x . sigma, Y) for a fixed second argument Y."""
    sy = fs.sigma(conn, Y.pathed, Y.E, tol=tol).entries
    y = Y.x

    def fn(x, sigma):
        return np.trace(sigma @ sy) / (x - y) ** 2

    return FormEvaluator(
        fn,
        residue_fn=lambda c, j: np.zeros((c.n, c.n)),
        singular_points=[y],
        label="W2slice",
    )


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

def kernel(conn, x_pathed, y_pathed, tol=1e-11):
    """Self-reproducing kernel K(x~, y~) = Psi(x~)^-1 Psi(y~) / (x - y)."""
    x, y = x_pathed.endpoint, y_pathed.endpoint
    if abs(x - y) < 1e-12 * max(1.0, conn.pole_scale()):
        raise QSCError("coincident points: use kernel_diag")
    px = fs.frame_at(conn, x_pathed, tol=tol).value
    py = fs.frame_at(conn, y_pathed, tol=tol).value
    return np.linalg.inv(px) @ py / (x - y)


def kernel_diag(conn, x_pathed, tol=1e-12):
    """Regularized diagonal value lim_{y->x} [K(x~, y~) - 1/(x - y)].

    Computed from short transports with a symmetric two-radius Richardson
    limit; satisfies Ad_Psi(kernel_diag) = SIGN_KERNEL_DIAG * Phi(x).
    """
    x = x_pathed.endpoint
    dmin = min(abs(x - z) for z, _ in conn.finite_pole_data())
    if dmin < 10 * fs.clearance_radius(conn):
        raise EvaluationAtPole("kernel_diag evaluated too close to a pole")
    u0 = 1e-2 * dmin * np.exp(0.37j)

    def sym(u):
        gp = fs.transport_nodes(conn, [x, x + u], tol=tol)[-1]
        gm = fs.transport_nodes(conn, [x, x - u], tol=tol)[-1]
        return ((gp - np.eye(conn.n)) / u + (gm - np.eye(conn.n)) / (-u)) / 2.0

    f1, f2 = sym(u0), sym(u0 / 2)
    val = (4 * f2 - f1) / 3.0
    return SIGN_KERNEL_DIAG * val


# ---------------------------------------------------------------------------
# amplitudes
# ---------------------------------------------------------------------------

def w1(conn, X, tol=1e-11):
    """W1(x~ . E) = <Phi(x), Ad_Psi(x~) E>."""
    s = fs.sigma(conn, X.pathed, X.E, tol=tol).entries
    return complex(np.trace(conn_mod.potential_at(conn, X.x).entries @ s))


def _cyclic_permutations(n):
    """All n-cycles of {0..n-1} as mapping tuples."""
    out = []
    for rest in permutations(range(1, n)):
        # cycle visiting 0 -> rest[0] -> rest[1] ... -> 0
        nu = [0] * n
        chain = (0,) + rest
        for i in range(n):
            nu[chain[i]] = chain[(i + 1) % n]
        out.append(tuple(nu))
    return out


def wn(conn, points, tol=1e-11):
    """Connected n-point amplitude (n >= 2), cyclic-sum formula."""
    n = len(points)
    if n < 2:
        raise QSCError("wn needs at least two points")
    if n > 6:
        raise QSCError("wn supports n <= 6 (cyclic enumeration)")
    xs = [p.x for p in points]
    for i in range(n):
        for j in range(i + 1, n):
            if abs(xs[i] - xs[j]) < 1e-12 * max(1.0, conn.pole_scale()):
                raise QSCError("coincident arguments in wn")
    sigmas = [fs.sigma(conn, p.pathed, p.E, tol=tol).entries for p in points]
    total = 0j
    for nu in _cyclic_permutations(n):
        num = np.eye(conn.n, dtype=complex)
        den = 1.0 + 0j
        i = 0
        for _ in range(n):
            num = num @ sigmas[i]
            den *= xs[i] - xs[nu[i]]
            i = nu[i]
        total += np.trace(num) / den
    return complex((-1) ** (n - 1) * total)


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1 :]
        yield [[first]] + part


def wn_hat_normalized(conn, points, tol=1e-11):
    """Non-connected amplitude over set partitions, tau prefactor divided out."""
    total = 0j
    for part in _set_partitions(list(points)):
        prod = 1.0 + 0j
        for block in part:
            if len(block) == 1:
                prod *= w1(conn, block[0], tol=tol)
            else:
                prod *= wn(conn, block, tol=tol)
        total += prod
    return complex(total)


def diag_residue_check(conn, points, i, j, radius_factor=0.05, n_quad=32, tol=1e-11):
    """Residue of W_{n+1} at x_i = x_j against W_n with the bracket weight.

    Returns (lhs, rhs, |lhs - rhs|).  The residue is extracted by moving the
    i-th point around a small circle centred at the j-th.
    """
    pts = list(points)
    xj = pts[j].x
    dmin = min(abs(xj - z) for z, _ in conn.finite_pole_data())
    rho = radius_factor * dmin
    acc = 0j
    base_path = pts[j].pathed.path
    for k in range(n_quad):
        theta = 2 * np.pi * (k + 0.41) / n_quad
        w = rho * np.exp(1j * theta)
        circ_path = fs.PathSpec(base_path.points() + [xj + w])
        moved = QSCPoint(fs.PathedPoint(circ_path), pts[i].E)
        args = [moved if m == i else pts[m] for m in range(len(pts))]
        acc += wn(conn, args, tol=tol) * 1j * w
    lhs = acc / n_quad / 1j
    bracket = pts[i].E @ pts[j].E - pts[j].E @ pts[i].E
    rest = [pts[m] for m in range(len(pts)) if m != i]
    if np.abs(bracket).max() < 1e-14:
        rhs = 0j
    else:
        repl = [
            QSCPoint(p.pathed, bracket) if m == (j if j < i else j - 1) else p
            for m, p in enumerate(rest)
        ]
        rhs = (
            w1(conn, repl[0], tol=tol)
            if len(repl) == 1
            else wn(conn, repl, tol=tol)
        )
    return complex(lhs), complex(rhs), abs(complex(lhs) - complex(rhs))


# ---------------------------------------------------------------------------
# Casimir insertion and loop equations
# ---------------------------------------------------------------------------

def _hat_with_pair(conn, zp, xp, vi, vdual, rest, tol):
    a = QSCPoint(zp, vdual)
    b = QSCPoint(xp, vi)
    return wn_hat_normalized(conn, [a, b] + list(rest), tol=tol)


def casimir2_insert(conn, x_pathed, points=(), tol=1e-11, radius_factor=1e-2):
    """Sum_i regularized What_{2+n}(x~.v^i, x~.v_i, X's): quadratic-Casimir
    insertion at coinciding points, prime-form double pole subtracted.

    The limit is taken with symmetric +/- displacements and a two-radius
    Richardson step at radii {1, 1/2} x radius_factor x local scale.
    """
    if conn.n != 2:
        raise UnsupportedAlgebra("casimir2_insert is restricted to sl2")
    x = x_pathed.endpoint
    dists = [abs(x - z) for z, _ in conn.finite_pole_data()] + [
        abs(x - p.x) for p in points
    ]
    dmin = min(dists)
    if dmin < 10 * fs.clearance_radius(conn):
        raise EvaluationAtPole("casimir insertion too close to a pole or argument")
    pairs = liealg.casimir2_pairs(conn.n)
    cas_norm = sum(liealg.pairing(d, v) for v, d in pairs)  # = dim g
    rest_amp = (
        wn_hat_normalized(conn, list(points), tol=tol) if points else 1.0 + 0j
    )

    def shifted(u):
        path = fs.PathSpec(x_pathed.path.points() + [x + u])
        return fs.PathedPoint(path)

    def reg(u):
        zp = shifted(u)
        total = 0j
        for v, d in pairs:
            total += _hat_with_pair(conn, zp, x_pathed, v.entries, d.entries, points, tol)
        return total - cas_norm / u**2 * rest_amp

    u0 = radius_factor * dmin * np.exp(0.23j)
    f1 = (reg(u0) + reg(-u0)) / 2.0
    f2 = (reg(u0 / 2) + reg(-u0 / 2)) / 2.0
    return complex((4 * f2 - f1) / 3.0)


def loop_equation_check(conn, n, points=(), samples=None, tol=1e-11):
    """Loop-equation report for n = 0 and n = 1 (sl2).

    n = 0: compares the Casimir-inserted amplitude with the determinant side
    s2 * (-det Phi(x)) at the sample points.
    n = 1: fits the insertion (as a function of x) to a rational ansatz with
    double/simple poles at the punctures and at x1, and checks the Ward
    residue sum (all residues of the rational current add to zero).
    """
    if conn.n != 2:
        raise UnsupportedAlgebra("loop equations compared for sl2 only")
    if samples is None:
        samples = _default_samples(conn, 20 if n == 0 else 40, [p.x for p in points])
    report = {"n": n, "signs": {"s": SIGN_KERNEL_DIAG, "s2": SIGN_CASIMIR_DET}}
    if n == 0:
        worst = 0.0
        for x in samples:
            lhs = casimir2_insert(conn, fs.pathed(conn, x), (), tol=tol)
            rhs = SIGN_CASIMIR_DET * (
                -np.linalg.det(conn_mod.potential_at(conn, x).entries)
            )
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
        report["max_abs_error"] = worst
        report["samples"] = len(samples)
        return report
    if n != 1:
        raise QSCError("loop_equation_check supports n in {0, 1}")
    x1 = points[0].x
    vals = []
    for x in samples:
        vals.append(casimir2_insert(conn, fs.pathed(conn, x), points, tol=tol))
    vals = np.asarray(vals)
    xs = np.asarray(samples)
    cols = []
    poles = [z for z, _ in conn.finite_pole_data()] + [x1]
    for z in poles:
        cols.append(1.0 / (xs - z) ** 2)
        cols.append(1.0 / (xs - z))
    A = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    resid = float(np.abs(A @ coef - vals).max() / max(1.0, np.abs(vals).max()))
    report["rational_fit_residual"] = resid
    report["fit_coefficients"] = coef
    # Ward check: residues of the fitted current sum to zero (decay at infinity)
    simple = coef[1::2]
    report["ward_residue_sum"] = float(np.abs(np.sum(simple)))
    report["samples"] = len(samples)
    return report


def _default_samples(conn, k, avoid=()):
    zs = [z for z, _ in conn.finite_pole_data()]
    center = sum(zs) / len(zs)
    spread = max(max(abs(z - center) for z in zs), 1.0)
    out = []
    step = 0
    while len(out) < k:
        step += 1
        x = center + spread * (1.25 + 0.45 * np.cos(2.39996 * step)) * np.exp(
            2j * np.pi * step / (k * 1.31)
        )
        if all(abs(x - z) > 0.3 * spread for z in list(zs) + list(avoid)):
            out.append(x)
    return out
