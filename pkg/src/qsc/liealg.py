"""Matrix Lie algebra core for sl_n.

Elements are n x n complex matrices; the invariant bilinear form is the
trace in the defining representation.  Cartan data is always expressed
relative to the diagonal Cartan subalgebra, with roots labelled by index
pairs (p, q), p != q, acting on diag(h_1..h_n) as h_p - h_q.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DegenerateGram,
    DegenerateSpectrum,
    DimensionMismatch,
    NonSemisimple,
    SingularGroupElement,
)

TRACE_TOL = 1e-12
DET_TOL = 1e-10
GAP_TOL = 1e-9


def _as_matrix(a):
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    return m


class AlgebraElement:
    """A traceless n x n complex matrix (element of sl_n)."""

    __slots__ = ("n", "entries")

    def __init__(self, entries):
        m = _as_matrix(entries)
        scale = max(1.0, float(np.abs(m).max()))
        if abs(np.trace(m)) > TRACE_TOL * scale:
            raise DimensionMismatch(
                f"matrix is not traceless: tr = {np.trace(m):.3e}"
            )
        self.n = m.shape[0]
        self.entries = m

    def __repr__(self):
        return f"AlgebraElement(n={self.n})"

    def __add__(self, other):
        return AlgebraElement(self.entries + _unwrap(other))

    def __sub__(self, other):
        return AlgebraElement(self.entries - _unwrap(other))

    def __mul__(self, scalar):
        return AlgebraElement(self.entries * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return AlgebraElement(-self.entries)


class GroupElement:
    """An n x n complex matrix with unit determinant (element of SL_n)."""

    __slots__ = ("n", "entries")

    def __init__(self, entries):
        m = _as_matrix(entries)
        d = np.linalg.det(m)
        if abs(d - 1.0) > DET_TOL * max(1.0, abs(d)):
            raise SingularGroupElement(f"determinant {d:.6e} is not 1")
        self.n = m.shape[0]
        self.entries = m

    def __repr__(self):
        return f"GroupElement(n={self.n})"


class CartanDecomposition:
    """Result of diagonalizing a semisimple element: a = V diag(alpha) V^-1."""

    __slots__ = ("V", "alpha", "ordering")

    def __init__(self, V, alpha, ordering):
        self.V = V            # GroupElement
        self.alpha = alpha    # AlgebraElement, diagonal
        self.ordering = ordering  # permutation applied to the raw eig output


def _unwrap(a):
    if isinstance(a, (AlgebraElement, GroupElement)):
        return a.entries
    return _as_matrix(a)


def _check_dims(a, b):
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")


def bracket(a, b):
    """Commutator [a, b] = ab - ba."""
    am, bm = _unwrap(a), _unwrap(b)
    _check_dims(am, bm)
    return AlgebraElement(am @ bm - bm @ am)


def pairing(a, b):
    """Invariant bilinear form <a, b> = Tr(ab) in the defining rep."""
    am, bm = _unwrap(a), _unwrap(b)
    _check_dims(am, bm)
    return complex(np.trace(am @ bm))


def adjoint(g, a):
    """Adjoint action Ad_g(a) = g a g^-1."""
    gm, am = _unwrap(g), _unwrap(a)
    _check_dims(gm, am)
    if np.linalg.cond(gm) > 1e13:
        raise SingularGroupElement("group element not invertible to working precision")
    return AlgebraElement(gm @ am @ np.linalg.inv(gm))


def canonical_eig_order(eigs):
    """Indices sorting eigenvalues by descending real, then descending imag part."""
    return sorted(range(len(eigs)), key=lambda i: (-eigs[i].real, -eigs[i].imag))


def cartan_decompose(a):
    """Diagonalize a semisimple element with the canonical Weyl representative.

    Eigenvalues are sorted by (descending real part, then descending imaginary
    part); eigenvectors are scaled so their largest-modulus entry is real and
    positive, then globally rescaled to det V = 1.
    """
    am = _unwrap(a)
    n = am.shape[0]
    scale = max(1.0, float(np.abs(am).max()))
    eigs, vecs = np.linalg.eig(am)
    order = canonical_eig_order(eigs)
    eigs = eigs[order]
    vecs = vecs[:, order]
    gaps = [abs(eigs[i] - eigs[j]) for i in range(n) for j in range(i + 1, n)]
    if min(gaps) <= GAP_TOL:
        # degenerate spectrum: distinguish defective from genuinely semisimple
        resid = _diag_residual(am, eigs, vecs)
        if resid > 1e-8 * scale:
            raise NonSemisimple("matrix is defective (not diagonalizable)")
        raise DegenerateSpectrum(f"eigenvalue gap below {GAP_TOL}")
    for k in range(n):
        col = vecs[:, k]
        piv = int(np.argmax(np.abs(col)))
        col = col / col[piv] * abs(col[piv])
        vecs[:, k] = col / np.linalg.norm(col)
    d = np.linalg.det(vecs)
    vecs = vecs / d ** (1.0 / n)
    resid = _diag_residual(am, eigs, vecs)
    if resid > 1e-9 * scale:
        raise NonSemisimple(f"diagonalization residual {resid:.2e} too large")
    return CartanDecomposition(
        GroupElement(vecs), AlgebraElement(np.diag(eigs)), tuple(order)
    )


def _diag_residual(am, eigs, vecs):
    try:
        rec = vecs @ np.diag(eigs) @ np.linalg.inv(vecs)
    except np.linalg.LinAlgError:
        return np.inf
    return float(np.abs(rec - am).max())


def dual_basis(basis):
    """Dual basis w.r.t. the trace pairing: <e_r, e^s> = delta_rs."""
    mats = [_unwrap(b) for b in basis]
    k = len(mats)
    gram = np.array([[np.trace(mats[r] @ mats[s]) for s in range(k)] for r in range(k)])
    if np.linalg.cond(gram) > 1e12:
        raise DegenerateGram("Gram matrix of the pairing is singular")
    ginv = np.linalg.inv(gram)
    duals = []
    for s in range(k):
        m = sum(ginv[s, t] * mats[t] for t in range(k))
        duals.append(AlgebraElement(m))
    return duals


def chevalley_basis(n):
    """Chevalley basis of sl_n: simple-root Cartan H_r, then all root vectors E_pq.

    Returns (cartan, roots, root_vectors):
      cartan       -- list of n-1 AlgebraElements H_r = E_rr - E_(r+1)(r+1)
      roots        -- list of index pairs (p, q), p != q, in deterministic order
      root_vectors -- matching unit matrices E_pq
    """
    cartan = []
    for r in range(n - 1):
        m = np.zeros((n, n), dtype=complex)
        m[r, r] = 1.0
        m[r + 1, r + 1] = -1.0
        cartan.append(AlgebraElement(m))
    roots = [(p, q) for p in range(n) for q in range(n) if p != q]
    vectors = []
    for p, q in roots:
        m = np.zeros((n, n), dtype=complex)
        m[p, q] = 1.0
        vectors.append(AlgebraElement(m))
    return cartan, roots, vectors


def full_basis(n):
    """Chevalley basis of sl_n as a flat list (Cartan first, then root vectors)."""
    cartan, _, vectors = chevalley_basis(n)
    return cartan + vectors


def casimir2_pairs(n=2):
    """Pairs (v_i, v^i) with the completeness property sum_i v_i <v^i, a> = a."""
    basis = full_basis(n)
    duals = dual_basis(basis)
    return list(zip(basis, duals))


def root_value(alpha_diag, root):
    """Evaluate the root (p, q) on a diagonal Cartan element."""
    d = np.diag(_unwrap(alpha_diag))
    p, q = root
    return complex(d[p] - d[q])


def root_metric_dual(n, root):
    """The Cartan element t_r with <t_r, h> = r(h): E_pp - E_qq for r = (p, q)."""
    p, q = root
    m = np.zeros((n, n), dtype=complex)
    m[p, p] = 1.0
    m[q, q] = -1.0
    return AlgebraElement(m)


def diag_offdiag_split(m):
    """Split a matrix into its diagonal (Cartan) and off-diagonal (root) parts."""
    mm = _unwrap(m)
    d = np.diag(np.diag(mm))
    return d, mm - d
