"""Hermitian one-matrix model oracle: orthogonal polynomials for exp(-V)
weights, partition functions from norm products, the Baker-Akhiezer frame,
and determinantal cross-checks against direct eigenvalue integrals.

The integration contour is fixed to the real line.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    HankelBreakdown,
    HilbertTransformFailure,
    NonIntegrableWeight,
    QSCError,
)


class Potential:
    """Polynomial potential V(x) = sum c_k x^k, optionally with a family
    parameter t entering through a direction polynomial: V + t * dV."""

    def __init__(self, coeffs, t_direction=None, t=0.0):
        self.coeffs = [complex(c) for c in coeffs]
        self.t_direction = [complex(c) for c in (t_direction or [])]
        self.t = complex(t)
        deg = self.degree
        lead = self.full_coeffs()[deg]
        if deg % 2 != 0 or lead.real <= 0:
            raise NonIntegrableWeight(
                "exp(-V) is not integrable on the real line: need an even"
                " leading degree with positive real coefficient"
            )

    def full_coeffs(self):
        n = max(len(self.coeffs), len(self.t_direction))
        out = [0j] * n
        for k, c in enumerate(self.coeffs):
            out[k] += c
        for k, c in enumerate(self.t_direction):
            out[k] += self.t * c
        while len(out) > 1 and out[-1] == 0:
            out.pop()
        return out

    @property
    def degree(self):
        return len(self.full_coeffs()) - 1

    def __call__(self, x):
        out = 0j
        for c in reversed(self.full_coeffs()):
            out = out * x + c
        return out

    def deriv(self, x):
        cs = self.full_coeffs()
        out = 0j
        for k in range(len(cs) - 1, 0, -1):
            out = out * x + k * cs[k]
        return out

    def t_deriv(self, x):
        out = 0j
        for c in reversed(self.t_direction or [0j]):
            out = out * x + c
        return out

    def with_t(self, t):
        return Potential(self.coeffs, self.t_direction, t)


def _grid(V, n_nodes=600):
    """Gauss-Legendre grid on [-L, L] with the tail cut at exp(-V) < 1e-18."""
    L = 1.0
    while abs(np.exp(-V(L))) > 1e-18 or abs(np.exp(-V(-L))) > 1e-18:
        L *= 1.25
        if L > 1e3:
            raise NonIntegrableWeight("weight tail does not decay")
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    return L * x, L * w


class OrthoPolySystem:
    """Monic orthogonal polynomials of exp(-V) with norms and recurrence."""

    def __init__(self, V, n, n_nodes=600):
        self.V = V
        self.n = int(n)
        self.xs, self.ws = _grid(V, n_nodes)
        self.weight = np.exp(-np.array([V(x) for x in self.xs]))
        # Stieltjes: pi_{k+1} = (x - a_k) pi_k - b_k pi_{k-1}
        vals = [np.ones_like(self.xs, dtype=complex)]
        self.a = []
        self.b = []
        self.h = []
        for k in range(self.n + 2):
            pk = vals[k]
            hk = np.sum(self.ws * self.weight * pk * pk)
            if abs(hk) < 1e-250:
                raise HankelBreakdown(f"vanishing norm h_{k}")
            self.h.append(hk)
            ak = np.sum(self.ws * self.weight * self.xs * pk * pk) / hk
            bk = hk / self.h[k - 1] if k > 0 else 0.0
            self.a.append(ak)
            self.b.append(bk)
            pk1 = (self.xs - ak) * pk - (bk * vals[k - 1] if k > 0 else 0.0)
            vals.append(pk1)
        self._vals = vals

    def poly(self, k, x):
        """Monic pi_k evaluated at a point (off-grid), by the recurrence."""
        pm, p = 0.0 + 0j, 1.0 + 0j
        for i in range(k):
            pm, p = p, (x - self.a[i]) * p - (self.b[i] * pm if i > 0 else 0.0)
        return p

    def poly_deriv(self, k, x, h=1e-6):
        return (self.poly(k, x + h) - self.poly(k, x - h)) / (2 * h)

    def orthogonality_residual(self):
        """Max off-diagonal Gram entry relative to max h_k, up to degree n."""
        worst = 0.0
        for k in range(self.n + 1):
            for l in range(k + 1, self.n + 1):
                g = np.sum(self.ws * self.weight * self._vals[k] * self._vals[l])
                worst = max(worst, abs(g))
        return worst / max(abs(hk) for hk in self.h[: self.n + 1])

    def hankel_norm_check(self, kmax=4):
        """h_k = H_{k+1}/H_k with Hankel determinants of the moments."""
        mom = [np.sum(self.ws * self.weight * self.xs**k) for k in range(2 * kmax + 2)]
        out = []
        for k in range(1, kmax + 1):
            Hk = np.linalg.det(np.array([[mom[i + j] for j in range(k)] for i in range(k)]))
            Hk1 = np.linalg.det(
                np.array([[mom[i + j] for j in range(k + 1)] for i in range(k + 1)])
            )
            if abs(Hk) < 1e-12 * max(1.0, abs(Hk1)):
                raise HankelBreakdown(f"Hankel minor H_{k} vanishes")
            out.append(Hk1 / Hk)
        return out


def moments(V, order, n_nodes=600):
    """Moments int x^k exp(-V) dx for k <= order."""
    xs, ws = _grid(V, n_nodes)
    wgt = np.exp(-np.array([V(x) for x in xs]))
    return [complex(np.sum(ws * wgt * xs**k)) for k in range(order + 1)]


def orthopolys(V, n, n_nodes=600):
    return OrthoPolySystem(V, n, n_nodes)


def partition_log(V, n, n_nodes=600):
    """log Z_n with the n! * prod h_k convention."""
    ops = orthopolys(V, n, n_nodes)
    out = complex(np.sum([np.log(complex(k)) for k in range(1, n + 1)]))
    for k in range(n):
        out += np.log(ops.h[k])
    return complex(out)


class MMFrame:
    """Baker-Akhiezer frame Psi_n(x) = [[psi_{n-1}, phi_n], [psi_n, phi_{n+1}]]

    psi_k = pi_k exp(-V/2); phi_k is the Hilbert-transform partner
    exp(+V/2)/(2 pi i h_{k-1}) int pi_{k-1} exp(-V)/(x-s) ds, normalized so
    det Psi_n = 1.  Evaluation requires x off the real axis.
    """

    def __init__(self, V, n, n_nodes=900):
        if n < 1:
            raise QSCError("mm_frame needs n >= 1")
        self.V = V
        self.n = int(n)
        self.ops = OrthoPolySystem(V, n, n_nodes)
        self._norm = None
        self._norm = 1.0
        d = self.det_at(2.1j)
        if abs(d) < 1e-300:
            raise HilbertTransformFailure("frame determinant vanished")
        self._norm = np.sqrt(d)

    def psi(self, k, x):
        return self.ops.poly(k, x) * np.exp(-self.V(x) / 2.0)

    def phi(self, k, x):
        if abs(np.imag(complex(x))) < 1e-9:
            raise HilbertTransformFailure("phi is evaluated off the real axis only")
        ops = self.ops
        cauchy = np.sum(ops.ws * ops.weight * ops._vals[k - 1] / (x - ops.xs))
        return np.exp(self.V(x) / 2.0) * cauchy / (2j * np.pi * ops.h[k - 1])

    def value(self, x):
        m = np.array(
            [
                [self.psi(self.n - 1, x), self.phi(self.n, x)],
                [self.psi(self.n, x), self.phi(self.n + 1, x)],
            ],
            dtype=complex,
        )
        return m / self._norm

    def det_at(self, x):
        m = self.value(x)
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]

    def connection_value(self, x, h=None):
        """Phi_n(x) = Psi_n'(x) Psi_n(x)^-1 by central differences."""
        if h is None:
            h = 1e-6 * max(1.0, abs(x))
        dp = (self.value(x + h) - self.value(x - h)) / (2 * h)
        return dp @ np.linalg.inv(self.value(x))

    def rh_value(self, x):
        """Riemann-Hilbert normalized frame Y(x) with det Y = 1.

        Rows pair same-index polynomials with their Cauchy transforms:
        Y = [[pi_n, C(pi_n w)], [g pi_{n-1}, g C(pi_{n-1} w)]] with
        g = 2 pi i / h_{n-1}.  The pointwise determinantal identities
        (resolvent, connected W2) hold in this normalization.
        """
        if abs(np.imag(complex(x))) < 1e-9:
            raise HilbertTransformFailure("rh_value is evaluated off the real axis only")
        ops = self.ops
        n = self.n
        ct = lambda k: np.sum(ops.ws * ops.weight * ops._vals[k] / (x - ops.xs)) / (
            2j * np.pi
        )
        g = 2j * np.pi / ops.h[n - 1]
        return np.array(
            [[ops.poly(n, x), ct(n)], [g * ops.poly(n - 1, x), g * ct(n - 1)]],
            dtype=complex,
        )

    def density(self, x):
        """Christoffel-Darboux eigenvalue density (unnormalized by n)."""
        ops = self.ops
        total = 0.0j
        for k in range(self.n):
            p = ops.poly(k, x)
            total += p * p / ops.h[k]
        return total * np.exp(-self.V(x))


def mm_frame(V, n, n_nodes=900):
    return MMFrame(V, n, n_nodes)


def dlogz_dt_density(V, n, n_nodes=900):
    """-int dV/dt rho_n dx with the Christoffel-Darboux density."""
    fr = MMFrame(V, n, n_nodes)
    xs, ws = fr.ops.xs, fr.ops.ws
    vals = np.array([fr.V.t_deriv(x) * fr.density(x) for x in xs])
    return -complex(np.sum(ws * vals))


def dlogz_dt_residue(V, n, radius=None, n_quad=400, n_nodes=900):
    """-Res_{x -> inf} dV/dt(x) Tr(E11 Psi_n^-1 dPsi_n) via a large circle."""
    fr = MMFrame(V, n, n_nodes)
    if radius is None:
        radius = 1.45 * abs(fr.ops.xs[-1])
    e11 = np.array([[1.0, 0.0], [0.0, 0.0]])
    total = 0j
    for k in range(n_quad):
        th = 2 * np.pi * (k + 0.5) / n_quad
        x = radius * np.exp(1j * th)
        dpsi = (fr.value(x * (1 + 1e-6)) - fr.value(x * (1 - 1e-6))) / (2e-6 * x)
        integ = fr.V.t_deriv(x) * np.trace(e11 @ np.linalg.inv(fr.value(x)) @ dpsi)
        total += integ * 1j * x * 2 * np.pi / n_quad
    return -complex(total / (2j * np.pi))


def resolvent_direct(V, n, x, n_nodes=220):
    """E[ Tr 1/(x - M) ] by direct n-fold eigenvalue quadrature (n <= 3)."""
    f = lambda lam: sum(1.0 / (x - l) for l in lam)
    num, den = _eigen_expectation(V, n, f, n_nodes)
    return num / den


def two_resolvent_connected(V, n, x, y, n_nodes=220):
    """Connected 2-point resolvent by direct eigenvalue quadrature (n <= 3)."""
    f = lambda lam: sum(1.0 / (x - l) for l in lam) * sum(1.0 / (y - l) for l in lam)
    num, den = _eigen_expectation(V, n, f, n_nodes)
    ex = resolvent_direct(V, n, x, n_nodes)
    ey = resolvent_direct(V, n, y, n_nodes)
    return num / den - ex * ey


def _eigen_expectation(V, n, f, n_nodes):
    if n > 3:
        raise QSCError("direct eigenvalue integrals support n <= 3")
    xs, ws = _grid(V, n_nodes)
    wgt = np.exp(-np.array([V(x) for x in xs]))
    if n == 1:
        num = np.sum(ws * wgt * f([xs]))
        return num, np.sum(ws * wgt)
    if n == 2:
        W = np.outer(ws * wgt, ws * wgt)
        vdm = (xs[:, None] - xs[None, :]) ** 2
        F = f([xs[:, None], xs[None, :]])
        return np.sum(W * vdm * F), np.sum(W * vdm)
    # n == 3: vectorized Gauss grid
    m = 64
    xg, wg = np.polynomial.legendre.leggauss(m)
    L = abs(xs[-1])
    xg, wg = L * xg, L * wg
    wgt3 = wg * np.exp(-np.array([V(x) for x in xg]))
    A = xg[:, None, None]
    B = xg[None, :, None]
    C = xg[None, None, :]
    vdm = (A - B) ** 2 * (A - C) ** 2 * (B - C) ** 2
    W = wgt3[:, None, None] * wgt3[None, :, None] * wgt3[None, None, :] * vdm
    F = f([A, B, C])
    return np.sum(W * F), np.sum(W)


def kernel_w2(V, n, x, y, n_nodes=900):
    """Two-point function from the self-reproducing kernel of the frame:
    W2(x, y) = -Tr[E11 K(x, y) E11 K(y, x)], K(x, y) = Y(y)^-1 Y(x)/(x-y)."""
    fr = MMFrame(V, n, n_nodes)
    px, py = fr.rh_value(x), fr.rh_value(y)
    e11 = np.array([[1.0, 0.0], [0.0, 0.0]])
    kxy = np.linalg.inv(py) @ px / (x - y)
    kyx = np.linalg.inv(px) @ py / (y - x)
    return -complex(np.trace(e11 @ kxy @ e11 @ kyx))


def resolvent_frame(V, n, x, n_nodes=900):
    """Resolvent from the frame: Tr( Phi(x) Ad_Y E11 ) = Tr(E11 Y^-1 Y').

    Evaluated in the Riemann-Hilbert normalization of the frame, where the
    identity with E[Tr 1/(x - M)] is pointwise exact; the exp(-V/2) dressed
    layout satisfies it only under residues at infinity.
    """
    fr = MMFrame(V, n, n_nodes)
    h = 1e-6 * max(1.0, abs(x))
    y = fr.rh_value(x)
    dy = (fr.rh_value(x + h) - fr.rh_value(x - h)) / (2 * h)
    m = np.linalg.inv(y) @ dy
    return complex(m[0, 0])


def determinantal_check(V, n, x, y, n_nodes=900):
    """(kernel-based W2, direct connected 2-resolvent, |difference|).

    The kernel formula carries the universal contact term
    <E11, E11>/(x-y)^2 = 1/(x-y)^2 relative to the cumulant; it is
    subtracted before comparing.
    """
    lhs = kernel_w2(V, n, x, y, n_nodes) - 1.0 / (x - y) ** 2
    rhs = two_resolvent_connected(V, n, x, y)
    return lhs, rhs, abs(lhs - rhs)
