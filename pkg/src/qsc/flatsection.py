"""Flat frames of a Fuchsian connection: parallel transport of dPsi = Phi Psi,
monodromy, Frobenius solutions at punctures, and the hypergeometric backend
for the three-point sl2 connection.

Branch bookkeeping is by concrete paths: a point of the universal cover is a
polyline from the basepoint, and every transported quantity carries its path.
"""

from __future__ import annotations

import threading
import weakref

import numpy as np

from . import connection as conn_mod
from . import liealg
from ._ode import integrate_linear
from .errors import (
    GammaPole,
    MatchingFailed,
    OutsideConvergenceDomain,
    PoleClearanceViolated,
    QSCError,
    ResonantCharges,
)
from ._geometry import point_segment_distance

CLEARANCE_FACTOR = 1e-3
DEFAULT_TOL = 1e-10
DEFAULT_SERIES_ORDER = 8
RING_FACTOR = 0.1


class PathSpec:
    """An ordered polyline of complex waypoints, optionally closed."""

    __slots__ = ("waypoints", "closed")

    def __init__(self, waypoints, closed=False):
        pts = [complex(w) for w in waypoints]
        if len(pts) < 1:
            raise QSCError("a path needs at least one waypoint")
        for i in range(len(pts) - 1):
            if pts[i] == pts[i + 1]:
                raise QSCError(f"consecutive waypoints {i}, {i + 1} coincide")
        self.waypoints = pts
        self.closed = bool(closed)

    def points(self):
        """Waypoints with the closing segment made explicit."""
        pts = list(self.waypoints)
        if self.closed and pts[-1] != pts[0]:
            pts.append(pts[0])
        return pts

    def key(self):
        return (tuple(self.waypoints), self.closed)

    def reversed(self):
        return PathSpec(list(reversed(self.points())), closed=self.closed)


class PathedPoint:
    """A point together with its homotopy-class path from the basepoint."""

    __slots__ = ("path",)

    def __init__(self, path):
        self.path = path

    @property
    def endpoint(self):
        return self.path.points()[-1]


class FlatFrame:
    """Transported flat section value Psi(x~) with its integrator error."""

    __slots__ = ("value", "path", "error")

    def __init__(self, value, path, error):
        self.value = value
        self.path = path
        self.error = error


def concat_paths(p1, p2):
    """Traverse p1 first, then p2 (p2 must start where p1 ends)."""
    a = p1.points()
    b = p2.points()
    if a[-1] != b[0]:
        raise QSCError("paths do not concatenate: endpoint mismatch")
    return PathSpec(a + b[1:], closed=(a[0] == b[-1]))


def pathed(conn, *waypoints):
    """PathedPoint from the basepoint through the given waypoints."""
    return PathedPoint(PathSpec([conn.basepoint.z] + [complex(w) for w in waypoints]))


def clearance_radius(conn):
    sep = conn.min_separation()
    return CLEARANCE_FACTOR * (sep if np.isfinite(sep) else 1.0)


def validate_path(conn, path, allow_pole_endpoints=False):
    pts = path.points()
    poles = [z for z, _ in conn.finite_pole_data()]
    rad = clearance_radius(conn)
    for i in range(len(pts) - 1):
        a, b = pts[i], pts[i + 1]
        for z in poles:
            if allow_pole_endpoints and (z == a or z == b):
                continue
            if point_segment_distance(z, a, b) < rad:
                raise PoleClearanceViolated(
                    f"segment {i} passes within {rad:.2e} of pole at {z}"
                )


# ---------------------------------------------------------------------------
# transport and monodromy
# ---------------------------------------------------------------------------

def _potential_matrix(conn):
    data = conn.finite_pole_data()

    def phi(x):
        out = np.zeros((conn.n, conn.n), dtype=complex)
        for z, res in data:
            out += res / (x - z)
        return out

    return phi


def transport(conn, path, psi0=None, tol=DEFAULT_TOL):
    """Solve dPsi = Phi(x) Psi dx along a polyline path."""
    if not 1e-13 <= tol <= 1e-6:
        raise QSCError(f"transport tolerance {tol} outside [1e-13, 1e-6]")
    validate_path(conn, path)
    phi = _potential_matrix(conn)
    y = np.eye(conn.n, dtype=complex) if psi0 is None else np.array(psi0, dtype=complex)
    pts = path.points()
    err = 0.0
    for i in range(len(pts) - 1):
        a, b = pts[i], pts[i + 1]
        d = b - a
        y, e = integrate_linear(lambda t: phi(a + t * d) * d, y, 0.0, 1.0, rtol=tol, atol=tol)
        err += e
    return FlatFrame(y, path, err)


def transport_nodes(conn, points, psi0=None, tol=DEFAULT_TOL):
    """Carry Psi through an ordered list of complex points (straight chords).

    Returns the list of Psi values at every point, starting with psi0 at
    points[0].  Used by quadrature rules that need the frame at many nodes.
    """
    phi = _potential_matrix(conn)
    y = np.eye(conn.n, dtype=complex) if psi0 is None else np.array(psi0, dtype=complex)
    out = [y]
    for i in range(len(points) - 1):
        a, b = points[i], points[i + 1]
        if a == b:
            out.append(y)
            continue
        d = b - a
        y, _ = integrate_linear(lambda t: phi(a + t * d) * d, y, 0.0, 1.0, rtol=tol, atol=tol)
        out.append(y)
    return out


def monodromy(conn, loop, tol=DEFAULT_TOL):
    """Monodromy S of the flat section normalized to the identity at the
    loop's starting point: S = value of transporting 1 around the loop.

    Composition convention (pinned by test): traversing loop a then loop b
    gives S(a then b) = S(b) @ S(a).
    """
    pts = loop.points()
    if pts[0] != pts[-1]:
        raise QSCError("monodromy requires a closed loop")
    return transport(conn, loop, tol=tol).value


def frame_at(conn, pathed_point, tol=DEFAULT_TOL):
    """Flat frame at a pathed point with Psi = identity at the basepoint."""
    pts = pathed_point.path.points()
    if pts[0] != conn.basepoint.z:
        raise QSCError("pathed point does not start at the basepoint")
    ws = workspace(conn)
    key = (pathed_point.path.key(), tol)
    with ws.lock:
        hit = ws.frames.get(key)
    if hit is not None:
        return hit
    fr = transport(conn, pathed_point.path, tol=tol)
    with ws.lock:
        ws.frames[key] = fr
    return fr


def sigma(conn, pathed_point, E, tol=DEFAULT_TOL):
    """Flat adjoint section Ad_Psi(E) at a pathed point."""
    em = E.entries if isinstance(E, liealg.AlgebraElement) else np.asarray(E, complex)
    psi = frame_at(conn, pathed_point, tol=tol).value
    return liealg.AlgebraElement(psi @ em @ np.linalg.inv(psi))


# ---------------------------------------------------------------------------
# canonical routes and keyhole loops
# ---------------------------------------------------------------------------

def canonical_route(conn, j, stop_radius=None):
    """Deterministic polyline from the basepoint to the ring point of pole j.

    The ring point sits on the ray from the pole toward the basepoint at the
    given radius (default RING_FACTOR times the distance to the nearest other
    pole).  Blocking poles force a single perpendicular detour.
    """
    data = conn.finite_pole_data()
    zj = data[j][0]
    o = conn.basepoint.z
    others = [z for k, (z, _) in enumerate(data) if k != j]
    delta = min((abs(zj - z) for z in others), default=2.0 * abs(o - zj))
    rho = stop_radius if stop_radius is not None else RING_FACTOR * delta
    u = (o - zj) / abs(o - zj)
    target = zj + rho * u
    margin = 0.3 * conn.min_separation() if np.isfinite(conn.min_separation()) else 0.3
    route = [o, target]
    for _ in range(4):
        blocker = None
        for i in range(len(route) - 1):
            for z in others:
                d = point_segment_distance(z, route[i], route[i + 1])
                if d < margin and z != target:
                    blocker = (i, z)
                    break
            if blocker:
                break
        if blocker is None:
            return route, rho
        i, z = blocker
        seg = route[i + 1] - route[i]
        perp = 1j * seg / abs(seg)
        route = route[: i + 1] + [z + 1.3 * margin * perp] + route[i + 1 :]
    raise PoleClearanceViolated(f"could not route around poles toward pole {j}")


def keyhole_loop(conn, j, n_circle=16, stop_radius=None):
    """Closed loop from the basepoint around pole j: approach along the
    canonical route, one counterclockwise circle, and return."""
    route, rho = canonical_route(conn, j, stop_radius)
    zj = conn.finite_pole_data()[j][0]
    w0 = route[-1] - zj
    circle = [zj + w0 * np.exp(2j * np.pi * k / n_circle) for k in range(1, n_circle)]
    pts = route + circle + [route[-1]] + list(reversed(route[:-1]))
    return PathSpec(pts, closed=False)


def pole_order_by_angle(conn):
    """Finite pole indices in the cyclic order their canonical routes leave o."""
    o = conn.basepoint.z
    data = conn.finite_pole_data()

    def leave_angle(j):
        route, _ = canonical_route(conn, j)
        return np.angle(route[1] - o)

    return sorted(range(len(data)), key=leave_angle)


def puncture_monodromies(conn, tol=DEFAULT_TOL):
    """Keyhole monodromies of all finite poles, cached."""
    ws = workspace(conn)
    with ws.lock:
        hit = ws.monodromies.get(tol)
    if hit is not None:
        return hit
    out = [monodromy(conn, keyhole_loop(conn, j), tol=tol) for j in range(len(conn.finite_pole_data()))]
    with ws.lock:
        ws.monodromies[tol] = out
    return out


# ---------------------------------------------------------------------------
# local Frobenius solutions
# ---------------------------------------------------------------------------

class LocalSolution:
    """Psi(x) = V (1 + sum_k G_k w^k) w^alpha C near pole j, w = x - z_j.

    The branch of w^alpha is fixed so that arg(w) = base_arg at the matching
    point (the ring point on the ray toward the basepoint), continued
    continuously in the angle.
    """

    def __init__(self, conn, j, V, alpha, series, C, rho, base_arg, residual, route):
        self.conn = conn
        self.j = j
        self.V = V
        self.alpha = alpha
        self.series = series
        self.C = C
        self.ring_radius = rho
        self.base_arg = base_arg
        self.residual = residual
        self.route = route
        self._z = conn.finite_pole_data()[j][0]

    @property
    def alpha_diag(self):
        return np.diag(self.alpha.entries)

    def y_series(self, w):
        """1 + sum_k G_k w^k."""
        n = self.conn.n
        out = np.eye(n, dtype=complex)
        wk = 1.0
        for g in self.series:
            wk *= w
            out = out + g * wk
        return out

    def psi(self, r, argw):
        """Psi at w = r e^{i argw} with the continued branch arg = argw."""
        w = r * np.exp(1j * argw)
        walpha = np.diag(np.exp((np.log(r) + 1j * argw) * self.alpha_diag))
        return self.V.entries @ self.y_series(w) @ walpha @ self.C.entries

    def sigma_cartan(self, w, E0_diag):
        """Flat section value Ad_Psi(Ad_C^-1 E0) for diagonal E0: branch free."""
        y = self.V.entries @ self.y_series(w)
        return y @ E0_diag @ np.linalg.inv(y)

    def monodromy_matrix(self):
        """C^-1 e^{2 pi i alpha} C: the keyhole monodromy around the pole."""
        cinv = np.linalg.inv(self.C.entries)
        return cinv @ np.diag(np.exp(2j * np.pi * self.alpha_diag)) @ self.C.entries

    def recursion_residual(self):
        """Max residual of the Frobenius recursion (k - ad_alpha) G_k = R_k."""
        amats = self._amats
        alpha = np.diag(self.alpha_diag)
        worst = 0.0
        for k, g in enumerate(self.series, start=1):
            rhs = sum(amats[k - l] @ (self.series[l - 1] if l else np.eye(self.conn.n))
                      for l in range(k))
            lhs = k * g - (alpha @ g - g @ alpha)
            worst = max(worst, float(np.abs(lhs - rhs).max()))
        return worst


def local_solution(conn, j, order=DEFAULT_SERIES_ORDER, tol=1e-12):
    """Frobenius data (V_j, alpha_j, series, C_j) at finite pole j, cached."""
    ws = workspace(conn)
    key = (j, order)
    with ws.lock:
        hit = ws.locals.get(key)
    if hit is not None:
        return hit
    data = conn.finite_pole_data()
    zj, res = data[j]
    dec = liealg.cartan_decompose(res)
    V, alpha = dec.V, dec.alpha
    vm = V.entries
    vinv = np.linalg.inv(vm)
    ad = np.diag(alpha.entries)
    n = conn.n
    # A_m = V^-1 [ sum_{i != j} (-1)^(m-1) Phi_i / (z_j - z_i)^m ] V
    amats = [ad.copy() * 0]
    for m in range(1, order + 1):
        s = np.zeros((n, n), dtype=complex)
        for k, (zk, rk) in enumerate(data):
            if k == j:
                continue
            s += (-1) ** (m - 1) * rk / (zj - zk) ** m
        amats.append(vinv @ s @ vm)
    amats[0] = np.diag(ad)
    series = []
    for k in range(1, order + 1):
        rhs = np.zeros((n, n), dtype=complex)
        for l in range(k):
            gl = series[l - 1] if l else np.eye(n)
            rhs += amats[k - l] @ gl
        gk = np.empty((n, n), dtype=complex)
        for p in range(n):
            for q in range(n):
                denom = k - (ad[p] - ad[q])
                if abs(denom) < 1e-10:
                    raise ResonantCharges(
                        f"Frobenius division by {denom:.2e} at order {k}", pole_index=j
                    )
                gk[p, q] = rhs[p, q] / denom
        series.append(gk)
    route, rho = canonical_route(conn, j)
    base_arg = float(np.angle(conn.basepoint.z - zj))
    frame = transport(conn, PathSpec(route), tol=tol)
    loc = LocalSolution(conn, j, V, alpha, series, liealg.GroupElement(np.eye(n)),
                        rho, base_arg, 0.0, route)
    loc._amats = amats
    lhs = loc.psi(rho, base_arg)  # with C = identity
    C = np.linalg.solve(lhs, frame.value)
    # strip the tiny determinant drift so C is exactly unimodular
    C /= np.linalg.det(C) ** (1.0 / n)
    loc.C = liealg.GroupElement(C)
    # matching residual at a second ring point reached along the circle
    dphi = 0.7
    arc = [zj + rho * np.exp(1j * (base_arg + dphi * t)) for t in np.linspace(0, 1, 6)]
    frame2 = transport_nodes(conn, arc, frame.value, tol=tol)[-1]
    pred = loc.psi(rho, base_arg + dphi)
    resid = float(np.abs(frame2 - pred).max() / max(1.0, np.abs(frame2).max()))
    loc.residual = resid
    # low truncation orders legitimately leave a (rho/Delta)^(K+1) tail
    allowed = max(1e-6, 100.0 * RING_FACTOR ** (order + 1))
    if resid > allowed:
        raise MatchingFailed(
            f"local solution matching residual {resid:.2e}", pole_index=j
        )
    with ws.lock:
        ws.locals[key] = loc
    return loc


# ---------------------------------------------------------------------------
# hypergeometric backend for the three-point sl2 connection
# ---------------------------------------------------------------------------

def hyp2f1_series(a, b, c, x, tol=1e-16, max_terms=4000):
    """Gauss 2F1 by its Maclaurin series, |x| < 1 region only."""
    if abs(c - round(c.real)) < 1e-12 and round(c.real) <= 0 and abs(c.imag) < 1e-12:
        raise GammaPole(f"2F1 parameter c = {c} is a nonpositive integer")
    term = 1.0 + 0j
    total = term
    for k in range(max_terms):
        term *= (a + k) * (b + k) / ((c + k) * (1.0 + k)) * x
        total += term
        if abs(term) < tol * max(1.0, abs(total)) and k > 12:
            return total
    raise OutsideConvergenceDomain("2F1 series did not converge")


def _dozz_parameters(conn):
    phi0 = conn.poles[0][1].entries
    phi1 = conn.poles[1][1].entries
    a0 = phi0[0, 0]
    B = -phi1[0, 1]
    d0 = a0 * a0
    d1 = 0.5 * np.trace(phi1 @ phi1)
    phii = -phi0 - phi1
    di = 0.5 * np.trace(phii @ phii)
    a1 = np.sqrt(d1)
    ai = np.sqrt(di)
    return a0, a1, ai, B


def hypergeom_frame(conn, x):
    """The closed-form flat section of the three-point sl2 connection.

    Columns are (psi_+, psi_-) with the second row determined by the flat
    section equation.  Valid for |x| < 0.9 off the cuts; the determinant is
    constant in x but not normalized to one.
    """
    x = complex(x)
    if abs(x) >= 0.9:
        raise OutsideConvergenceDomain(f"|x| = {abs(x):.3f} >= 0.9")
    a0, a1, ai, B = _dozz_parameters(conn)
    d0, d1, di = a0 * a0, a1 * a1, ai * ai
    pref_p = x**a0 * (1 - x) ** a1
    f_p = hyp2f1_series(a0 + a1 + ai, a0 + a1 - ai, 2 * a0, x)
    fp_p = ((a0 + a1 + ai) * (a0 + a1 - ai) / (2 * a0)) * hyp2f1_series(
        a0 + a1 + ai + 1, a0 + a1 - ai + 1, 2 * a0 + 1, x
    )
    psi_p = pref_p * f_p
    dpsi_p = pref_p * ((a0 / x - a1 / (1 - x)) * f_p + fp_p)
    # second Kummer solution at 0: parameters a-c+1, b-c+1, 2-c
    am, bm, cm = 1 + a1 - a0 + ai, 1 + a1 - a0 - ai, 2 - 2 * a0
    pref_m = B / (1 - 2 * a0) * x ** (1 - a0) * (1 - x) ** a1
    f_m = hyp2f1_series(am, bm, cm, x)
    fp_m = (am * bm / cm) * hyp2f1_series(am + 1, bm + 1, cm + 1, x)
    psi_m = pref_m * f_m
    dpsi_m = pref_m * (((1 - a0) / x - a1 / (1 - x)) * f_m + fp_m)
    # second row from the (1,*) component of dPsi = Phi Psi
    t = (d0 + d1 - di) / (2 * a0)
    phi11 = a0 / x - t / (x - 1)
    phi12 = -B / (x - 1)
    row2_p = (dpsi_p - phi11 * psi_p) / phi12
    row2_m = (dpsi_m - phi11 * psi_m) / phi12
    return np.array([[psi_p, psi_m], [row2_p, row2_m]], dtype=complex)


# ---------------------------------------------------------------------------
# per-connection cache
# ---------------------------------------------------------------------------

class Workspace:
    def __init__(self):
        self.lock = threading.Lock()
        self.frames = {}
        self.locals = {}
        self.monodromies = {}
        self.extras = {}


_workspaces = weakref.WeakKeyDictionary()
_ws_lock = threading.Lock()


def workspace(conn):
    with _ws_lock:
        ws = _workspaces.get(conn)
        if ws is None:
            ws = Workspace()
            _workspaces[conn] = ws
        return ws
