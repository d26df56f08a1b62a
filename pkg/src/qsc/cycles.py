"""Generalized homology of the quantum spectral curve at genus zero.

A chain term is a polyline carrying the value of a flat adjoint section at
its start; the section along the term is the flat transport of that value.
Third-kind terms may end at a pole.  Period integrals of arcs ending at
poles follow the squeeze scheme: the weight is split at a ring radius into
its local Cartan part (integrated to the pole with the regularized
counterterms) and root parts (replaced by twisted circle integrals with the
1/(1 - e^{2 pi i r(alpha)}) factors).

Basis cycles sharing the basepoint and the canonical arcs are built with
per-cycle lane offsets and a small basepoint fan, so that distinct cycles
are pairwise transversal; intersection numbers are computed geometrically
from oriented crossings of these honest representatives.
"""

from __future__ import annotations

import numpy as np

from . import flatsection as fs
from . import liealg
from ._geometry import (
    crossing_sign,
    point_segment_distance,
    segment_crossing,
)
from ._ode import graded_panels, panel_nodes
from .errors import (
    BasisDegenerate,
    DivergentPeriod,
    InconsistentVariation,
    NonTransversal,
    QSCError,
)

SERIES_ORDER = 20
GAUSS_PTS = 16
LANE_FACTOR = 0.012    # per-index perpendicular lane offset, times min separation
RING_STEP = 0.09       # per-index relative enlargement of localized circle radii


# ---------------------------------------------------------------------------
# chains and cycles
# ---------------------------------------------------------------------------

class Term:
    """One weighted chain simplex: a polyline with the section value at start.

    Arc terms are anchored at the basepoint o (the regularized period
    counterterms are referenced there); copies of the same route are
    separated by nested left offsets, and the shared-basepoint intersection
    contributions are resolved combinatorially by the germ rule below.
    """

    __slots__ = ("path", "weight0", "end_pole", "circle", "_samples")

    def __init__(self, path, weight0, end_pole=None, circle=None):
        self.path = path
        self.weight0 = np.asarray(weight0, dtype=complex)
        self.end_pole = end_pole  # pole index if the path ends at a pole
        self.circle = circle      # (pole index, radius, start angle) for circles
        self._samples = {}

    def scaled(self, c):
        t = Term(self.path, c * self.weight0, self.end_pole, self.circle)
        return t


class WeightedChain:
    def __init__(self, terms):
        self.terms = list(terms)


class GeneralizedCycle(WeightedChain):
    """A weighted chain with vanishing boundary."""

    def __init__(self, terms, kind="first", meta=None):
        super().__init__(terms)
        self.kind = kind
        self.meta = meta or {}

    def scaled(self, c):
        return GeneralizedCycle([t.scaled(c) for t in self.terms], self.kind, dict(self.meta))


def combine(cycles, coeffs, kind="combination"):
    terms = []
    for cyc, c in zip(cycles, coeffs):
        if abs(c) < 1e-14:
            continue
        terms.extend(t.scaled(c) for t in cyc.terms)
    return GeneralizedCycle(terms, kind=kind)


def term_end_value(conn, term, tol=1e-11):
    """Section value at the end of a term (end must not be a pole)."""
    pts = term.path.points()
    vals = fs.transport_nodes(conn, pts, np.eye(conn.n, dtype=complex), tol=tol)
    u = vals[-1]
    return u @ term.weight0 @ np.linalg.inv(u)


def boundary(conn, chain, tol=1e-11):
    """Net section values at chain endpoints; pole endpoints contribute zero."""
    poles = [z for z, _ in conn.finite_pole_data()]
    scale = conn.pole_scale()
    events = []
    for term in chain.terms:
        pts = term.path.points()
        start, end = pts[0], pts[-1]
        if not _is_pole(start, poles, scale):
            events.append((start, -term.weight0))
        if not _is_pole(end, poles, scale):
            events.append((end, term_end_value(conn, term, tol)))
    out = []
    for p, m in events:
        for k, (q, acc) in enumerate(out):
            if abs(p - q) < 1e-9 * max(1.0, scale):
                out[k] = (q, acc + m)
                break
        else:
            out.append((p, np.array(m)))
    return out


def boundary_norm(conn, chain, tol=1e-11):
    b = boundary(conn, chain, tol)
    return max((float(np.abs(m).max()) for _, m in b), default=0.0)


def _is_pole(p, poles, scale):
    return any(abs(p - z) < 1e-9 * max(1.0, scale) for z in poles)


# ---------------------------------------------------------------------------
# sampling of cycles for quadrature (squeezed representation)
# ---------------------------------------------------------------------------

class SampleTable:
    """Quadrature nodes of a cycle: xs, complex dx-weights, section values.

    cartan_residue[j] accumulates the diagonal local Cartan coordinate of
    the arcs ending at pole j (oriented toward the pole); it is the exact
    simple-pole datum of sum-type forms built from this cycle.
    """

    def __init__(self):
        self.xs = []
        self.ws = []
        self.sigmas = []
        self.cartan_vals = []  # flat Cartan sub-section values (None off pole arcs)
        self.cartan_residue = {}
        self.support = []  # list of (a, b) segments for crossing detection
        self.boundary_terms = []  # (point, matrix): oriented piece-end values

    def arrays(self):
        return (
            np.asarray(self.xs, dtype=complex),
            np.asarray(self.ws, dtype=complex),
            np.asarray(self.sigmas, dtype=complex),
        )


def _segment_nodes(conn, a, b, extra_breaks=(), structures=(), floor_rel=1e-6):
    """Gauss panel nodes on segment [a, b].

    Panels are split at the given break parameters (support crossings of the
    integrand, with geometric grading toward each break), and recursively
    refined so that each panel is shorter than a fraction of its distance to
    the poles and to any extra structure points/segments, down to a relative
    floor.  Structure segments that cross [a, b] enter through their
    crossing point only (the break handles the jump across them).
    """
    pts = [z for z, _ in conn.finite_pole_data()]
    segs = []
    for s in structures:
        if isinstance(s, tuple):
            c, d = s
            if c == d:
                pts.append(c)
                continue
            hit = segment_crossing(a, b, c, d)
            if hit is None:
                segs.append(s)
            else:
                pts.append(hit[2])
        else:
            pts.append(complex(s))

    def dist(t0, t1):
        probes = [a + t * (b - a) for t in (t0, 0.5 * (t0 + t1), t1)]
        d = min(
            (min(abs(p - q) for q in probes) for p in pts),
            default=np.inf,
        )
        for (c, dd) in segs:
            d = min(d, min(point_segment_distance(q, c, dd) for q in probes))
        return d

    L = abs(b - a)
    panels = []

    def refine(t0, t1):
        stack = [(t0, t1)]
        while stack:
            u0, u1 = stack.pop()
            if (u1 - u0) <= floor_rel or (u1 - u0) * L <= 0.45 * dist(u0, u1):
                panels.append((u0, u1))
            else:
                um = 0.5 * (u0 + u1)
                stack.append((u0, um))
                stack.append((um, u1))

    cuts = {0.0, 1.0}
    graded = []
    for t in extra_breaks:
        if 0.0 < t < 1.0:
            cuts.add(t)
            graded.append(t)
    # geometric grading toward each break from both sides
    for t in graded:
        step = 0.2
        while step > 2e-6:
            for s in (-1, 1):
                u = t + s * step
                if 0.0 < u < 1.0:
                    cuts.add(u)
            step *= 0.25
    cuts = sorted(cuts)
    for k in range(len(cuts) - 1):
        refine(cuts[k], cuts[k + 1])
    panels.sort()
    breaks = [panels[0][0]] + [p[1] for p in panels]
    ts, ws = panel_nodes(breaks, GAUSS_PTS)
    return a + ts * (b - a), ws * (b - a)


def sample_cycle(conn, cycle, tol=1e-11, breaks_for=None, structures=()):
    """Squeezed sample table of a cycle (cached on its terms).

    breaks_for: optional callable (a, b) -> list of parameters in (0,1)
    where the integrand is known to jump (support crossings of the outer
    integration).  structures: extra points/segments the sampling must
    refine against.  Passing either disables caching.
    """
    cache_ok = breaks_for is None and not structures
    table = SampleTable()
    for term in cycle.terms:
        key = "samples"
        if cache_ok and key in term._samples:
            part = term._samples[key]
        else:
            part = _sample_term(conn, term, tol, breaks_for, structures)
            if cache_ok:
                term._samples[key] = part
        table.xs.extend(part.xs)
        table.ws.extend(part.ws)
        table.sigmas.extend(part.sigmas)
        table.cartan_vals.extend(part.cartan_vals)
        table.support.extend(part.support)
        table.boundary_terms.extend(part.boundary_terms)
        for j, r in part.cartan_residue.items():
            table.cartan_residue[j] = table.cartan_residue.get(j, 0) + r
    # merge boundary terms at coinciding points (anchor terms cancel for
    # closed cycles); drop negligible remainders
    merged = []
    for p, m in table.boundary_terms:
        for k, (q, acc) in enumerate(merged):
            if abs(p - q) < 1e-12 * max(1.0, conn.pole_scale()):
                merged[k] = (q, acc + m)
                break
        else:
            merged.append((p, np.array(m)))
    scale = max((np.abs(m).max() for _, m in merged), default=1.0)
    table.boundary_terms = [
        (p, m) for p, m in merged if np.abs(m).max() > 1e-13 * max(1.0, scale)
    ]
    return table


def _sample_term(conn, term, tol, breaks_for, structures=()):
    out = SampleTable()
    pts = term.path.points()
    j = term.end_pole
    if j is None:
        sig_end, _ = _sample_regular(conn, out, pts, term.weight0, tol, breaks_for, structures)
        out.cartan_vals = [None] * len(out.xs)
        out.boundary_terms.append((pts[0], -np.asarray(term.weight0, complex)))
        out.boundary_terms.append((pts[-1], sig_end))
        return out
    # arc ending at a pole: regular part up to the ring point, then the tail
    loc = fs.local_solution(conn, j, SERIES_ORDER)
    zj = conn.finite_pole_data()[j][0]
    if pts[-1] != zj:
        raise QSCError("pole-ending term does not end at the pole coordinate")
    ring_pt = pts[-2]
    sigma_ring, umats = _sample_regular(conn, out, pts[:-1], term.weight0, tol, breaks_for, structures)
    w_r = ring_pt - zj
    arg_r = loc.base_arg + _wrap(np.angle(w_r) - loc.base_arg)
    # local coordinate D in the diagonal frame: sigma = Ad_{V Y w^alpha}(D)
    vy = loc.V.entries @ loc.y_series(w_r)
    walpha = np.diag(np.exp((np.log(abs(w_r)) + 1j * arg_r) * loc.alpha_diag))
    frame = vy @ walpha
    D = np.linalg.inv(frame) @ sigma_ring @ frame
    E0 = np.diag(np.diag(D))
    out.cartan_residue[j] = out.cartan_residue.get(j, 0) + E0
    out.boundary_terms.append((pts[0], -np.asarray(term.weight0, complex)))
    out.boundary_terms.append((ring_pt, sigma_ring))
    # Cartan sub-section values along the outer arc, for the counterterm
    sig0_ring = vy @ E0 @ np.linalg.inv(vy)
    u_end = umats[-1]
    sig0_start = np.linalg.inv(u_end) @ sig0_ring @ u_end
    out.cartan_vals = [u @ sig0_start @ np.linalg.inv(u) for u in umats[:-1]]
    # tail boundary: -sigma0 at the ring, +Ad_V(E0) at the pole
    out.boundary_terms.append((ring_pt, -sig0_ring))
    out.boundary_terms.append(
        (zj, loc.V.entries @ E0 @ np.linalg.inv(loc.V.entries))
    )
    # Cartan tail: analytic section Ad_{V Y}(E0) from the ring to the pole
    tpan = graded_panels(10, 3.0)
    ts, tws = panel_nodes(tpan, GAUSS_PTS)
    for t, wq in zip(ts, tws):
        w = w_r * (1.0 - t)
        y = loc.V.entries @ loc.y_series(w)
        s0 = y @ E0 @ np.linalg.inv(y)
        out.xs.append(zj + w)
        out.ws.append(wq * (-w_r))
        out.sigmas.append(s0)
        out.cartan_vals.append(s0)
    out.support.append((ring_pt, zj))
    # root parts: twisted circles at the ring radius with squeeze factors
    ad = loc.alpha_diag
    n = conn.n
    cpan = graded_panels(12)
    cts, cws = panel_nodes(cpan, GAUSS_PTS)
    for p in range(n):
        for q in range(n):
            if p == q or abs(D[p, q]) < 1e-14:
                continue
            ralpha = ad[p] - ad[q]
            factor = 1.0 / (1.0 - np.exp(2j * np.pi * ralpha))
            epq = np.zeros((n, n), dtype=complex)
            epq[p, q] = D[p, q]
            for t, wq in zip(cts, cws):
                theta = 2 * np.pi * t
                argw = arg_r + theta
                w = abs(w_r) * np.exp(1j * argw)
                x = zj + w
                dx = 1j * w * 2 * np.pi * wq
                y = loc.V.entries @ loc.y_series(w)
                tw = np.exp((np.log(abs(w_r)) + 1j * argw) * ralpha)
                sig = factor * tw * (y @ epq @ np.linalg.inv(y))
                out.xs.append(x)
                out.ws.append(dx)
                out.sigmas.append(sig)
                out.cartan_vals.append(None)
            # seam: the twisted section is not single valued around the circle
            w0c = abs(w_r) * np.exp(1j * arg_r)
            y0 = loc.V.entries @ loc.y_series(w0c)
            tw0 = np.exp((np.log(abs(w_r)) + 1j * arg_r) * ralpha)
            sig0c = factor * tw0 * (y0 @ epq @ np.linalg.inv(y0))
            seam = (np.exp(2j * np.pi * ralpha) - 1.0) * sig0c
            out.boundary_terms.append((zj + w0c, seam))
    return out


def _sample_regular(conn, out, pts, weight0, tol, breaks_for, structures=()):
    """Sample a polyline with the transported section.

    Returns (end section value, transport matrices at all emitted nodes plus
    the final endpoint).
    """
    sigma = np.asarray(weight0, dtype=complex)
    umats = []
    u_acc = np.eye(conn.n, dtype=complex)
    for i in range(len(pts) - 1):
        a, b = pts[i], pts[i + 1]
        extra = breaks_for(a, b) if breaks_for else ()
        xs, ws = _segment_nodes(conn, a, b, extra, structures)
        chain_pts = [a] + list(xs) + [b]
        vals = fs.transport_nodes(conn, chain_pts, u_acc, tol=tol)
        for x, wq, u in zip(xs, ws, vals[1:-1]):
            out.xs.append(x)
            out.ws.append(wq)
            out.sigmas.append(u @ weight0 @ np.linalg.inv(u))
            umats.append(u)
        u_acc = vals[-1]
        out.support.append((a, b))
    umats.append(u_acc)
    sigma = u_acc @ np.asarray(weight0, complex) @ np.linalg.inv(u_acc)
    return sigma, umats


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


# ---------------------------------------------------------------------------
# periods (Poincare pairing with generalized one-forms)
# ---------------------------------------------------------------------------

def _form_residue(form, conn, j):
    r = getattr(form, "cartan_residue", None)
    if r is None:
        return None
    return r(conn, j)


def period(conn, cycle, form, tol=1e-11, breaks_for=None, structures=()):
    """Regularized integral of the generalized one-form over the cycle.

    form(x, sigma) evaluates the dx-coefficient paired with the section
    value sigma.  For arcs ending at a pole the form must expose
    cartan_residue(conn, j) -> diagonal matrix R0 (in the V_j frame) such
    that form(x, sigma0(x)) ~ Tr(Ad_V(R0) sigma0(x)) / (x - z_j); the
    Appendix-type counterterm -Tr(R0 E0) log(start - z_j) is then added.
    """
    total = 0j
    for term in cycle.terms:
        total += _term_period(conn, term, form, tol, breaks_for, structures)
    return total


def _term_period(conn, term, form, tol, breaks_for, structures=()):
    j = term.end_pole
    tab = SampleTable()
    if j is None:
        _sample_regular(conn, tab, term.path.points(), term.weight0, tol, breaks_for, structures)
        xs, ws, sigmas = tab.arrays()
        return complex(sum(form(x, s) * w for x, w, s in zip(xs, ws, sigmas)))
    part = term._samples.get("samples")
    if part is None or breaks_for is not None or structures:
        part = _sample_term(conn, term, tol, breaks_for, structures)
        if breaks_for is None and not structures:
            term._samples["samples"] = part
    r0 = _form_residue(form, conn, j)
    if r0 is None:
        raise DivergentPeriod(
            "form provides no Cartan Laurent data at the pole", pole_index=j
        )
    loc = fs.local_solution(conn, j, SERIES_ORDER)
    zj = conn.finite_pole_data()[j][0]
    vr0v = loc.V.entries @ r0 @ np.linalg.inv(loc.V.entries)
    E0 = part.cartan_residue.get(j)
    total = 0j
    ct_scale = complex(np.trace(r0 @ E0))
    # subtract the principal part paired with the flat Cartan sub-section
    # along the arc, then add the boundary counterterm at the start point
    for x, w, s, s0 in zip(part.xs, part.ws, part.sigmas, part.cartan_vals):
        val = form(x, s)
        if s0 is not None:
            val -= np.trace(vr0v @ s0) / (x - zj)
        total += val * w
    start = term.path.points()[0]
    total -= ct_scale * np.log(start - zj)
    return complex(total)


# ---------------------------------------------------------------------------
# intersections
# ---------------------------------------------------------------------------

def _cycle_segments(cycle):
    segs = []
    for ti, term in enumerate(cycle.terms):
        pts = term.path.points()
        for i in range(len(pts) - 1):
            segs.append((ti, i, pts[i], pts[i + 1]))
    return segs


class _Piece:
    """A crossable portion of a cycle: a segment chain or an exact arc."""

    __slots__ = ("kind", "pts", "sigma_seg", "center", "radius", "th0", "th1",
                 "sigma_arc")

    def __init__(self, kind, pts=None, sigma_seg=None, center=None, radius=None,
                 th0=None, th1=None, sigma_arc=None):
        self.kind = kind          # "seg" or "arc"
        self.pts = pts
        self.sigma_seg = sigma_seg  # (seg_idx, t) -> section value
        self.center = center
        self.radius = radius
        self.th0 = th0            # arc runs counterclockwise th0 -> th1
        self.th1 = th1
        self.sigma_arc = sigma_arc  # theta -> section value

    def segments(self):
        return [
            (i, self.pts[i], self.pts[i + 1]) for i in range(len(self.pts) - 1)
        ]


def _piece_crossings(p1, p2):
    """Transversal crossings between two pieces.

    Yields (point, tangent1, tangent2, sigma1, sigma2) per crossing; raises
    NonTransversal on degenerate geometry.
    """
    out = []
    if p1.kind == "seg" and p2.kind == "seg":
        for i1, a0, a1 in p1.segments():
            for i2, b0, b1 in p2.segments():
                hit = segment_crossing(a0, a1, b0, b1)
                if hit is None:
                    continue
                t, s, p = hit
                if min(t, 1 - t, s, 1 - s) < 1e-9:
                    raise NonTransversal("crossing near a segment endpoint")
                out.append((p, a1 - a0, b1 - b0,
                            p1.sigma_seg(i1, t), p2.sigma_seg(i2, s)))
        return out
    if p1.kind == "seg" and p2.kind == "arc":
        for i1, a0, a1 in p1.segments():
            for p, th in _segment_arc_crossings(a0, a1, p2):
                t = ((p - a0) * np.conj(a1 - a0)).real / abs(a1 - a0) ** 2
                out.append((p, a1 - a0, 1j * np.exp(1j * th),
                            p1.sigma_seg(i1, t), p2.sigma_arc(th)))
        return out
    if p1.kind == "arc" and p2.kind == "seg":
        for p, t1, t2, s1, s2 in _piece_crossings(p2, p1):
            out.append((p, t2, t1, s2, s1))
        return out
    # arc x arc
    d = abs(p2.center - p1.center)
    if d < 1e-13:
        if abs(p1.radius - p2.radius) < 1e-12:
            raise NonTransversal("coincident circles")
        return out  # concentric: no crossings
    r1, r2 = p1.radius, p2.radius
    if d >= r1 + r2 or d <= abs(r1 - r2):
        return out
    a = (r1**2 - r2**2 + d**2) / (2 * d)
    h2 = r1**2 - a**2
    if h2 <= 0:
        return out
    h = np.sqrt(h2)
    u = (p2.center - p1.center) / d
    for sgn in (1, -1):
        p = p1.center + a * u + sgn * h * 1j * u
        th1 = _arc_param(p1, p)
        th2 = _arc_param(p2, p)
        if th1 is None or th2 is None:
            continue
        out.append((p, 1j * np.exp(1j * th1), 1j * np.exp(1j * th2),
                    p1.sigma_arc(th1), p2.sigma_arc(th2)))
    return out


def _segment_arc_crossings(a0, a1, arc):
    """Intersections of segment [a0, a1] with an arc piece."""
    d = a1 - a0
    f = a0 - arc.center
    A = abs(d) ** 2
    B = 2 * (f * np.conj(d)).real
    C = abs(f) ** 2 - arc.radius**2
    disc = B * B - 4 * A * C
    if disc <= 0:
        return []
    out = []
    for sgn in (1, -1):
        t = (-B + sgn * np.sqrt(disc)) / (2 * A)
        if not 1e-9 < t < 1 - 1e-9:
            continue
        p = a0 + t * d
        th = _arc_param(arc, p)
        if th is not None:
            out.append((p, th))
    return out


def _arc_param(arc, p):
    """Continued angle of point p on the arc, or None if outside its span."""
    th = np.angle(p - arc.center)
    k0 = np.ceil((arc.th0 - th) / (2 * np.pi))
    th_c = th + 2 * np.pi * k0
    if arc.th0 - 1e-12 <= th_c <= arc.th1 + 1e-12:
        return float(th_c)
    return None


def _crossable_pieces(conn, cycle, tol=1e-11):
    """Squeezed crossing geometry of a cycle.

    Pole-ending arcs are represented by their outer polyline (transported
    section), the analytic Cartan tail, and exact twisted root circles;
    circle terms by exact arcs with the local-series section; other terms
    by their raw polylines.
    """
    pieces = []
    for term in cycle.terms:
        pts = term.path.points()
        j = term.end_pole
        if j is None and term.circle is None:
            def make_eval(term=term):
                return lambda i, t: _section_at(conn, term, i, t, tol)

            pieces.append(_Piece("seg", pts=pts, sigma_seg=make_eval()))
            continue
        if term.circle is not None:
            cj, rho, th0 = term.circle
            loc = fs.local_solution(conn, cj, SERIES_ORDER)
            zj = conn.finite_pole_data()[cj][0]
            u0 = _section_at(conn, term, 0, 0.0, tol)  # value at circle start
            w0 = rho * np.exp(1j * th0)
            y0 = loc.V.entries @ loc.y_series(w0)
            # resolve the flat coordinate in the analytic frame (centralizer
            # weights only: the diagonal part in the local frame)
            D0 = np.linalg.inv(y0) @ u0 @ y0

            def make_circle_eval(loc=loc, D0=D0, zj=zj, rho=rho):
                def ev(th):
                    w = rho * np.exp(1j * th)
                    y = loc.V.entries @ loc.y_series(w)
                    return y @ D0 @ np.linalg.inv(y)
                return ev

            pieces.append(_Piece("arc", center=zj, radius=rho,
                                 th0=th0, th1=th0 + 2 * np.pi,
                                 sigma_arc=make_circle_eval()))
            continue
        loc = fs.local_solution(conn, j, SERIES_ORDER)
        zj = conn.finite_pole_data()[j][0]
        ring_pt = pts[-2]
        w_r = ring_pt - zj
        arg_r = loc.base_arg + _wrap(np.angle(w_r) - loc.base_arg)
        part = term._samples.get("samples")
        if part is None:
            part = _sample_term(conn, term, tol, None)
            term._samples["samples"] = part
        E0 = part.cartan_residue[j]
        sigma_ring = _section_at(conn, term, len(pts) - 3, 1.0, tol)
        vy_r = loc.V.entries @ loc.y_series(w_r)
        walpha = np.diag(np.exp((np.log(abs(w_r)) + 1j * arg_r) * loc.alpha_diag))
        frame = vy_r @ walpha
        D = np.linalg.inv(frame) @ sigma_ring @ frame

        # outer polyline (up to the ring point), transported section
        def outer_eval(term=term):
            return lambda i, t: _section_at(conn, term, i, t, tol)

        pieces.append(_Piece("seg", pts=pts[:-1], sigma_seg=outer_eval()))

        # Cartan tail, analytic section
        def make_tail(loc=loc, E0=E0, zj=zj, ring_pt=ring_pt):
            def ev(i, t):
                x = ring_pt + t * (zj - ring_pt)
                y = loc.V.entries @ loc.y_series(x - zj)
                return y @ E0 @ np.linalg.inv(y)
            return ev

        pieces.append(_Piece("seg", pts=[ring_pt, zj], sigma_seg=make_tail()))

        # exact root circles with the squeeze factors
        n = conn.n
        ad = loc.alpha_diag
        for p in range(n):
            for q in range(n):
                if p == q or abs(D[p, q]) < 1e-14:
                    continue
                ralpha = ad[p] - ad[q]
                factor = 1.0 / (1.0 - np.exp(2j * np.pi * ralpha))
                epq = np.zeros((n, n), dtype=complex)
                epq[p, q] = D[p, q]

                def make_circ(loc=loc, epq=epq, factor=factor, ralpha=ralpha,
                              rho=abs(w_r)):
                    def ev(th):
                        w = rho * np.exp(1j * th)
                        y = loc.V.entries @ loc.y_series(w)
                        tw = np.exp((np.log(rho) + 1j * th) * ralpha)
                        return factor * tw * (y @ epq @ np.linalg.inv(y))
                    return ev

                pieces.append(_Piece("arc", center=zj, radius=abs(w_r),
                                     th0=arg_r, th1=arg_r + 2 * np.pi,
                                     sigma_arc=make_circ()))
    return pieces


def _chi(z):
    """Branch indicator of the principal log: L(z) - L(-z) = i pi chi(z)."""
    if z.imag > 0 or (z.imag == 0 and z.real < 0):
        return 1.0
    return -1.0


def _germs(conn, cycle, tol=1e-11):
    """Oriented germ tips of a cycle at the basepoint.

    Terms starting at o contribute (tip vector, weight at o); terms ending
    at o contribute their incoming leg reversed: (tip, -end value).
    """
    o = conn.basepoint.z
    out = []
    for term in cycle.terms:
        pts = term.path.points()
        if pts[0] == o:
            out.append((pts[1] - o, term.weight0))
        if pts[-1] == o and len(pts) > 1:
            out.append((pts[-2] - o, -term_end_value(conn, term, tol)))
    return out


def _basepoint_contribution(conn, c1, c2, tol=1e-11):
    """Shared-basepoint pairing term from the double-period asymmetry:
    (1/2) sum_{a,b} <u_a, v_b> sign(sin(phi_b - phi_a)) over germ angles,
    pinned against the berginter identity."""
    g1 = _germs(conn, c1, tol)
    g2 = _germs(conn, c2, tol)
    if not g1 or not g2:
        return 0j
    total = 0j
    for wa, ua in g1:
        for wb, vb in g2:
            s = np.sin(np.angle(wb) - np.angle(wa))
            if abs(s) < 1e-12:
                raise NonTransversal("coincident germ directions at the basepoint")
            total += 0.5 * np.sign(s) * np.trace(ua @ vb)
    return total


def _tails(conn, cycle, tol=1e-11):
    """Cartan tail data of pole-ending terms: {j: [(ring vector, E0 diag)]}."""
    out = {}
    for term in cycle.terms:
        j = term.end_pole
        if j is None:
            continue
        part = term._samples.get("samples")
        if part is None:
            part = _sample_term(conn, term, tol, None)
            term._samples["samples"] = part
        zj = conn.finite_pole_data()[j][0]
        ring = term.path.points()[-2] - zj
        E0 = part.cartan_residue[j]
        out.setdefault(j, []).append((ring, E0, term))
    return out


def _pole_wedge_contribution(conn, c1, c2, tol=1e-11):
    """Shared-pole pairing term between Cartan tails.

    For tails into the same pole with ring vectors w1, w2 and local Cartan
    coordinates E0, F0 the regularized double-period asymmetry contributes
    -(1/2) <E0, F0> chi(w2 - w1), pinned against the berginter identity.
    """
    t1 = _tails(conn, c1, tol)
    t2 = _tails(conn, c2, tol)
    total = 0j
    for j, lst1 in t1.items():
        for w1, e1, _ in lst1:
            for w2, e2, _ in t2.get(j, ()):
                d = w2 - w1
                if abs(d) < 1e-13:
                    raise NonTransversal("coincident tail directions at a pole")
                total += -0.5 * np.trace(e1 @ e2) * _chi(d)
    return total


def _section_at(conn, term, seg_idx, t, tol=1e-11):
    pts = term.path.points()
    chain = pts[: seg_idx + 1] + [pts[seg_idx] + t * (pts[seg_idx + 1] - pts[seg_idx])]
    chain = [p for k, p in enumerate(chain) if k == 0 or p != chain[k - 1]]
    vals = fs.transport_nodes(conn, chain, np.eye(conn.n, dtype=complex), tol=tol)
    u = vals[-1]
    return u @ term.weight0 @ np.linalg.inv(u)


def intersection(conn, c1, c2, tol=1e-11):
    """Oriented sum over transversal crossings of the paired section values."""
    if c1 is c2:
        rebuild = c1.meta.get("rebuild")
        if rebuild is None:
            return 0.0
        c2 = rebuild()
    total = _basepoint_contribution(conn, c1, c2, tol)
    total += _pole_wedge_contribution(conn, c1, c2, tol)
    poles = [z for z, _ in conn.finite_pole_data()]
    scale = conn.pole_scale()
    pieces1 = _crossable_pieces(conn, c1, tol)
    pieces2 = _crossable_pieces(conn, c2, tol)
    for p1 in pieces1:
        for p2 in pieces2:
            for p, t1, t2, s1, s2 in _piece_crossings(p1, p2):
                if _is_pole(p, poles, scale):
                    raise NonTransversal("crossing at a pole")
                total += crossing_sign(t1, t2) * np.trace(s1 @ s2)
    return complex(total)


# ---------------------------------------------------------------------------
# rigid Chevalley basis (genus-0 arc system)
# ---------------------------------------------------------------------------

class CycleBasis:
    """Ordered cycles with their intersection matrix and Darboux data."""

    def __init__(self, conn, cycles, labels, I=None):
        self.conn = conn
        self.cycles = cycles
        self.labels = labels
        self.I = I
        self.A_coeffs = None
        self.B_coeffs = None
        self.pair_labels = None
        self.n_leading = None

    def intersection_matrix(self, tol=1e-11):
        if self.I is None:
            m = len(self.cycles)
            I = np.zeros((m, m), dtype=complex)
            for a in range(m):
                for b in range(a + 1, m):
                    v = intersection(self.conn, self.cycles[a], self.cycles[b], tol)
                    I[a, b] = v
                    I[b, a] = -v
            self.I = I
        return self.I

    def condition_number(self):
        return float(np.linalg.cond(self.intersection_matrix()))

    def cycle_from_coeffs(self, coeffs):
        return combine(self.cycles, coeffs)


def _lane_geometry(conn, idx, j, lane_off):
    """Polyline from the basepoint to pole j, left-offset by the cycle index.

    All lanes are anchored at o (the regularization counterterms reference
    it); copies of the same route at different offsets never cross away
    from their shared endpoints, and the shared-endpoint resolutions at o
    and at the poles are the germ and wedge terms of the intersection.
    """
    route, rho = fs.canonical_route(conn, j)
    zj = conn.finite_pole_data()[j][0]
    s = lane_off * (idx + 1)
    lane = [conn.basepoint.z]
    for k in range(1, len(route) - 1):
        d = route[k] - route[k - 1]
        lane.append(route[k] + s * 1j * d / abs(d))
    base_arg = np.angle(conn.basepoint.z - zj)
    lane.append(zj + np.exp(1j * base_arg) * (rho - 1j * s))
    lane.append(zj)
    return lane


def _gap_direction(conn):
    """Unit vector into the widest angular gap between canonical routes at o."""
    o = conn.basepoint.z
    angs = sorted(
        np.angle(fs.canonical_route(conn, j)[1] - o)
        for j in range(len(conn.finite_pole_data()))
    )
    gaps = [(angs[(k + 1) % len(angs)] - angs[k]) % (2 * np.pi) for k in range(len(angs))]
    k = int(np.argmax(gaps))
    mid = angs[k] + gaps[k] / 2.0
    return np.exp(1j * mid)


def _arc_term(conn, idx, j, coord, lane_off, tol=1e-11):
    """Arc term to pole j whose flat coordinate at the basepoint is coord."""
    lane = _lane_geometry(conn, idx, j, lane_off)
    return Term(fs.PathSpec(lane), np.asarray(coord, complex), end_pole=j)


def _circle_term(conn, idx, j, coord, tol=1e-11):
    """Counterclockwise circle around pole j carrying the flat coordinate."""
    loc = fs.local_solution(conn, j, SERIES_ORDER)
    zj = conn.finite_pole_data()[j][0]
    rho = loc.ring_radius * (1.0 + RING_STEP * (idx + 1))
    start = zj + rho * np.exp(1j * loc.base_arg)
    route, _ = fs.canonical_route(conn, j)
    approach = route[:-1] + [start]
    u = fs.transport_nodes(conn, approach, tol=tol)[-1]
    w0 = u @ coord @ np.linalg.inv(u)
    npts = 24
    pts = [zj + rho * np.exp(1j * (loc.base_arg + 2 * np.pi * k / npts)) for k in range(npts)]
    pts.append(start)
    return Term(fs.PathSpec(pts), w0, end_pole=None, circle=(j, rho, loc.base_arg))


def rigid_basis(conn, tol=1e-11):
    """The integer-coefficient rigid family of third-kind cycles at genus 0.

    Members (0-based pole labels, pole M-1 is the excluded one):
      Gamma_{j,r}  = gamma_j (x) E_r - gamma_0 (x) E_r     j = 1..M-2, all roots r
      Gt_{j,s}     = gamma_j (x) H_s - gamma_0 (x) H_s     j = 1..M-1, simple s
      A_{j,s}      = circle_j (x) Ad_{C_j}^-1 H_s          j = 0..M-2, simple s
    """
    M = len(conn.finite_pole_data())
    if M < 2:
        raise QSCError("rigid basis needs at least two poles")
    n = conn.n
    cartan, roots, vectors = liealg.chevalley_basis(n)
    lane_off = LANE_FACTOR * min(1.0, conn.min_separation())
    cycles, labels = [], []
    idx = 0

    def add(cyc, label):
        nonlocal idx
        cyc.meta["index"] = idx
        cycles.append(cyc)
        labels.append(label)
        idx += 1

    for j in range(1, M - 1):
        for (p, q), ev in zip(roots, [v.entries for v in vectors]):
            i = idx
            t1 = _arc_term(conn, i, j, ev, lane_off, tol)
            t2 = _arc_term(conn, i, 0, -ev, lane_off, tol)
            add(GeneralizedCycle([t1, t2], kind="third",
                                 meta={"family": "Gamma", "j": j, "root": (p, q)}),
                f"Gamma[{j},{p}{q}]")
    for j in range(1, M):
        for s, h in enumerate(cartan):
            i = idx
            t1 = _arc_term(conn, i, j, h.entries, lane_off, tol)
            t2 = _arc_term(conn, i, 0, -h.entries, lane_off, tol)
            add(GeneralizedCycle([t1, t2], kind="third",
                                 meta={"family": "Gt", "j": j, "s": s}),
                f"Gt[{j},{s}]")
    for j in range(0, M - 1):
        loc = fs.local_solution(conn, j, SERIES_ORDER)
        cinv = np.linalg.inv(loc.C.entries)
        for s, h in enumerate(cartan):
            i = idx
            coord = cinv @ h.entries @ loc.C.entries
            add(GeneralizedCycle([_circle_term(conn, i, j, coord, tol)], kind="localized",
                                 meta={"family": "A", "j": j, "s": s}),
                f"A[{j},{s}]")
    basis = CycleBasis(conn, cycles, labels)
    g, g3 = _genus_counts(conn)
    if len(cycles) != 2 * g3:
        raise BasisDegenerate(
            f"rigid family has {len(cycles)} members, expected {2 * g3}"
        )
    return basis


def _genus_counts(conn):
    from .connection import genus_counts

    return genus_counts(conn)


def extra_trailing_cycles(conn, tol=1e-11):
    """Localized circles around the excluded pole M-1 (dependent classes)."""
    M = len(conn.finite_pole_data())
    cartan, _, _ = liealg.chevalley_basis(conn.n)
    loc = fs.local_solution(conn, M - 1, SERIES_ORDER)
    cinv = np.linalg.inv(loc.C.entries)
    out = []
    for s, h in enumerate(cartan):
        coord = cinv @ h.entries @ loc.C.entries
        cyc = GeneralizedCycle(
            [_circle_term(conn, 37 + s, M - 1, coord, tol)],
            kind="localized",
            meta={"family": "A", "j": M - 1, "s": s},
        )
        out.append(cyc)
    return out


def coefficients_of(conn, basis, cycle, tol=1e-11):
    """Coefficient vector of a cycle in the basis via the intersection form."""
    I = basis.intersection_matrix(tol)
    v = np.array([intersection(conn, b, cycle, tol) for b in basis.cycles])
    return np.linalg.solve(I, v)


def darboux_complete(conn, basis, tol=1e-11):
    """Symplectic Gram-Schmidt over the rigid basis.

    Produces coefficient matrices A_coeffs, B_coeffs (rows are cycles in the
    rigid basis) with A_k . B_l = delta_kl, A.A = B.B = 0.  The trailing
    M dim(h) pairs have the localized A_{j,s} (j = 0..M-1, the last pole's
    circles expanded in the basis) as their A-side, unscaled; the leading g
    pairs carry the non-localized directions.  The Lagrangian L is the span
    of the B rows.
    """
    I = basis.intersection_matrix(tol)
    m = len(basis.cycles)
    if np.linalg.cond(I) > 1e10:
        raise BasisDegenerate("intersection matrix is numerically singular")
    # trailing A-vectors: the basis A_{j,s} unit vectors plus the expanded
    # circles around the excluded pole (mutually isotropic localized classes)
    a_vectors = []
    a_labels = []
    for k, lab in enumerate(basis.labels):
        if lab.startswith("A["):
            e = np.zeros(m, dtype=complex)
            e[k] = 1.0
            a_vectors.append(e)
            a_labels.append(basis.cycles[k].meta)
    for cyc in extra_trailing_cycles(conn, tol):
        a_vectors.append(coefficients_of(conn, basis, cyc, tol))
        a_labels.append(cyc.meta)
    A = np.array(a_vectors)
    K = A.shape[0]
    if np.abs(A @ I @ A.T).max() > 1e-6:
        raise BasisDegenerate("localized cycles are not isotropic")
    # duals: solve <a_k, I, y_l> = delta_kl (least-norm), then kill the
    # B-side pairings with the closed-form antisymmetric correction
    Y, *_ = np.linalg.lstsq(A @ I, np.eye(K, dtype=complex), rcond=None)
    Y = Y.T  # rows y_l with a_k I y_l = delta_kl
    C = 0.5 * (Y @ I @ Y.T)
    B = Y - C @ A
    # leading pairs: symplectic reduction of the complement
    def project(u):
        return u + (B @ I @ u) @ A - (A @ I @ u) @ B

    pool = [project(np.eye(m, dtype=complex)[k]) for k in range(m)]
    # orthonormal spanning set of the complement
    Wmat = np.array(pool)
    q, s, vt = np.linalg.svd(Wmat)
    rank = int(np.sum(s > 1e-8 * s[0])) if len(s) else 0
    comp = [vt[i] for i in range(rank)]
    leading = []
    while comp:
        a = comp.pop(0)
        best, bestval = None, 0.0
        for idx_u, u in enumerate(comp):
            val = complex(a @ I @ u)
            if abs(val) > bestval:
                best, bestval = idx_u, abs(val)
        if best is None or bestval < 1e-8:
            raise BasisDegenerate("no symplectic partner in the complement")
        b = comp.pop(best)
        b = b / complex(a @ I @ b)
        comp = [
            u + complex(b @ I @ u) * a - complex(a @ I @ u) * b for u in comp
        ]
        comp = [u for u in comp if np.abs(u).max() > 1e-9]
        leading.append((a, b, None))
    g, g3 = _genus_counts(conn)
    if len(leading) != g or len(leading) + K != g3:
        raise BasisDegenerate(
            f"darboux completion found {len(leading)} leading and "
            f"{K} trailing pairs, expected {g} and {g3 - g}"
        )
    out = CycleBasis(conn, basis.cycles, basis.labels, I=basis.I)
    A_rows = [p[0] for p in leading] + list(A)
    B_rows = [p[1] for p in leading] + list(B)
    out.A_coeffs = np.array(A_rows)
    out.B_coeffs = np.array(B_rows)
    out.pair_labels = [p[2] for p in leading] + a_labels
    out.n_leading = len(leading)
    return out


# ---------------------------------------------------------------------------
# squeeze / unsqueeze
# ---------------------------------------------------------------------------

def squeeze(conn, j, E, tol=1e-11):
    """Rewrite the keyhole loop around pole j weighted by coordinate E as an
    arc to the pole plus a localized Cartan circle."""
    E = E.entries if isinstance(E, liealg.AlgebraElement) else np.asarray(E, complex)
    s = fs.local_solution(conn, j, SERIES_ORDER).monodromy_matrix()
    u_arc = E - s @ E @ np.linalg.inv(s)
    loc = fs.local_solution(conn, j, SERIES_ORDER)
    d = loc.C.entries @ E @ np.linalg.inv(loc.C.entries)
    h_part = np.diag(np.diag(d))
    u_triv = np.linalg.inv(loc.C.entries) @ h_part @ loc.C.entries
    lane_off = LANE_FACTOR * min(1.0, conn.min_separation())
    arc = _arc_term(conn, -1, j, u_arc, lane_off, tol)
    circ = _circle_term(conn, -1, j, u_triv, tol)
    return GeneralizedCycle([arc, circ], kind="third", meta={"squeezed_from": j})


def unsqueeze_coordinate(conn, j, u):
    """(1 - Ad_S_j)^{-1} u: inverse squeeze on the root part of a coordinate."""
    u = u.entries if isinstance(u, liealg.AlgebraElement) else np.asarray(u, complex)
    loc = fs.local_solution(conn, j, SERIES_ORDER)
    c = loc.C.entries
    d = c @ u @ np.linalg.inv(c)
    ad = loc.alpha_diag
    n = conn.n
    out = np.zeros((n, n), dtype=complex)
    for p in range(n):
        for q in range(n):
            if p == q:
                continue
            denom = 1.0 - np.exp(2j * np.pi * (ad[p] - ad[q]))
            if abs(denom) < 1e-10:
                from .errors import ResonantCharges

                raise ResonantCharges("squeeze denominator vanishes", pole_index=j)
            out[p, q] = d[p, q] / denom
    return np.linalg.inv(c) @ out @ c


# ---------------------------------------------------------------------------
# tangent <-> cycle duality
# ---------------------------------------------------------------------------

def monodromy_variation_weights(conn, dS, tol=1e-11):
    """Boundary-consistent arc weights from per-pole monodromy variations.

    dS[j] is the variation of the keyhole monodromy S_j.  With the pinned
    composition convention the keyholes in route order t1..tM satisfy
    S_{tM} ... S_{t1} = 1; differentiating gives the conjugating prefactors
    Q_k = S_{tM} ... S_{t(k+1)} that make the weights sum to zero at o.
    """
    order = fs.pole_order_by_angle(conn)
    mons = fs.puncture_monodromies(conn, tol=tol)
    M = len(order)
    weights = [None] * M
    Q = np.eye(conn.n, dtype=complex)
    partial = [np.eye(conn.n, dtype=complex)]
    for k in range(M - 1, -1, -1):
        partial.append(partial[-1] @ mons[order[k]])
    # Q_k for position k (0-based in traversal order) is S_{tM}...S_{t(k+1)}
    for k in range(M):
        j = order[k]
        Qk = np.eye(conn.n, dtype=complex)
        for kk in range(M - 1, k, -1):
            Qk = Qk @ mons[order[kk]]
        u = dS[j] @ np.linalg.inv(mons[j])
        weights[j] = (Qk @ u @ np.linalg.inv(Qk)) / (2j * np.pi)
    return weights


def tangent_to_cycle(conn, arc_weights, tol=1e-11, check=True):
    """Third-kind cycle sum_j gamma_j (x) u_j from per-pole arc weights."""
    total = sum(np.asarray(w, complex) for w in arc_weights)
    scale = max(float(np.abs(np.asarray(w)).max()) for w in arc_weights) or 1.0
    if check and np.abs(total).max() > 1e-6 * scale:
        raise InconsistentVariation(
            f"arc weights do not cancel at the basepoint: |sum| = {np.abs(total).max():.2e}"
        )
    lane_off = LANE_FACTOR * min(1.0, conn.min_separation())
    terms = []
    for j, w in enumerate(arc_weights):
        if np.abs(np.asarray(w)).max() < 1e-16 * scale:
            continue
        terms.append(_arc_term(conn, 17, j, np.asarray(w, complex), lane_off, tol))
    return GeneralizedCycle(terms, kind="third", meta={"family": "Gamma_delta"})


def cycle_to_tangent(conn, cycle, tol=1e-11):
    """The tangent vector delta Phi dual to a cycle.

    Returns a callable dphi(x) built from F(x) = oint (1/(x'-x) - 1/(x'-o))
    sigma(x') dx' as dphi = dF + [F, Phi]; dF uses the differentiated kernel.
    """
    tab = sample_cycle(conn, cycle, tol=tol)
    xs, ws, sigmas = tab.arrays()
    o = conn.basepoint.z
    from .connection import potential_at

    if len(xs) == 0:
        zero = np.zeros((conn.n, conn.n), dtype=complex)
        fn = lambda x: zero.copy()
        fn.F = lambda x: zero.copy()
        return fn

    def F(x):
        ker = 1.0 / (xs - x) - 1.0 / (xs - o)
        return np.tensordot(ker * ws, sigmas, axes=(0, 0))

    def dphi(x):
        x = complex(x)
        dker = 1.0 / (xs - x) ** 2
        df = np.tensordot(dker * ws, sigmas, axes=(0, 0))
        f = F(x)
        phi = potential_at(conn, x).entries
        return df + f @ phi - phi @ f

    dphi.F = F
    return dphi


def tangent_residues(conn, dphi, n_quad=64):
    """Residues of a tangent vector at every finite pole by circle quadrature."""
    out = []
    for j, (zj, _) in enumerate(conn.finite_pole_data()):
        loc = fs.local_solution(conn, j, SERIES_ORDER)
        rho = 2.8 * loc.ring_radius
        thetas = 2 * np.pi * (np.arange(n_quad) + 0.31) / n_quad
        acc = np.zeros((conn.n, conn.n), dtype=complex)
        for th in thetas:
            w = rho * np.exp(1j * th)
            acc += dphi(zj + w) * 1j * w
        out.append(acc / n_quad / 1j)
    return out
