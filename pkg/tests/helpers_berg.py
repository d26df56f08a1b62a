"""Shared berginter test harness (double periods of W2, integrated by parts)."""

import numpy as np

from qsc import amplitudes as amp
from qsc import connection as conn_mod
from qsc import cycles as cyc
from qsc._geometry import segment_crossing


def bhat(conn, cycle, structures=()):
    table = cyc.sample_cycle(conn, cycle, tol=1e-11, structures=structures)
    xs, ws, sigmas = table.arrays()
    comms = np.array(
        [
            conn_mod.potential_at(conn, x).entries @ s
            - s @ conn_mod.potential_at(conn, x).entries
            for x, s in zip(xs, sigmas)
        ]
    )
    bpts = np.array([p for p, _ in table.boundary_terms])
    bmats = np.array([m for _, m in table.boundary_terms])

    def fn(x, sX):
        v = np.sum(np.einsum("ab,kba->k", sX, bmats) / (x - bpts))
        v -= np.sum(ws * np.einsum("ab,kba->k", sX, comms) / (x - xs))
        return v

    return amp.FormEvaluator(
        fn,
        residue_fn=lambda c, j: table.cartan_residue.get(
            j, np.zeros((c.n, c.n), dtype=complex)
        ),
        support=table.support,
        label="Bhat",
    )


def breaks_maker(form):
    def breaks(a, b):
        out = []
        for (c, d) in form.support:
            if c == d:
                continue
            hit = segment_crossing(a, b, c, d)
            if hit:
                out.append(hit[0])
        return out

    return breaks


def support_of(cycle):
    segs = []
    for t in cycle.terms:
        p = t.path.points()
        segs += [(p[i], p[i + 1]) for i in range(len(p) - 1)]
    return segs


def berginter(conn, c1, c2):
    s1, s2 = support_of(c1), support_of(c2)
    f2 = bhat(conn, c2, structures=s1)
    f1 = bhat(conn, c1, structures=s2)
    p12 = cyc.period(conn, c1, f2, breaks_for=breaks_maker(f2), structures=s2)
    p21 = cyc.period(conn, c2, f1, breaks_for=breaks_maker(f1), structures=s1)
    return (p12 - p21) / (2j * np.pi)
