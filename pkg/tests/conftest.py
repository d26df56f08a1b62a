"""Shared fixtures: the standard test connections used across the suite."""

import numpy as np
import pytest

from qsc import connection as conn_mod
from qsc import liealg
from qsc.connection import FuchsianConnection, dozz_build

DOZZ_ALPHAS = (0.23, 0.17, 0.31)
DOZZ_B = 0.7


def _conjugated_diag(rng, a):
    g = np.eye(2) + 0.5 * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    g /= np.linalg.det(g) ** 0.5
    return g @ np.diag([a, -a]).astype(complex) @ np.linalg.inv(g)


def make_gen3(seed=11):
    """Generic all-finite sl2 three-pole connection (charges ~ 0.15 - 0.35)."""
    rng = np.random.default_rng(seed)
    p1 = _conjugated_diag(rng, 0.21)
    p2 = _conjugated_diag(rng, 0.16)
    c = FuchsianConnection(
        2,
        [(0.0, p1), (1.0, p2), (0.4 + 1.1j, -p1 - p2)],
        -0.9 - 0.75j,
    )
    conn_mod.validate(c)
    return c


def make_rand4(seed=23):
    """Random non-resonant sl2 four-pole connection, all poles finite."""
    rng = np.random.default_rng(seed)
    p1 = _conjugated_diag(rng, 0.24)
    p2 = _conjugated_diag(rng, 0.19)
    p3 = _conjugated_diag(rng, 0.27)
    c = FuchsianConnection(
        2,
        [(0.0, p1), (1.0, p2), (1.6 + 1.2j, p3), (-0.7 + 0.9j, -p1 - p2 - p3)],
        -1.2 - 1.0j,
    )
    conn_mod.validate(c)
    return c


def make_abelian3():
    """Commuting (diagonal) three-pole connection: everything closed form."""
    a1, a2 = 0.21, -0.13
    d = lambda a: np.diag([a, -a]).astype(complex)
    c = FuchsianConnection(
        2,
        [(0.0, d(a1)), (1.0, d(a2)), (0.5 + 1.3j, d(-a1 - a2))],
        -0.8 - 0.9j,
    )
    conn_mod.validate(c)
    return c


@pytest.fixture(scope="session")
def dozz():
    return dozz_build(*DOZZ_ALPHAS, DOZZ_B)


@pytest.fixture(scope="session")
def gen3():
    return make_gen3()


@pytest.fixture(scope="session")
def rand4():
    return make_rand4()


@pytest.fixture(scope="session")
def abelian3():
    return make_abelian3()
