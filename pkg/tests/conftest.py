import sys

import numpy as np
import pytest

from legav.models import Cylinder, Heisenberg


@pytest.fixture(params=["heisenberg", "cylinder"])
def model(request):
    return Heisenberg() if request.param == "heisenberg" else Cylinder()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def fd_christoffel(model, p, h=1e-5):
    """Christoffel symbols [k, i, j] from a central-difference metric derivative at one point."""
    dg = np.stack([(model.metric(p + h * e) - model.metric(p - h * e)) / (2 * h) for e in np.eye(3)])
    # dg[l, i, j] = d_l g_ij
    low = np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg
    return 0.5 * np.einsum("kl,lij->kij", np.linalg.inv(model.metric(p)), low)


def fd_sectional(model, p, u, v, h=1e-4):
    """Sectional curvature from finite differences of the Christoffel symbols."""
    G = model.christoffel(p)
    dG = np.stack([(model.christoffel(p + h * e) - model.christoffel(p - h * e)) / (2 * h) for e in np.eye(3)])
    # R^l_{ijk} = d_i G^l_jk - d_j G^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik
    R = (
        np.einsum("iljk->lijk", dG)
        - np.einsum("jlik->lijk", dG)
        + np.einsum("lim,mjk->lijk", G, G)
        - np.einsum("ljm,mik->lijk", G, G)
    )
    g = model.metric(p)
    Ruvv = np.einsum("lijk,i,j,k->l", R, u, v, v)
    num = np.einsum("l,lm,m->", Ruvv, g, u)
    den = (u @ g @ u) * (v @ g @ v) - (u @ g @ v) ** 2
    return num / den


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
