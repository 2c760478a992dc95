import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fd_christoffel, fd_sectional
from legav.checks import omega_bar_bound_check, structure_residuals
from legav.curves import Isometry
from legav.models import Cylinder, Heisenberg, get_model


def test_structure_identities(model, rng):
    res = structure_residuals(model, model.random_points(rng, 2000), rng)
    for key in ("reeb_theta", "reeb_dtheta", "reeb_unit", "reeb_orthogonal", "compatibility", "complex_square"):
        assert res[key] < 1e-12, key
    assert res["volume_min_abs"] > 0.5


def test_dtheta_matches_finite_differences(model, rng):
    p = model.random_points(rng, 50)
    h = 1e-6
    fd = np.stack([(model.theta(p + h * e) - model.theta(p - h * e)) / (2 * h) for e in np.eye(3)], axis=1)
    assert np.abs(fd - model.dtheta_partials(p)).max() < 1e-6


def test_christoffel_matches_metric_derivative(model, rng):
    for p in model.random_points(rng, 5):
        assert np.abs(fd_christoffel(model, p) - model.christoffel(p)).max() < 1e-6


def test_heisenberg_curvature_at_origin():
    m = Heisenberg()
    o = np.zeros(3)
    F = m.contact_frame(o)
    assert m.sectional_curvature(o, F[0], F[1]) == pytest.approx(-0.75, abs=1e-12)
    assert m.sectional_curvature(o, F[0], F[2]) == pytest.approx(0.25, abs=1e-12)
    assert abs(fd_sectional(m, o, F[0], F[1]) - m.sectional_curvature(o, F[0], F[1])) < 1e-6


def test_cylinder_is_flat(rng):
    m = Cylinder()
    p = m.random_points(rng, 20)
    u, v = rng.standard_normal((2, 20, 3))
    assert np.abs(m.sectional_curvature(p, u, v)).max() == 0.0


def test_form_norms():
    h = Heisenberg().nabla_form_norms(np.array([[0.4, -1.2, 0.3]]))
    c = Cylinder().nabla_form_norms(np.array([[0.4, -1.2, 0.3]]))
    assert h[0][0] == pytest.approx(2**-0.5, abs=1e-12) and h[1][0] == pytest.approx(1.0, abs=1e-12)
    assert c[0][0] == pytest.approx(1.0, abs=1e-12) and c[1][0] == pytest.approx(2**0.5, abs=1e-12)


def test_omega_bar_bound_values(rng):
    assert omega_bar_bound_check(Cylinder(), Cylinder().random_points(rng, 200)) == pytest.approx(2.0, abs=1e-12)
    assert omega_bar_bound_check(Heisenberg(), Heisenberg().random_points(rng, 200)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("iso", ["rotation:0.7", "rotation:-2.1", "translation:0.5,-1.5"])
def test_symmetries_preserve_theta_and_metric(model, rng, iso):
    iso = Isometry.parse(iso)
    p = model.random_points(rng, 100)
    q = iso.apply(model, p)
    assert np.abs(iso.pull_covector(model, p, model.theta) - model.theta(p)).max() < 1e-12
    u, v = rng.standard_normal((2, 100, 3))
    lhs = model.inner(q, iso.push(model, p, u), iso.push(model, p, v))
    assert np.abs(lhs - model.inner(p, u, v)).max() < 1e-12


def test_sign_flip_reverses_reeb(model, rng):
    p = model.random_points(rng, 10)
    neg = model.with_sign(-1)
    assert np.allclose(neg.theta(p), -model.theta(p))
    assert np.allclose(neg.reeb(p), -model.reeb(p))
    assert np.allclose(neg.metric(p), model.metric(p))


def test_get_model_rejects_unknown():
    with pytest.raises(Exception):
        get_model("sphere")


@settings(max_examples=200, deadline=None)
@given(
    st.floats(-3, 3), st.floats(-3, 3), st.floats(-6.2, 6.2)
)
def test_heisenberg_log_identity_inverts_exp(a, b, c):
    w = np.array([a, b, c])
    back, ok = Heisenberg.log_identity(Heisenberg.exp_identity(w))
    assert ok
    assert np.abs(back - w).max() < 1e-9 * max(1.0, np.abs(w).max())
