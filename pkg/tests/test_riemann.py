import numpy as np
import pytest

from legav.errors import InputError, SpreadTooLargeError
from legav.models import Cylinder, Heisenberg
from legav.riemann import exp_map, integrate_geodesic, karcher_mean, line_angle, log_map, parallel_transport, subspace_distance


def test_exp_log_roundtrip(model, rng):
    p = model.random_points(rng, 200, 3.0)
    v = 0.4 * rng.standard_normal((200, 3))
    q = exp_map(model, p, v)
    assert np.abs(log_map(model, p, q) - v).max() < 1e-8


def test_heisenberg_closed_form_matches_ode(rng):
    m = Heisenberg(1.7)
    p = m.random_points(rng, 30, 3.0)
    v = 0.5 * rng.standard_normal((30, 3))
    assert np.abs(m.coord_diff(exp_map(m, p, v), exp_map(m, p, v, method="ode"))).max() < 1e-10


def test_z_axis_is_a_geodesic():
    m = Heisenberg()
    q = exp_map(m, np.zeros(3), np.array([0.0, 0.0, 1.0]))
    assert np.allclose(q, [0.0, 0.0, 1.0], atol=1e-14)
    x, v, _ = integrate_geodesic(m, np.zeros((1, 3)), np.array([[0.0, 0.0, 1.0]]), 1.0)
    assert np.abs(x[0] - [0, 0, 1]).max() < 1e-12


def test_transport_preserves_inner_products(model, rng):
    p = model.random_points(rng, 40)
    v = 0.6 * rng.standard_normal((40, 3))
    a, b = rng.standard_normal((2, 40, 3))
    W = parallel_transport(model, p, v, np.stack([a, b], axis=1))
    q = exp_map(model, p, v)
    for x, y, u, w in ((a, b, W[:, 0], W[:, 1]), (a, a, W[:, 0], W[:, 0])):
        assert np.abs(model.inner(q, u, w) - model.inner(p, x, y)).max() < 1e-10


def test_transport_of_velocity_is_velocity(rng):
    m = Heisenberg()
    p = m.random_points(rng, 10)
    v = 0.5 * rng.standard_normal((10, 3))
    _, vend, T = integrate_geodesic(m, p, v, 1.0, transport=v[:, None, :])
    assert np.abs(T[:, 0] - vend).max() < 1e-10


def test_karcher_mean_cylinder_is_euclidean():
    pts = np.array([[0.0, 0.0, 0.1], [2.0, 1.0, 0.5]])
    m = karcher_mean(Cylinder(), pts, np.array([0.25, 0.75]))
    assert np.allclose(m, [1.5, 0.75, 0.4], atol=1e-12)


def test_karcher_mean_heisenberg_first_order_condition(rng):
    model = Heisenberg()
    pts = np.array([0.3, -0.2, 0.1]) + 0.2 * rng.standard_normal((5, 3))
    w = rng.uniform(0.1, 1.0, 5)
    w /= w.sum()
    m = karcher_mean(model, pts, w, tol=1e-13)
    grad = np.einsum("g,gi->i", w, log_map(model, np.broadcast_to(m, pts.shape), pts))
    assert model.norm(m, grad) < 1e-11


def test_karcher_mean_rejects_bad_weights():
    with pytest.raises(InputError):
        karcher_mean(Cylinder(), np.zeros((2, 3)), np.array([0.7, 0.7]))


def test_karcher_mean_spread_error():
    pts = np.array([[0.0, 0.0, 0.0], [40.0, 0.0, 0.0]])
    with pytest.raises(SpreadTooLargeError):
        karcher_mean(Heisenberg(), pts, np.array([0.5, 0.5]))


def test_subspace_and_line_angles():
    assert subspace_distance([[1.0, 0.0]], [[np.cos(0.3), np.sin(0.3)]]) == pytest.approx(0.3, abs=1e-12)
    assert subspace_distance(np.eye(3)[:2], np.eye(3)[[1, 0]]) == pytest.approx(0.0, abs=1e-12)
    m = Cylinder()
    p = np.zeros((1, 3))
    assert line_angle(m, p, np.array([[1.0, 0, 0]]), np.array([[-1.0, 0, 0]]))[0] == pytest.approx(0.0, abs=1e-12)
