import numpy as np
import pytest

from legav.averaging import (
    AverageConfig,
    averaged_form_deficit,
    bound_check,
    canonical_order,
    contact_moser_average,
    contact_moser_field,
    contact_moser_field_lstsq,
    epsilon_gate,
    lagrangian_residual,
    prepare,
    reeb_of,
    symplectization_matrix,
    symplectization_moser_field,
    weinstein_average,
    weinstein_curve,
)
from legav.curves import FamilyInput, circle, figure_eight, lift_front_cylinder, lift_planar_heisenberg, perturb
from legav.distances import d0
from legav.errors import GateError


@pytest.fixture(scope="module")
def cyl_family():
    base = lift_front_cylinder(circle(64, 3.0))
    curves = [perturb(base, 1e-3, seed=k, with_distance=False) for k in range(3)]
    return FamilyInput(curves, np.array([0.5, 0.3, 0.2]))


@pytest.fixture(scope="module")
def cyl_prepared(cyl_family):
    return prepare(cyl_family)


@pytest.fixture(scope="module")
def heis_family():
    base = lift_planar_heisenberg(figure_eight(128, 2.0))
    return FamilyInput([perturb(base, 2e-4, seed=k, with_distance=False) for k in range(2)])


def test_weinstein_of_identical_copies_is_the_curve():
    N = lift_front_cylinder(circle(64, 2.0))
    W = weinstein_curve(FamilyInput([N, N, N]))
    assert np.array_equal(W.points, N.points)


def test_weinstein_is_permutation_invariant(cyl_family):
    a = weinstein_curve(cyl_family.permuted(canonical_order(cyl_family)))
    perm = [2, 0, 1]
    other = cyl_family.permuted(perm)
    b = weinstein_curve(other.permuted(canonical_order(other)))
    assert np.array_equal(a.points, b.points)


def test_weinstein_points_are_centres_of_feet(cyl_prepared):
    N = cyl_prepared.N
    assert N.info["weinstein_step"] < 1e-11
    assert max(d0(c, N) for c in cyl_prepared.family.curves) < 2e-3


def test_chart_roundtrip_and_member_image(cyl_prepared):
    ch = cyl_prepared.chart
    N = cyl_prepared.N
    rng = np.random.default_rng(0)
    X = N.points[::4] + 1e-3 * rng.standard_normal((16, 3))
    for g in range(len(cyl_prepared.family)):
        Y = ch.inverse(g, X)
        assert np.abs(N.model.coord_diff(ch.forward(g, Y), X)).max() < 1e-10
        assert d0(cyl_prepared.family.curves[g], type(N).from_points(N.model, ch.inverse(g, N.points))) < 1e-9


def test_identity_family_has_zero_deficit():
    N = lift_front_cylinder(circle(64, 2.0))
    _, chart = weinstein_average(FamilyInput([N, N]))
    d = averaged_form_deficit(chart, N.points)
    assert not np.any(d.theta_dot) and not np.any(d.omega_dot)


def test_averaged_form_vanishes_on_weinstein_tangents(heis_family):
    prep = prepare(heis_family)
    d = averaged_form_deficit(prep.chart, prep.N.points)
    theta1 = d.theta + d.theta_dot
    tau = prep.N.tangents / prep.N.model.norm(prep.N.points, prep.N.tangents)[:, None]
    assert np.abs(np.einsum("mi,mi->m", theta1, tau)).max() < 1e-7


def test_omega_dot_is_d_of_theta_dot(cyl_prepared):
    ch = cyl_prepared.chart
    X = cyl_prepared.N.points[:8]
    h = 1e-3
    # d(theta_dot)_{ij} = d_i theta_dot_j - d_j theta_dot_i by central differences
    cols = []
    for e in np.eye(3):
        cols.append((averaged_form_deficit(ch, X + h * e).theta_dot - averaged_form_deficit(ch, X - h * e).theta_dot) / (2 * h))
    a = np.stack(cols, axis=1)
    fd = a - np.swapaxes(a, 1, 2)
    assert np.abs(fd - averaged_form_deficit(ch, X).omega_dot).max() < 1e-6


@pytest.mark.parametrize("t", [0.0, 0.4, 1.0])
def test_contact_field_against_lstsq_oracle(cyl_prepared, t):
    d = averaged_form_deficit(cyl_prepared.chart, cyl_prepared.N.points[:16])
    v, margin = contact_moser_field(d, t)
    assert np.abs(v - contact_moser_field_lstsq(d, t)).max() < 1e-12
    th_t, om_t = d.at(t)
    assert np.abs(np.einsum("mi,mi->m", th_t, v)).max() < 1e-15
    assert np.all(np.abs(margin - 1) < 1e-3)


def test_field_sign_invariance(cyl_prepared):
    d = averaged_form_deficit(cyl_prepared.chart, cyl_prepared.N.points[:16])
    neg = type(d)(-d.theta, -d.omega, -d.theta_dot, -d.omega_dot)
    assert np.array_equal(contact_moser_field(d, 0.5)[0], contact_moser_field(neg, 0.5)[0])


def test_symplectization_field_matches_contact(cyl_prepared):
    d = averaged_form_deficit(cyl_prepared.chart, cyl_prepared.N.points[:16])
    V, _ = symplectization_moser_field(d, 0.3)
    v, _ = contact_moser_field(d, 0.3)
    th, om = d.at(0.3)
    assert np.abs(V[:, :3] - v).max() < 1e-12
    assert np.abs(V[:, 3] + np.einsum("mi,mi->m", d.theta_dot, reeb_of(th, om))).max() < 1e-12
    W = symplectization_matrix(th, om)
    assert np.array_equal(W, -np.swapaxes(W, -1, -2))


def test_contact_average_is_legendrian(cyl_prepared):
    res = contact_moser_average(cyl_prepared)
    assert res.residual < 1e-8
    assert abs(res.residual - lagrangian_residual(res.curve)) < 1e-14
    assert res.bound.passed
    assert min(res.trace.min_margin) > 0.999
    s = res.summary()
    assert set(s) >= {"epsilon", "d0_per_member", "residual", "margins", "ratios", "regime"}


def test_bound_check_at_zero_epsilon():
    assert bound_check([0.0, 1e-12], 0.0).passed
    assert not bound_check([1e-6], 0.0).passed
    assert bound_check([1e-4], 1e-6).passed
    assert not bound_check([2e-3], 1e-6).passed


def test_strict_mode_refuses_relaxed_family(cyl_family):
    cfg = AverageConfig(mode="strict")
    gate = epsilon_gate(cyl_family, cfg)
    assert gate.regime == "relaxed" and not gate.passed
    with pytest.raises(GateError):
        prepare(cyl_family, cfg)


def test_config_rejects_unknown_mode():
    with pytest.raises(ValueError):
        AverageConfig(mode="loose")
