import numpy as np
import pytest

from legav.cover import (
    INVOLUTION,
    CoverModel,
    GroupElement,
    QuotientLegendrian,
    antisymmetrize,
    co_orientation_sign,
    lift_fiber,
    lift_quotient,
    noncoorientable_average,
    sign_weighted_average_form,
)
from legav.curves import Isometry, apply_map, circle, lift_front_cylinder, perturb, rotations
from legav.distances import d0
from legav.errors import DegenerateFormError, InputError, NotInvariantError
from legav.models import Cylinder

M = Cylinder()


@pytest.fixture(scope="module")
def pts():
    rng = np.random.default_rng(4)
    return np.column_stack([rng.uniform(-3, 3, (500, 2)), rng.uniform(0, 2 * np.pi, 500)])


def z4_cover_group():
    return [
        GroupElement(Isometry("rotation", (k * np.pi / 2,)), *([INVOLUTION] if j else []), label=f"r{k}i{j}")
        for k in range(4)
        for j in range(2)
    ]


def test_involution_is_an_involutive_isometry_reversing_theta(pts):
    r = CoverModel().check(pts)
    assert r["involutive"] < 1e-14
    assert r["isometry"] < 1e-14
    assert r["theta_reversed"] < 1e-14


def test_projection_identifies_antipodal_fibre_points(pts):
    cov = CoverModel()
    assert np.abs(cov.project(pts) - cov.project(cov.involution(pts))).max() < 1e-14


def test_antisymmetrize_keeps_odd_part_only(pts):
    beta = lambda p: 0.1 * np.stack([np.sin(2 * p[..., 2]), np.cos(p[..., 0]), 0 * p[..., 0]], -1)
    th = antisymmetrize(lambda p: M.theta(p) + beta(p), M, pts)
    assert th.antisymmetry_residual(pts) < 1e-12
    assert np.abs(th(pts) - M.theta(pts)).max() < 1e-12


def test_antisymmetrize_rejects_even_forms(pts):
    with pytest.raises(DegenerateFormError):
        antisymmetrize(lambda p: np.stack([np.sin(2 * p[..., 2]), 0 * p[..., 0], 0 * p[..., 0]], -1), M, pts[:50])


def test_signs_on_z4_times_involution():
    th = antisymmetrize(M.theta, M)
    for g in z4_cover_group():
        expect = -1 if g.label.endswith("i1") else 1
        assert co_orientation_sign(g, th, M) == expect


def test_signed_average_is_equivariant(pts):
    gam = lambda p: M.theta(p) + 0.05 * np.stack([np.cos(p[..., 2]) * p[..., 1], np.sin(3 * p[..., 2]), 0 * p[..., 0]], -1)
    th = antisymmetrize(gam, M, pts)
    sa = sign_weighted_average_form(th, z4_cover_group(), model=M, samples=pts[:200])
    assert max(sa.equivariance.values()) < 1e-10
    assert sa.margin > 0


def test_signed_average_weights_must_be_probabilities():
    th = antisymmetrize(M.theta, M)
    with pytest.raises(InputError):
        sign_weighted_average_form(th, z4_cover_group(), weights=np.ones(8))


def smooth_quotient(n=64, turns=1):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    phi = np.mod(turns * t / 2 + 0.3, np.pi)
    return np.column_stack([np.cos(t) + 0.3 * np.sin(2 * t), np.sin(t) - 0.2 * np.cos(3 * t), phi])


def test_odd_turns_lift_to_one_invariant_curve():
    q = smooth_quotient(turns=1)
    Q = lift_quotient(q)
    assert Q.kind == "invariant"
    assert Q.components[0].n == 2 * len(q)
    assert np.abs(Q.descend() - q).max() < 1e-12


def test_even_turns_lift_to_a_swapped_pair():
    q = smooth_quotient(turns=0)
    Q = lift_quotient(q)
    assert Q.kind == "pair"
    assert np.abs(Q.descend() - q).max() < 1e-12


def test_fibre_is_invariant():
    assert lift_fiber(1.0, 2.0).invariance_residual() < 1e-12


def test_descend_refuses_non_invariant_lift():
    N = lift_front_cylinder(circle(64, 2.0))
    Q = QuotientLegendrian([N, apply_map(N, Isometry("translation", (0.1, 0.0)))], [np.arange(64)] * 2)
    with pytest.raises(NotInvariantError):
        Q.descend()


def test_z4_cover_average_is_invariant_and_equivariant():
    base = circle(128, 3.0)
    P0 = perturb(lift_front_cylinder(base), 1e-3, 3, with_distance=False)
    members = [apply_map(P0, R) for R in rotations(4)]
    quots = [QuotientLegendrian([m, apply_map(m, INVOLUTION)], [np.arange(128)] * 2) for m in members]
    ca = noncoorientable_average(quots)
    assert ca.invariance_residual < 1e-6
    A = apply_map(ca.quotient.components[0], Isometry("rotation", (np.pi / 2,)))
    assert min(d0(c, A) for c in ca.quotient.components) < 1e-6
    relifted = lift_quotient(ca.descended)
    assert max(d0(a, b) for a, b in zip(relifted.components, ca.quotient.components)) < 1e-6
