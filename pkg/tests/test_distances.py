import numpy as np
import pytest

from legav.curves import circle, figure_eight, lift_front_cylinder, lift_planar_heisenberg, perturb, uniform_parameter
from legav.distances import d0, d0_detail, d1, d1_detail, foot_points, gentleness_report, nearest_point, pairwise_d1
from legav.errors import NonUniqueFootError, NotASectionError
from legav.models import Cylinder


def ellipse(n, a, b):
    s = uniform_parameter(n)
    return np.column_stack([a * np.cos(s), b * np.sin(s)])


def test_identical_curves_have_zero_distance():
    N = lift_planar_heisenberg(figure_eight(128))
    assert d0(N, N) < 1e-12
    assert d1(N, N) < 1e-7


def test_concentric_circle_fronts_closed_form():
    R, delta = 3.0, 0.01
    N = lift_front_cylinder(circle(128, R))
    Np = lift_front_cylinder(circle(128, R + delta))
    det = d1_detail(N, Np)
    assert det["c0_part"] == pytest.approx(delta, abs=1e-10)
    assert det["angle_part"] == pytest.approx(np.arctan(R + delta) - np.arctan(R), abs=1e-6)
    assert det["value"] == pytest.approx(delta, abs=1e-10)
    assert d0_detail(N, Np)["samples"] == 256


def test_foot_points_are_orthogonal():
    N = lift_planar_heisenberg(figure_eight(128))
    X = N.points[::8] + 0.01 * np.random.default_rng(3).standard_normal((16, 3))
    s, q, w, dist = foot_points(N, X)
    assert np.abs(N.model.inner(q, w, N.eval(s, 1))).max() < 1e-10
    assert np.allclose(N.model.norm(q, w), dist)


def test_nearest_point_segment_ends_on_curve():
    N = lift_front_cylinder(circle(128, 2.0))
    x = np.array([2.1, 0.05, 1.6])
    foot, seg = nearest_point(N, x)
    assert np.abs(Cylinder().coord_diff(seg.end, foot)).max() < 1e-10
    assert np.allclose(seg.start, x)


def test_ambiguous_foot_raises():
    N = lift_front_cylinder(ellipse(256, 2.0, 1.0))
    with pytest.raises(NonUniqueFootError):
        nearest_point(N, np.array([0.0, 0.0, 0.0]))


def test_non_section_raises():
    N = lift_front_cylinder(circle(128, 3.0))
    # the same circle traversed twice: the foot map winds twice around N
    Np = lift_front_cylinder(circle(128, 3.0)[(2 * np.arange(128)) % 128])
    with pytest.raises(NotASectionError):
        d1(N, Np)


def test_distances_scale_with_perturbation():
    N = lift_front_cylinder(circle(128, 3.0))
    small = perturb(N, 1e-4, seed=1, with_distance=False)
    large = perturb(N, 1e-3, seed=1, with_distance=False)
    assert d1(N, large) == pytest.approx(10 * d1(N, small), rel=1e-3)
    D = pairwise_d1([N, small, N])
    assert D[0, 2] == 0.0 and D[0, 1] > 0


def test_gentleness_cylinder_circle():
    rep = gentleness_report(lift_front_cylinder(circle(128, 3.0)))
    assert rep.passed
    # the lifted circle is a helix of radius 3 and unit pitch
    assert rep.focal_radius == pytest.approx(10 / 3, rel=1e-6)
    assert rep.curvature_sup == 0.0


def test_gentleness_heisenberg_reports_curvature_bound():
    rep = gentleness_report(lift_planar_heisenberg(figure_eight(128, 4.0)))
    assert rep.curvature_sup == pytest.approx(0.75, abs=1e-9)
    assert rep.to_dict()["passed"] == rep.passed
