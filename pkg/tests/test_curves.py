import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from legav.curves import (
    DiscreteCurve,
    FamilyInput,
    Isometry,
    PeriodicInterpolant,
    apply_map,
    circle,
    curve_to_csv,
    figure_eight,
    lift_front_cylinder,
    lift_planar_heisenberg,
    parse_curve_csv,
    perturb,
    resample,
    rosette,
    signed_area,
    spectral_derivative,
    uniform_parameter,
)
from legav.distances import d0
from legav.errors import InputError, NonClosingError
from legav.models import Cylinder, Heisenberg


def test_interpolant_reproduces_trig_polynomial():
    s = uniform_parameter(32)
    f = np.column_stack([np.cos(3 * s) + 0.5 * np.sin(s), np.sin(2 * s)])
    P = PeriodicInterpolant(f)
    x = np.linspace(0, 6, 17)
    assert np.abs(P(x) - np.column_stack([np.cos(3 * x) + 0.5 * np.sin(x), np.sin(2 * x)])).max() < 1e-13
    assert np.abs(P(x, 1)[:, 1] - 2 * np.cos(2 * x)).max() < 1e-12


def test_spectral_derivative_of_circle():
    c = circle(64)
    d = spectral_derivative(c)
    s = uniform_parameter(64)
    assert np.abs(d - np.column_stack([-np.sin(s), np.cos(s)])).max() < 1e-13


def test_heisenberg_lift_is_closed_and_legendrian():
    N = lift_planar_heisenberg(figure_eight(256))
    assert N.legendrian_residual() < 1e-13
    assert abs(signed_area(figure_eight(256))) < 1e-12


def test_heisenberg_lift_rejects_nonzero_area():
    with pytest.raises(NonClosingError):
        lift_planar_heisenberg(circle(64))


def test_cylinder_front_lift():
    N = lift_front_cylinder(circle(128, 2.0))
    assert N.legendrian_residual() < 1e-13
    assert N.winding == 1


def test_rosette_lift_has_sixfold_symmetry():
    N = lift_planar_heisenberg(rosette(256, 2.0))
    R = apply_map(N, Isometry("rotation", (np.pi / 3,)))
    assert d0(N, R) < 1e-10


def test_full_rotation_is_identity(model):
    N = lift_planar_heisenberg(figure_eight(64)) if model.model_id == "heisenberg" else lift_front_cylinder(circle(64))
    M = apply_map(N, Isometry("rotation", (2 * np.pi,)))
    assert np.abs(model.coord_diff(N.points, M.points)).max() < 1e-12


def test_perturb_records_distance_and_stays_legendrian():
    N = lift_front_cylinder(circle(128, 3.0))
    P = perturb(N, 1e-3, seed=4)
    assert P.legendrian_residual() < 1e-12
    assert 0 < P.info["d1_from_parent"] < 1e-2
    assert perturb(N, 0.0).info["d1_from_parent"] == 0.0


def test_heisenberg_perturbation_keeps_zero_area():
    N = lift_planar_heisenberg(figure_eight(128))
    P = perturb(N, 1e-3, seed=2, with_distance=False)
    assert P.legendrian_residual() < 1e-12


def test_csv_roundtrip(model):
    N = lift_planar_heisenberg(figure_eight(64)) if model.model_id == "heisenberg" else lift_front_cylinder(circle(64))
    text = curve_to_csv(N)
    assert text.startswith("# legav curve model=")
    M = parse_curve_csv(text)
    assert M.model == N.model
    assert np.array_equal(M.points, N.points) and np.array_equal(M.tangents, N.tangents)


def test_csv_rejects_bad_header():
    with pytest.raises(InputError):
        parse_curve_csv("# legav curve model=cylinder\na,b,c\n1,2,3\n")


def test_resample_identity_and_density():
    N = lift_front_cylinder(circle(128, 2.0))
    same = resample(N, 128)
    assert np.abs(N.model.coord_diff(N.points, same.points)).max() < 1e-10
    dense = resample(N, 512)
    assert d0(N, dense) < 1e-6
    assert dense.spacing().max() == pytest.approx(0.25 * same.spacing().max(), rel=1e-6)


def test_family_validation():
    N = lift_front_cylinder(circle(32))
    with pytest.raises(InputError):
        FamilyInput([N, N], np.array([0.7, 0.7]))
    with pytest.raises(InputError):
        FamilyInput([N, lift_planar_heisenberg(figure_eight(32))])


def test_unregistered_symmetry_rejected():
    N = lift_planar_heisenberg(figure_eight(32))
    with pytest.raises(InputError):
        apply_map(N, Isometry("involution"))


@settings(max_examples=25, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_symmetries_map_legendrians_to_legendrians(angle, a, b):
    N = lift_planar_heisenberg(figure_eight(64))
    for iso in (Isometry("rotation", (angle,)), Isometry("translation", (a, b, 0.0))):
        assert apply_map(N, iso).legendrian_residual() < 1e-12
