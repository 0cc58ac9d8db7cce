import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emitterlab.dipole import (
    ALL_AXES,
    AXES,
    DipoleAxis,
    dipole_diagram,
    ensemble_diagram,
    fit_polarization,
    malus_diagram,
    orientation_histogram,
    project_to_001,
)
from oracles import binomial_sigma

ANGLES = np.arange(0, 360, 10.0)


def test_projections_are_orthogonal_pairs():
    proj = {a.name: project_to_001(a) for a in ALL_AXES}
    assert sorted(proj.values()) == [0.0, 0.0, 90.0, 90.0]
    assert proj["[111]"] == 0.0 and proj["[-111]"] == 90.0


def test_projection_matches_vector_geometry():
    for a in ALL_AXES:
        v = a.vector
        ang = np.rad2deg(np.arctan2(v[1], v[0])) - 45.0
        assert (ang - project_to_001(a)) % 180.0 == pytest.approx(0.0, abs=1e-9)


def test_unknown_axis_rejected():
    with pytest.raises(ValueError):
        DipoleAxis("[100]")


@pytest.mark.parametrize("name", list(AXES))
def test_noiseless_single_dipole_visibility(name):
    d = dipole_diagram(DipoleAxis(name), 1000.0, ANGLES, visibility=0.97)
    fit = fit_polarization(d)
    assert fit.status == "converged"
    assert fit.visibility > 0.96
    assert fit.theta0 == pytest.approx(project_to_001(DipoleAxis(name)), abs=1e-6) or \
        fit.theta0 == pytest.approx(180.0, abs=1e-6)


@settings(max_examples=40)
@given(st.floats(0, 179.9), st.floats(10, 1e4), st.floats(0.05, 0.99))
def test_fit_recovers_malus_parameters(theta, imax, vis):
    fit = fit_polarization(malus_diagram(theta, imax, vis, ANGLES))
    d = (fit.theta0 - theta + 90) % 180 - 90
    assert abs(d) < 1e-4
    assert fit.i_max == pytest.approx(imax, rel=1e-6)
    assert fit.visibility == pytest.approx(vis, rel=1e-6)


@settings(max_examples=20)
@given(st.floats(0, 360), st.floats(0.1, 0.99))
def test_rotation_equivariance(shift, vis):
    base = malus_diagram(20.0, 500.0, vis, ANGLES)
    rot = malus_diagram(20.0 + shift, 500.0, vis, ANGLES + shift)
    np.testing.assert_allclose(base.intensities, rot.intensities, rtol=1e-10, atol=1e-9)


def test_orientation_histogram_is_balanced():
    n = 100_000
    h = orientation_histogram(n, seed=3)
    assert h[0] + h[90] == n
    assert abs(h[0] - n / 2) < 4 * binomial_sigma(n)


def test_stratified_histogram_exact_split():
    h = orientation_histogram(48, seed=1, stratified=True)
    assert h == {0: 24, 90: 24}


def test_equal_four_axis_ensemble_unpolarized():
    d = ensemble_diagram({n: 1.0 for n in AXES}, 1000.0, ANGLES)
    assert d.visibility() < 0.05


def test_two_orthogonal_axes_cancel_and_unequal_do_not():
    eq = ensemble_diagram({"[111]": 1.0, "[-111]": 1.0}, 1000.0, ANGLES)
    un = ensemble_diagram({"[111]": 3.0, "[-111]": 1.0}, 1000.0, ANGLES)
    assert eq.visibility() < 1e-9
    assert un.visibility() == pytest.approx(0.5)


def test_fit_rejects_sparse_angles_and_flags_zero():
    with pytest.raises(ValueError):
        fit_polarization(malus_diagram(0, 1, 0.5, [0, 10, 20]))
    zero = malus_diagram(0, 0.0, 0.5, ANGLES)
    assert fit_polarization(zero).status == "failed"


def test_diagram_addition_checks_angles():
    a = malus_diagram(0, 1, 0.5, ANGLES)
    with pytest.raises(ValueError):
        a + malus_diagram(0, 1, 0.5, ANGLES + 1)
