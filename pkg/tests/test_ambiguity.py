import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vecsens.ambiguity import (
    best_linear_match,
    classify_pair,
    crossed_dipole_partner,
    doa_parallel_direction,
    is_parallel,
    kron_norm_gap,
    linear_polarisation_partner,
    tripole_no_ambiguity_scan,
)
from vecsens.array_model import ArrayGeometry, SensorKind, SourceParams, joint_steering

finite = st.floats(-3, 3, allow_nan=False)
cvec = lambda n: st.lists(st.tuples(finite, finite), min_size=n, max_size=n).map(
    lambda xs: np.array([complex(a, b) for a, b in xs])
)
nonzero = lambda n: cvec(n).filter(lambda v: np.linalg.norm(v) > 1e-2)
scale = st.tuples(st.floats(0.1, 3), st.floats(-np.pi, np.pi)).map(lambda t: t[0] * np.exp(1j * t[1]))


@given(nonzero(4), nonzero(3), scale, scale)
@settings(max_examples=200, deadline=None)
def test_kron_of_parallel_factors_is_parallel(a, q, k1, k2):
    assert is_parallel(np.kron(a, q), np.kron(k1 * a, k2 * q)).parallel
    assert kron_norm_gap(a, q) <= 1e-12 * max(1.0, np.linalg.norm(a) * np.linalg.norm(q))


@given(nonzero(4), nonzero(3), nonzero(4), nonzero(3))
@settings(max_examples=200, deadline=None)
def test_parallel_kron_implies_parallel_factors(a1, q1, a2, q2):
    both = is_parallel(np.kron(a1, q1), np.kron(a2, q2)).parallel
    assert both == (is_parallel(a1, a2).parallel and is_parallel(q1, q2).parallel)


def test_is_parallel_scale_and_errors():
    u = np.array([1, 2j, 3])
    v = (2 - 1j) * u
    verdict = is_parallel(u, v)
    assert verdict.parallel and verdict.scale == pytest.approx(2 - 1j)
    assert not is_parallel(u, u + np.array([0, 0, 1e-3])).parallel
    with pytest.raises(ValueError):
        is_parallel(u, np.zeros(3))
    with pytest.raises(ValueError):
        is_parallel(u, u[:2])


def test_doa_parallel_direction():
    t1, p1 = np.deg2rad(30), np.deg2rad(80)
    phis = doa_parallel_direction(t1, p1, np.deg2rad(60))
    assert len(phis) == 2
    for p in phis:
        assert np.sin(np.deg2rad(60)) * np.sin(p) == pytest.approx(np.sin(t1) * np.sin(p1))
    assert doa_parallel_direction(np.deg2rad(80), np.deg2rad(90), np.deg2rad(10)) == []
    assert len(doa_parallel_direction(np.deg2rad(30), np.deg2rad(90), np.deg2rad(30))) == 1
    with pytest.raises(ValueError):
        doa_parallel_direction(t1, p1, 0.0)


@pytest.mark.parametrize("theta2", [20.0, 40.0, 60.0, 80.0])
def test_crossed_dipole_partner_is_parallel(crossed5, theta2):
    a1 = SourceParams.from_degrees(30, 80, 20, 50)
    for phi2 in doa_parallel_direction(a1.theta, a1.phi, np.deg2rad(theta2)):
        a2 = crossed_dipole_partner(a1, np.deg2rad(theta2), phi2)
        assert a2.in_range()
        assert is_parallel(joint_steering(crossed5, a1), joint_steering(crossed5, a2)).parallel


def test_crossed_dipole_partner_rejects_bad_input():
    a1 = SourceParams.from_degrees(30, 80, 20, 50)
    with pytest.raises(ValueError, match="not DOA-parallel"):
        crossed_dipole_partner(a1, np.deg2rad(40), np.deg2rad(80))
    a1 = SourceParams.from_degrees(30, 90, 20, 50)
    with pytest.raises(ValueError, match="singular"):
        crossed_dipole_partner(a1, np.pi / 2, np.deg2rad(30))


def test_scan_control_on_crossed_dipole(crossed5):
    res = tripole_no_ambiguity_scan(SourceParams.from_degrees(30, 80, 20, 50), crossed5)
    assert res.max_cosine_any_pol == pytest.approx(1.0, abs=1e-10)
    assert not res.certified


def test_scan_certifies_well_separated_tripole_case(tripole5):
    res = tripole_no_ambiguity_scan(SourceParams.from_degrees(30, 80, 20, 50), tripole5)
    assert res.certified and res.separation > 2.0
    assert res.max_cosine <= res.max_cosine_any_pol + 1e-12


def test_scan_rejects_linear_source(tripole5):
    with pytest.raises(ValueError, match="linearly"):
        tripole_no_ambiguity_scan(SourceParams.from_degrees(30, 80, 90, 50), tripole5)


@pytest.mark.parametrize(
    "alpha1, alpha2, case",
    [
        ((30, 60, 90, 20), (30, 60, 90, 50), 1),
        ((0, 90, 90, 20), (50, 0, 0, 50), 2),
        ((30, 0, 0, 30), (0, 30, 30, 0), 5),
    ],
)
def test_example_pairs_classify_and_are_parallel(alpha1, alpha2, case):
    a1, a2 = SourceParams.from_degrees(*alpha1), SourceParams.from_degrees(*alpha2)
    found, verdict = classify_pair(a1, a2)
    assert found.case_id == case and found.parallel_possible
    assert verdict.parallel and verdict.cosine >= 1 - 1e-10
    partner, pcase = linear_polarisation_partner(a1)
    assert pcase == case
    assert classify_pair(a1, partner)[1].parallel


def test_swapped_pair_reports_twin():
    case, _ = classify_pair(SourceParams.from_degrees(30, 0, 0, 30), SourceParams.from_degrees(30, 60, 90, 20))
    assert case.case_id == 2 and case.swapped


@pytest.mark.parametrize(
    "alpha1, theta2, condition",
    [((30, 60, 90, 20), 60.0, "eta0"), ((30, 80, 20, 0), 60.0, "eta0"), ((30, 80, 20, 0), 60.0, "gamma90")],
)
def test_no_ambiguity_cases_stay_non_parallel(alpha1, theta2, condition):
    a1 = SourceParams.from_degrees(*alpha1)
    for phi2 in doa_parallel_direction(a1.theta, a1.phi, np.deg2rad(theta2)):
        best, _ = best_linear_match(a1, np.deg2rad(theta2), phi2, condition)
        assert best < 0.999


def test_no_partner_for_generic_eta0_source():
    assert linear_polarisation_partner(SourceParams.from_degrees(30, 80, 20, 0)) is None


def test_classify_rejects_elliptical():
    with pytest.raises(ValueError):
        classify_pair(SourceParams.from_degrees(30, 80, 20, 50), SourceParams.from_degrees(30, 80, 90, 0))
