import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vecsens.array_model import ArrayGeometry, SensorKind, SourceParams, joint_steering
from vecsens.grid import GridAxis
from vecsens.signal_sim import ideal_covariance
from vecsens.subspace_music import (
    MAX_4D_CELLS,
    GridConfig,
    Method,
    decompose,
    doa_basis,
    doa_spectrum_at,
    doa_spectrum_det,
    estimate,
    gram_eigs,
    music_spectrum_4d,
    music_spectrum_4d_direct,
    polarisation_spectrum,
    with_windows,
)

TWO_SOURCES = [(10.0, 20.0, 15.0, 30.0), (60.0, 70.0, 60.0, 80.0)]


def noise_basis(geom, sources_deg, noise=0.0):
    srcs = [SourceParams.from_degrees(*s) for s in sources_deg]
    r = ideal_covariance(geom, srcs, [1.0] * len(srcs), noise)
    return decompose(r, len(srcs)).noise_basis


def test_decompose_ordering_and_errors(tripole4):
    r = ideal_covariance(tripole4, [SourceParams.from_degrees(*TWO_SOURCES[0])], [2.0], 0.5)
    d = decompose(r, 1)
    assert np.all(np.diff(d.eigenvalues) <= 1e-12)
    assert d.signal_basis.shape == (12, 1) and d.noise_basis.shape == (12, 11)
    with pytest.raises(ValueError):
        decompose(r, 12)


@given(st.floats(0, 10), st.floats(0, 10), st.complex_numbers(max_magnitude=5))
@settings(max_examples=300, deadline=None)
def test_closed_form_eigs_match_numpy(a, b, c):
    g11, g22 = a + abs(c), b + abs(c)  # diagonally dominant keeps it PSD
    lo, hi = gram_eigs(np.array(g11), np.array(g22), np.array(c))
    ref = np.linalg.eigvalsh(np.array([[g11, c], [np.conj(c), g22]]))
    assert lo == pytest.approx(ref[0], abs=1e-9 * max(1.0, ref[1]))
    assert hi == pytest.approx(ref[1], abs=1e-9 * max(1.0, ref[1]))


def test_fast_4d_spectrum_matches_direct_construction(tripole4):
    un = noise_basis(tripole4, TWO_SOURCES, noise=0.1)
    axes = [
        GridAxis("theta", 8, 12, 2),
        GridAxis("phi", 18, 22, 2),
        GridAxis("gamma", 13, 17, 2),
        GridAxis("eta", 28, 32, 2),
    ]
    fast = music_spectrum_4d(un, tripole4, axes)
    slow = music_spectrum_4d_direct(un, tripole4, axes)
    np.testing.assert_allclose(fast.denominator, slow.denominator, rtol=1e-10, atol=1e-14)


def test_4d_grid_size_guard(tripole4):
    un = noise_basis(tripole4, TWO_SOURCES[:1])
    axes = [GridAxis.full("theta", 0.5), GridAxis.full("phi", 0.5), GridAxis.full("gamma", 0.5), GridAxis.full("eta", 0.5)]
    assert np.prod([len(a) for a in axes]) > MAX_4D_CELLS
    with pytest.raises(ValueError, match="exceeds"):
        music_spectrum_4d(un, tripole4, axes)


@pytest.mark.parametrize("method", list(Method))
def test_noise_free_recovery_on_grid(tripole5, method):
    truth = [(30.0, 80.0, 20.0, 50.0)]
    r = ideal_covariance(tripole5, [SourceParams.from_degrees(*truth[0])], [1.0], 0.0)
    grid = GridConfig()
    if method is Method.MUSIC_4D:
        grid = with_windows(grid, truth)
    est = estimate(r, tripole5, 1, method, grid)
    np.testing.assert_allclose(est.as_array(), truth, atol=1e-9)


def test_noise_free_two_sources_with_refinement(tripole4):
    srcs = [SourceParams.from_degrees(*s) for s in TWO_SOURCES]
    r = ideal_covariance(tripole4, srcs, [1.0, 1.0], 0.0)
    est = estimate(r, tripole4, 2, Method.DET, GridConfig(refine=True)).as_array()
    est = est[np.argsort(est[:, 0])]
    np.testing.assert_allclose(est, TWO_SOURCES, atol=1e-6)


@pytest.mark.parametrize("truth", [(12.34, 56.78, 23.45, -67.89), (7.53, 138.013, 37.678, -159.154)])
def test_off_grid_source_polished_to_truth(tripole4, truth):
    r = ideal_covariance(tripole4, [SourceParams.from_degrees(*truth)], [1.0], 0.0)
    grid = GridConfig(refine=True, polish=True)
    for method in (Method.DET, Method.EIG):
        est = estimate(r, tripole4, 1, method, grid).as_array()[0]
        np.testing.assert_allclose(est, truth, atol=1e-4)
    est = estimate(r, tripole4, 1, Method.MUSIC_4D, with_windows(grid, [np.round(truth)])).as_array()[0]
    np.testing.assert_allclose(est, truth, atol=1e-6)


def test_refinement_walks_along_ridge(tripole4):
    # near the pole the coarse optimum is far from the fine one; the window must follow it
    truth = (7.53, 138.013, 37.678, -159.154)
    r = ideal_covariance(tripole4, [SourceParams.from_degrees(*truth)], [1.0], 0.0)
    est = estimate(r, tripole4, 1, Method.DET, GridConfig(refine=True)).as_array()[0]
    assert np.all(np.abs(est - truth) < 0.6)
    assert GridConfig(refine=True).quantisation_floor == pytest.approx((0.1 / np.sqrt(12),) * 2)
    assert GridConfig(refine=True, polish=True).quantisation_floor == (0.0, 0.0)


def test_crossed_dipole_doa_basis_spans_steering_at_horizon():
    geom = ArrayGeometry.linear(SensorKind.CROSSED_DIPOLE, 4)
    src = SourceParams.from_degrees(90, 40, 30, 20)
    b = doa_basis(geom, np.array(src.theta), np.array(src.phi))
    v = joint_steering(geom, src)
    coef, *_ = np.linalg.lstsq(b, v, rcond=None)
    np.testing.assert_allclose(b @ coef, v, atol=1e-12)
    assert np.linalg.matrix_rank(b) == 2


def test_crossed_dipole_spectrum_has_ridge(crossed5):
    un = noise_basis(crossed5, [(30, 80, 20, 50)])
    u = np.sin(np.deg2rad(30)) * np.sin(np.deg2rad(80))
    for th in (40.0, 60.0, 85.0):
        ph = np.rad2deg(np.arcsin(u / np.sin(np.deg2rad(th))))
        assert doa_spectrum_at(un, crossed5, th, ph) > 1e9


def test_polarisation_spectrum_peak(tripole4):
    un = noise_basis(tripole4, TWO_SOURCES)
    axes = [GridAxis.full("gamma", 1.0), GridAxis.full("eta", 1.0)]
    pol = polarisation_spectrum(un, tripole4, 60.0, 70.0, axes)
    i = np.unravel_index(np.argmin(pol.denominator), pol.shape)
    assert pol.coordinates(i) == (60.0, 80.0)


def test_det_and_eig_spectra_peak_together(tripole4):
    un = noise_basis(tripole4, TWO_SOURCES)
    axes = GridConfig().doa_axes()
    det = doa_spectrum_det(un, tripole4, axes)
    assert det.values.max() == det.cap
    th, ph = np.meshgrid(*[a.values() for a in axes], indexing="ij")
    np.testing.assert_allclose(doa_spectrum_at(un, tripole4, th, ph, "det"), det.values)


def test_windows_must_match_source_count(tripole4):
    r = ideal_covariance(tripole4, [SourceParams.from_degrees(*TWO_SOURCES[0])], [1.0], 0.1)
    with pytest.raises(ValueError):
        estimate(r, tripole4, 1, Method.MUSIC_4D, with_windows(GridConfig(), TWO_SOURCES))
