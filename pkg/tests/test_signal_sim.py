import numpy as np
import pytest

from vecsens.array_model import ArrayGeometry, SensorKind, SourceParams, joint_steering
from vecsens.signal_sim import (
    SimulationConfig,
    SnapshotMatrix,
    complex_gaussian,
    generate_snapshots,
    ideal_covariance,
    make_rng,
    sample_covariance,
)

SOURCES = [SourceParams.from_degrees(10, 20, 15, 30), SourceParams.from_degrees(60, 70, 60, 80)]


def test_snr_convention():
    cfg = SimulationConfig.from_snr(SOURCES, 20.0, 100, noise_power=2.0)
    assert cfg.source_powers == [pytest.approx(200.0)] * 2
    np.testing.assert_allclose(cfg.snr_db(), [20.0, 20.0])


def test_same_seed_same_data(tripole4):
    cfg = SimulationConfig.from_snr(SOURCES, 10.0, 50, seed=7)
    x1 = generate_snapshots(cfg, tripole4).data
    x2 = generate_snapshots(cfg, tripole4).data
    assert np.array_equal(x1, x2)
    cfg8 = SimulationConfig.from_snr(SOURCES, 10.0, 50, seed=8)
    assert not np.array_equal(x1, generate_snapshots(cfg8, tripole4).data)


def test_complex_gaussian_variance():
    z = complex_gaussian(make_rng(0), 200_000, 3.0)
    assert np.mean(np.abs(z) ** 2) == pytest.approx(3.0, rel=0.02)
    assert abs(np.mean(z * z)) < 0.05  # circular


def test_sample_covariance_converges(tripole4):
    cfg = SimulationConfig.from_snr(SOURCES, 5.0, 100_000, seed=1)
    r = sample_covariance(generate_snapshots(cfg, tripole4)).data
    r0 = ideal_covariance(tripole4, SOURCES, cfg.source_powers, cfg.noise_power).data
    assert np.linalg.norm(r - r0) / np.linalg.norm(r0) < 0.02
    np.testing.assert_array_equal(r, r.conj().T)


def test_ideal_covariance_structure(tripole4):
    r = ideal_covariance(tripole4, SOURCES[:1], [4.0], 0.5).data
    v = joint_steering(tripole4, SOURCES[0])
    np.testing.assert_allclose(r, 4.0 * np.outer(v, v.conj()) + 0.5 * np.eye(12), atol=1e-13)


def test_noise_only_and_errors(tripole4):
    x = generate_snapshots(SimulationConfig([], [], 1.0, 10), tripole4)
    assert x.data.shape == (12, 10)
    with pytest.raises(ValueError):
        generate_snapshots(SimulationConfig([], [], 0.0, 10), tripole4)
    with pytest.raises(ValueError):
        SimulationConfig(SOURCES, [1.0], 1.0, 10)
    with pytest.raises(ValueError):
        SimulationConfig(SOURCES, [1.0, 1.0], 1.0, 0)
    with pytest.raises(ValueError):
        SnapshotMatrix(np.zeros((8, 3)), tripole4)


def test_crossed_dipole_channel_count():
    geom = ArrayGeometry.planar(SensorKind.CROSSED_DIPOLE, 2, 3)
    x = generate_snapshots(SimulationConfig.from_snr(SOURCES, 0.0, 5), geom)
    assert x.data.shape == (12, 5)
