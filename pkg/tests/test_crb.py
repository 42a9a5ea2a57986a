import numpy as np
import pytest

from vecsens.array_model import ArrayGeometry, SensorKind, SourceParams, joint_steering
from vecsens.crb import DegenerateFisherError, Scenario, crb_bounds, fisher_matrix, steering_derivatives

TWO_SOURCES = [(10.0, 20.0, 15.0, 30.0), (60.0, 70.0, 60.0, 80.0)]


def random_sources(rng, n):
    lo, hi = np.deg2rad([5, 0, 5, -175]), np.deg2rad([85, 360, 85, 175])
    return [SourceParams(*rng.uniform(lo, hi)) for _ in range(n)]


def central_difference(geometry, src, h=1e-6):
    x = src.as_array()
    out = []
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        out.append((joint_steering(geometry, SourceParams(*(x + e))) - joint_steering(geometry, SourceParams(*(x - e)))) / (2 * h))
    return np.array(out)


@pytest.mark.parametrize(
    "geometry",
    [
        ArrayGeometry.linear(SensorKind.TRIPOLE, 4),
        ArrayGeometry.planar(SensorKind.CROSSED_DIPOLE, 2, 3),
    ],
    ids=["tripole", "crossed-planar"],
)
def test_steering_derivatives_match_finite_differences(geometry):
    rng = np.random.default_rng(7)
    worst = 0.0
    for src in random_sources(rng, 100):
        ana = steering_derivatives(src, geometry)
        num = central_difference(geometry, src)
        worst = max(worst, np.max(np.linalg.norm(ana - num, axis=1) / np.linalg.norm(ana, axis=1)))
    assert worst < 1e-5


def expected_neg_loglik(geometry, x, powers, noise, r0, snapshots):
    srcs = [SourceParams(*x[4 * m : 4 * m + 4]) for m in range(len(powers))]
    r = Scenario(geometry, srcs, powers, noise).covariance()
    _, logdet = np.linalg.slogdet(r)
    return snapshots * (logdet + np.trace(np.linalg.solve(r, r0)).real)


def likelihood_fisher(scenario, snapshots, h=1e-3):
    """Hessian of the expected negative log-likelihood by 4th-order central differences."""
    x0 = np.concatenate([s.as_array() for s in scenario.sources])
    r0 = scenario.covariance()
    f = lambda x: expected_neg_loglik(scenario.geometry, x, scenario.powers, scenario.noise_power, r0, snapshots)
    n = len(x0)
    steps = [(-2, 2, -1), (-1, 1, 16), (1, -1, 16), (2, -2, -1)]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            ei, ej = np.eye(n)[i] * h, np.eye(n)[j] * h
            if i == j:
                val = (-f(x0 + 2 * ei) + 16 * f(x0 + ei) - 30 * f(x0) + 16 * f(x0 - ei) - f(x0 - 2 * ei)) / (12 * h * h)
            else:
                val = 0.0
                for a in (-2, -1, 1, 2):
                    for b in (-2, -1, 1, 2):
                        w = {1: 8, 2: -1}[abs(a)] * np.sign(a) * {1: 8, 2: -1}[abs(b)] * np.sign(b)
                        val += w * f(x0 + a * ei + b * ej)
                val /= 144 * h * h
            out[i, j] = out[j, i] = val
    return out


def test_fisher_matches_likelihood_oracle(tripole4):
    scen = Scenario.from_snr(tripole4, [SourceParams.from_degrees(*TWO_SOURCES[0])], 10.0)
    ana = fisher_matrix(scen, 1000).data
    num = likelihood_fisher(scen, 1000)
    assert np.max(np.abs(ana - num)) / np.max(np.abs(ana)) < 1e-4


def test_fisher_symmetric_psd_and_linear_in_snapshots(tripole4):
    scen = Scenario.from_snr(tripole4, [SourceParams.from_degrees(*s) for s in TWO_SOURCES], 5.0)
    f = fisher_matrix(scen, 1000).data
    np.testing.assert_array_equal(f, f.T)
    assert np.linalg.eigvalsh(f).min() > 0
    c1 = crb_bounds(scen, 1000).variances
    c2 = crb_bounds(scen, 2000).variances
    np.testing.assert_allclose(c2, c1 / 2, rtol=1e-12)
    assert np.all(c1 > 0)


def test_crb_decreases_with_snr(tripole4):
    src = [SourceParams.from_degrees(*TWO_SOURCES[0])]
    theta = [crb_bounds(Scenario.from_snr(tripole4, src, s), 1000).bound(0, "theta") for s in range(0, 31, 5)]
    assert np.all(np.diff(theta) < 0)


def test_zenith_source_is_degenerate(tripole4):
    scen = Scenario.from_snr(tripole4, [SourceParams.from_degrees(0, 20, 30, 40)], 10.0)
    with pytest.raises(DegenerateFisherError, match="phi_1"):
        crb_bounds(scen, 1000)


def test_zero_noise_rejected(tripole4):
    scen = Scenario(tripole4, [SourceParams.from_degrees(*TWO_SOURCES[0])], [1.0], 0.0)
    with pytest.raises(np.linalg.LinAlgError):
        fisher_matrix(scen, 10)
