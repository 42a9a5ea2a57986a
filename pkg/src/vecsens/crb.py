"""Cramer-Rao bounds for the unconditional (Gaussian source) model.

Parameters are ordered ``(theta_1, phi_1, gamma_1, eta_1, theta_2, ...)``.
Source powers and the noise power are treated as known.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array_model import (
    ArrayGeometry,
    SensorKind,
    SourceParams,
    doa_matrix,
    joint_steering,
    polarisation_phasor,
    spatial_steering,
)
from .signal_sim import ideal_covariance

PARAM_NAMES = ("theta", "phi", "gamma", "eta")
MAX_CONDITION = 1e12


@dataclass
class Scenario:
    geometry: ArrayGeometry
    sources: list[SourceParams]
    powers: list[float]
    noise_power: float

    @classmethod
    def from_snr(cls, geometry, sources, snr_db: float, noise_power: float = 1.0) -> "Scenario":
        power = noise_power * 10.0 ** (snr_db / 10.0)
        return cls(geometry, list(sources), [power] * len(sources), noise_power)

    def covariance(self) -> np.ndarray:
        return ideal_covariance(self.geometry, self.sources, self.powers, self.noise_power).data


@dataclass
class FisherMatrix:
    data: np.ndarray
    n_sources: int

    def labels(self) -> list[str]:
        return [f"{p}_{m + 1}" for m in range(self.n_sources) for p in PARAM_NAMES]


@dataclass
class CrbReport:
    """Variance bounds in rad^2, shape (n_sources, 4)."""

    variances: np.ndarray

    @property
    def std_degrees(self) -> np.ndarray:
        return np.rad2deg(np.sqrt(self.variances))

    def bound(self, source: int, param: str) -> float:
        return float(self.variances[source, PARAM_NAMES.index(param)])


class DegenerateFisherError(ValueError):
    pass


def _spatial_derivatives(geometry: ArrayGeometry, theta: float, phi: float):
    a = spatial_steering(geometry, theta, phi)
    p, q = geometry.element_indices()
    k = 2 * np.pi * geometry.spacing
    # phase = k (p sin(t) cos(f) + q sin(t) sin(f))
    dphase_t = k * np.cos(theta) * (p * np.cos(phi) + q * np.sin(phi))
    dphase_f = k * np.sin(theta) * (-p * np.sin(phi) + q * np.cos(phi))
    return a, -1j * dphase_t * a, -1j * dphase_f * a


def _basis_derivatives(theta: float, phi: float):
    ct, st, cp, sp = np.cos(theta), np.sin(theta), np.cos(phi), np.sin(phi)
    d_theta = np.array([[-st * cp, 0.0], [-st * sp, 0.0], [-ct, 0.0]])
    d_phi = np.array([[-ct * sp, -cp], [ct * cp, -sp], [0.0, 0.0]])
    return doa_matrix(theta, phi), d_theta, d_phi


def steering_derivatives(source: SourceParams, geometry: ArrayGeometry) -> np.ndarray:
    """Analytic dv/d(theta, phi, gamma, eta), returned as rows of a (4, channels) array."""
    th, ph, ga, et = source.theta, source.phi, source.gamma, source.eta
    a, da_t, da_f = _spatial_derivatives(geometry, th, ph)
    om, dom_t, dom_f = _basis_derivatives(th, ph)
    if geometry.sensor_kind is SensorKind.CROSSED_DIPOLE:
        om, dom_t, dom_f = om[:2], dom_t[:2], dom_f[:2]
    g = polarisation_phasor(ga, et)
    dg_gamma = np.array([np.cos(ga) * np.exp(1j * et), -np.sin(ga)])
    dg_eta = np.array([1j * np.sin(ga) * np.exp(1j * et), 0.0])
    p = om @ g
    return np.stack(
        [
            np.kron(da_t, p) + np.kron(a, dom_t @ g),
            np.kron(da_f, p) + np.kron(a, dom_f @ g),
            np.kron(a, om @ dg_gamma),
            np.kron(a, om @ dg_eta),
        ]
    )


def covariance_derivatives(scenario: Scenario) -> np.ndarray:
    """dR/d(alpha) for every parameter, shape (4M, channels, channels)."""
    out = []
    for src, power in zip(scenario.sources, scenario.powers):
        v = joint_steering(scenario.geometry, src)
        for dv in steering_derivatives(src, scenario.geometry):
            outer = np.outer(dv, v.conj())
            out.append(power * (outer + outer.conj().T))
    n = scenario.geometry.n_channels
    return np.array(out) if out else np.zeros((0, n, n), dtype=complex)


def fisher_matrix(scenario: Scenario, snapshots: int) -> FisherMatrix:
    """F_ij = K tr(R^-1 dR_i R^-1 dR_j) for K independent zero-mean snapshots."""
    r = scenario.covariance()
    if scenario.noise_power <= 0 or np.linalg.cond(r) > 1e15:
        raise np.linalg.LinAlgError("covariance is singular; a positive noise power is required")
    r_inv = np.linalg.inv(r)
    t = np.einsum("ij,pjk->pik", r_inv, covariance_derivatives(scenario))
    # tr(T_i T_j) = sum_ab T_i[a,b] T_j[b,a]
    f = np.einsum("iab,jba->ij", t, t).real * snapshots
    return FisherMatrix(0.5 * (f + f.T), len(scenario.sources))


def _degenerate_combination(fim: FisherMatrix) -> str:
    w, u = np.linalg.eigh(fim.data)
    vec = u[:, 0]
    labels = fim.labels()
    big = np.argsort(-np.abs(vec))
    parts = [f"{vec[i]:+.3f}*{labels[i]}" for i in big if abs(vec[i]) > 0.1]
    return " ".join(parts)


def crb_bounds(scenario: Scenario, snapshots: int) -> CrbReport:
    """Diagonal of the inverse Fisher matrix mapped to (source, parameter)."""
    fim = fisher_matrix(scenario, snapshots)
    cond = np.linalg.cond(fim.data)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise DegenerateFisherError(
            f"Fisher matrix is singular (condition {cond:.3g}); "
            f"unidentifiable direction: {_degenerate_combination(fim)}"
        )
    c = np.linalg.inv(fim.data)
    return CrbReport(np.diag(c).reshape(len(scenario.sources), 4).copy())
