"""Steering and polarisation vectors for crossed-dipole and tripole arrays.

All angles are radians here. Conversion from degrees happens at the CLI and
file boundaries only.

The linear array lies along the y axis, so its inter-element phase depends on
the direction only through ``sin(theta) * sin(phi)``. Planar arrays lie in the
x-y plane with rows along x and columns along y, flattened row-major.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class SensorKind(str, enum.Enum):
    TRIPOLE = "tripole"
    CROSSED_DIPOLE = "crossed-dipole"

    @property
    def components(self) -> int:
        return 3 if self is SensorKind.TRIPOLE else 2


LINEAR_POL_TOL = 1e-9


@dataclass(frozen=True)
class SourceParams:
    """One impinging signal: elevation, azimuth, auxiliary angle, phase difference."""

    theta: float
    phi: float
    gamma: float
    eta: float

    @classmethod
    def from_degrees(cls, theta, phi, gamma, eta) -> "SourceParams":
        return cls(*np.deg2rad([theta, phi, gamma, eta]).tolist())

    def degrees(self) -> tuple[float, float, float, float]:
        return tuple(np.rad2deg([self.theta, self.phi, self.gamma, self.eta]).tolist())

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.phi, self.gamma, self.eta])

    def in_range(self, tol: float = 1e-12) -> bool:
        return (
            -tol <= self.theta <= np.pi / 2 + tol
            and -tol <= self.phi < 2 * np.pi + tol
            and -tol <= self.gamma <= np.pi / 2 + tol
            and -np.pi - tol <= self.eta < np.pi + tol
        )

    def is_linearly_polarised(self, tol: float = LINEAR_POL_TOL) -> bool:
        # eta = pi is the same polarisation state as eta = 0 up to sign of g[0]
        eta = np.angle(np.exp(1j * self.eta))
        return bool(
            abs(self.gamma) < tol
            or abs(self.gamma - np.pi / 2) < tol
            or abs(eta) < tol
            or abs(abs(eta) - np.pi) < tol
        )


@dataclass(frozen=True)
class ArrayGeometry:
    """Array of identical vector sensors.

    ``rows`` is 1 for a linear array of ``cols`` elements. Spacing is in
    wavelengths.
    """

    sensor_kind: SensorKind
    rows: int
    cols: int
    spacing: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "sensor_kind", SensorKind(self.sensor_kind))
        if self.rows < 1 or self.cols < 1 or self.rows * self.cols < 2:
            raise ValueError(f"array needs at least 2 elements, got {self.rows}x{self.cols}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")

    @classmethod
    def linear(cls, kind, n: int, spacing: float = 0.5) -> "ArrayGeometry":
        return cls(SensorKind(kind), 1, n, spacing)

    @classmethod
    def planar(cls, kind, rows: int, cols: int, spacing: float = 0.5) -> "ArrayGeometry":
        return cls(SensorKind(kind), rows, cols, spacing)

    @property
    def is_linear(self) -> bool:
        return self.rows == 1

    @property
    def n_elements(self) -> int:
        return self.rows * self.cols

    @property
    def components_per_sensor(self) -> int:
        return self.sensor_kind.components

    @property
    def n_channels(self) -> int:
        return self.n_elements * self.components_per_sensor

    @property
    def n_dipoles(self) -> int:
        return self.n_channels

    def describe(self) -> str:
        layout = f"linear N={self.cols}" if self.is_linear else f"planar {self.rows}x{self.cols}"
        return f"{self.sensor_kind.value} {layout} spacing={self.spacing:g}"

    def element_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """Row index p (x axis) and column index q (y axis) of every element, row-major."""
        p, q = np.meshgrid(np.arange(self.rows), np.arange(self.cols), indexing="ij")
        return p.ravel(), q.ravel()


@dataclass(frozen=True)
class PolarisationBasis:
    omega: np.ndarray

    @property
    def psi(self) -> np.ndarray:
        return self.omega[:2, :]


def _phase_terms(geometry: ArrayGeometry, theta, phi):
    """Per-element phase (radians, without the -j) broadcast over the angle shape."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    p, q = geometry.element_indices()
    k = 2 * np.pi * geometry.spacing
    ux = np.sin(theta) * np.cos(phi)
    uy = np.sin(theta) * np.sin(phi)
    return k * (ux[..., None] * p + uy[..., None] * q)


def spatial_steering(geometry: ArrayGeometry, theta, phi) -> np.ndarray:
    """Spatial steering vector(s), shape ``(..., n_elements)``.

    Scalar angles give a 1-D vector; array angles broadcast.
    """
    return np.exp(-1j * _phase_terms(geometry, theta, phi))


def doa_matrix(theta, phi) -> np.ndarray:
    """DOA component Omega, shape ``(..., 3, 2)``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    shape = np.broadcast(theta, phi).shape
    om = np.zeros(shape + (3, 2))
    om[..., 0, 0] = ct * cp
    om[..., 1, 0] = ct * sp
    om[..., 2, 0] = -st
    om[..., 0, 1] = -sp
    om[..., 1, 1] = cp
    return om


def polarisation_basis(theta: float, phi: float) -> PolarisationBasis:
    return PolarisationBasis(doa_matrix(theta, phi))


def polarisation_phasor(gamma, eta) -> np.ndarray:
    """g = [sin(gamma) e^{j eta}, cos(gamma)], shape ``(..., 2)``."""
    gamma = np.asarray(gamma, dtype=float)
    eta = np.asarray(eta, dtype=float)
    shape = np.broadcast(gamma, eta).shape
    g = np.empty(shape + (2,), dtype=complex)
    g[..., 0] = np.sin(gamma) * np.exp(1j * eta)
    g[..., 1] = np.cos(gamma)
    return g


def sensor_response_basis(kind: SensorKind, theta, phi) -> np.ndarray:
    """Omega for tripoles, its top 2x2 block Psi for crossed-dipoles."""
    om = doa_matrix(theta, phi)
    return om if SensorKind(kind) is SensorKind.TRIPOLE else om[..., :2, :]


def polarisation_vector(source: SourceParams, sensor_kind) -> np.ndarray:
    """p = Omega g (tripole, length 3) or q = Psi g (crossed-dipole, length 2)."""
    basis = sensor_response_basis(sensor_kind, source.theta, source.phi)
    return basis @ polarisation_phasor(source.gamma, source.eta)


def joint_steering(geometry: ArrayGeometry, source: SourceParams) -> np.ndarray:
    """a kron p, sensor index outer and component index inner."""
    a = spatial_steering(geometry, source.theta, source.phi)
    return np.kron(a, polarisation_vector(source, geometry.sensor_kind))


def steering_matrix(geometry: ArrayGeometry, sources) -> np.ndarray:
    """Columns are the joint steering vectors of ``sources``."""
    cols = [joint_steering(geometry, s) for s in sources]
    if not cols:
        return np.zeros((geometry.n_channels, 0), dtype=complex)
    return np.stack(cols, axis=1)


def doa_steering_matrix(geometry: ArrayGeometry, theta, phi) -> np.ndarray:
    """B = a kron Omega, so that ``B @ g`` is the joint steering vector.

    Only defined for tripole arrays. Broadcasts over angle arrays, giving
    shape ``(..., 3 * n_elements, 2)``.
    """
    if geometry.sensor_kind is not SensorKind.TRIPOLE:
        raise ValueError("doa_steering_matrix is defined for tripole arrays only")
    return kron_steering(spatial_steering(geometry, theta, phi), doa_matrix(theta, phi))


def kron_steering(a: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Batched ``a kron basis`` for a of shape (..., n) and basis (..., c, 2)."""
    out = a[..., :, None, None] * basis[..., None, :, :]
    return out.reshape(out.shape[:-3] + (-1, basis.shape[-1]))
