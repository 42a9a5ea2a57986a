"""Synthetic snapshots and covariance matrices for uncorrelated sources in white noise."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .array_model import ArrayGeometry, SourceParams, steering_matrix


@dataclass
class SimulationConfig:
    """Sources, linear powers, snapshot count K and RNG seed.

    Noise power is per scalar channel, so per-source SNR in dB is
    ``10 log10(source_power / noise_power)``.
    """

    sources: list[SourceParams]
    source_powers: list[float]
    noise_power: float
    snapshots: int
    seed: int = 0

    def __post_init__(self):
        if self.snapshots < 1:
            raise ValueError("snapshots must be >= 1")
        if len(self.source_powers) != len(self.sources):
            raise ValueError("one power per source required")
        if any(p <= 0 for p in self.source_powers):
            raise ValueError("source powers must be positive")
        if self.noise_power < 0:
            raise ValueError("noise power must be non-negative")

    @classmethod
    def from_snr(cls, sources, snr_db: float, snapshots: int, seed: int = 0, noise_power: float = 1.0):
        power = noise_power * 10.0 ** (snr_db / 10.0)
        return cls(list(sources), [power] * len(sources), noise_power, snapshots, seed)

    def snr_db(self) -> list[float]:
        return [10 * np.log10(p / self.noise_power) for p in self.source_powers]


@dataclass
class SnapshotMatrix:
    data: np.ndarray
    geometry: ArrayGeometry

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[0] != self.geometry.n_channels:
            raise ValueError(
                f"data shape {self.data.shape} does not match {self.geometry.n_channels} channels"
            )

    @property
    def snapshots(self) -> int:
        return self.data.shape[1]


@dataclass
class CovarianceMatrix:
    data: np.ndarray
    geometry: ArrayGeometry | None = field(default=None, compare=False)


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; trial ``t`` of a run seeded ``s`` uses ``make_rng(s + t)``."""
    return np.random.Generator(np.random.PCG64(seed))


def complex_gaussian(rng: np.random.Generator, shape, variance) -> np.ndarray:
    """Circular complex Gaussian samples with E|z|^2 = variance."""
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def generate_snapshots(config: SimulationConfig, geometry: ArrayGeometry) -> SnapshotMatrix:
    if not config.sources and config.noise_power == 0:
        raise ValueError("no sources and zero noise power: data would be identically zero")
    rng = make_rng(config.seed)
    k = config.snapshots
    v = steering_matrix(geometry, config.sources)
    powers = np.asarray(config.source_powers, dtype=float)[:, None]
    s = complex_gaussian(rng, (len(config.sources), k), powers)
    noise = complex_gaussian(rng, (geometry.n_channels, k), config.noise_power)
    return SnapshotMatrix(v @ s + noise, geometry)


def sample_covariance(snapshots) -> CovarianceMatrix:
    x = snapshots.data if isinstance(snapshots, SnapshotMatrix) else np.asarray(snapshots)
    geometry = snapshots.geometry if isinstance(snapshots, SnapshotMatrix) else None
    r = x @ x.conj().T / x.shape[1]
    # exact Hermitian symmetry, BLAS may leave last-bit asymmetry
    r = 0.5 * (r + r.conj().T)
    return CovarianceMatrix(r, geometry)


def ideal_covariance(geometry: ArrayGeometry, sources, powers, noise_power: float) -> CovarianceMatrix:
    v = steering_matrix(geometry, sources)
    p = np.asarray(powers, dtype=float)
    r = (v * p) @ v.conj().T + noise_power * np.eye(geometry.n_channels)
    r = 0.5 * (r + r.conj().T)
    return CovarianceMatrix(r, geometry)
