"""Steering-vector ambiguities of linear vector-sensor arrays.

Two joint steering vectors that are parallel cannot be told apart by any
subspace method. On a linear array the spatial factor depends on the DOA only
through ``sin(theta) sin(phi)``, so distinct directions can share it; whether
the full vectors are then parallel depends on the polarisation factor.
Crossed-dipoles always admit a partner polarisation, tripoles only do for
some linearly polarised signals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array_model import (
    LINEAR_POL_TOL,
    ArrayGeometry,
    SensorKind,
    SourceParams,
    joint_steering,
    kron_steering,
    polarisation_phasor,
    sensor_response_basis,
    spatial_steering,
)
from .grid import GridAxis

PARALLEL_TOL = 1e-10
CERTIFY_MARGIN = 1e-3
_SCAN_CHUNK = 512


@dataclass(frozen=True)
class ParallelVerdict:
    """Outcome of a parallelism test; ``scale`` is k with v ~ k u (None if not parallel)."""

    parallel: bool
    cosine: float
    scale: complex | None = None


def is_parallel(u, v, tol: float = PARALLEL_TOL) -> ParallelVerdict:
    """Test ``v = k u`` through the normalised cosine ``|u^H v| / (|u| |v|)``."""
    u = np.asarray(u, dtype=complex).ravel()
    v = np.asarray(v, dtype=complex).ravel()
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.size} vs {v.size}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("parallelism is undefined for a zero vector")
    inner = np.vdot(u, v)
    cosine = float(min(abs(inner) / (nu * nv), 1.0))
    if cosine >= 1.0 - tol:
        return ParallelVerdict(True, cosine, complex(inner / nu**2))
    return ParallelVerdict(False, cosine)


def doa_parallel_direction(theta1: float, phi1: float, theta2: float) -> list[float]:
    """Azimuths phi2 in [0, 2pi) with sin(theta2) sin(phi2) = sin(theta1) sin(phi1). Radians."""
    if not 0 < theta2 <= np.pi / 2 + 1e-15:
        raise ValueError("theta2 must lie in (0, pi/2]")
    s = np.sin(theta1) * np.sin(phi1) / np.sin(theta2)
    if abs(s) > 1.0:
        if abs(s) - 1.0 > 1e-12:
            return []
        s = np.sign(s)
    base = float(np.arcsin(s))
    out = []
    for phi in (base % (2 * np.pi), (np.pi - base) % (2 * np.pi)):
        if not any(abs(phi - x) < 1e-12 for x in out):
            out.append(phi)
    return sorted(out)


def _u(theta, phi):
    return np.sin(theta) * np.sin(phi)


def crossed_dipole_partner(alpha1: SourceParams, theta2: float, phi2: float) -> SourceParams:
    """Polarisation that makes the crossed-dipole response at (theta2, phi2) parallel to alpha1's.

    Solves ``Psi_2 g_2 = Psi_1 g_1`` and rescales g_2 to the (gamma, eta) form,
    which leaves the direction of the joint steering vector unchanged.
    """
    if abs(_u(theta2, phi2) - _u(alpha1.theta, alpha1.phi)) > 1e-9:
        raise ValueError("(theta2, phi2) is not DOA-parallel to alpha1")
    if abs(np.cos(theta2)) < 1e-12:
        raise ValueError("Psi is singular at theta2 = 90 deg (det Psi = cos theta)")
    psi1 = sensor_response_basis(SensorKind.CROSSED_DIPOLE, alpha1.theta, alpha1.phi)
    psi2 = sensor_response_basis(SensorKind.CROSSED_DIPOLE, theta2, phi2)
    g2 = np.linalg.solve(psi2, psi1 @ polarisation_phasor(alpha1.gamma, alpha1.eta))
    if abs(g2[1]) < 1e-15 * np.linalg.norm(g2):
        gamma2, eta2 = np.pi / 2, float(np.angle(g2[0]))
    else:
        gamma2 = float(np.arctan(abs(g2[0]) / abs(g2[1])))
        eta2 = float(np.angle(g2[0] / g2[1]))
    return SourceParams(theta2, phi2, gamma2, eta2)


@dataclass
class ScanResult:
    """Largest off-source cosine of the tripole scan.

    ``max_cosine`` is over the grid; ``max_cosine_any_pol`` maximises the
    polarisation in closed form at every grid DOA, so it bounds the former.
    Locations are in degrees, ``separation`` is the great-circle distance to
    the source DOA.
    """

    max_cosine: float
    location: tuple[float, float, float, float]
    separation: float
    max_cosine_any_pol: float
    location_any_pol: tuple[float, float]
    certified: bool


def tripole_no_ambiguity_scan(
    alpha1: SourceParams,
    geometry: ArrayGeometry,
    step: float = 2.0,
    exclusion: float = 2.0,
    margin: float = CERTIFY_MARGIN,
) -> ScanResult:
    """Largest joint-steering cosine to alpha1 over a (theta, phi, gamma, eta) grid.

    DOA cells within ``exclusion`` degrees of alpha1's direction are skipped,
    which also removes alpha1 itself and its re-parameterisations. The scan
    certifies absence of ambiguity when the maximum stays below ``1 - margin``.
    Any geometry is accepted so the crossed-dipole case can serve as a control.
    """
    if alpha1.is_linearly_polarised():
        raise ValueError("alpha1 is linearly polarised; use linear_polarisation_partner")
    v1 = joint_steering(geometry, alpha1)
    v1 = v1 / np.linalg.norm(v1)
    th, ph = np.meshgrid(GridAxis.full("theta", step).values(), GridAxis.full("phi", step).values(), indexing="ij")
    th, ph = th.ravel(), ph.ravel()
    tr, pr = np.deg2rad(th), np.deg2rad(ph)
    cos_sep = np.cos(alpha1.theta) * np.cos(tr) + np.sin(alpha1.theta) * np.sin(tr) * np.cos(alpha1.phi - pr)
    sep = np.rad2deg(np.arccos(np.clip(cos_sep, -1.0, 1.0)))
    keep = np.flatnonzero(sep > exclusion)

    ga, et = np.meshgrid(
        np.deg2rad(GridAxis.full("gamma", step).values()), np.deg2rad(GridAxis.full("eta", step).values()), indexing="ij"
    )
    g = polarisation_phasor(ga, et).reshape(-1, 2)
    best_grid = np.zeros(keep.size)
    best_pol = np.zeros(keep.size, dtype=int)
    best_any = np.zeros(keep.size)
    for lo in range(0, keep.size, _SCAN_CHUNK):
        cells = keep[lo : lo + _SCAN_CHUNK]
        a = spatial_steering(geometry, tr[cells], pr[cells])
        b = kron_steering(a, sensor_response_basis(geometry.sensor_kind, tr[cells], pr[cells]))
        d = np.einsum("knc,n->kc", b.conj(), v1)
        gram = np.einsum("knc,knd->kcd", b.conj(), b)
        num = np.abs(d.conj() @ g.T) ** 2
        den = np.einsum("gc,kcd,gd->kg", g.conj(), gram, g).real
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(den > 1e-14, num / den, 0.0)
        j = np.argmax(ratio, axis=1)
        sl = slice(lo, lo + cells.size)
        best_pol[sl] = j
        best_grid[sl] = np.sqrt(ratio[np.arange(cells.size), j])
        # sup over all g of |d^H g|^2 / g^H G g = d^H G^+ d
        best_any[sl] = np.sqrt(np.maximum(np.einsum("kc,kcd,kd->k", d.conj(), np.linalg.pinv(gram), d).real, 0.0))
    i = int(np.argmax(best_grid))
    k = int(np.argmax(best_any))
    cell = keep[i]
    gdeg = np.rad2deg(ga.ravel()[best_pol[i]]), np.rad2deg(et.ravel()[best_pol[i]])
    max_cos = float(min(best_grid[i], 1.0))
    return ScanResult(
        max_cosine=max_cos,
        location=(float(th[cell]), float(ph[cell]), float(gdeg[0]), float(gdeg[1])),
        separation=float(sep[cell]),
        max_cosine_any_pol=float(min(best_any[k], 1.0)),
        location_any_pol=(float(th[keep[k]]), float(ph[keep[k]])),
        certified=max_cos < 1.0 - margin,
    )


# linear-polarisation taxonomy

# (condition of alpha1, condition of alpha2) -> (case id, swapped)
_CASE_TABLE = {
    ("gamma90", "gamma90"): (1, False),
    ("gamma90", "gamma0"): (2, False),
    ("gamma0", "gamma90"): (2, True),
    ("gamma90", "eta0"): (3, False),
    ("eta0", "gamma90"): (3, True),
    ("gamma0", "gamma0"): (4, False),
    ("gamma0", "eta0"): (5, False),
    ("eta0", "gamma0"): (5, True),
    ("eta0", "eta0"): (6, False),
}
_CASE_TEXT = {
    1: "both gamma = 90 deg: parallel iff same DOA (any eta)",
    2: "gamma = 90 deg vs gamma = 0: needs theta = 0 on the gamma = 90 side and phi_1 - phi_2 = 90 deg (mod 180)",
    3: "gamma = 90 deg vs eta = 0: no ambiguity",
    4: "both gamma = 0: parallel iff same phi and DOA-parallel",
    5: "gamma = 0 vs eta = 0: needs theta = 0 on the eta = 0 side and tan(gamma_2) = tan(phi_2 - phi_1)",
    6: "both eta = 0: no other solutions",
}


@dataclass(frozen=True)
class AmbiguityCase:
    """One cell of the 3x3 pairing of linear-polarisation conditions."""

    case_id: int
    swapped: bool
    parallel_possible: bool
    constraint: str
    degenerate: bool = False


def _condition(alpha: SourceParams, tol: float = LINEAR_POL_TOL) -> str:
    if abs(alpha.gamma - np.pi / 2) <= tol:
        return "gamma90"
    if abs(alpha.gamma) <= tol:
        return "gamma0"
    eta = (alpha.eta + np.pi) % (2 * np.pi) - np.pi
    if abs(eta) <= tol or abs(abs(eta) - np.pi) <= tol:
        return "eta0"
    raise ValueError("source is not linearly polarised")


def _tripole_vector(alpha: SourceParams, geometry: ArrayGeometry | None) -> np.ndarray:
    geometry = geometry or ArrayGeometry.linear(SensorKind.TRIPOLE, 4)
    return joint_steering(geometry, alpha)


def classify_pair(
    alpha1: SourceParams, alpha2: SourceParams, geometry: ArrayGeometry | None = None
) -> tuple[AmbiguityCase, ParallelVerdict]:
    """Case of a linearly polarised pair and the computed parallelism verdict (tripole array)."""
    c1, c2 = _condition(alpha1), _condition(alpha2)
    case_id, swapped = _CASE_TABLE[(c1, c2)]
    same = np.allclose(alpha1.as_array(), alpha2.as_array(), rtol=0, atol=1e-12)
    case = AmbiguityCase(case_id, swapped, case_id not in (3, 6), _CASE_TEXT[case_id], degenerate=same)
    verdict = is_parallel(_tripole_vector(alpha1, geometry), _tripole_vector(alpha2, geometry))
    return case, verdict


def _wrap_pi(x: float) -> float:
    return float((x + np.pi) % (2 * np.pi) - np.pi)


def linear_polarisation_partner(
    alpha1: SourceParams, geometry: ArrayGeometry | None = None
) -> tuple[SourceParams, int] | None:
    """A distinct linearly polarised source whose tripole response is parallel to alpha1's.

    Cases that move the DOA are tried before those that keep it. Free
    parameters are offset by 30 deg. Returns None when only the
    no-ambiguity cases apply.
    """
    cond = _condition(alpha1)
    th, ph, ga, et = alpha1.theta, alpha1.phi, alpha1.gamma, alpha1.eta
    off = np.deg2rad(30.0)
    tol = LINEAR_POL_TOL
    candidates: list[tuple[SourceParams, int]] = []
    if cond == "gamma90":
        if abs(th) <= tol:
            # gamma_2 = 0 at phi_2 = phi_1 - 90 deg; the spatial factor stays all-ones
            # only if sin(phi_2) = 0, otherwise theta_2 must also be 0
            phi2 = (ph - np.pi / 2) % (2 * np.pi)
            theta2 = np.deg2rad(50.0) if abs(np.sin(phi2)) < 1e-12 else 0.0
            candidates.append((SourceParams(theta2, phi2, 0.0, _wrap_pi(et + off)), 2))
        candidates.append((SourceParams(th, ph, np.pi / 2, _wrap_pi(et + off)), 1))
    elif cond == "gamma0":
        if abs(np.sin(th) * np.sin(ph)) <= 1e-12:
            # theta_2 = 0, eta_2 = 0, gamma_2 = phi_2 - phi_1
            candidates.append((SourceParams(0.0, (ph + off) % (2 * np.pi), off, 0.0), 5))
        candidates.append((SourceParams(th, ph, 0.0, _wrap_pi(et + off)), 4))
    elif abs(th) <= tol:
        # eta_1 = 0 at the zenith: gamma_2 = 0 at phi_2 = phi_1 - gamma_1
        candidates.append((SourceParams(0.0, (ph - ga) % (2 * np.pi), 0.0, 0.0), 5))
    for alpha2, case_id in candidates:
        if is_parallel(_tripole_vector(alpha1, geometry), _tripole_vector(alpha2, geometry)).parallel:
            return alpha2, case_id
    return None


def best_linear_match(alpha1: SourceParams, theta2: float, phi2: float, condition: str, geometry=None, n: int = 3601):
    """Largest cosine to alpha1 over sources at (theta2, phi2) satisfying ``condition``.

    ``condition`` is ``"eta0"`` (gamma swept over the open interval (0, 90) deg,
    since the end points belong to the gamma = 0 and gamma = 90 deg classes) or
    ``"gamma90"`` (eta swept over [-180, 180) deg). Used to show that the
    no-ambiguity cases have no parallel partner even at the best polarisation.
    """
    if condition not in ("eta0", "gamma90"):
        raise ValueError(f"unsupported condition {condition!r}")
    v1 = _tripole_vector(alpha1, geometry)
    best, arg = -1.0, None
    sweep = np.linspace(0.0, np.pi / 2, n)[1:-1] if condition == "eta0" else np.linspace(-np.pi, np.pi, n, endpoint=False)
    for x in sweep:
        alpha2 = SourceParams(theta2, phi2, x, 0.0) if condition == "eta0" else SourceParams(theta2, phi2, np.pi / 2, x)
        c = is_parallel(v1, _tripole_vector(alpha2, geometry)).cosine
        if c > best:
            best, arg = c, alpha2
    return best, arg


def kron_norm_gap(a, q) -> float:
    """| |a kron q| - |a| |q| |, zero up to rounding."""
    return float(abs(np.linalg.norm(np.kron(a, q)) - np.linalg.norm(a) * np.linalg.norm(q)))


__all__ = [
    "ParallelVerdict",
    "AmbiguityCase",
    "ScanResult",
    "is_parallel",
    "doa_parallel_direction",
    "crossed_dipole_partner",
    "tripole_no_ambiguity_scan",
    "linear_polarisation_partner",
    "classify_pair",
    "best_linear_match",
    "kron_norm_gap",
]
