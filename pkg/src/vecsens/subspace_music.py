"""Noise-subspace estimators: the joint 4-D MUSIC search and its two-stage reduction.

The reduced estimator first scans (theta, phi) with the 2x2 Gram matrix
``G = B^H U_n U_n^H B`` (through its determinant or its smaller eigenvalue),
then scans (gamma, eta) with ``g^H G g`` at each DOA estimate.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares, minimize

from .array_model import (
    ArrayGeometry,
    SensorKind,
    SourceParams,
    doa_matrix,
    joint_steering,
    kron_steering,
    polarisation_phasor,
    sensor_response_basis,
    spatial_steering,
)
from .grid import DEFAULT_CAP, GridAxis, SpectrumGrid, find_peaks, wrap_degrees
from .signal_sim import CovarianceMatrix, SnapshotMatrix, sample_covariance

# cells per evaluation chunk, bounds the (cells, channels, 2) temporaries
_CHUNK = 4096
MAX_4D_CELLS = 60_000_000


class Method(str, enum.Enum):
    MUSIC_4D = "music4d"
    DET = "det"
    EIG = "eig"


@dataclass
class SubspaceDecomposition:
    eigenvalues: np.ndarray
    signal_basis: np.ndarray
    noise_basis: np.ndarray


def decompose(r, m: int) -> SubspaceDecomposition:
    """Split a Hermitian covariance into its ``m``-dimensional signal subspace and the rest."""
    r = r.data if isinstance(r, CovarianceMatrix) else np.asarray(r)
    n = r.shape[0]
    if not 0 <= m < n:
        raise ValueError(f"source count {m} leaves no noise subspace for {n} channels (need m < {n})")
    w, u = np.linalg.eigh(r)
    w, u = w[::-1], u[:, ::-1]
    return SubspaceDecomposition(w, u[:, :m], u[:, m:])


def doa_basis(geometry: ArrayGeometry, theta, phi) -> np.ndarray:
    """Per-DOA basis whose span holds every joint steering vector for that direction.

    Tripoles use ``a kron Omega``. For crossed-dipoles ``a kron Psi`` collapses
    to rank one at theta = 90 deg although its span is ``a kron C^2``
    elsewhere, so ``a kron I_2`` is used instead; it has the same span
    whenever Psi is invertible and the same Gram scale as the tripole basis.
    """
    a = spatial_steering(geometry, theta, phi)
    if geometry.sensor_kind is SensorKind.TRIPOLE:
        return kron_steering(a, doa_matrix(theta, phi))
    eye = np.broadcast_to(np.eye(2), np.shape(theta) + (2, 2))
    return kron_steering(a, eye)


def polarisation_basis_matrix(geometry: ArrayGeometry, theta: float, phi: float) -> np.ndarray:
    """Matrix B with ``B @ g`` equal to the joint steering vector (a kron Omega or a kron Psi)."""
    a = spatial_steering(geometry, theta, phi)
    return np.kron(a[:, None], sensor_response_basis(geometry.sensor_kind, theta, phi))


def _gram_entries(un: np.ndarray, basis: np.ndarray):
    """Entries (g11, g22, g12) of B^H U_n U_n^H B for a stack of bases (..., n, 2)."""
    c = np.einsum("nk,...nc->...kc", un.conj(), basis)
    g11 = np.einsum("...k,...k->...", c[..., 0].conj(), c[..., 0]).real
    g22 = np.einsum("...k,...k->...", c[..., 1].conj(), c[..., 1]).real
    g12 = np.einsum("...k,...k->...", c[..., 0].conj(), c[..., 1])
    return g11, g22, g12


def gram_det(g11, g22, g12):
    return g11 * g22 - np.abs(g12) ** 2


def gram_eigs(g11, g22, g12):
    """Closed-form (min, max) eigenvalues of a 2x2 Hermitian PSD matrix."""
    half_tr = 0.5 * (g11 + g22)
    radius = np.sqrt((0.5 * (g11 - g22)) ** 2 + np.abs(g12) ** 2)
    lam_max = half_tr + radius
    det = gram_det(g11, g22, g12)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_min = np.where(lam_max > 0, det / lam_max, 0.0)
    return lam_min, lam_max


def _doa_gram(un, geometry, theta_deg, phi_deg):
    """Gram entries over a (theta, phi) mesh given in degrees, evaluated in chunks."""
    th = np.deg2rad(np.asarray(theta_deg, dtype=float)).ravel()
    ph = np.deg2rad(np.asarray(phi_deg, dtype=float)).ravel()
    out = [np.empty(th.size), np.empty(th.size), np.empty(th.size, dtype=complex)]
    for lo in range(0, th.size, _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        b = doa_basis(geometry, th[sl], ph[sl])
        for dst, src in zip(out, _gram_entries(un, b)):
            dst[sl] = src
    shape = np.shape(theta_deg)
    return tuple(x.reshape(shape) for x in out)


def _pol_gram(un, geometry, theta_deg, phi_deg):
    """Gram entries with the un-normalised polarisation basis (a kron Omega / a kron Psi)."""
    th = np.deg2rad(np.asarray(theta_deg, dtype=float)).ravel()
    ph = np.deg2rad(np.asarray(phi_deg, dtype=float)).ravel()
    out = [np.empty(th.size), np.empty(th.size), np.empty(th.size, dtype=complex)]
    for lo in range(0, th.size, _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        a = spatial_steering(geometry, th[sl], ph[sl])
        b = kron_steering(a, sensor_response_basis(geometry.sensor_kind, th[sl], ph[sl]))
        for dst, src in zip(out, _gram_entries(un, b)):
            dst[sl] = src
    shape = np.shape(theta_deg)
    return tuple(x.reshape(shape) for x in out)


def _quadratic_form(g11, g22, g12, gamma_deg, eta_deg):
    """g^H G g for every Gram in the leading shape and every g in the trailing shape."""
    g = polarisation_phasor(np.deg2rad(gamma_deg), np.deg2rad(eta_deg))
    a2 = np.abs(g[..., 0]) ** 2
    b2 = np.abs(g[..., 1]) ** 2
    cross = g[..., 0].conj() * g[..., 1]
    expand = (Ellipsis,) + (None,) * np.ndim(a2)
    return g11[expand] * a2 + g22[expand] * b2 + 2.0 * (g12[expand] * cross).real


def music_spectrum_4d(un, geometry: ArrayGeometry, axes: list[GridAxis], cap: float = DEFAULT_CAP) -> SpectrumGrid:
    """F = 1 / (v^H U_n U_n^H v) over a (theta, phi, gamma, eta) grid.

    Uses ``v = B g`` so that the channel contraction runs once per DOA cell
    and each polarisation cell costs a 2x2 quadratic form.
    """
    sizes = [len(ax) for ax in axes]
    if int(np.prod(sizes)) > MAX_4D_CELLS:
        raise ValueError(
            f"4-D grid of {int(np.prod(sizes))} cells exceeds {MAX_4D_CELLS}; "
            "use a coarser step or a search window"
        )
    th, ph = np.meshgrid(axes[0].values(), axes[1].values(), indexing="ij")
    ga, et = np.meshgrid(axes[2].values(), axes[3].values(), indexing="ij")
    g11, g22, g12 = _pol_gram(un, geometry, th, ph)
    den = _quadratic_form(g11, g22, g12, ga, et)
    return SpectrumGrid(list(axes), den, cap)


def _argmin_4d(un, geometry: ArrayGeometry, axes: list[GridAxis]) -> tuple[float, ...]:
    """Coordinates of the 4-D spectrum maximum without materialising the grid.

    Scans theta rows in order and keeps the first strict improvement, so ties
    resolve to the smallest grid index as in ``_best_cell``.
    """
    vals = [ax.values() for ax in axes]
    ga, et = np.meshgrid(vals[2], vals[3], indexing="ij")
    best, where = np.inf, None
    for i, th in enumerate(vals[0]):
        g11, g22, g12 = _pol_gram(un, geometry, np.full(len(vals[1]), th), vals[1])
        den = np.maximum(_quadratic_form(g11, g22, g12, ga, et), 0.0)
        flat = int(np.argmin(den))
        if den.flat[flat] < best:
            best = den.flat[flat]
            j, k, l = np.unravel_index(flat, den.shape)
            where = (th, vals[1][j], vals[2][k], vals[3][l])
    return tuple(float(x) for x in where)


def music_spectrum_4d_direct(un, geometry, axes, cap: float = DEFAULT_CAP) -> SpectrumGrid:
    """Reference 4-D spectrum built from explicit joint steering vectors (slow)."""
    grids = np.meshgrid(*[ax.values() for ax in axes], indexing="ij")
    den = np.empty(grids[0].shape)
    for idx in np.ndindex(den.shape):
        src = SourceParams.from_degrees(*(g[idx] for g in grids))
        proj = un.conj().T @ joint_steering(geometry, src)
        den[idx] = np.vdot(proj, proj).real
    return SpectrumGrid(list(axes), den, cap)


def doa_spectrum_det(un, geometry: ArrayGeometry, axes: list[GridAxis], cap: float = DEFAULT_CAP) -> SpectrumGrid:
    """f = 1 / det(B^H U_n U_n^H B) over (theta, phi)."""
    th, ph = np.meshgrid(axes[0].values(), axes[1].values(), indexing="ij")
    den = gram_det(*_doa_gram(un, geometry, th, ph))
    return SpectrumGrid(list(axes), den, cap)


def doa_spectrum_mineig(un, geometry: ArrayGeometry, axes: list[GridAxis], cap: float = DEFAULT_CAP) -> SpectrumGrid:
    """f = 1 / lambda_min(B^H U_n U_n^H B) over (theta, phi)."""
    th, ph = np.meshgrid(axes[0].values(), axes[1].values(), indexing="ij")
    lam_min, _ = gram_eigs(*_doa_gram(un, geometry, th, ph))
    return SpectrumGrid(list(axes), lam_min, cap)


def doa_spectrum_at(un, geometry: ArrayGeometry, theta_deg, phi_deg, method=Method.DET, cap: float = DEFAULT_CAP):
    """Reduced DOA spectrum at arbitrary directions (degrees), not tied to a grid."""
    entries = _doa_gram(un, geometry, theta_deg, phi_deg)
    den = gram_det(*entries) if Method(method) is Method.DET else gram_eigs(*entries)[0]
    with np.errstate(divide="ignore"):
        return np.minimum(1.0 / np.maximum(den, 0.0), cap)


def polarisation_spectrum(
    un, geometry: ArrayGeometry, theta_hat: float, phi_hat: float, axes: list[GridAxis], cap: float = DEFAULT_CAP
) -> SpectrumGrid:
    """f = 1 / (g^H B^H U_n U_n^H B g) over (gamma, eta), B fixed at the DOA estimate (degrees)."""
    g11, g22, g12 = _pol_gram(un, geometry, np.array(theta_hat), np.array(phi_hat))
    ga, et = np.meshgrid(axes[0].values(), axes[1].values(), indexing="ij")
    den = _quadratic_form(g11, g22, g12, ga, et)
    return SpectrumGrid(list(axes), den, cap)


@dataclass
class GridConfig:
    """Search resolution and extent, in degrees.

    ``windows`` restricts the 4-D search to boxes of ``+/- window_half_width``
    around the given centres (one estimate per box). ``refine`` adds
    ``refine_levels`` passes, each on a 10x finer grid spanning ``refine_span``
    cells of the previous level either side of the current estimate.
    ``polish`` then minimises the continuous spectrum denominator from the
    grid estimate, so the output is no longer quantised to the grid. DOA
    peaks joined by cells above ``merge_ratio`` of the weaker peak count as
    one.
    """

    doa_step: float = 1.0
    pol_step: float = 1.0
    refine: bool = False
    windows: list[tuple[float, float, float, float]] | None = None
    window_half_width: float = 5.0
    refine_span: int = 3
    refine_levels: int = 1
    polish: bool = False
    merge_ratio: float = 0.1
    cap: float = DEFAULT_CAP

    def doa_axes(self) -> list[GridAxis]:
        return [GridAxis.full("theta", self.doa_step), GridAxis.full("phi", self.doa_step)]

    def pol_axes(self) -> list[GridAxis]:
        return [GridAxis.full("gamma", self.pol_step), GridAxis.full("eta", self.pol_step)]

    @property
    def quantisation_floor(self) -> tuple[float, float]:
        """RMSE floor step/sqrt(12) of grid-valued estimates; zero once polished."""
        if self.polish:
            return 0.0, 0.0
        return tuple(s / np.sqrt(12.0) for s in self.effective_steps)

    @property
    def effective_steps(self) -> tuple[float, float]:
        f = 10.0**self.refine_levels if self.refine else 1.0
        return self.doa_step / f, self.pol_step / f


@dataclass
class EstimateSet:
    estimates: list[tuple[float, float, float, float]]
    method: Method
    spectra: dict = field(default_factory=dict, repr=False)

    def as_array(self) -> np.ndarray:
        return np.array(self.estimates, dtype=float).reshape(-1, 4)


# hard limits of the bounded axes, where a window edge is not a search edge
_BOUNDS = {"theta": (0.0, 90.0), "gamma": (0.0, 90.0)}
MAX_WALK = 50


def _on_open_edge(point, axes) -> bool:
    for x, ax in zip(point, axes):
        vals = ax.values()
        lo, hi = _BOUNDS.get(ax.name, (-np.inf, np.inf))
        if (x == vals[0] and x > lo) or (x == vals[-1] and x < hi):
            return True
    return False


def _refine(score, names, centre, steps, grid: GridConfig):
    """Zoom in ``refine_levels`` times by 10x; ``score`` maps a list of axes to the best cell.

    Within a level the window is re-centred while the best cell lies on its
    edge. On a thin ridge the coarse optimum can sit several cells from the
    fine one, and a fixed window would truncate the search.
    """
    for _ in range(grid.refine_levels):
        for _ in range(MAX_WALK):
            axes = _refined_axes(names, centre, steps, grid.refine_span)
            centre = score(axes)
            if not _on_open_edge(centre, axes):
                break
        steps = [s / 10.0 for s in steps]
    return centre


def _nelder_mead(f, x0, step: float, bounded) -> tuple[float, ...]:
    """Local minimum of ``f`` from ``x0`` (degrees); ``bounded`` flags axes limited to [0, 90]."""
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    simplex = np.vstack([x0] + [x0 + step * e for e in np.eye(n)])
    bounds = [(0.0, 90.0) if b else (None, None) for b in bounded]
    # keep the initial simplex feasible
    for j, b in enumerate(bounded):
        if b:
            simplex[:, j] = np.clip(simplex[:, j], 0.0, 90.0)
            if simplex[j + 1, j] == x0[j]:
                simplex[j + 1, j] = x0[j] - step
    f0 = f(x0)
    res = minimize(
        f, x0, method="Nelder-Mead", bounds=bounds,
        options={"initial_simplex": simplex, "xatol": 1e-7, "fatol": 1e-12 * f0, "maxiter": 400 * n, "adaptive": True},
    )
    return tuple(float(v) for v in res.x) if res.fun <= f0 else tuple(float(v) for v in x0)


def _doa_objective(un, geometry, method: Method):
    def f(x):
        entries = _doa_gram(un, geometry, np.array(x[0]), np.array(x[1]))
        den = gram_det(*entries) if method is Method.DET else gram_eigs(*entries)[0]
        return float(den)

    return f


def _pol_objective(un, geometry, th, ph):
    g11, g22, g12 = _pol_gram(un, geometry, np.array(th), np.array(ph))
    return lambda x: float(_quadratic_form(g11, g22, g12, np.array(x[0]), np.array(x[1])))


def _polish_4d(un, geometry: ArrayGeometry, x0) -> tuple[float, ...]:
    """Gauss-Newton (trust-region) minimisation of |U_n^H v(alpha)|^2, alpha in degrees."""
    from .crb import steering_derivatives

    unh = un.conj().T
    scale = np.pi / 180.0

    def residual(x):
        r = unh @ joint_steering(geometry, SourceParams.from_degrees(*x))
        return np.concatenate([r.real, r.imag])

    def jacobian(x):
        d = unh @ steering_derivatives(SourceParams.from_degrees(*x), geometry).T * scale
        return np.vstack([d.real, d.imag])

    x0 = np.clip(np.asarray(x0, dtype=float), [0, -np.inf, 0, -np.inf], [90, np.inf, 90, np.inf])
    res = least_squares(
        residual, x0, jac=jacobian, bounds=([0, -np.inf, 0, -np.inf], [90, np.inf, 90, np.inf]),
        xtol=1e-12, ftol=1e-15, gtol=1e-15, max_nfev=200,
    )
    return tuple(float(v) for v in res.x) if res.cost <= 0.5 * residual(x0) @ residual(x0) else tuple(x0)


def _refined_axes(names, centre, steps, span: int) -> list[GridAxis]:
    return [GridAxis.window(n, c, span * s, s / 10.0) for n, c, s in zip(names, centre, steps)]


def _best_cell(spectrum: SpectrumGrid) -> tuple[float, ...]:
    den = spectrum.denominator
    flat = int(np.argmin(den))  # argmin returns the first, i.e. smallest index on ties
    return spectrum.coordinates(np.unravel_index(flat, den.shape))


def _canonical(est) -> tuple[float, float, float, float]:
    th, ph, ga, et = (float(x) for x in est)
    return (th, float(wrap_degrees(ph, 0.0)), ga, float(wrap_degrees(et, -180.0)))


def _noise_basis(data, geometry: ArrayGeometry, m: int) -> np.ndarray:
    if isinstance(data, SnapshotMatrix):
        data = sample_covariance(data)
    return decompose(data, m).noise_basis


def estimate(data, geometry: ArrayGeometry, m: int, method=Method.DET, grid: GridConfig | None = None) -> EstimateSet:
    """Estimate (theta, phi, gamma, eta) in degrees for ``m`` sources.

    ``data`` is a covariance (array or CovarianceMatrix) or a SnapshotMatrix.
    """
    method = Method(method)
    grid = grid or GridConfig()
    un = _noise_basis(data, geometry, m)
    if method is Method.MUSIC_4D:
        return _estimate_4d(un, geometry, m, grid)

    doa_fn = doa_spectrum_det if method is Method.DET else doa_spectrum_mineig
    doa = doa_fn(un, geometry, grid.doa_axes(), grid.cap)
    spectra = {"doa": doa, "pol": []}
    estimates = []
    for idx in find_peaks(doa, m, grid.merge_ratio):
        th, ph = doa.coordinates(idx)
        if grid.refine:
            th, ph = _refine(
                lambda axes: _best_cell(doa_fn(un, geometry, axes, grid.cap)),
                ("theta", "phi"), (th, ph), [grid.doa_step] * 2, grid,
            )
        if grid.polish:
            th, ph = _nelder_mead(_doa_objective(un, geometry, method), (th, ph), grid.effective_steps[0], (True, False))
        pol = polarisation_spectrum(un, geometry, th, ph, grid.pol_axes(), grid.cap)
        spectra["pol"].append(pol)
        ga, et = pol.coordinates(find_peaks(pol, 1)[0])
        if grid.refine:
            ga, et = _refine(
                lambda axes: _best_cell(polarisation_spectrum(un, geometry, th, ph, axes, grid.cap)),
                ("gamma", "eta"), (ga, et), [grid.pol_step] * 2, grid,
            )
        if grid.polish:
            ga, et = _nelder_mead(_pol_objective(un, geometry, th, ph), (ga, et), grid.effective_steps[1], (True, False))
        estimates.append(_canonical((th, ph, ga, et)))
    return EstimateSet(estimates, method, spectra)


def _estimate_4d(un, geometry, m, grid: GridConfig) -> EstimateSet:
    names = ("theta", "phi", "gamma", "eta")
    steps = (grid.doa_step, grid.doa_step, grid.pol_step, grid.pol_step)
    estimates, spectra = [], {"4d": []}
    if grid.windows is None:
        axes = grid.doa_axes() + grid.pol_axes()
        spec = music_spectrum_4d(un, geometry, axes, grid.cap)
        spectra["4d"].append(spec)
        coarse = [spec.coordinates(i) for i in find_peaks(spec, m, grid.merge_ratio)]
    else:
        if len(grid.windows) != m:
            raise ValueError(f"{m} sources but {len(grid.windows)} search windows")
        coarse = []
        for centre in grid.windows:
            axes = [GridAxis.window(n, c, grid.window_half_width, s) for n, c, s in zip(names, centre, steps)]
            spec = music_spectrum_4d(un, geometry, axes, grid.cap)
            spectra["4d"].append(spec)
            coarse.append(spec.coordinates(find_peaks(spec, 1)[0]))
    for peak in coarse:
        if grid.refine:
            peak = _refine(lambda axes: _argmin_4d(un, geometry, axes), names, peak, steps, grid)
        if grid.polish:
            peak = _polish_4d(un, geometry, peak)
        estimates.append(_canonical(peak))
    return EstimateSet(estimates, Method.MUSIC_4D, spectra)


def with_windows(grid: GridConfig, sources_deg) -> GridConfig:
    return replace(grid, windows=[tuple(s) for s in sources_deg])
