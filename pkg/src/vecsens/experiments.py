"""Monte-Carlo experiments, spectrum export and reports behind the CLI.

Trial ``t`` draws its data from seed ``seed + t`` at every SNR point, and all
methods in a run see the same data. Trials are independent, so they may run
in worker processes; results are gathered in trial order and written once,
which keeps output files identical for any worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import ambiguity
from .array_model import ArrayGeometry, SensorKind, SourceParams, joint_steering
from .config import ExperimentConfig
from .crb import PARAM_NAMES, DegenerateFisherError, Scenario, crb_bounds
from .grid import PeakError, wrapped_difference
from .signal_sim import SimulationConfig, generate_snapshots, ideal_covariance, sample_covariance
from .subspace_music import (
    GridConfig,
    Method,
    decompose,
    doa_spectrum_det,
    doa_spectrum_mineig,
    estimate,
    music_spectrum_4d,
    with_windows,
)

RMSE_COLUMNS = [
    "snr_db",
    "geometry",
    "method",
    "source",
    "parameter",
    "rmse_deg",
    "crb_sqrt_deg",
    "grid_step_deg",
    "grid_floor_deg",
    "snapshots",
    "trials",
    "failed",
]
CRB_COLUMNS = ["snr_db", "geometry", "source", "parameter", "crb_rad2", "crb_sqrt_deg"]
COMPLEXITY_COLUMNS = ["method", "N", "M", "L", "multiplications"]


def fmt(x) -> str:
    """Stable text form for table cells."""
    if isinstance(x, (float, np.floating)):
        return "nan" if not np.isfinite(x) else f"{float(x):.9g}"
    return str(x)


@dataclass
class Table:
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([fmt(x) for x in row])
        return buf.getvalue()

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def select(self, **match) -> list[dict]:
        out = []
        for r in self.rows:
            d = dict(zip(self.columns, r))
            if all(d[k] == v for k, v in match.items()):
                out.append(d)
        return out


# RMSE machinery


def grid_config(config: ExperimentConfig) -> GridConfig:
    return GridConfig(
        doa_step=config.grid_step_doa,
        pol_step=config.grid_step_pol,
        refine=config.refine,
        polish=config.polish,
        window_half_width=config.window,
    )


def match_estimates(estimates: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Signed errors (theta, phi, gamma, eta) in degrees, one row per true source.

    Estimates are assigned to sources by minimising the total squared
    (theta, wrapped phi) distance; phi and eta errors are wrapped.
    """
    d_th = estimates[:, None, 0] - truth[None, :, 0]
    d_ph = wrapped_difference(estimates[:, None, 1], truth[None, :, 1])
    rows, cols = linear_sum_assignment(d_th**2 + d_ph**2)
    err = np.empty((len(truth), 4))
    for r, c in zip(rows, cols):
        e, t = estimates[r], truth[c]
        err[c] = [e[0] - t[0], wrapped_difference(e[1], t[1]), e[2] - t[2], wrapped_difference(e[3], t[3])]
    return err


@dataclass(frozen=True)
class TrialTask:
    geometry: ArrayGeometry
    sources: tuple
    snr_db: float
    snapshots: int
    seed: int
    methods: tuple
    grid: GridConfig


def run_trial(task: TrialTask) -> dict:
    """Errors per method for one simulated data set; None marks a failed estimate."""
    params = [SourceParams.from_degrees(*s) for s in task.sources]
    sim = SimulationConfig.from_snr(params, task.snr_db, task.snapshots, seed=task.seed)
    r = sample_covariance(generate_snapshots(sim, task.geometry))
    truth = np.array(task.sources, dtype=float)
    out = {}
    for method in task.methods:
        grid = with_windows(task.grid, task.sources) if method is Method.MUSIC_4D else task.grid
        try:
            est = estimate(r, task.geometry, len(params), method, grid).as_array()
        except PeakError:
            out[method] = None
            continue
        out[method] = match_estimates(est, truth)
    return out


def _map_trials(tasks: list[TrialTask], workers: int) -> list[dict]:
    if workers <= 1 or len(tasks) <= 1:
        return [run_trial(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_trial, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _crb_std(geometry, sources, snr_db, snapshots) -> np.ndarray:
    try:
        rep = crb_bounds(Scenario.from_snr(geometry, sources, snr_db), snapshots)
        return rep.std_degrees
    except (DegenerateFisherError, np.linalg.LinAlgError):
        return np.full((len(sources), 4), np.nan)


def _rmse_rows(config: ExperimentConfig, geometry: ArrayGeometry, label: str, methods) -> list[list]:
    grid = grid_config(config)
    step_doa, step_pol = grid.effective_steps
    floor_doa, floor_pol = grid.quantisation_floor
    sources = tuple(tuple(float(x) for x in s) for s in config.sources)
    params = config.source_params()
    rows = []
    for snr in config.snr_points():
        tasks = [
            TrialTask(geometry, sources, snr, config.snapshots, config.seed + t, tuple(methods), grid)
            for t in range(config.trials)
        ]
        results = _map_trials(tasks, config.workers)
        crb = _crb_std(geometry, params, snr, config.snapshots)
        for method in methods:
            ok = [r[method] for r in results if r[method] is not None]
            failed = len(results) - len(ok)
            if ok:
                rmse = np.sqrt(np.mean(np.square(ok), axis=0))
            else:
                rmse = np.full((len(sources), 4), np.nan)
            for m in range(len(sources)):
                for p, name in enumerate(PARAM_NAMES):
                    step, floor = (step_doa, floor_doa) if p < 2 else (step_pol, floor_pol)
                    rows.append(
                        [snr, label, method.value, m + 1, name, float(rmse[m, p]), float(crb[m, p]),
                         step, floor, config.snapshots, len(ok), failed]
                    )
    return rows


def _geometry_meta(geometry: ArrayGeometry) -> dict:
    return {
        "description": geometry.describe(),
        "sensor": geometry.sensor_kind.value,
        "rows": geometry.rows,
        "cols": geometry.cols,
        "spacing_wavelengths": geometry.spacing,
        "n_dipoles": geometry.n_dipoles,
        "n_channels": geometry.n_channels,
    }


def _run_meta(config: ExperimentConfig, kind: str) -> dict:
    grid = grid_config(config)
    return {
        "experiment": kind,
        "sources_deg": [list(s) for s in config.sources],
        "snr_db": config.snr_points(),
        "snapshots": config.snapshots,
        "trials": config.trials,
        "seed": config.seed,
        "grid_step_deg": {"doa": config.grid_step_doa, "pol": config.grid_step_pol},
        "effective_step_deg": list(grid.effective_steps),
        "refine": config.refine,
        "refine_levels": grid.refine_levels if config.refine else 0,
        "polish": config.polish,
        "music4d_window_half_width_deg": config.window,
        "error_convention": "phi and eta errors wrapped into (-180, 180]; RMSE over successful trials",
        "snr_convention": "per-source power over per-channel noise power",
    }


def run_rmse_sweep(config: ExperimentConfig) -> Table:
    """RMSE against SNR for every selected method, with the CRB alongside."""
    geometry = config.geometry()
    table = Table(RMSE_COLUMNS, _rmse_rows(config, geometry, geometry.describe(), config.methods))
    table.meta = _run_meta(config, "rmse") | {"geometries": [_geometry_meta(geometry)]}
    return table


def run_estimator_comparison(config: ExperimentConfig) -> Table:
    """Determinant and minimum-eigenvalue estimators on shared per-trial data."""
    methods = [m for m in config.methods if m is not Method.MUSIC_4D] or [Method.DET, Method.EIG]
    config = dataclasses.replace(config, methods=methods)
    table = run_rmse_sweep(config)
    table.meta["experiment"] = "compare-estimators"
    return table


def comparison_geometries(config: ExperimentConfig) -> list[ArrayGeometry]:
    """4-element tripole line and 2x3 crossed-dipole plane, 12 dipoles each."""
    return [
        ArrayGeometry.linear(SensorKind.TRIPOLE, 4, config.spacing),
        ArrayGeometry.planar(SensorKind.CROSSED_DIPOLE, 2, 3, config.spacing),
    ]


def run_geometry_comparison(config: ExperimentConfig) -> Table:
    geoms = comparison_geometries(config)
    if len({g.n_dipoles for g in geoms}) != 1:
        raise ValueError("geometries must have equal dipole counts")
    rows = []
    for g in geoms:
        rows += _rmse_rows(config, g, g.describe(), config.methods)
    table = Table(RMSE_COLUMNS, rows)
    table.meta = _run_meta(config, "compare-geometry") | {"geometries": [_geometry_meta(g) for g in geoms]}
    return table


def run_crb_table(config: ExperimentConfig) -> Table:
    geometry = config.geometry()
    params = config.source_params()
    rows = []
    for snr in config.snr_points():
        rep = crb_bounds(Scenario.from_snr(geometry, params, snr), config.snapshots)
        std = rep.std_degrees
        for m in range(len(params)):
            for p, name in enumerate(PARAM_NAMES):
                rows.append([snr, geometry.describe(), m + 1, name, float(rep.variances[m, p]), float(std[m, p])])
    meta = {
        "experiment": "crb",
        "model": "unconditional Gaussian sources, known powers and noise power",
        "geometries": [_geometry_meta(geometry)],
        "sources_deg": [list(s) for s in config.sources],
        "snapshots": config.snapshots,
    }
    return Table(CRB_COLUMNS, rows, meta)


# spectrum export


def spectrum_covariance(config: ExperimentConfig, geometry: ArrayGeometry) -> np.ndarray:
    """Noise-free or simulated covariance; a source-free run simulates noise only."""
    params = config.source_params()
    if config.noise_free:
        if not params:
            raise ValueError("a noise-free spectrum needs at least one source")
        return ideal_covariance(geometry, params, [1.0] * len(params), 0.0).data
    sim = SimulationConfig.from_snr(params, config.snr_start, config.snapshots, seed=config.seed)
    return sample_covariance(generate_snapshots(sim, geometry)).data


def run_spectrum_export(config: ExperimentConfig):
    """Sampled spectrum of the first selected method plus its metadata.

    Without sources the noise subspace assumes one source so the spectrum is
    not trivially flat.
    """
    geometry = config.geometry()
    method = config.methods[0]
    m = max(len(config.sources), 1)
    un = decompose(spectrum_covariance(config, geometry), m).noise_basis
    grid = grid_config(config)
    if method is Method.MUSIC_4D:
        spec = music_spectrum_4d(un, geometry, grid.doa_axes() + grid.pol_axes(), grid.cap)
    else:
        fn = doa_spectrum_det if method is Method.DET else doa_spectrum_mineig
        spec = fn(un, geometry, grid.doa_axes(), grid.cap)
    meta = {
        "experiment": "spectrum",
        "method": method.value,
        "geometry": _geometry_meta(geometry),
        "sources_deg": [list(s) for s in config.sources],
        "assumed_sources": m,
        "noise_free": config.noise_free,
        "snr_db": None if config.noise_free else config.snr_start,
        "snapshots": None if config.noise_free else config.snapshots,
        "seed": config.seed,
        "cap": spec.cap,
        "axes": [
            {"name": ax.name, "unit": "deg", "start": ax.start, "stop": ax.stop, "step": ax.step,
             "periodic": ax.periodic, "count": len(ax)}
            for ax in spec.axes
        ],
        "value": "reciprocal of the estimator denominator, clipped at cap",
        "max": float(spec.values.max()),
        "median": float(np.median(spec.values)),
    }
    return spec, meta


def spectrum_table(spec) -> Table:
    cols = [f"{ax.name}_deg" for ax in spec.axes] + ["value"]
    coords = [c.ravel() for c in spec.meshgrid()]
    rows = [list(r) for r in zip(*(list(map(float, c)) for c in coords), map(float, spec.values.ravel()))]
    return Table(cols, rows)


# ambiguity report

LINEAR_EXAMPLE_PAIRS = [
    ((30.0, 60.0, 90.0, 20.0), (30.0, 60.0, 90.0, 50.0)),
    ((0.0, 90.0, 90.0, 20.0), (50.0, 0.0, 0.0, 50.0)),
    ((30.0, 0.0, 0.0, 30.0), (0.0, 30.0, 30.0, 0.0)),
]


def run_ambiguity_report(config: ExperimentConfig) -> dict:
    alpha1 = config.source_params()[0]
    deg = list(config.sources[0])
    n = config.elements
    cd = ArrayGeometry.linear(SensorKind.CROSSED_DIPOLE, n, config.spacing)
    tp = ArrayGeometry.linear(SensorKind.TRIPOLE, n, config.spacing)
    partners = []
    for t2 in config.theta2:
        phis = ambiguity.doa_parallel_direction(alpha1.theta, alpha1.phi, np.deg2rad(t2))
        if not phis:
            partners.append({"theta2_deg": t2, "partner": None, "note": "no DOA-parallel direction"})
        for phi2 in phis:
            entry = {"theta2_deg": t2, "phi2_deg": float(np.rad2deg(phi2))}
            try:
                a2 = ambiguity.crossed_dipole_partner(alpha1, np.deg2rad(t2), phi2)
            except ValueError as exc:
                entry.update(partner=None, note=str(exc))
            else:
                v = ambiguity.is_parallel(joint_steering(cd, alpha1), joint_steering(cd, a2))
                entry.update(partner=list(a2.degrees()), cosine=v.cosine, parallel=v.parallel)
            partners.append(entry)
    report = {
        "source_deg": deg,
        "elements": n,
        "crossed_dipole_partners": partners,
    }
    if alpha1.is_linearly_polarised():
        found = ambiguity.linear_polarisation_partner(alpha1, tp)
        report["tripole_linear_partner"] = None if found is None else {
            "partner_deg": list(found[0].degrees()), "case": found[1]}
    else:
        scan = ambiguity.tripole_no_ambiguity_scan(alpha1, tp)
        control = ambiguity.tripole_no_ambiguity_scan(alpha1, cd)
        report["tripole_scan"] = dataclasses.asdict(scan) | {"threshold": 1 - ambiguity.CERTIFY_MARGIN}
        report["crossed_dipole_control"] = dataclasses.asdict(control)
    cases = []
    for a, b in LINEAR_EXAMPLE_PAIRS:
        case, verdict = ambiguity.classify_pair(SourceParams.from_degrees(*a), SourceParams.from_degrees(*b), tp)
        cases.append({"alpha1_deg": list(a), "alpha2_deg": list(b), "case": case.case_id, "swapped": case.swapped,
                      "parallel": verdict.parallel, "cosine": verdict.cosine})
    report["linear_polarisation_examples"] = cases
    return report


# complexity


def complexity_report(n: int, m: int, l: int) -> dict[str, int]:
    """Multiplication counts of the 4-D search and the two reduced searches."""
    for name, v in (("N", n), ("M", m), ("L", l)):
        if not isinstance(v, (int, np.integer)):
            raise TypeError(f"{name} must be an integer")
    if n < 1:
        raise ValueError("N must be >= 1")
    if not 1 <= m < 3 * n:
        raise ValueError(f"M must satisfy 1 <= M < 3N = {3 * n}")
    if l < 2:
        raise ValueError("L must be >= 2")
    r = 3 * n - m
    proj = (6 * n + 4) * r
    return {
        "music4d": l**4 * (3 * n + 1) * r,
        "det": l**2 * (proj + 10) + proj,
        "eig": l**2 * (proj + 14) + proj,
    }


def complexity_table(n: int, m: int, l: int) -> Table:
    counts = complexity_report(n, m, l)
    return Table(COMPLEXITY_COLUMNS, [[k, n, m, l, v] for k, v in counts.items()])


# writing


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def write_json(path, obj) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, (Method, SensorKind)):
        return x.value
    raise TypeError(f"cannot serialise {type(x).__name__}")


def write_table(path, table: Table) -> list[Path]:
    """CSV plus a JSON sidecar when the table carries metadata."""
    path = Path(path)
    try:
        path.write_text(table.to_csv())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    out = [path]
    if table.meta:
        out.append(write_json(_sidecar(path), table.meta))
    return out
