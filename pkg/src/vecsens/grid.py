"""Search grids, sampled spectra and peak picking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

DEFAULT_CAP = 1e12


@dataclass(frozen=True)
class GridAxis:
    """One search axis in degrees.

    A periodic axis covers ``[start, start + 360)`` and wraps for peak
    neighbourhoods; otherwise ``stop`` is included when it falls on the step.
    """

    name: str
    start: float
    stop: float
    step: float
    periodic: bool = False

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"axis {self.name}: step must be positive")
        if self.stop < self.start:
            raise ValueError(f"axis {self.name}: stop < start")

    @classmethod
    def full(cls, name: str, step: float = 1.0) -> "GridAxis":
        bounds = {
            "theta": (0.0, 90.0, False),
            "phi": (0.0, 360.0, True),
            "gamma": (0.0, 90.0, False),
            "eta": (-180.0, 180.0, True),
        }
        lo, hi, periodic = bounds[name]
        return cls(name, lo, hi, step, periodic)

    @classmethod
    def window(cls, name: str, centre: float, half_width: float, step: float) -> "GridAxis":
        """Aligned window ``centre +/- half_width``, clipped for bounded axes."""
        lo, hi = centre - half_width, centre + half_width
        if name in ("theta", "gamma"):
            lo, hi = max(lo, 0.0), min(hi, 90.0)
        return cls(name, lo, hi, step, False)

    def values(self) -> np.ndarray:
        span = self.stop - self.start
        n = int(np.floor(span / self.step + 1e-9))
        if not self.periodic:
            n += 1
        elif abs(n * self.step - span) > 1e-9 * max(1.0, span):
            # step does not divide 360: the last cell does not wrap exactly
            n += 1
        return self.start + self.step * np.arange(n)

    def __len__(self) -> int:
        return len(self.values())


@dataclass
class SpectrumGrid:
    """Pseudo-spectrum sampled on a rectangular grid.

    ``denominator`` holds the quantity being inverted (clamped at zero);
    ``values`` is its reciprocal clipped at ``cap``. Peak ordering uses the
    denominators so cells that saturate the cap stay distinguishable.
    """

    axes: list[GridAxis]
    denominator: np.ndarray
    cap: float = DEFAULT_CAP
    values: np.ndarray = field(init=False)

    def __post_init__(self):
        den = np.maximum(np.asarray(self.denominator, dtype=float), 0.0)
        self.denominator = den
        with np.errstate(divide="ignore"):
            self.values = np.minimum(1.0 / den, self.cap)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.denominator.shape

    def coordinates(self, index) -> tuple[float, ...]:
        return tuple(float(ax.values()[i]) for ax, i in zip(self.axes, index))

    def meshgrid(self) -> list[np.ndarray]:
        return np.meshgrid(*[ax.values() for ax in self.axes], indexing="ij")


class PeakError(RuntimeError):
    pass


def _within_neighbourhood(a, b, shape, periodic) -> bool:
    for i, j, n, wrap in zip(a, b, shape, periodic):
        d = abs(i - j)
        if wrap:
            d = min(d, n - d)
        if d > 1:
            return False
    return True


def local_maxima(spectrum: SpectrumGrid) -> np.ndarray:
    """Flat indices of cells no smaller than any neighbour (3^d - 1 neighbourhood)."""
    den = spectrum.denominator
    modes = ["wrap" if ax.periodic else "nearest" for ax in spectrum.axes]
    low = ndimage.minimum_filter(den, size=3, mode=modes)
    return np.flatnonzero(den <= low)


def angular_separation(theta1, phi1, theta2, phi2):
    """Great-circle angle in degrees between two directions given in degrees."""
    t1, p1, t2, p2 = (np.deg2rad(np.asarray(x, dtype=float)) for x in (theta1, phi1, theta2, phi2))
    c = np.cos(t1) * np.cos(t2) + np.sin(t1) * np.sin(t2) * np.cos(p1 - p2)
    out = np.rad2deg(np.arccos(np.clip(c, -1.0, 1.0)))
    return float(out) if out.ndim == 0 else out


def connected_components(mask: np.ndarray, periodic) -> np.ndarray:
    """Labels of full-connectivity components of ``mask``, joined across periodic axes."""
    pad = [(1, 1) if p else (0, 0) for p in periodic]
    big = np.pad(mask, pad, mode="wrap")
    lab, n = ndimage.label(big, structure=np.ones((3,) * mask.ndim))
    parent = np.arange(n + 1)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    idx = np.indices(big.shape)
    orig = tuple((i - lo) % n_ax for i, (lo, _), n_ax in zip(idx, pad, mask.shape))
    core = tuple(slice(lo, lo + n_ax) for (lo, _), n_ax in zip(pad, mask.shape))
    core_lab = lab[core]
    on = big > 0
    pairs = np.unique(np.stack([lab[on], core_lab[tuple(o[on] for o in orig)]]), axis=1)
    for a, b in pairs.T:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(x) for x in range(n + 1)])
    return roots[core_lab]


def find_peaks(spectrum: SpectrumGrid, m: int, merge_ratio: float | None = None) -> list[tuple[int, ...]]:
    """The ``m`` largest local maxima of ``spectrum`` as grid index tuples.

    Candidates are ordered by value (largest first, using the uncapped
    reciprocal), ties by smallest grid index. A candidate touching an already
    selected peak is skipped, so a plateau yields a single peak.

    With ``merge_ratio`` set, a candidate is also skipped when it is linked
    to a selected peak through cells whose value stays at or above
    ``merge_ratio`` times its own. A ridge running steeper than the grid
    diagonal (near the pole, for instance) is otherwise sampled as a chain of
    separate local maxima.
    """
    den = spectrum.denominator
    flat = local_maxima(spectrum)
    order = np.lexsort((flat, den.ravel()[flat]))
    periodic = [ax.periodic for ax in spectrum.axes]
    chosen: list[tuple[int, ...]] = []
    for f in flat[order]:
        idx = tuple(int(i) for i in np.unravel_index(f, den.shape))
        if any(_within_neighbourhood(idx, c, den.shape, periodic) for c in chosen):
            continue
        if merge_ratio is not None and chosen:
            labels = connected_components(den <= den[idx] / merge_ratio, periodic)
            if any(labels[idx] == labels[c] for c in chosen):
                continue
        chosen.append(idx)
        if len(chosen) == m:
            return chosen
    found = [spectrum.coordinates(c) for c in chosen]
    raise PeakError(f"requested {m} peaks, found {len(chosen)}: {found}")


def wrap_degrees(x, low: float = -180.0):
    """Map angles into ``[low, low + 360)``."""
    return (np.asarray(x, dtype=float) - low) % 360.0 + low


def wrapped_difference(a, b):
    """a - b wrapped into (-180, 180]."""
    d = -wrap_degrees(-(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
    return d
