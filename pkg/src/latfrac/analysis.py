"""Post-processing: Gf, Ws, characteristic length, FPZ width and load-curve envelope."""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats
from scipy.optimize import OptimizeWarning, curve_fit
from scipy.special import erf

from .material import nominal_capacity_energy

log = logging.getLogger(__name__)

MACRO_THRESHOLD = 0.5


class AnalysisError(ValueError):
    pass


def _broken_breakable(spec, record) -> np.ndarray:
    k = record.broken
    return k[spec.states.breakable[k]]


def capacity_energy_sum(spec, elements) -> tuple[float, float]:
    """Sum of nominal capacity energies and of widths over ``elements``, from the specimen tables."""
    st, A = spec.states, spec.mesh.width
    k = np.asarray(elements, dtype=np.int64)
    e = nominal_capacity_energy(A[k], st.kn[k], st.kt[k], st.sn0[k], st.st0[k])
    return float(np.sum(e)), float(np.sum(A[k]))


def fracture_energy_Gf(spec, record) -> float:
    """Nominal dissipated energy per unit crack surface (N/mm) of the final broken set."""
    k = _broken_breakable(spec, record)
    if k.size == 0:
        raise AnalysisError("no broken element: fracture energy undefined")
    num, area = capacity_energy_sum(spec, k)
    return num / area


def energy_density_Ws(spec, record, volume: float | None = None) -> float:
    """Nominal dissipated energy per unit volume (N/mm^2); bars and notches are outside V."""
    k = _broken_breakable(spec, record)
    if k.size == 0:
        raise AnalysisError("no broken element: energy density undefined")
    V = spec.volume if volume is None else volume
    num, _ = capacity_energy_sum(spec, k)
    return num / V


def gf_from_events(record) -> float:
    """Same as :func:`fracture_energy_Gf`, from the event log alone."""
    if not record.events:
        raise AnalysisError("empty event log")
    return float(np.sum(record.column("e_nominal")) / np.sum(record.column("width")))


def ws_from_events(record, volume: float | None = None) -> float:
    if not record.events:
        raise AnalysisError("empty event log")
    V = record.volume if volume is None else volume
    return float(np.sum(record.column("e_nominal")) / V)


def characteristic_length(Gf: float, Ws: float) -> float:
    if not (Gf > 0 and Ws > 0):
        raise AnalysisError(f"Gf and Ws must be positive (got {Gf}, {Ws})")
    return Gf / Ws


# --- crack geometry and FPZ ------------------------------------------------------------------

def _canonical(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, float) / np.linalg.norm(v)
    return -v if (v[0] < 0 or (v[0] == 0 and v[1] < 0)) else v


def principal_direction(points: np.ndarray, weights=None) -> np.ndarray:
    """Unit eigenvector of the largest scatter of ``points``, with non-negative x."""
    p = np.asarray(points, float)
    w = np.ones(len(p)) if weights is None else np.asarray(weights, float)
    c = p - np.average(p, axis=0, weights=w)
    cov = (c * w[:, None]).T @ c / w.sum()
    vals, vecs = np.linalg.eigh(cov)
    return _canonical(vecs[:, -1])


@dataclass
class CrackDirection:
    direction: np.ndarray
    macro: np.ndarray          # event indices of macrocrack elements
    fallback: bool = False

    @property
    def angle(self) -> float:
        return float(np.arctan2(self.direction[1], self.direction[0]))

    @property
    def normal(self) -> np.ndarray:
        return np.array([-self.direction[1], self.direction[0]])


def macrocrack_direction(midpoints, openings, threshold: float = MACRO_THRESHOLD,
                         load_axis=(0.0, 1.0)) -> CrackDirection:
    """Macrocrack = broken elements opening at least ``threshold`` times the largest opening.

    Direction is the principal axis of their midpoints. With fewer than two
    such elements the axis perpendicular to loading is returned, flagged.
    """
    midpoints = np.asarray(midpoints, float).reshape(-1, 2)
    openings = np.asarray(openings, float)
    top = openings.max() if openings.size else 0.0
    macro = np.flatnonzero(openings >= threshold * top) if top > 0 else np.zeros(0, dtype=np.int64)
    if macro.size < 2:
        la = np.asarray(load_axis, float)
        return CrackDirection(_canonical(np.array([la[1], -la[0]])), macro, True)
    return CrackDirection(principal_direction(midpoints[macro]), macro)


def gaussian_cdf(s, mu, sigma):
    return 0.5 * (1.0 + erf((s - mu) / (sigma * np.sqrt(2.0))))


@dataclass
class FpzResult:
    l_fpz: float
    sigma: float
    mu: float
    residual: float
    angle: float
    n_elements: int
    band_fraction: float     # share of energy inside mu +- 2 sigma
    fallback_direction: bool = False
    floored: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def cumulative_profile(s, e):
    """Sorted coordinates and mid-step cumulative energy fractions (each in (0, 1))."""
    s, e = np.asarray(s, float), np.asarray(e, float)
    order = np.argsort(s, kind="stable")
    s, e = s[order], e[order]
    total = e.sum()
    if not total > 0:
        raise AnalysisError("profile carries no energy")
    frac = (np.cumsum(e) - 0.5 * e) / total
    return s, frac, e


def fit_gaussian_profile(s, e, sigma_floor: float = 0.0):
    """Least-squares fit of a Gaussian cdf to the cumulative energy profile.

    Returns (mu, sigma, rms residual, floored).
    """
    s, frac, e = cumulative_profile(s, e)
    mu0 = float(np.average(s, weights=e))
    sd0 = float(np.sqrt(np.average((s - mu0) ** 2, weights=e)))
    if sd0 <= max(sigma_floor, 1e-12) * 1e-3 or np.ptp(s) == 0:
        warnings.warn("degenerate energy profile, sigma set to its floor", RuntimeWarning, stacklevel=2)
        return mu0, sigma_floor, 0.0, True
    with warnings.catch_warnings():
        # an exact fit leaves the covariance undefined; only the optimum is used
        warnings.simplefilter("ignore", OptimizeWarning)
        (mu, sigma), _ = curve_fit(gaussian_cdf, s, frac, p0=(mu0, sd0), maxfev=10000)
    sigma = abs(float(sigma))
    floored = sigma < sigma_floor
    if floored:
        warnings.warn(f"fitted sigma {sigma:.3g} below floor {sigma_floor:.3g}", RuntimeWarning, stacklevel=2)
        sigma = sigma_floor
    res = float(np.sqrt(np.mean((gaussian_cdf(s, mu, sigma) - frac) ** 2)))
    return float(mu), sigma, res, floored


def fpz_from_points(midpoints, energies, direction: CrackDirection, sigma_floor: float = 0.0) -> FpzResult:
    """FPZ width from energies located at ``midpoints``, profiled across ``direction``."""
    midpoints = np.asarray(midpoints, float).reshape(-1, 2)
    e = np.asarray(energies, float)
    if len(e) < 5:
        raise AnalysisError(f"need at least 5 broken elements, got {len(e)}")
    s = midpoints @ direction.normal
    mu, sigma, res, floored = fit_gaussian_profile(s, e, sigma_floor)
    inside = np.abs(s - mu) <= 2 * sigma
    return FpzResult(l_fpz=4 * sigma, sigma=sigma, mu=mu, residual=res, angle=direction.angle,
                     n_elements=len(e), band_fraction=float(e[inside].sum() / e.sum()),
                     fallback_direction=direction.fallback, floored=floored)


def fpz_width(record, energy: str = "e_actual", threshold: float = MACRO_THRESHOLD,
              mesh_size: float | None = None) -> FpzResult:
    """Width 4 sigma of the Gaussian fitted to the cumulative dissipated-energy profile.

    The profile runs perpendicular to the macrocrack's principal axis and
    uses ``energy`` ("e_actual" or "e_nominal") per broken element.
    """
    if energy not in ("e_actual", "e_nominal"):
        raise ValueError(f"unknown energy measure {energy!r}")
    mid = record.midpoints
    direction = macrocrack_direction(mid, record.column("opening"), threshold)
    l_m = mesh_size if mesh_size is not None else record.descriptor.get("mean_mesh_size", 0.0)
    return fpz_from_points(mid, record.column(energy), direction, sigma_floor=0.25 * l_m)


# --- load curve ------------------------------------------------------------------------------

def envelope_curve(displacement, force) -> tuple[np.ndarray, np.ndarray]:
    """Hold load drops vertically at the running maximum displacement until the curve returns.

    A snap-back that never recovers ends with the vertical hold down to the
    last force.
    """
    d = np.asarray(displacement, float)
    f = np.asarray(force, float)
    if len(d) != len(f):
        raise ValueError("displacement and force lengths differ")
    if len(d) == 0:
        return d.copy(), f.copy()
    out = [(d[0], f[0])]
    dstar = d[0]
    holding = False
    for k in range(1, len(d)):
        if not holding:
            if d[k] >= dstar:
                out.append((d[k], f[k]))
                dstar = d[k]
            else:
                holding = True
            continue
        if d[k] >= dstar:
            if d[k] > dstar:
                t = (dstar - d[k - 1]) / (d[k] - d[k - 1])
                out.append((dstar, f[k - 1] + t * (f[k] - f[k - 1])))
            out.append((d[k], f[k]))
            dstar = d[k]
            holding = False
    if holding:
        out.append((dstar, f[-1]))
    arr = np.array(out)
    return arr[:, 0], arr[:, 1]


def peak_force(record) -> float:
    _, f = record.load_curve
    return float(f.max()) if f.size else 0.0


# --- maps and regressions --------------------------------------------------------------------

def energy_density_map(record, cell: float, bounds=None, energy: str = "e_actual"):
    """Dissipated energy summed per square cell; returns (raster[ny, nx], x_edges, y_edges)."""
    if cell <= 0:
        raise ValueError("cell size must be positive")
    if bounds is None:
        g = record.descriptor.get("geometry", {})
        bounds = (0.0, 0.0, g.get("width", 1.0), g.get("height", 1.0))
    x0, y0, x1, y1 = bounds
    xe = x0 + cell * np.arange(int(np.ceil((x1 - x0) / cell - 1e-9)) + 1)
    ye = y0 + cell * np.arange(int(np.ceil((y1 - y0) / cell - 1e-9)) + 1)
    if not record.events:
        return np.zeros((len(ye) - 1, len(xe) - 1)), xe, ye
    mid = record.midpoints
    # clip into the raster so boundary midpoints are never lost
    mx = np.clip(mid[:, 0], xe[0], np.nextafter(xe[-1], -np.inf))
    my = np.clip(mid[:, 1], ye[0], np.nextafter(ye[-1], -np.inf))
    h, _, _ = np.histogram2d(my, mx, bins=[ye, xe], weights=record.column(energy))
    return h, xe, ye


@dataclass
class Regression:
    slope: float
    intercept: float
    r2: float
    stderr: float = 0.0
    pvalue: float = float("nan")
    n: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def linear_fit(x, y) -> Regression:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if np.ptp(y) == 0:
        return Regression(0.0, float(y[0]), 1.0, 0.0, float("nan"), len(x))
    r = stats.linregress(x, y)
    return Regression(float(r.slope), float(r.intercept), float(r.rvalue**2), float(r.stderr),
                      float(r.pvalue), len(x))


def group_means(x, y):
    """Distinct x values (sorted) with mean and population std of y over each."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    keys = np.unique(x)
    mean = np.array([y[x == k].mean() for k in keys])
    std = np.array([y[x == k].std() for k in keys])
    return keys, mean, std


def mesh_size_regression(pairs, groups=None) -> Regression:
    """OLS of mean FPZ width against mean mesh size, one point per mesh size.

    ``pairs`` holds (measured mean mesh size, FPZ width) per run. Replicates
    of one target spacing differ slightly in measured size, so ``groups``
    (e.g. the target spacing) may label which runs share a point.
    """
    pairs = np.asarray(pairs, float).reshape(-1, 2)
    g = pairs[:, 0] if groups is None else np.asarray(groups, float)
    keys = np.unique(g)
    if len(keys) < 3:
        raise AnalysisError(f"need at least 3 distinct mesh sizes, got {len(keys)}")
    x = np.array([pairs[g == k, 0].mean() for k in keys])
    y = np.array([pairs[g == k, 1].mean() for k in keys])
    return linear_fit(x, y)


__all__ = [
    "AnalysisError", "fracture_energy_Gf", "energy_density_Ws", "gf_from_events", "ws_from_events",
    "characteristic_length", "principal_direction", "macrocrack_direction", "CrackDirection", "FpzResult",
    "gaussian_cdf", "cumulative_profile", "fit_gaussian_profile", "fpz_from_points", "fpz_width",
    "envelope_curve", "peak_force", "energy_density_map", "Regression", "linear_fit", "group_means",
    "mesh_size_regression", "capacity_energy_sum",
]
