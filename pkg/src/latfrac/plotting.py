"""SVG figures: load curves, crack patterns, energy maps and sweep trends."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import analysis as an  # noqa: E402

# fixed metadata keeps SVG output byte-stable between runs
_SVG_META = {"Date": None, "Creator": None}
matplotlib.rcParams["svg.hashsalt"] = "latfrac"


def _save(fig, path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(p, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return p


def plot_load_curve(record, path, title: str = "") -> Path:
    d, f = record.load_curve
    ed, ef = an.envelope_curve(d, f)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(d, f, ".-", lw=0.6, ms=2, color="0.6", label="events")
    ax.plot(ed, ef, "-", lw=1.4, color="C3", label="envelope")
    ax.set_xlabel("imposed displacement [mm]")
    ax.set_ylabel("force [N/mm]")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_crack_pattern(record, path, geometry=None, threshold: float = an.MACRO_THRESHOLD, grains=None) -> Path:
    """Broken elements; macrocrack members in black, the rest in blue."""
    mid = record.midpoints
    op = record.column("opening")
    fig, ax = plt.subplots(figsize=(3.2, 6))
    g = geometry or record.descriptor.get("geometry", {})
    if g:
        w, h = (g["width"], g["height"]) if isinstance(g, dict) else (g.width, g.height)
        ax.plot([0, w, w, 0, 0], [0, 0, h, h, 0], "-", color="0.3", lw=0.8)
    if grains is not None:
        for (x, y), d in zip(grains.centers, grains.diameters):
            ax.add_patch(plt.Circle((x, y), d / 2, fill=False, lw=0.4, color="0.5"))
    if len(mid):
        macro = op >= threshold * op.max() if op.max() > 0 else np.zeros(len(op), bool)
        ax.plot(mid[~macro, 0], mid[~macro, 1], ".", ms=2.5, color="C0", label="microcracks")
        ax.plot(mid[macro, 0], mid[macro, 1], ".", ms=3.5, color="k", label="macrocrack")
    ax.set_aspect("equal")
    ax.set_xlabel("x [mm]")
    ax.set_ylabel("y [mm]")
    fig.tight_layout()
    return _save(fig, path)


def plot_energy_map(record, path, cell: float = 2.0) -> Path:
    h, xe, ye = an.energy_density_map(record, cell)
    fig, ax = plt.subplots(figsize=(3.2, 6))
    m = ax.pcolormesh(xe, ye, h, cmap="magma_r", shading="flat")
    fig.colorbar(m, ax=ax, label="dissipated energy per cell [N mm]")
    ax.set_aspect("equal")
    fig.tight_layout()
    return _save(fig, path)


def plot_profile(record, fpz: an.FpzResult, path) -> Path:
    d = an.CrackDirection(np.array([np.cos(fpz.angle), np.sin(fpz.angle)]), np.zeros(0))
    s = record.midpoints @ d.normal
    s, frac, _ = an.cumulative_profile(s, record.column("e_actual"))
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(s, frac, ".", ms=3, label="cumulative energy")
    grid = np.linspace(s.min() - fpz.sigma, s.max() + fpz.sigma, 400)
    ax.plot(grid, an.gaussian_cdf(grid, fpz.mu, fpz.sigma), "-", label=f"fit, 4 sigma = {fpz.l_fpz:.2f} mm")
    ax.set_xlabel("distance across crack [mm]")
    ax.set_ylabel("fraction")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_trend(summary, path, xlabel: str = "d [mm]") -> Path:
    """Mean FPZ width per sweep point with std error bars and the fitted lines."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    groups = {}
    for p in summary.points:
        key = p.label.rsplit("_", 1)[0] if "_" in p.label else "all"
        groups.setdefault(key, []).append(p)
    for i, (key, pts) in enumerate(sorted(groups.items())):
        x = np.array([p.mean_mesh_size if summary.spec.kind == "mesh_size" else p.param for p in pts])
        y = np.array([p.l_fpz_mean for p in pts])
        e = np.array([p.l_fpz_std for p in pts])
        ax.errorbar(x, y, yerr=e, fmt="o", color=f"C{i}", capsize=3, label=key)
        fit = summary.fits.get("mesh" if summary.spec.kind == "mesh_size" else key)
        if fit:
            xx = np.linspace(0 if summary.spec.kind == "mesh_size" else x.min(), x.max(), 2)
            ax.plot(xx, fit["intercept"] + fit["slope"] * xx, "--", color=f"C{i}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("FPZ width [mm]")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


__all__ = ["plot_load_curve", "plot_crack_pattern", "plot_energy_map", "plot_profile", "plot_trend"]
