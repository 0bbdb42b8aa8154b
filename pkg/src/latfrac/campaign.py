"""Single-run pipeline and campaign orchestration.

Seeds of a campaign derive from its master seed through
``SeedSequence([master, stream, point, replicate])``: stream 0 seeds the
mesh (point index 0 unless the mesh itself is swept, so all points of one
replicate share a mesh), stream 1 seeds the grains (points of one path (a)
replicate share their centers).
"""

from __future__ import annotations

import logging
import os
import time
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from . import analysis as an
from .config import CampaignSpec, RunConfig
from .engine import Specimen, SimulationRecord, build_specimen, ligament_geometry, run_quasistatic
from .grains import (GradingSpec, empty_structure, place_fuller, place_monodisperse, rescale_diameters,
                     surface_fractions)
from .material import MaterialTable

log = logging.getLogger(__name__)

RUN_COLUMNS = ("point", "label", "replicate", "config_hash", "mesh_seed", "grain_seed", "param", "three_phase",
               "mean_mesh_size", "n_inclusions", "achieved_fraction", "inclusion_elements", "n_events",
               "terminated", "peak_force", "l_fpz", "sigma", "band_fraction", "Gf", "Ws", "lc", "dd_events")
POINT_COLUMNS = ("point", "label", "param", "three_phase", "n_ok", "n_failed", "l_fpz_mean", "l_fpz_std",
                 "lc_mean", "lc_std", "mean_mesh_size")


def make_grains(cfg: RunConfig, outline):
    g = cfg.grading
    if g is None or (g.fraction == 0 and g.count is None):
        return empty_structure(outline, cfg.grain_seed)
    gap = cfg.effective_gap
    if g.kind == "fuller":
        grains = place_fuller(outline, g.d_min, g.d_max, g.fraction, n_classes=g.n_classes, q=g.q, gap_min=gap,
                              seed=cfg.grain_seed, mesh_size=cfg.l_m)
    else:
        grains = place_monodisperse(outline, g.d, fraction=g.fraction, count=g.count, gap_min=gap,
                                    seed=cfg.grain_seed)
    if cfg.rescale_d is not None:
        grains = rescale_diameters(grains, cfg.rescale_d)
    return grains


@dataclass
class RunOutput:
    config: RunConfig
    specimen: Specimen
    record: SimulationRecord
    fpz: an.FpzResult | None
    Gf: float
    Ws: float | None = None
    lc: float | None = None
    dd_record: SimulationRecord | None = None
    seconds: float = 0.0


def simulate(cfg: RunConfig) -> RunOutput:
    """Build, run and analyse one configuration (plus its DD companion when asked)."""
    t0 = time.perf_counter()
    geo = cfg.geometry
    grains = make_grains(cfg, geo.outline)
    spec = build_specimen(geo, cfg.l_m, cfg.mesh_seed, grains, cfg.material, cfg.perturbation)
    ratio = cfg.dd_reaction_ratio if geo.protocol == "DD" else cfg.reaction_ratio
    rec = run_quasistatic(spec, max_events=cfg.max_events, reaction_ratio=ratio)
    fpz = None
    if len(rec.events) >= 5:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fpz = an.fpz_width(rec, energy=cfg.analysis.fpz_energy, threshold=cfg.analysis.macro_threshold,
                               mesh_size=spec.mesh.mean_mesh_size)
    out = RunOutput(cfg, spec, rec, fpz, Gf=an.fracture_energy_Gf(spec, rec) if rec.events else float("nan"))
    if geo.protocol == "DD":
        out.Ws = an.energy_density_Ws(spec, rec)
    elif cfg.analysis.with_dd:
        dd_geo = replace(geo, notches=(), protocol="DD")
        dd = build_specimen(dd_geo, cfg.l_m, cfg.mesh_seed, grains, cfg.material, cfg.perturbation)
        out.dd_record = run_quasistatic(dd, max_events=cfg.max_events, reaction_ratio=cfg.dd_reaction_ratio,
                                        compute_openings=False)
        out.Ws = an.energy_density_Ws(dd, out.dd_record)
        out.lc = an.characteristic_length(out.Gf, out.Ws)
    out.seconds = time.perf_counter() - t0
    return out


# --- campaigns -------------------------------------------------------------------------------

def derive_seed(master: int, stream: int, point: int, replicate: int) -> int:
    ss = np.random.SeedSequence([master, stream, point, replicate])
    return int(ss.generate_state(2, dtype=np.uint32).astype(np.uint64) @ np.array([1, 2**32], dtype=np.uint64))


def point_config(spec: CampaignSpec, point, replicate: int) -> RunConfig:
    """RunConfig of one sweep point and replicate; a pure function of the campaign spec."""
    base = spec.base
    p = point.params
    kw = {"three_phase": p["three_phase"], "material": None}
    mesh_point = point.grain_stream if spec.kind == "mesh_size" else 0
    kw["mesh_seed"] = derive_seed(spec.master_seed, 0, mesh_point, replicate)
    kw["grain_seed"] = derive_seed(spec.master_seed, 1, point.grain_stream, replicate)
    if spec.kind == "path_a":
        kw["grading"] = GradingSpec(kind="monodisperse", d=max(spec.values), fraction=spec.fraction)
        kw["rescale_d"] = p["d"]
    elif spec.kind in ("path_b", "path_c"):
        kw["grading"] = GradingSpec(kind="monodisperse", d=p["d"], fraction=p["fraction"])
    elif spec.kind == "ligament":
        kw["geometry"] = ligament_geometry(p["ligament"], base.geometry.width)
        kw["grading"] = GradingSpec(kind="fuller", d_min=spec.d_min, d_max=p["d_max"], fraction=spec.fraction)
    else:
        kw["l_m"] = p["l_m"]
        kw["grading"] = None
    if base.material != MaterialTable.default(base.three_phase):
        # custom tables are kept; only the ITZ follows the two/three-phase switch
        m = base.material
        kw["material"] = m if p["three_phase"] else replace(m, itz=replace(m.matrix, name="itz"))
    return base.with_(**kw)


SWEPT = {"path_a": "d", "path_b": "d", "path_c": "fraction", "ligament": "d_max", "mesh_size": "l_m"}


def sweep_param(spec: CampaignSpec, point) -> float:
    return float(point.params[SWEPT[spec.kind]])


@dataclass
class RunSummary:
    point: int
    label: str
    replicate: int
    config_hash: str
    mesh_seed: int
    grain_seed: int
    param: float
    three_phase: bool
    mean_mesh_size: float = float("nan")
    n_inclusions: int = 0
    achieved_fraction: float = 0.0
    inclusion_elements: float = 0.0
    n_events: int = 0
    terminated: str = ""
    peak_force: float = float("nan")
    l_fpz: float = float("nan")
    sigma: float = float("nan")
    band_fraction: float = float("nan")
    Gf: float = float("nan")
    Ws: float = float("nan")
    lc: float = float("nan")
    dd_events: int = 0
    error: str = ""
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.error

    def row(self):
        d = asdict(self)
        return [d[c] for c in RUN_COLUMNS]


def summarize_run(out: RunOutput, base: RunSummary) -> RunSummary:
    spec = out.specimen
    frac = surface_fractions(spec.mesh, spec.labels)
    base.mean_mesh_size = spec.mesh.mean_mesh_size
    base.n_inclusions = spec.grains.n
    base.achieved_fraction = spec.grains.achieved_fraction
    base.inclusion_elements = float(frac["inclusion"])
    base.n_events = len(out.record.events)
    base.terminated = out.record.terminated_reason
    base.peak_force = an.peak_force(out.record)
    if out.fpz is not None:
        base.l_fpz, base.sigma, base.band_fraction = out.fpz.l_fpz, out.fpz.sigma, out.fpz.band_fraction
    base.Gf = out.Gf
    if out.Ws is not None:
        base.Ws = out.Ws
    if out.lc is not None:
        base.lc = out.lc
    base.dd_events = len(out.dd_record.events) if out.dd_record is not None else 0
    base.seconds = out.seconds
    return base


def _task(args):
    cfg, head = args
    try:
        out = simulate(cfg)
        return summarize_run(out, head)
    except Exception as exc:  # noqa: BLE001 - failures are reported per run
        head.error = f"{type(exc).__name__}: {exc}"
        log.warning("run %s rep %d failed: %s\n%s", head.label, head.replicate, head.error, traceback.format_exc())
        return head


@dataclass
class PointSummary:
    point: int
    label: str
    param: float
    three_phase: bool
    n_ok: int
    n_failed: int
    l_fpz_mean: float
    l_fpz_std: float
    lc_mean: float
    lc_std: float
    mean_mesh_size: float

    def row(self):
        d = asdict(self)
        return [d[c] for c in POINT_COLUMNS]


@dataclass
class CampaignSummary:
    spec: CampaignSpec
    runs: list
    points: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)

    @property
    def failures(self) -> list:
        return [r for r in self.runs if not r.ok]

    def series(self, three_phase: bool = True, label_prefix: str | None = None):
        """(param, mean, std) over points of one phase setting (and label prefix)."""
        pts = [p for p in self.points if p.three_phase == three_phase
               and (label_prefix is None or p.label.startswith(label_prefix))]
        return (np.array([p.param for p in pts]), np.array([p.l_fpz_mean for p in pts]),
                np.array([p.l_fpz_std for p in pts]))

    def runs_of(self, three_phase: bool = True, label_prefix: str | None = None):
        return [r for r in self.runs if r.ok and r.three_phase == three_phase
                and (label_prefix is None or r.label.startswith(label_prefix))]


def _mean_std(v):
    v = np.asarray([x for x in v if np.isfinite(x)], float)
    if v.size == 0:
        return float("nan"), float("nan")
    return float(v.mean()), float(v.std())


def aggregate(spec: CampaignSpec, runs: list) -> CampaignSummary:
    summary = CampaignSummary(spec, runs)
    for pt in spec.points():
        rs = [r for r in runs if r.point == pt.index]
        ok = [r for r in rs if r.ok]
        m, s = _mean_std([r.l_fpz for r in ok])
        lm, ls = _mean_std([r.lc for r in ok])
        mm, _ = _mean_std([r.mean_mesh_size for r in ok])
        summary.points.append(PointSummary(pt.index, pt.label, sweep_param(spec, pt), pt.params["three_phase"],
                                           len(ok), len(rs) - len(ok), m, s, lm, ls, mm))
    groups = {}
    for p in summary.points:
        key = p.label.rsplit("_", 1)[0] if spec.kind in ("path_a", "path_b", "path_c") else p.label.split("_dmax")[0]
        if spec.kind == "mesh_size":
            key = "mesh"
        groups.setdefault(key, []).append(p)
    for key, pts in groups.items():
        pts = [p for p in pts if np.isfinite(p.l_fpz_mean)]
        if len(pts) < 2:
            continue
        x = np.array([p.mean_mesh_size if spec.kind == "mesh_size" else p.param for p in pts])
        y = np.array([p.l_fpz_mean for p in pts])
        fit = an.linear_fit(x, y).to_dict()
        fit["spearman"] = float(stats.spearmanr(x, y).statistic) if np.ptp(y) > 0 and len(x) > 2 else 0.0
        summary.fits[key] = fit
    return summary


def default_jobs() -> int:
    env = os.environ.get("LATFRAC_JOBS")
    return max(1, int(env)) if env else 1


def run_campaign(spec: CampaignSpec, jobs: int | None = None, progress=None) -> CampaignSummary:
    """Every sweep point x replicate, in a worker pool; results ordered by (point, replicate)."""
    jobs = jobs or default_jobs()
    tasks = []
    for pt in spec.points():
        for rep in range(spec.replicates):
            cfg = point_config(spec, pt, rep)
            head = RunSummary(pt.index, pt.label, rep, cfg.config_hash(), cfg.mesh_seed, cfg.grain_seed,
                              sweep_param(spec, pt), pt.params["three_phase"])
            tasks.append((cfg, head))
    if jobs == 1:
        runs = []
        for t in tasks:
            runs.append(_task(t))
            if progress:
                progress(runs[-1])
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = []
            for r in pool.map(_task, tasks):
                runs.append(r)
                if progress:
                    progress(r)
    runs.sort(key=lambda r: (r.point, r.replicate))
    return aggregate(spec, runs)


__all__ = [
    "simulate", "RunOutput", "make_grains", "derive_seed", "point_config", "run_campaign", "aggregate",
    "CampaignSummary", "RunSummary", "PointSummary", "RUN_COLUMNS", "POINT_COLUMNS", "default_jobs",
]
