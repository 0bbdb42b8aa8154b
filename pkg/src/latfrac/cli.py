"""Command line entry point: ``latfrac <verb> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import analysis as an
from . import io
from .campaign import POINT_COLUMNS, RUN_COLUMNS, make_grains, run_campaign, simulate
from .config import PRESETS, ConfigError, RunConfig, parse_campaign, parse_config, run_config_from_dict
from .engine import build_specimen
from .material import MaterialTable, elastic_from_moduli
from .mesh import generate_mesh

log = logging.getLogger("latfrac")


def _jobs(args) -> int:
    from .campaign import default_jobs
    return args.jobs if args.jobs else default_jobs()


def _run_config(args) -> RunConfig:
    if args.config:
        cfg = parse_config(args.config)
    elif args.preset:
        cfg = run_config_from_dict({"preset": args.preset})
    else:
        cfg = RunConfig()
    if args.seed is not None:
        cfg = cfg.with_(mesh_seed=args.seed, grain_seed=args.seed)
    return cfg


def _out(args) -> Path:
    p = Path(args.out)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SystemExit(f"error: cannot write to {p}: {exc}") from None
    return p


def _fpz(rec, energy: str = "e_actual"):
    """FPZ fit with fit diagnostics sent to the log instead of stderr."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        res = an.fpz_width(rec, energy=energy)
    for w in caught:
        log.info("%s", w.message)
    return res


def cmd_mesh(args) -> int:
    cfg = _run_config(args)
    spec = build_specimen(cfg.geometry, cfg.l_m, cfg.mesh_seed, None, cfg.material, cfg.perturbation)
    path = io.save_mesh(spec.mesh, _out(args) / "mesh.json")
    print(f"{spec.mesh.n_nodes} nodes, {spec.mesh.n_elements} elements, mean size "
          f"{spec.mesh.mean_mesh_size:.4f} mm -> {path}")
    return 0


def cmd_grains(args) -> int:
    cfg = _run_config(args)
    grains = make_grains(cfg, cfg.geometry.outline)
    out = _out(args)
    io.save_grains(grains, out / "grains.json")
    spec = build_specimen(cfg.geometry, cfg.l_m, cfg.mesh_seed, grains, cfg.material, cfg.perturbation)
    io.write_element_csv(spec.mesh, spec.labels, out / "elements.csv")
    print(f"{grains.n} inclusions, surface fraction {grains.achieved_fraction:.4f} -> {out}")
    return 0


def write_run(res, out: Path) -> dict:
    cfg = res.config
    seeds = {"mesh_seed": cfg.mesh_seed, "grain_seed": cfg.grain_seed}
    h = cfg.config_hash()
    io.write_event_log(res.record, out / "events.csv")
    io.save_record(res.record, out / "record.json", h, seeds)
    io.write_element_csv(res.specimen.mesh, res.specimen.labels, out / "elements.csv")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")
    if res.dd_record is not None:
        io.write_event_log(res.dd_record, out / "events_dd.csv")
    summary = {"config_hash": h, **seeds, "n_events": len(res.record.events),
               "terminated": res.record.terminated_reason, "Gf": res.Gf, "Ws": res.Ws, "lc": res.lc,
               "fpz": res.fpz.to_dict() if res.fpz else None,
               "mean_mesh_size": res.specimen.mesh.mean_mesh_size}
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return summary


def cmd_run(args) -> int:
    cfg = _run_config(args)
    res = simulate(cfg)
    s = write_run(res, _out(args))
    fpz = f"{s['fpz']['l_fpz']:.3f} mm" if s["fpz"] else "n/a"
    print(f"{s['n_events']} events ({s['terminated']}), Gf={s['Gf']:.5g} N/mm, FPZ width {fpz} -> {args.out}")
    return 0


def cmd_analyze(args) -> int:
    rec = io.load_record(args.record)
    out = _out(args)
    res = {"n_events": len(rec.events)}
    if rec.events:
        res["Gf_log"] = an.gf_from_events(rec)
        res["Ws_log"] = an.ws_from_events(rec)
        res["peak_force"] = an.peak_force(rec)
    if len(rec.events) >= 5:
        fpz = _fpz(rec, args.energy)
        res["fpz"] = fpz.to_dict()
        d = np.array([np.cos(fpz.angle), np.sin(fpz.angle)])
        s = rec.midpoints @ np.array([-d[1], d[0]])
        ss, frac, e = an.cumulative_profile(s, rec.column(args.energy))
        io.write_csv(out / "profile.csv", ("s", "energy", "fraction"), zip(ss, e, frac))
    ed, ef = an.envelope_curve(*rec.load_curve)
    io.write_csv(out / "envelope.csv", ("displacement", "force"), zip(ed, ef))
    h, xe, ye = an.energy_density_map(rec, args.cell)
    io.write_csv(out / "energy_map.csv", ["y0\\x0"] + [io.fmt(x) for x in xe[:-1]],
                 ([y] + list(row) for y, row in zip(ye[:-1], h)))
    (out / "analysis.json").write_text(json.dumps(res, indent=1, sort_keys=True) + "\n")
    print(json.dumps(res, indent=1, sort_keys=True))
    return 0


def write_campaign(summary, out: Path) -> None:
    io.write_csv(out / "runs.csv", RUN_COLUMNS + ("error",), (r.row() + [r.error] for r in summary.runs))
    io.write_csv(out / "points.csv", POINT_COLUMNS, (p.row() for p in summary.points))
    (out / "fits.json").write_text(json.dumps(summary.fits, indent=1, sort_keys=True) + "\n")
    (out / "campaign.json").write_text(json.dumps(summary.spec.to_dict(), indent=1, sort_keys=True) + "\n")


def cmd_campaign(args) -> int:
    spec = parse_campaign(args.config)
    if args.seed is not None:
        from dataclasses import replace
        spec = replace(spec, master_seed=args.seed)
    out = _out(args)

    def progress(r):
        status = f"l_fpz={r.l_fpz:.3f}" if r.ok else f"FAILED {r.error}"
        print(f"[{r.point}:{r.label} rep {r.replicate}] {status}", flush=True)

    summary = run_campaign(spec, _jobs(args), progress)
    write_campaign(summary, out)
    if not args.no_plots:
        from .plotting import plot_trend
        plot_trend(summary, out / "trend.svg", xlabel="mean mesh size [mm]" if spec.kind == "mesh_size" else
                   {"path_c": "surface fraction", "ligament": "d_max [mm]"}.get(spec.kind, "d [mm]"))
    for key, fit in summary.fits.items():
        print(f"{key}: slope={fit['slope']:.4g} intercept={fit['intercept']:.4g} R2={fit['r2']:.3f}")
    if summary.failures:
        print(f"{len(summary.failures)} runs failed, see runs.csv", file=sys.stderr)
    return 0


def cmd_material(args) -> int:
    table = MaterialTable.default(three_phase=not args.two_phase)
    E, nu = elastic_from_moduli(table.matrix.kn, table.matrix.kt)
    print(json.dumps({"material": table.to_dict(), "matrix_E_GPa": E, "matrix_nu": nu}, indent=1))
    return 0


def cmd_plot(args) -> int:
    from .plotting import plot_crack_pattern, plot_energy_map, plot_load_curve, plot_profile
    rec = io.load_record(args.record)
    out = _out(args)
    plot_load_curve(rec, out / "load_curve.svg")
    plot_crack_pattern(rec, out / "cracks.svg")
    plot_energy_map(rec, out / "energy_map.svg", cell=args.cell)
    if len(rec.events) >= 5:
        plot_profile(rec, _fpz(rec), out / "profile.svg")
    print(f"figures -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latfrac", description="2D lattice fracture simulations and FPZ analysis")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, out_default):
        sp.add_argument("--config", help="run configuration JSON")
        sp.add_argument("--preset", choices=PRESETS)
        sp.add_argument("--seed", type=int, help="override mesh and grain seeds")
        sp.add_argument("--out", default=out_default)

    common(sub.add_parser("mesh", help="generate and export a specimen mesh"), "out/mesh")
    common(sub.add_parser("grains", help="place inclusions and classify elements"), "out/grains")
    common(sub.add_parser("run", help="run one simulation"), "out/run")

    a = sub.add_parser("analyze", help="analyse a saved record")
    a.add_argument("record")
    a.add_argument("--out", default="out/analysis")
    a.add_argument("--energy", choices=("e_actual", "e_nominal"), default="e_actual")
    a.add_argument("--cell", type=float, default=2.0, help="energy map cell size [mm]")

    c = sub.add_parser("campaign", help="run a parameter sweep")
    c.add_argument("--config", required=True, help="campaign JSON")
    c.add_argument("--out", default="out/campaign")
    c.add_argument("--seed", type=int, help="override the master seed")
    c.add_argument("--jobs", type=int, help="worker processes (default: $LATFRAC_JOBS or 1)")
    c.add_argument("--no-plots", action="store_true")

    m = sub.add_parser("material", help="material tables")
    m.add_argument("what", choices=("default",))
    m.add_argument("--two-phase", action="store_true", help="ITZ with matrix properties")

    pl = sub.add_parser("plot", help="figures for a saved record")
    pl.add_argument("record")
    pl.add_argument("--out", default="out/plots")
    pl.add_argument("--cell", type=float, default=2.0)
    return p


COMMANDS = {"mesh": cmd_mesh, "grains": cmd_grains, "run": cmd_run, "analyze": cmd_analyze,
            "campaign": cmd_campaign, "material": cmd_material, "plot": cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.verb](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
