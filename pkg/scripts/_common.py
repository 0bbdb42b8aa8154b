"""Shared plumbing for the experiment scripts."""

import argparse
import logging
import warnings
from pathlib import Path

from latfrac.campaign import run_campaign
from latfrac.cli import write_campaign
from latfrac.config import parse_campaign
from latfrac.plotting import plot_trend

CONFIGS = Path(__file__).parent / "configs"


def parser(description: str, config: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", default=str(CONFIGS / config))
    p.add_argument("--out", default=f"out/{Path(config).stem}")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--replicates", type=int, default=None)
    return p


def campaign(args, xlabel: str = "d [mm]"):
    """Run the campaign named in ``args`` and write runs/points/fits plus a trend plot."""
    logging.basicConfig(level=logging.WARNING)
    warnings.simplefilter("ignore", RuntimeWarning)
    spec = parse_campaign(args.config)
    if args.replicates:
        from dataclasses import replace
        spec = replace(spec, replicates=args.replicates)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(r):
        status = f"l_fpz={r.l_fpz:.3f} lc={r.lc:.3f} ({r.seconds:.0f} s)" if r.ok else f"FAILED {r.error}"
        print(f"  {r.label} rep {r.replicate}: {status}", flush=True)

    summary = run_campaign(spec, args.jobs, progress)
    write_campaign(summary, out)
    plot_trend(summary, out / "trend.svg", xlabel=xlabel)
    for p in summary.points:
        print(f"{p.label:>16}  l_fpz = {p.l_fpz_mean:6.3f} +- {p.l_fpz_std:5.3f}   lc = {p.lc_mean:6.3f}")
    for key, fit in summary.fits.items():
        print(f"{key}: slope={fit['slope']:.4g} intercept={fit['intercept']:.4g} R2={fit['r2']:.3f} "
              f"p={fit['pvalue']:.3g} spearman={fit['spearman']:.2f}")
    return summary
