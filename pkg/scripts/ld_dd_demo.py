"""One heterogeneous LD run with its DD companion, plus all figures.

    python3 scripts/ld_dd_demo.py [--config scripts/configs/run_ld.json] [--out out/demo]
"""

import argparse
import warnings
from pathlib import Path

from latfrac import plotting
from latfrac.campaign import simulate
from latfrac.cli import write_run
from latfrac.config import parse_config

from _common import CONFIGS


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default=str(CONFIGS / "run_ld.json"))
    p.add_argument("--out", default="out/demo")
    args = p.parse_args()
    warnings.simplefilter("ignore", RuntimeWarning)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = simulate(parse_config(args.config))
    summary = write_run(res, out)
    rec = res.record
    plotting.plot_load_curve(rec, out / "load_curve.svg")
    plotting.plot_crack_pattern(rec, out / "cracks.svg", grains=res.specimen.grains)
    plotting.plot_energy_map(rec, out / "energy_map.svg")
    plotting.plot_profile(rec, res.fpz, out / "profile.svg")
    print(f"{summary['n_events']} events, FPZ width {res.fpz.l_fpz:.3f} mm, Gf={res.Gf:.5g} N/mm, "
          f"Ws={res.Ws:.5g} N/mm^2, lc={res.lc:.3f} mm ({res.seconds:.0f} s) -> {out}")


if __name__ == "__main__":
    main()
