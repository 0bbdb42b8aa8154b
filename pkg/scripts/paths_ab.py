"""Inclusion-size sweeps on the 40x160 LD specimen.

    python3 scripts/paths_ab.py [--path a|b|both] [--out out] [--jobs N]

Path (a) keeps the inclusion centers of each replicate and shrinks the
disks, so the surface fraction falls with d; path (b) places a fresh
structure at 40% for every d. Path (a) also runs the unnotched DD companion
for the characteristic length.
"""

import argparse
from pathlib import Path

from _common import CONFIGS, campaign


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--path", choices=("a", "b", "both"), default="both")
    p.add_argument("--out", default="out")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--replicates", type=int, default=None)
    args = p.parse_args()
    fits = {}
    for name in ("a", "b") if args.path == "both" else (args.path,):
        print(f"path ({name})")
        sub = argparse.Namespace(config=str(CONFIGS / f"path_{name}.json"), out=str(Path(args.out) / f"path_{name}"),
                                 jobs=args.jobs, replicates=args.replicates)
        fits[name] = campaign(sub).fits
    if len(fits) == 2:
        ratio = abs(fits["b"]["3ph"]["slope"]) / fits["a"]["3ph"]["slope"]
        print(f"|slope b| / slope a (3-phase) = {ratio:.2f}")


if __name__ == "__main__":
    main()
