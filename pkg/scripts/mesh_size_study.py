"""FPZ width of the homogeneous notched LD specimen against mesh size.

    python3 scripts/mesh_size_study.py [--out out/mesh_size] [--jobs N]

The intercept of the line through the per-size means estimates the FPZ
width the lattice would give at vanishing element size.
"""

from _common import campaign, parser


def main():
    args = parser(__doc__.splitlines()[0], "mesh_size.json").parse_args()
    summary = campaign(args, xlabel="mean mesh size [mm]")
    fit = summary.fits["mesh"]
    finest = min(p.mean_mesh_size for p in summary.points)
    print(f"intercept {fit['intercept']:.3f} mm vs finest mean mesh size {finest:.3f} mm")


if __name__ == "__main__":
    main()
