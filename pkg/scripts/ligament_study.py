"""FPZ width against the largest inclusion size for long and short ligaments.

    python3 scripts/ligament_study.py [--out out/ligament] [--jobs N]

Fuller-graded inclusions (45%) in the 100x100 edge-notched specimen under
direct tension; ligament labels L (90 mm) and XS (50 mm).
"""

from _common import campaign, parser


def main():
    args = parser(__doc__.splitlines()[0], "ligament.json").parse_args()
    campaign(args, xlabel="d_max [mm]")


if __name__ == "__main__":
    main()
