"""Standalone figure scripts for stormerlab outputs.

    stormerplots map --map FILE [--map FILE ...] [--orbits FILE ...]
                     [--contours 0.03125,0.80819] --out fig.png
    stormerplots orbit --traj FILE [--no-energy-contour] [--no-thalweg]
                       [--bare] --out fig.png
"""

import argparse
import sys

from .mapio import FormatError
from .render import DEFAULT_CONTOURS, render_map, render_orbit


def _parse_levels(text):
    if not text:
        return ()
    return tuple(float(p) for p in text.split(",") if p.strip())


def main(argv=None):
    parser = argparse.ArgumentParser(prog="stormerplots",
                                     description="figures from stormerlab files")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("map", help="indicator heatmap with contours/overlays")
    p.add_argument("--map", action="append", required=True, dest="maps",
                   help="STRMAP file; repeat to composite layers")
    p.add_argument("--orbits", action="append", default=[],
                   help="STRORB file with family polylines to overlay")
    p.add_argument("--contours", default=None,
                   help="comma-separated potential levels (default 1/32, 0.80819)")
    p.add_argument("--no-contours", action="store_true")
    p.add_argument("--title")
    p.add_argument("--out", required=True)
    p.set_defaults(which="map")

    p = subs.add_parser("orbit", help="meridian-plane orbit portrait")
    p.add_argument("--traj", required=True)
    p.add_argument("--no-energy-contour", action="store_true")
    p.add_argument("--no-thalweg", action="store_true")
    p.add_argument("--bare", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(which="orbit")

    args = parser.parse_args(argv)
    try:
        if args.which == "map":
            if args.no_contours:
                levels = ()
            elif args.contours is not None:
                levels = _parse_levels(args.contours)
            else:
                levels = DEFAULT_CONTOURS
            render_map(args.maps, args.out, orbit_paths=args.orbits,
                       contour_levels=levels, title=args.title)
        else:
            render_orbit(args.traj, args.out,
                         energy_contour=not args.no_energy_contour,
                         thalweg=not args.no_thalweg, bare=args.bare)
    except (FormatError, OSError) as exc:
        print(f'error message="{exc}"', file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
