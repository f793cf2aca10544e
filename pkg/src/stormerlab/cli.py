"""Command-line front end.

Subcommands: map, residual, orbits, trace, verify, info. Exit codes:
0 success, 2 configuration/precondition error, 3 numerical failure; errors
print a machine-readable line 'error kind=<...> message="..."' on stderr.
"""

import argparse
import math
import os
import sys

from . import __version__, formats
from .config import RESTRICTIONS, RunConfig, apply_overrides, config_digest, load_config
from .dynamics import (CRITICAL_ENERGY, MeridianState, energy, in_scan_domain,
                       latitude, outer_boundary_radius, potential, thalweg_gap,
                       turning_points)
from .errors import (ClassificationError, ConfigError, DomainError,
                     IntegrationError, RefinementError, StormerlabError)
from .integrator import IntegratorConfig, integrate
from .orbits import assemble_families, classify, crossing_sequence, refine_edges, verify as verify_orbit
from .scan import GridSpec, grid_from_config, scan, scan_residual

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_QUANTITY_FLAGS = {
    "mlce": "mlce",
    "t-esc": "t_esc",
    "t-cross": "t_cross",
    "lambda-min": "lambda_min",
    "lambda-max": "lambda_max",
    "lambda-sum": "lambda_sum",
}


def _parse_grid(text):
    try:
        rho_part, z_part = text.split(",")
        rho_lo, rho_hi, nx = rho_part.split(":")
        z_lo, z_hi, ny = z_part.split(":")
        return (float(rho_lo), float(rho_hi), int(nx),
                float(z_lo), float(z_hi), int(ny))
    except ValueError as exc:
        raise ConfigError(
            f"bad --grid {text!r}; expected RHO_LO:RHO_HI:NX,Z_LO:Z_HI:NY") from exc


def _build_config(args):
    overrides = {}
    if getattr(args, "grid", None):
        (overrides["rho_lo"], overrides["rho_hi"], overrides["nx"],
         overrides["z_lo"], overrides["z_hi"], overrides["ny"]) = _parse_grid(args.grid)
    if getattr(args, "restriction", None):
        overrides["restriction"] = args.restriction
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"bad --set {item!r}; expected key=value")
        key, _, raw = item.partition("=")
        overrides[key.strip()] = raw.strip()
    env_workers = os.environ.get("STORMER_WORKERS")
    if env_workers:
        try:
            overrides["workers"] = int(env_workers)
        except ValueError as exc:
            raise ConfigError(f"bad STORMER_WORKERS {env_workers!r}") from exc
    if args.config:
        typed = {k: v for k, v in overrides.items()}
        return load_config(args.config, overrides=typed)
    cfg = RunConfig()
    typed = {}
    from .config import _coerce
    for key, value in overrides.items():
        typed[key] = _coerce(key, str(value)) if isinstance(value, str) else value
    return apply_overrides(cfg, typed)


def _add_common(sub):
    sub.add_argument("--config", help="key=value config file (flags win)")
    sub.add_argument("--workers", type=int, help="parallel workers")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override any config field (repeatable)")


def _add_grid(sub):
    sub.add_argument("--grid", help="RHO_LO:RHO_HI:NX,Z_LO:Z_HI:NY")
    sub.add_argument("--restriction", choices=RESTRICTIONS)


def _progress(stream):
    def report(done, total):
        if done % max(1, total // 20) == 0 or done == total:
            print(f"progress {done}/{total} rows", file=stream, flush=True)
    return report


def cmd_map(args):
    cfg = _build_config(args)
    quantity = _QUANTITY_FLAGS[args.quantity]
    grid = grid_from_config(cfg)
    result = scan(grid, quantity, cfg, workers=cfg.workers,
                  checkpoint_path=args.checkpoint, resume=args.resume,
                  progress=_progress(sys.stderr) if args.verbose else None)
    encoding = "binary" if args.binary else "ascii"
    formats.write_map(args.out, result.header(encoding), result.values)
    print(f"wrote {args.out} quantity={quantity} digest={result.digest}")
    return EXIT_OK


def cmd_residual(args):
    cfg = _build_config(args)
    grid = grid_from_config(cfg)
    result, edges = scan_residual(grid, args.n, cfg, workers=cfg.workers,
                                  checkpoint_path=args.checkpoint, resume=args.resume,
                                  progress=_progress(sys.stderr) if args.verbose else None)
    encoding = "binary" if args.binary else "ascii"
    formats.write_map(args.out, result.header(encoding), result.values)
    edge_path = args.out + ".edges"
    formats.write_edges(edge_path, edges,
                        {"n": args.n, "digest": result.digest, "version": result.version})
    print(f"wrote {args.out} and {edge_path} ({len(edges)} sign-change edges)")
    return EXIT_OK


def cmd_orbits(args):
    cfg = _build_config(args)
    grid = grid_from_config(cfg)
    result, edges = scan_residual(grid, args.n, cfg, workers=cfg.workers,
                                  progress=_progress(sys.stderr) if args.verbose else None)
    orbits, cells, failures = refine_edges(edges, cfg, workers=cfg.workers)
    families = assemble_families(orbits, cells)
    flat = []
    for fam in families:
        flat.extend(fam.points)
    formats.write_orbits(args.out, flat, families,
                         {"n": args.n, "digest": result.digest,
                          "version": result.version,
                          "grid": f"{grid.rho_lo}:{grid.rho_hi}:{grid.nx},"
                                  f"{grid.z_lo}:{grid.z_hi}:{grid.ny}"})
    print(f"wrote {args.out}: {len(flat)} orbits in {len(families)} families"
          f" ({len(failures)} failed refinements)")
    return EXIT_OK


def cmd_trace(args):
    cfg = _build_config(args)
    start = MeridianState.at_rest(args.z0, args.rho0)
    energy(start)  # domain check up front
    icfg = cfg.integrator(args.t_max)
    result = integrate(start, icfg, sample_dt=args.sample_dt)
    rows = []

    def full_row(t, z, rho, pz, prho):
        H = 0.5 * (pz * pz + prho * prho) + potential(z, rho)
        return (t, z, rho, pz, prho, H, latitude(z, rho), thalweg_gap(z, rho))

    rows.append(full_row(start.t, start.z, start.rho, start.p_z, start.p_rho))
    for (t, z, rho, pz, prho) in result.samples:
        rows.append(full_row(t, z, rho, pz, prho))
    final = result.state
    if not rows or final.t > rows[-1][0]:
        rows.append(full_row(final.t, final.z, final.rho, final.p_z, final.p_rho))
    formats.write_trajectory(args.out, rows, {
        "z0": formats.fmt(args.z0), "rho0": formats.fmt(args.rho0),
        "t_max": formats.fmt(args.t_max), "sample_dt": formats.fmt(args.sample_dt),
        "reason": result.reason,
        "energy_drift_rel": f"{result.energy_drift_rel:.6e}",
        "digest": config_digest(cfg, "trace"), "version": f"stormerlab-{__version__}",
    })
    print(f"wrote {args.out}: {len(rows)} samples, reason={result.reason},"
          f" energy drift {result.energy_drift_rel:.3e}")
    return EXIT_OK


def cmd_verify(args):
    cfg = _build_config(args)
    start = MeridianState.at_rest(args.z0, args.rho0)
    icfg = cfg.integrator(cfg.search_t_cap)
    res = verify_orbit(start, args.t_perp, config=icfg)
    print(f"perp_z = {res.perp_z:.9e}")
    print(f"perp_p_rho = {res.perp_p_rho:.9e}")
    print(f"half_norm = {res.half_norm:.9e}")
    print(f"full_norm = {res.full_norm:.9e}")
    if res.max() < cfg.verify_tol:
        po = classify(start, args.t_perp, args.n_max, tol=cfg.refine_tol,
                      verify_tol=cfg.verify_tol, config=icfg)
        print(f"class = s{po.class_n}")
        print(f"period = {formats.fmt(po.period)}")
        print(f"n_eq_half = {po.n_eq_half}")
        print(f"n_thalweg_half = {po.n_thalweg_half}")
    else:
        print("class = none")
    return EXIT_OK


def cmd_info(args):
    z0, rho0 = args.z0, args.rho0
    H = potential(z0, rho0)
    print(f"H = {formats.fmt(H)}")
    if 0.0 < H <= CRITICAL_ENERGY:
        tp = turning_points(H)
        print(f"rho_min = {formats.fmt(tp.rho_min)}")
        print(f"rho_max = {formats.fmt(tp.rho_max)}")
    if H > 0.0:
        print(f"outer_boundary_radius = {formats.fmt(outer_boundary_radius(H))}")
    print(f"latitude = {formats.fmt(latitude(z0, rho0))}")
    print(f"in_scan_domain = {'true' if in_scan_domain(z0, rho0) else 'false'}")
    print(f"energy_regime = {'below_1_32' if H < CRITICAL_ENERGY else 'at_least_1_32'}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stormerlab",
        description="Charged-particle chaos laboratory for the dipole-field meridian plane")
    parser.add_argument("--version", action="version", version=f"stormerlab {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("map", help="paint one indicator over a grid")
    p.add_argument("--quantity", required=True, choices=sorted(_QUANTITY_FLAGS))
    _add_grid(p)
    p.add_argument("--out", required=True)
    p.add_argument("--binary", action="store_true")
    p.add_argument("--checkpoint")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--verbose", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_map)

    p = subs.add_parser("residual", help="perpendicularity-residual map + sign-change edges")
    p.add_argument("--n", type=int, required=True, choices=(1, 2, 3))
    _add_grid(p)
    p.add_argument("--out", required=True)
    p.add_argument("--binary", action="store_true")
    p.add_argument("--checkpoint")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--verbose", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_residual)

    p = subs.add_parser("orbits", help="find, refine, verify and classify periodic orbits")
    p.add_argument("--n", type=int, required=True, choices=(1, 2, 3))
    _add_grid(p)
    p.add_argument("--out", required=True)
    p.add_argument("--verbose", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_orbits)

    p = subs.add_parser("trace", help="integrate one start and write the sampled path")
    p.add_argument("--z0", type=float, required=True)
    p.add_argument("--rho0", type=float, required=True)
    p.add_argument("--t-max", type=float, default=1000.0, dest="t_max")
    p.add_argument("--sample-dt", type=float, default=0.1, dest="sample_dt")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_trace)

    p = subs.add_parser("verify", help="periodicity residuals and class of a start")
    p.add_argument("--z0", type=float, required=True)
    p.add_argument("--rho0", type=float, required=True)
    p.add_argument("--t-perp", type=float, required=True, dest="t_perp")
    p.add_argument("--n-max", type=int, default=3, dest="n_max")
    _add_common(p)
    p.set_defaults(func=cmd_verify)

    p = subs.add_parser("info", help="energy, turning points and domain membership of a start")
    p.add_argument("--z0", type=float, required=True)
    p.add_argument("--rho0", type=float, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_info)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f'error kind=config message="{exc}"', file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, RefinementError, ClassificationError) as exc:
        print(f'error kind=numeric message="{exc}"', file=sys.stderr)
        return EXIT_NUMERIC
    except StormerlabError as exc:
        print(f'error kind=numeric message="{exc}"', file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
