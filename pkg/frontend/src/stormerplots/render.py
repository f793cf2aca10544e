"""Figure composition: indicator heatmaps with reference potential contours
and family overlays, and meridian-plane orbit portraits."""

import math

import matplotlib
matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import LogNorm, Normalize

from . import __version__
from .mapio import FormatError, read_map, read_orbits, read_trajectory

DEFAULT_CONTOURS = (1.0 / 32.0, 0.80819)

TRAPPED_COLOR = "#67000d"   # dark red: trapped / stable cells
SINGULAR_COLOR = "#1a001a"

_LOG_QUANTITIES = {"t_esc", "t_cross"}


def potential(z, rho):
    """Effective potential of the meridian-plane motion (local evaluation)."""
    r3 = np.power(z * z + rho * rho, 1.5)
    b = 1.0 / rho - rho / r3
    return 0.5 * b * b


def _metadata():
    return {"Software": f"stormerplots {__version__} matplotlib {matplotlib.__version__}"}


def _extent(header):
    return (header["rho_lo"], header["rho_hi"], header["z_lo"], header["z_hi"])


def potential_contours(ax, header, levels, color="cyan", n=400):
    """Draw V(z, rho) = level curves over the map extent; returns the
    contour vertex arrays per level."""
    rho = np.linspace(header["rho_lo"], header["rho_hi"], n)
    z = np.linspace(header["z_lo"], header["z_hi"], max(3, int(n * 0.75)))
    rr, zz = np.meshgrid(rho, z)
    vv = potential(zz, rr)
    cs = ax.contour(rr, zz, vv, levels=sorted(levels), colors=color,
                    linewidths=0.9, zorder=5)
    paths = []
    for coll in cs.allsegs:
        segs = [np.asarray(seg) for seg in coll if len(seg)]
        paths.append(np.vstack(segs) if segs else np.empty((0, 2)))
    return paths


def _draw_layer(ax, header, values, quantity):
    extent = _extent(header)
    finite = np.isfinite(values)
    data = np.ma.masked_invalid(np.where(np.isposinf(values), np.nan, values))
    data = np.ma.masked_where(np.isneginf(values), data)
    if quantity in _LOG_QUANTITIES:
        positive = values[finite & (values > 0.0)]
        vmin = positive.min() if positive.size else 0.1
        vmax = positive.max() if positive.size else 1.0
        norm = LogNorm(vmin=max(vmin, 1e-3), vmax=max(vmax, 10.0 * vmin))
        cmap = plt.get_cmap("turbo").copy()
    else:
        spread = values[finite]
        lim = float(np.max(np.abs(spread))) if spread.size else 1.0
        if quantity.startswith("lambda"):
            norm = Normalize(vmin=-lim, vmax=lim)
            cmap = plt.get_cmap("coolwarm").copy()
        else:
            norm = Normalize(vmin=0.0, vmax=lim if lim > 0 else 1.0)
            cmap = plt.get_cmap("turbo").copy()
    cmap.set_bad(alpha=0.0)
    im = ax.imshow(data, origin="lower", extent=extent, norm=norm, cmap=cmap,
                   aspect="auto", interpolation="nearest", zorder=2)
    # special cells: trapped dark red, singularity-guard hits near-black
    if np.isposinf(values).any():
        mask = np.ma.masked_where(~np.isposinf(values), np.ones_like(values))
        ax.imshow(mask, origin="lower", extent=extent, aspect="auto",
                  cmap=matplotlib.colors.ListedColormap([TRAPPED_COLOR]),
                  interpolation="nearest", zorder=3)
    if np.isneginf(values).any():
        mask = np.ma.masked_where(~np.isneginf(values), np.ones_like(values))
        ax.imshow(mask, origin="lower", extent=extent, aspect="auto",
                  cmap=matplotlib.colors.ListedColormap([SINGULAR_COLOR]),
                  interpolation="nearest", zorder=3)
    return im


def render_map(map_paths, out_path, orbit_paths=(), contour_levels=DEFAULT_CONTOURS,
               title=None, colorbar=True, dpi=130):
    """Compose one or more indicator maps (identical grids) with potential
    contours and optional family polyline overlays.

    Returns the contour vertex arrays (one per level, sorted ascending) so
    callers can verify anchor points. Grid mismatch between layers aborts.
    """
    if not map_paths:
        raise FormatError("need at least one map file")
    layers = [read_map(p) for p in map_paths]
    base_header = layers[0][0]
    for header, _ in layers[1:]:
        for key in ("rho_lo", "rho_hi", "z_lo", "z_hi", "nx", "ny"):
            if header[key] != base_header[key]:
                raise FormatError(f"grid mismatch between layers on {key}")

    fig, ax = plt.subplots(figsize=(9.0, 5.5))
    im = None
    for header, values in layers:
        im = _draw_layer(ax, header, values, header.get("quantity", ""))
    contours = []
    if contour_levels:
        contours = potential_contours(ax, base_header, contour_levels)

    family_colors = {1: "0.55", 2: "crimson", 3: "red"}
    for path in orbit_paths:
        _, _, families = read_orbits(path)
        for fam in families:
            pts = np.array(fam["points"])
            if pts.size == 0:
                continue
            ax.plot(pts[:, 1], pts[:, 0], "-", linewidth=0.9,
                    color=family_colors.get(fam["class"], "black"), zorder=6)

    ax.set_xlim(base_header["rho_lo"], base_header["rho_hi"])
    ax.set_ylim(base_header["z_lo"], base_header["z_hi"])
    ax.set_xlabel(r"$\rho_0$")
    ax.set_ylabel(r"$z_0$")
    ax.set_title(title or " + ".join(h.get("quantity", "?") for h, _ in layers))
    if colorbar and im is not None:
        fig.colorbar(im, ax=ax, shrink=0.85)
    fig.savefig(out_path, dpi=dpi, metadata=_metadata())
    plt.close(fig)
    return contours


def render_orbit(traj_path, out_path, energy_contour=True, thalweg=True,
                 bare=False, annotate_extrema=True, dpi=130):
    """Meridian-plane portrait of one sampled trajectory.

    Optionally overlays the V = H energy contour (thick) and the potential
    valley floor r = cos^2(lambda) (dotted). bare=True strips axes and
    annotations and makes the z-range symmetric (for mirror comparisons).
    Returns (lambda_min, lambda_max) measured from the samples.
    """
    header, rows = read_trajectory(traj_path)
    if rows.size == 0:
        raise FormatError("empty trajectory")
    z = rows[:, 1]
    rho = rows[:, 2]
    H = float(np.median(rows[:, 5]))
    lam = rows[:, 6]
    lam_min, lam_max = float(lam.min()), float(lam.max())

    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    ax.plot(rho, z, "-", linewidth=0.7, color="tab:blue", zorder=3)

    pad_rho = 0.15 * (rho.max() - rho.min() + 1e-3)
    pad_z = 0.15 * (z.max() - z.min() + 1e-3)
    rho_lim = (max(1e-3, rho.min() - pad_rho), rho.max() + pad_rho)
    if bare:
        zmax = max(abs(z.min()), abs(z.max())) + pad_z
        z_lim = (-zmax, zmax)
    else:
        z_lim = (z.min() - pad_z, z.max() + pad_z)

    if energy_contour:
        rg = np.linspace(rho_lim[0], rho_lim[1], 400)
        zg = np.linspace(z_lim[0], z_lim[1], 400)
        rr, zz = np.meshgrid(rg, zg)
        ax.contour(rr, zz, potential(zz, rr), levels=[H], colors="black",
                   linewidths=1.8, zorder=2)
    if thalweg:
        lam_grid = np.linspace(-0.5 * math.pi + 1e-3, 0.5 * math.pi - 1e-3, 600)
        c = np.cos(lam_grid)
        ax.plot(c ** 3, c * c * np.sin(lam_grid), ":", color="0.4",
                linewidth=1.2, zorder=1)

    ax.set_xlim(*rho_lim)
    ax.set_ylim(*z_lim)
    if bare:
        ax.set_axis_off()
    else:
        ax.set_xlabel(r"$\rho$")
        ax.set_ylabel(r"$z$")
        ax.set_title(f"H = {H:.6g}")
        if annotate_extrema:
            ax.text(0.02, 0.98,
                    f"$\\lambda$ range [{lam_min:+.4f}, {lam_max:+.4f}]"
                    f"  sum {lam_min + lam_max:+.4f}",
                    transform=ax.transAxes, va="top", fontsize=9)
    fig.savefig(out_path, dpi=dpi, metadata=_metadata())
    plt.close(fig)
    return lam_min, lam_max
