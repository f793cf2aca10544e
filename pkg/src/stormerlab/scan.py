"""Rectangular-grid sweeps of indicators and residuals over zero-velocity
starts.

Cells are evaluated at cell centers, row-major with rho as the fast axis.
Dispatch is statically chunked by rows and every cell is a pure function of
its inputs, so results are bit-identical for any worker count. Checkpoints
carry a row-completion bitmap and resume to the identical result.
"""

from dataclasses import dataclass, replace as _dc_replace

import math
import os
from multiprocessing import get_context

import numpy as np

from . import formats
from .config import RESTRICTIONS, RunConfig, config_digest
from .dynamics import CRITICAL_ENERGY, MeridianState
from .backend import kernel
from .errors import ConfigError, StormerlabError
from .indicators import crossing_time, escape_time, lambda_extrema, mlce
from .orbits import perp_residual

QUANTITIES = ("mlce", "t_esc", "t_cross", "lambda_min", "lambda_max",
              "lambda_sum", "residual_1", "residual_2", "residual_3")

FLAG_OK = 0
FLAG_EXCLUDED = 1      # outside the grid restriction or quantity precondition
FLAG_FAILED = 2        # integrator/domain failure at this cell
FLAG_TRAPPED = 3       # time indicator exceeded its cap (value +inf)
FLAG_EARLY = 4         # run ended early (escape); partial value or NaN
FLAG_SINGULAR = 5      # hit the singularity guard
FLAG_UNREACHABLE = 6   # residual: fewer than n crossings


@dataclass(frozen=True)
class GridSpec:
    """Sampling grid over (rho0, z0); nx counts rho (fast axis), ny counts z."""

    rho_lo: float
    rho_hi: float
    z_lo: float
    z_hi: float
    nx: int
    ny: int
    restriction: str = "all"

    def validated(self):
        if self.restriction not in RESTRICTIONS:
            raise ConfigError(f"restriction must be one of {RESTRICTIONS}")
        if not self.rho_lo > 0.0:
            raise ConfigError("rho_lo must be positive")
        if not (self.rho_lo < self.rho_hi and self.z_lo < self.z_hi):
            raise ConfigError("grid bounds must be ordered")
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("nx and ny must be at least 2")
        return self

    def rho_center(self, i):
        return self.rho_lo + (i + 0.5) * (self.rho_hi - self.rho_lo) / self.nx

    def z_center(self, j):
        return self.z_lo + (j + 0.5) * (self.z_hi - self.z_lo) / self.ny


def grid_from_config(cfg):
    return GridSpec(cfg.rho_lo, cfg.rho_hi, cfg.z_lo, cfg.z_hi,
                    cfg.nx, cfg.ny, cfg.restriction).validated()


@dataclass
class MapResult:
    grid: GridSpec
    quantity: str
    values: np.ndarray       # (ny, nx) float64; NaN = excluded/unreachable
    flags: np.ndarray        # (ny, nx) uint8, FLAG_* codes
    digest: str
    version: str

    def header(self, encoding):
        g = self.grid
        return {
            "quantity": self.quantity,
            "rho_lo": g.rho_lo, "rho_hi": g.rho_hi,
            "z_lo": g.z_lo, "z_hi": g.z_hi,
            "nx": g.nx, "ny": g.ny,
            "restriction": g.restriction,
            "sentinel": "nan",
            "special": "trapped:inf singular:-inf",
            "digest": self.digest,
            "version": self.version,
            "encoding": encoding,
        }


def _version():
    from . import __version__
    return f"stormerlab-{__version__}"


def _passes_restriction(restriction, z0, rho0, H):
    if restriction == "all":
        return True
    if restriction == "H_below_1_32":
        return H < CRITICAL_ENERGY
    if restriction == "H_at_least_1_32":
        return H >= CRITICAL_ENERGY
    # inside_field_line: r^3 <= 2 rho^2
    r = math.sqrt(z0 * z0 + rho0 * rho0)
    return r * r * r <= 2.0 * rho0 * rho0


def evaluate_cell(quantity, z0, rho0, cfg, restriction):
    """(value, flag) of one indicator at the zero-velocity start (z0, rho0)."""
    if rho0 <= 1e-6:
        return math.nan, FLAG_EXCLUDED
    H = kernel.potential(z0, rho0)
    if not math.isfinite(H):
        return math.nan, FLAG_EXCLUDED
    if not _passes_restriction(restriction, z0, rho0, H):
        return math.nan, FLAG_EXCLUDED
    start = MeridianState.at_rest(z0, rho0)
    try:
        if quantity == "mlce":
            if not H < CRITICAL_ENERGY:
                return math.nan, FLAG_EXCLUDED
            res = mlce(start, total_time=cfg.mlce_total_time,
                       renorm_interval=cfg.mlce_renorm_interval,
                       config=cfg.integrator(cfg.mlce_total_time))
            if res.failed:
                return math.nan, FLAG_FAILED
            if res.escaped:
                return math.nan, FLAG_EARLY
            if res.hit_singularity:
                return res.value, FLAG_SINGULAR
            return res.value, FLAG_OK
        if quantity == "t_esc":
            if not H >= CRITICAL_ENERGY:
                return math.nan, FLAG_EXCLUDED
            res = escape_time(start, cap=cfg.escape_cap,
                              config=cfg.integrator(cfg.escape_cap))
            if res.hit_singularity:
                return -math.inf, FLAG_SINGULAR
            if res.trapped:
                return math.inf, FLAG_TRAPPED
            return res.t_esc, FLAG_OK
        if quantity == "t_cross":
            if not (0.0 < H < CRITICAL_ENERGY):
                return math.nan, FLAG_EXCLUDED
            res = crossing_time(start, cap=cfg.crossing_cap,
                                config=cfg.integrator(cfg.crossing_cap))
            if res.hit_singularity:
                return -math.inf, FLAG_SINGULAR
            if res.trapped:
                return math.inf, FLAG_TRAPPED
            return res.t_cross, FLAG_OK
        if quantity in ("lambda_min", "lambda_max", "lambda_sum"):
            res = lambda_extrema(start, total_time=cfg.lambda_total_time,
                                 config=cfg.integrator(cfg.lambda_total_time))
            value = {"lambda_min": res.lambda_min,
                     "lambda_max": res.lambda_max,
                     "lambda_sum": res.sum}[quantity]
            return value, (FLAG_OK if res.complete else FLAG_EARLY)
        if quantity.startswith("residual_"):
            n = int(quantity.rsplit("_", 1)[1])
            if z0 == 0.0:
                return math.nan, FLAG_EXCLUDED
            value = perp_residual(start, n, t_cap=cfg.search_t_cap,
                                  config=cfg.integrator(cfg.search_t_cap))
            if math.isnan(value):
                return math.nan, FLAG_UNREACHABLE
            return value, FLAG_OK
    except StormerlabError:
        return math.nan, FLAG_FAILED
    raise ConfigError(f"unknown quantity {quantity!r}")


# -- parallel row dispatch ---------------------------------------------------

_WORK = {}


def _init_worker(grid, quantity, cfg):
    _WORK["grid"] = grid
    _WORK["quantity"] = quantity
    _WORK["cfg"] = cfg


def _row_task(j):
    grid = _WORK["grid"]
    quantity = _WORK["quantity"]
    cfg = _WORK["cfg"]
    z0 = grid.z_center(j)
    values = [0.0] * grid.nx
    flags = [0] * grid.nx
    for i in range(grid.nx):
        v, f = evaluate_cell(quantity, z0, grid.rho_center(i), cfg, grid.restriction)
        values[i] = v
        flags[i] = f
    return j, values, flags


def _compute_rows(grid, quantity, cfg, rows, workers, on_row=None):
    """Evaluate the given rows; returns {row: (values, flags)}. Deterministic
    for any worker count (rows are independent, cells pure)."""
    out = {}
    if workers <= 1 or len(rows) <= 1:
        _init_worker(grid, quantity, cfg)
        for j in rows:
            j2, values, flags = _row_task(j)
            out[j2] = (values, flags)
            if on_row:
                on_row(j2, out)
        return out
    ctx = get_context("fork")
    with ctx.Pool(workers, initializer=_init_worker,
                  initargs=(grid, quantity, cfg)) as pool:
        for j2, values, flags in pool.imap_unordered(_row_task, rows, chunksize=1):
            out[j2] = (values, flags)
            if on_row:
                on_row(j2, out)
    return out


def _digest_for(grid, quantity, cfg):
    cfg2 = _dc_replace(cfg, rho_lo=grid.rho_lo, rho_hi=grid.rho_hi,
                       z_lo=grid.z_lo, z_hi=grid.z_hi,
                       nx=grid.nx, ny=grid.ny, restriction=grid.restriction)
    return config_digest(cfg2, quantity)


def scan(grid, quantity, cfg=RunConfig(), workers=None, checkpoint_path=None,
         checkpoint_every=0, resume=False, progress=None):
    """Paint one indicator over the grid.

    Returns a MapResult. With checkpoint_path set, partial results are
    written (binary, with a row-completion bitmap) every checkpoint_every
    completed rows; resume=True loads a matching checkpoint (same config
    digest) and recomputes only the missing rows, reproducing the
    uninterrupted result exactly.
    """
    grid.validated()
    if quantity not in QUANTITIES:
        raise ConfigError(f"quantity must be one of {QUANTITIES}")
    if workers is None:
        workers = cfg.workers
    digest = _digest_for(grid, quantity, cfg)
    version = _version()

    values = np.full((grid.ny, grid.nx), math.nan, dtype=np.float64)
    flags = np.full((grid.ny, grid.nx), FLAG_EXCLUDED, dtype=np.uint8)
    done = np.zeros(grid.ny, dtype=bool)

    if resume:
        if not (checkpoint_path and os.path.exists(checkpoint_path)):
            raise ConfigError("resume requested but no checkpoint file found")
        header, cvalues, cflags, cdone = formats.read_checkpoint(checkpoint_path)
        if header["digest"] != digest:
            raise ConfigError(
                f"checkpoint digest {header['digest']} does not match run digest {digest}")
        values[cdone] = cvalues[cdone]
        flags[cdone] = cflags[cdone]
        done = cdone

    result = MapResult(grid, quantity, values, flags, digest, version)
    todo = [j for j in range(grid.ny) if not done[j]]
    if not todo:
        return result

    if checkpoint_every <= 0:
        checkpoint_every = max(1, grid.ny // 20)
    state = {"since_write": 0, "completed": int(done.sum())}

    # fill rows as they arrive; checkpoint periodically
    def on_row(j, out):
        vals, fl = out.pop(j)
        values[j, :] = vals
        flags[j, :] = fl
        done[j] = True
        state["completed"] += 1
        state["since_write"] += 1
        if progress:
            progress(state["completed"], grid.ny)
        if checkpoint_path and state["since_write"] >= checkpoint_every:
            formats.write_checkpoint(checkpoint_path, result.header("binary"),
                                     values, flags, done)
            state["since_write"] = 0

    _compute_rows(grid, quantity, cfg, todo, workers, on_row=on_row)
    if checkpoint_path:
        formats.write_checkpoint(checkpoint_path, result.header("binary"),
                                 values, flags, done)
    return result


@dataclass(frozen=True)
class ResidualEdge:
    """Grid edge whose endpoint residuals bracket a zero."""

    n: int
    cell: tuple        # (i, j) of the lower-index endpoint
    horizontal: bool   # True: endpoints (i, j) and (i+1, j); False: (i, j), (i, j+1)
    a: tuple           # (z0, rho0) of endpoint 1
    b: tuple           # (z0, rho0) of endpoint 2
    res_a: float
    res_b: float


def scan_residual(grid, n, cfg=RunConfig(), workers=None, checkpoint_path=None,
                  resume=False, progress=None):
    """Residual map for class-n searches plus its sign-change edges.

    The grid must sit strictly off the equatorial plane (z_lo > 0): the
    z0 = 0 row is degenerate. Edges touching unreachable cells are excluded.
    """
    if not grid.z_lo > 0.0:
        raise ConfigError("residual scans need z_lo > 0 (z=0 is degenerate)")
    if n not in (1, 2, 3):
        raise ConfigError("residual order n must be 1, 2 or 3")
    result = scan(grid, f"residual_{n}", cfg, workers=workers,
                  checkpoint_path=checkpoint_path, resume=resume, progress=progress)
    edges = []
    values = result.values
    flags = result.flags
    for j in range(grid.ny):
        z0 = grid.z_center(j)
        for i in range(grid.nx):
            if flags[j, i] != FLAG_OK:
                continue
            va = values[j, i]
            if i + 1 < grid.nx and flags[j, i + 1] == FLAG_OK:
                vb = values[j, i + 1]
                if (va < 0.0 < vb) or (vb < 0.0 < va):
                    edges.append(ResidualEdge(
                        n, (i, j), True,
                        (z0, grid.rho_center(i)), (z0, grid.rho_center(i + 1)),
                        va, vb))
            if j + 1 < grid.ny and flags[j + 1, i] == FLAG_OK:
                vb = values[j + 1, i]
                if (va < 0.0 < vb) or (vb < 0.0 < va):
                    edges.append(ResidualEdge(
                        n, (i, j), False,
                        (z0, grid.rho_center(i)), (grid.z_center(j + 1), grid.rho_center(i)),
                        va, vb))
    return result, edges
