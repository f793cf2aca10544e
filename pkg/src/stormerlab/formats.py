"""Bit-exact file formats.

Map files (STRMAP/1): '#'-prefixed ASCII header, then either ASCII rows
(17-significant-digit floats, exact round trip) or raw little-endian
float64 row-major payload, rho as the fast axis. The sentinel for
excluded/unreachable cells is NaN ('nan' in ASCII); trapped cells carry
+inf and singularity-guard hits -inf.

Checkpoints are binary map files with a row-completion bitmap header plus
a uint8 flags payload. Orbit files (STRORB/1) and trajectory files
(STRTRJ/1) are line-oriented named-field text.
"""

import math

import numpy as np

from .errors import ConfigError

MAP_TAG = "STRMAP/1"
ORBIT_TAG = "STRORB/1"
TRAJ_TAG = "STRTRJ/1"
EDGE_TAG = "STREDGE/1"

_HEADER_ORDER = ("quantity", "rho_lo", "rho_hi", "z_lo", "z_hi", "nx", "ny",
                 "restriction", "sentinel", "special", "digest", "version",
                 "encoding", "checkpoint_rows")

_FLOAT_KEYS = {"rho_lo", "rho_hi", "z_lo", "z_hi"}
_INT_KEYS = {"nx", "ny"}


def fmt(x):
    """17-significant-digit float formatting; round-trips float64 exactly."""
    return format(float(x), ".17g")


def _header_lines(tag, header):
    lines = [f"# {tag}\n"]
    for key in _HEADER_ORDER:
        if key in header:
            value = header[key]
            if key in _FLOAT_KEYS:
                value = fmt(value)
            lines.append(f"# {key} = {value}\n")
    lines.append("# data\n")
    return lines


def _parse_header(fh, tag):
    first = fh.readline().decode()
    if first.strip() != f"# {tag}":
        raise ConfigError(f"not a {tag} file (leading line {first.strip()!r})")
    header = {}
    while True:
        pos = fh.tell()
        line = fh.readline().decode()
        if not line:
            raise ConfigError("truncated header: no '# data' terminator")
        line = line.strip()
        if line == "# data":
            break
        if not line.startswith("# ") or " = " not in line:
            raise ConfigError(f"malformed header line {line!r}")
        key, _, value = line[2:].partition(" = ")
        if key in _FLOAT_KEYS:
            header[key] = float(value)
        elif key in _INT_KEYS:
            header[key] = int(value)
        else:
            header[key] = value
    return header


def write_map(path, header, values, flags=None, done_rows=None):
    """Write a STRMAP file; binary payloads follow the '# data' line."""
    ny, nx = values.shape
    header = dict(header)
    header["nx"] = nx
    header["ny"] = ny
    encoding = header.get("encoding", "ascii")
    if done_rows is not None:
        header["checkpoint_rows"] = done_rows_to_hex(done_rows)
        if encoding != "binary":
            raise ConfigError("checkpoints must use binary encoding")
    with open(path, "wb") as fh:
        for line in _header_lines(MAP_TAG, header):
            fh.write(line.encode())
        if encoding == "ascii":
            for j in range(ny):
                fh.write(" ".join(fmt(v) for v in values[j]).encode())
                fh.write(b"\n")
        elif encoding == "binary":
            fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())
            if done_rows is not None:
                if flags is None:
                    raise ConfigError("checkpoints need the flags payload")
                fh.write(np.ascontiguousarray(flags, dtype=np.uint8).tobytes())
        else:
            raise ConfigError(f"unknown encoding {encoding!r}")


def read_map(path):
    """Read a STRMAP file back: (header, values); checkpoint payloads are
    ignored here (use read_checkpoint)."""
    with open(path, "rb") as fh:
        header = _parse_header(fh, MAP_TAG)
        nx = header["nx"]
        ny = header["ny"]
        if header.get("encoding") == "binary":
            raw = fh.read(nx * ny * 8)
            if len(raw) != nx * ny * 8:
                raise ConfigError("binary payload truncated")
            values = np.frombuffer(raw, dtype="<f8").reshape(ny, nx).copy()
        else:
            rows = []
            for j in range(ny):
                line = fh.readline().decode()
                parts = line.split()
                if len(parts) != nx:
                    raise ConfigError(f"row {j}: expected {nx} values, got {len(parts)}")
                rows.append([float(p) for p in parts])
            values = np.array(rows, dtype=np.float64)
    return header, values


def write_checkpoint(path, header, values, flags, done_rows):
    header = dict(header)
    header["encoding"] = "binary"
    tmp = path + ".tmp"
    write_map(tmp, header, values, flags=flags, done_rows=done_rows)
    import os
    os.replace(tmp, path)


def read_checkpoint(path):
    with open(path, "rb") as fh:
        header = _parse_header(fh, MAP_TAG)
        if "checkpoint_rows" not in header:
            raise ConfigError("not a checkpoint file (no completion bitmap)")
        nx = header["nx"]
        ny = header["ny"]
        raw = fh.read(nx * ny * 8)
        if len(raw) != nx * ny * 8:
            raise ConfigError("checkpoint values payload truncated")
        values = np.frombuffer(raw, dtype="<f8").reshape(ny, nx).copy()
        fraw = fh.read(nx * ny)
        if len(fraw) != nx * ny:
            raise ConfigError("checkpoint flags payload truncated")
        flags = np.frombuffer(fraw, dtype=np.uint8).reshape(ny, nx).copy()
    done = hex_to_done_rows(header["checkpoint_rows"], ny)
    return header, values, flags, done


def done_rows_to_hex(done):
    bits = 0
    for j, d in enumerate(done):
        if d:
            bits |= 1 << j
    width = (len(done) + 3) // 4
    return format(bits, f"0{width}x")


def hex_to_done_rows(hexstr, ny):
    bits = int(hexstr, 16)
    return np.array([(bits >> j) & 1 == 1 for j in range(ny)], dtype=bool)


# -- orbit files --------------------------------------------------------------

def write_orbits(path, orbits, families, header):
    """One 'orbit' record per line plus one 'family' record per polyline."""
    with open(path, "w") as fh:
        fh.write(f"# {ORBIT_TAG}\n")
        for key, value in header.items():
            fh.write(f"# {key} = {value}\n")
        fh.write("# data\n")
        for po in orbits:
            res = po.residuals
            fh.write(
                f"orbit class={po.class_n} z0={fmt(po.z0)} rho0={fmt(po.rho0)}"
                f" H={fmt(po.H)} t_perp={fmt(po.t_perp)} period={fmt(po.period)}"
                f" res_perp_z={res.perp_z:.6e} res_perp_prho={res.perp_p_rho:.6e}"
                f" res_half={res.half_norm:.6e} res_full={res.full_norm:.6e}"
                f" n_eq_half={po.n_eq_half} n_thalweg_half={po.n_thalweg_half}"
                f" family={po.family_id}\n")
        for fam in families:
            pts = " ".join(f"{fmt(p.z0)}:{fmt(p.rho0)}" for p in fam.points)
            fh.write(f"family id={fam.id} class={fam.class_n} loop={int(fam.is_loop)}"
                     f" npoints={len(fam.points)} points={pts}\n")


def read_orbits(path):
    """Returns (header, orbit field-dicts, family field-dicts)."""
    orbits = []
    families = []
    header = {}
    with open(path) as fh:
        first = fh.readline()
        if first.strip() != f"# {ORBIT_TAG}":
            raise ConfigError(f"not a {ORBIT_TAG} file")
        in_header = True
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if in_header:
                if line == "# data":
                    in_header = False
                    continue
                key, _, value = line[2:].partition(" = ")
                header[key] = value
                continue
            kind, _, rest = line.partition(" ")
            fields = {}
            for part in rest.split(" "):
                key, _, value = part.partition("=")
                fields[key] = value
            if kind == "orbit":
                orbits.append(fields)
            elif kind == "family":
                families.append(fields)
    return header, orbits, families


# -- trajectory files ----------------------------------------------------------

TRAJ_COLUMNS = ("t", "z", "rho", "p_z", "p_rho", "H", "lambda", "thalweg_gap")


def write_trajectory(path, rows, header):
    with open(path, "w") as fh:
        fh.write(f"# {TRAJ_TAG}\n")
        for key, value in header.items():
            fh.write(f"# {key} = {value}\n")
        fh.write("# columns = " + " ".join(TRAJ_COLUMNS) + "\n")
        fh.write("# data\n")
        for row in rows:
            fh.write(" ".join(fmt(v) for v in row) + "\n")


def read_trajectory(path):
    header = {}
    rows = []
    with open(path) as fh:
        first = fh.readline()
        if first.strip() != f"# {TRAJ_TAG}":
            raise ConfigError(f"not a {TRAJ_TAG} file")
        in_header = True
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if in_header:
                if line == "# data":
                    in_header = False
                    continue
                key, _, value = line[2:].partition(" = ")
                header[key] = value
                continue
            rows.append([float(p) for p in line.split()])
    return header, np.array(rows, dtype=np.float64)


# -- residual edge files --------------------------------------------------------

def write_edges(path, edges, header):
    with open(path, "w") as fh:
        fh.write(f"# {EDGE_TAG}\n")
        for key, value in header.items():
            fh.write(f"# {key} = {value}\n")
        fh.write("# data\n")
        for e in edges:
            fh.write(f"edge n={e.n} i={e.cell[0]} j={e.cell[1]}"
                     f" horizontal={int(e.horizontal)}"
                     f" za={fmt(e.a[0])} rhoa={fmt(e.a[1])}"
                     f" zb={fmt(e.b[0])} rhob={fmt(e.b[1])}"
                     f" res_a={fmt(e.res_a)} res_b={fmt(e.res_b)}\n")


def read_edges(path):
    header = {}
    edges = []
    with open(path) as fh:
        first = fh.readline()
        if first.strip() != f"# {EDGE_TAG}":
            raise ConfigError(f"not a {EDGE_TAG} file")
        in_header = True
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if in_header:
                if line == "# data":
                    in_header = False
                    continue
                key, _, value = line[2:].partition(" = ")
                header[key] = value
                continue
            kind, _, rest = line.partition(" ")
            fields = {}
            for part in rest.split(" "):
                key, _, value = part.partition("=")
                fields[key] = value
            edges.append(fields)
    return header, edges
