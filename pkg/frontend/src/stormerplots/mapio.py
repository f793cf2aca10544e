"""Readers for the stormerlab file formats (STRMAP/STRORB/STRTRJ).

Independent of the producing package: these parse the documented formats
only. Map values use NaN for excluded cells, +inf for trapped, -inf for
singularity-guard hits.
"""

import numpy as np

_FLOAT_KEYS = {"rho_lo", "rho_hi", "z_lo", "z_hi"}
_INT_KEYS = {"nx", "ny"}


class FormatError(ValueError):
    pass


def _parse_header(fh, tag):
    first = fh.readline().decode()
    if first.strip() != f"# {tag}":
        raise FormatError(f"not a {tag} file: {first.strip()!r}")
    header = {}
    while True:
        line = fh.readline().decode()
        if not line:
            raise FormatError("truncated header")
        line = line.strip()
        if line == "# data":
            return header
        if not line.startswith("# ") or " = " not in line:
            raise FormatError(f"malformed header line {line!r}")
        key, _, value = line[2:].partition(" = ")
        if key in _FLOAT_KEYS:
            header[key] = float(value)
        elif key in _INT_KEYS:
            header[key] = int(value)
        else:
            header[key] = value


def read_map(path):
    """Returns (header dict, values array of shape (ny, nx))."""
    with open(path, "rb") as fh:
        header = _parse_header(fh, "STRMAP/1")
        nx, ny = header["nx"], header["ny"]
        if header.get("encoding") == "binary":
            raw = fh.read(nx * ny * 8)
            if len(raw) != nx * ny * 8:
                raise FormatError("binary payload truncated")
            values = np.frombuffer(raw, dtype="<f8").reshape(ny, nx).copy()
        else:
            rows = []
            for j in range(ny):
                parts = fh.readline().decode().split()
                if len(parts) != nx:
                    raise FormatError(f"row {j}: expected {nx} values")
                rows.append([float(p) for p in parts])
            values = np.array(rows, dtype=np.float64)
    return header, values


def _fields(rest):
    out = {}
    for part in rest.split(" "):
        key, _, value = part.partition("=")
        out[key] = value
    return out


def read_orbits(path):
    """Returns (header, orbit dicts, families) where each family carries
    {'id', 'class', 'loop', 'points': [(z, rho), ...]}."""
    header = {}
    orbits = []
    families = []
    with open(path) as fh:
        if fh.readline().strip() != "# STRORB/1":
            raise FormatError("not a STRORB/1 file")
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
            if kind == "orbit":
                orbits.append(_fields(rest))
            elif kind == "family":
                f = _fields(rest)
                pts = []
                for pair in f.get("points", "").split(" "):
                    if ":" in pair:
                        z, _, rho = pair.partition(":")
                        pts.append((float(z), float(rho)))
                families.append({"id": int(f["id"]), "class": int(f["class"]),
                                 "loop": f.get("loop") == "1", "points": pts})
    return header, orbits, families


def read_trajectory(path):
    """Returns (header, array with columns t z rho p_z p_rho H lambda thalweg_gap)."""
    header = {}
    rows = []
    with open(path) as fh:
        if fh.readline().strip() != "# STRTRJ/1":
            raise FormatError("not a STRTRJ/1 file")
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
