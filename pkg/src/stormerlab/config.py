"""Run configuration: one flat record covering integrator tolerances, caps,
indicator parameters and the scan grid, parseable from key=value files with
CLI-flag overrides, plus the parameter digest embedded in every output.
"""

from dataclasses import dataclass, fields, replace

import hashlib

from .errors import ConfigError
from .integrator import IntegratorConfig

RESTRICTIONS = ("all", "H_below_1_32", "H_at_least_1_32", "inside_field_line")


@dataclass(frozen=True)
class RunConfig:
    # integrator
    abs_tol: float = 3e-12
    rel_tol: float = 3e-12
    h_init: float = 1e-4
    h_max: float = 1.0
    r_min: float = 1e-3
    graze_tol: float = 1e-9
    max_steps: int = 50_000_000
    # indicator parameters
    mlce_total_time: float = 1e4
    mlce_renorm_interval: float = 1.0
    escape_cap: float = 1e4
    crossing_cap: float = 1e4
    lambda_total_time: float = 1e4
    search_t_cap: float = 1000.0
    refine_tol: float = 1e-8
    verify_tol: float = 1e-5
    # scan grid (defaults cover the standard map domain)
    rho_lo: float = 0.02
    rho_hi: float = 2.1
    z_lo: float = 0.005
    z_hi: float = 1.25
    nx: int = 400
    ny: int = 300
    restriction: str = "inside_field_line"
    # execution (never part of the digest: must not change any value)
    workers: int = 1
    seed: int = 0

    def validated(self):
        if self.restriction not in RESTRICTIONS:
            raise ConfigError(f"restriction must be one of {RESTRICTIONS}")
        if not self.rho_lo > 0.0:
            raise ConfigError("rho_lo must be positive")
        if not (self.rho_lo < self.rho_hi and self.z_lo < self.z_hi):
            raise ConfigError("grid bounds must be ordered")
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("nx and ny must be at least 2")
        self.integrator(1.0).validated()
        return self

    def integrator(self, t_cap):
        return IntegratorConfig(abs_tol=self.abs_tol, rel_tol=self.rel_tol,
                                h_init=self.h_init, h_max=self.h_max,
                                t_cap=t_cap, r_min=self.r_min,
                                graze_tol=self.graze_tol, max_steps=self.max_steps)


# fields that affect computed values, in a frozen order; workers/seed excluded
_DIGEST_FIELDS = (
    "abs_tol", "rel_tol", "h_init", "h_max", "r_min", "graze_tol", "max_steps",
    "mlce_total_time", "mlce_renorm_interval", "escape_cap", "crossing_cap",
    "lambda_total_time", "search_t_cap", "refine_tol", "verify_tol",
    "rho_lo", "rho_hi", "z_lo", "z_hi", "nx", "ny", "restriction",
)


def config_digest(cfg, quantity):
    """16-hex-char digest of every value-affecting parameter plus the quantity."""
    parts = [f"format=1", f"quantity={quantity}"]
    for name in _DIGEST_FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, float):
            parts.append(f"{name}={value!r}")
        else:
            parts.append(f"{name}={value}")
    blob = "\n".join(parts).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name, raw):
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {name!r}")
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    try:
        if kind is int or kind == "int":
            return int(raw)
        if kind is float or kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def load_config(path, overrides=None):
    """Read key=value lines (# comments allowed); overrides win over the file."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, raw = line.partition("=")
            key = key.strip()
            values[key] = _coerce(key, raw)
    if overrides:
        for key, val in overrides.items():
            values[key] = _coerce(key, str(val)) if isinstance(val, str) else val
    return RunConfig(**values).validated()


def apply_overrides(cfg, overrides):
    """Replace fields from a {name: value} mapping (already typed)."""
    clean = {k: v for k, v in overrides.items() if v is not None}
    for k in clean:
        if k not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {k!r}")
    return replace(cfg, **clean).validated() if clean else cfg.validated()
