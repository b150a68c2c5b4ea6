"""Run configuration for the planar Kelvin-Helmholtz benchmark."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

__all__ = ["ConfigError", "KhConfig", "gamma_for_level", "load_config", "parse_config"]

PROFILES = {
    # variant: (initial guess, relative tolerance, residual reference)
    "full": ("zero", 1e-8, "initial"),
    "modified": ("previous-step", 1e-6, "rhs"),
}


class ConfigError(ValueError):
    pass


def gamma_for_level(level, gamma3=0.04):
    """Grad-div weight scaled by ``1/sqrt(2)`` per refinement from level 3."""
    return 2.0 ** ((3 - level) / 2.0) * gamma3


@dataclass
class KhConfig:
    Nx: int = 64
    Ny: int = 64
    nu: float = 0.5e-4
    dt: float | None = None          # defaults to 1/Nx
    T: float = 20.0
    gamma: float | None = 1.0        # None: use gamma_for_level(gamma_level, gamma3)
    gamma_level: int | None = None
    gamma3: float = 0.04
    kappa: float = 5.0
    refactor_and_resolve: bool = True
    precond_variant: str = "full"
    initial_guess: str | None = None  # profile default
    rel_tol: float | None = None      # profile default
    max_iter: int = 200
    inner_tol: float = 1e-2
    inner_max_iter: int = 50
    ordering: str = "nd"              # velocity LU ordering: nd (lattice) or amd
    delta0: float = 0.05
    cn: float = 1e-2
    aa: float = 1.0
    ma: float = 16.0
    ab: float = 0.1
    mb: float = 20.0
    output_dir: str = "kh_out"
    n_snapshots: int = 8
    _extra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.precond_variant not in PROFILES:
            raise ConfigError(f"precond_variant must be one of {sorted(PROFILES)}")
        guess, tol, _ = PROFILES[self.precond_variant]
        if self.initial_guess is None:
            self.initial_guess = guess
        if self.initial_guess != guess:
            raise ConfigError(f"the {self.precond_variant} profile uses the {guess!r} initial "
                              f"guess, got {self.initial_guess!r}")
        if self.rel_tol is None:
            self.rel_tol = tol
        if self.dt is None:
            self.dt = 1.0 / self.Nx
        if self.gamma is None:
            if self.gamma_level is None:
                raise ConfigError("set gamma or gamma_level")
            self.gamma = gamma_for_level(self.gamma_level, self.gamma3)
        self.validate()

    def validate(self):
        for name in ("Nx", "Ny", "nu", "dt", "T", "rel_tol", "max_iter", "inner_tol",
                     "inner_max_iter", "delta0", "gamma3"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v!r}")
        for name in ("gamma", "cn", "aa", "ab", "ma", "mb"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be nonnegative, got {v!r}")
        if not self.kappa >= 1:
            raise ConfigError(f"kappa must be >= 1, got {self.kappa}")
        if self.Nx < 4 or self.Ny < 4 or self.Nx % 2:
            raise ConfigError("need Nx, Ny >= 4 and Nx even")
        if self.n_snapshots < 0:
            raise ConfigError("n_snapshots must be nonnegative")
        if self.rel_tol >= 1:
            raise ConfigError("rel_tol must be below 1")
        if self.ordering not in ("nd", "amd"):
            raise ConfigError(f"ordering must be 'nd' or 'amd', got {self.ordering!r}")

    @property
    def n_steps(self) -> int:
        n = round(self.T / self.dt)
        if n < 1 or abs(n * self.dt - self.T) > 1e-9 * max(1.0, self.T):
            raise ConfigError(f"T={self.T} is not a positive multiple of dt={self.dt}")
        return n

    @property
    def reference(self) -> str:
        return PROFILES[self.precond_variant][2]

    def snapshot_steps(self):
        if self.n_snapshots == 0:
            return set()
        if self.n_snapshots == 1:
            return {self.n_steps}
        k = self.n_steps
        return {round(i * k / (self.n_snapshots - 1)) for i in range(self.n_snapshots)}

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            if f.name.startswith("_"):
                continue
            v = getattr(self, f.name)
            if v is not None:
                lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _convert(name, raw, ftype):
    s = raw.strip()
    if s.lower() in ("none", ""):
        return None
    t = str(ftype)
    try:
        if "bool" in t:
            if s.lower() in ("1", "true", "yes", "on"):
                return True
            if s.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        if t.startswith("int"):
            v = float(s)
            if v != int(v):
                raise ValueError(s)
            return int(v)
        if t.startswith("float"):
            return float(s)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw.strip()!r}") from None
    return s


def parse_config(text) -> KhConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    types = {f.name: f.type for f in dataclasses.fields(KhConfig) if not f.name.startswith("_")}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw, types[key])
    try:
        return KhConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> KhConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
