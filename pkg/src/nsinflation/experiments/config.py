"""Flat ``key = value`` experiment configuration with an exact echo round-trip."""

from __future__ import annotations

import ast
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["EXPERIMENTS", "ConfigError", "ExperimentConfig", "parse_config", "load_config"]

EXPERIMENTS = ("frame-check", "data", "norms", "theta2", "picard", "sweep", "bounds")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    code = "invalid_config"

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one batch run.

    Attributes
    ----------
    experiment : str
        One of :data:`EXPERIMENTS`.
    N : tuple of int
        Frequency parameters swept.
    delta : tuple of float
        Scale-range parameters swept.
    d : int
        Spatial dimension (2 or 3).
    eps0 : float
        Time-scale constant, ``T_N = eps0 2^{-2N}``.
    mu, lam, kappa : float
        Viscosities and heat conductivity.
    K : int
        Highest expansion order.
    quad_nodes, quad_max_refine : int
    quad_rel_tol : float
        Gauss--Legendre panel quadrature controls.
    tail_tol : float
        Atom truncation level for data, norms and the main-term quantities.
    hierarchy_tail_tol : float
        Atom truncation level for the order-by-order expansion.
    memory_cap : int or None
        Dense-grid memory budget in bytes (``None``: environment / default).
    seed : int
        Seed of the sampled frequencies of the frame check.
    out : str
        Output directory.
    """

    experiment: str = "sweep"
    N: tuple = (3, 4, 5, 6, 7)
    delta: tuple = (0.25,)
    d: int = 2
    eps0: float = 0.1
    mu: float = 1.0
    lam: float = 0.0
    kappa: float = 1.0
    K: int = 5
    quad_nodes: int = 8
    quad_max_refine: int = 8
    quad_rel_tol: float = 1e-8
    tail_tol: float = 1e-6
    hierarchy_tail_tol: float = 1e-3
    memory_cap: int | None = None
    seed: int = 0
    out: str = "results"

    def validate(self, uncertified: bool = False) -> "ExperimentConfig":
        """Return ``self`` or raise :class:`ConfigError` naming the bad field."""
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}")
        if not self.N:
            raise ConfigError("N", "must be a nonempty list")
        if any(int(n) != n or n < 2 for n in self.N):
            raise ConfigError("N", "entries must be integers >= 2")
        if not self.delta:
            raise ConfigError("delta", "must be a nonempty list")
        for dl in self.delta:
            if not 0 < dl < 1:
                raise ConfigError("delta", "entries must lie in (0, 1)")
            if dl >= 0.5 and not uncertified:
                raise ConfigError("delta", "entries >= 0.5 lie outside the certified regime; "
                                           "pass --uncertified to run them")
        if self.d not in (2, 3):
            raise ConfigError("d", "must be 2 or 3")
        if self.eps0 <= 0:
            raise ConfigError("eps0", "must be positive")
        if self.mu <= 0:
            raise ConfigError("mu", "must be positive")
        if 2 * self.mu + self.lam <= 0:
            raise ConfigError("lam", "2 mu + lam must be positive")
        if self.kappa <= 0:
            raise ConfigError("kappa", "must be positive")
        if self.K < 1:
            raise ConfigError("K", "must be at least 1")
        if self.quad_nodes < 2:
            raise ConfigError("quad_nodes", "must be at least 2")
        if self.quad_max_refine < 0:
            raise ConfigError("quad_max_refine", "must be nonnegative")
        if not self.quad_rel_tol > 0:
            raise ConfigError("quad_rel_tol", "must be positive")
        for name in ("tail_tol", "hierarchy_tail_tol"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigError(name, "must lie in (0, 1)")
        if self.memory_cap is not None and self.memory_cap <= 0:
            raise ConfigError("memory_cap", "must be positive")
        return self

    def echo(self) -> str:
        """Config text that :func:`parse_config` maps back to an equal config."""
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = list(v)
            lines.append(f"{f.name} = {v!r}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {f.name: (list(getattr(self, f.name)) if isinstance(getattr(self, f.name), tuple)
                         else getattr(self, f.name)) for f in dataclasses.fields(self)}


_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_LISTS = {"N": int, "delta": float}


def _coerce(key: str, raw: str):
    text = raw.strip()
    try:
        value = ast.literal_eval(text)
    except (ValueError, SyntaxError):
        value = text  # bare words such as experiment names
    if key in _LISTS:
        if isinstance(value, str) and ".." in value:
            a, b = value.split("..")
            try:
                value = list(range(int(a), int(b) + 1))
            except ValueError as exc:
                raise ConfigError(key, f"bad range {text!r}") from exc
        if isinstance(value, (int, float)):
            value = [value]
        if not isinstance(value, (list, tuple)):
            raise ConfigError(key, "expected a list such as [3, 4, 5]")
        conv = _LISTS[key]
        out = []
        for v in value:
            if conv is int and (isinstance(v, bool) or not float(v).is_integer()):
                raise ConfigError(key, f"{v!r} is not an integer")
            out.append(conv(v))
        return tuple(out)
    kind = _TYPES[key]
    try:
        if key == "memory_cap":
            return None if value in (None, "None", "none") else int(value)
        if kind in ("int", int):
            if isinstance(value, bool) or not float(value).is_integer():
                raise ValueError
            return int(value)
        if kind in ("float", float):
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, f"cannot read {text!r}") from exc


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) into a config.

    Keyword ``overrides`` replace parsed values (e.g. ``experiment`` from the
    command line).  Unknown keys raise :class:`ConfigError`.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(key, "unknown key")
        values[key] = _coerce(key, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path: str | Path | None, **overrides) -> ExperimentConfig:
    """Read a config file (or defaults when ``path`` is ``None``)."""
    text = "" if path is None else Path(path).read_text()
    return parse_config(text, **overrides)
