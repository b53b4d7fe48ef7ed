"""``key=value`` run configuration files."""
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

from .afem import ESTIMATORS, NORMS, VARIANTS, AfemConfig
from .problems import PROBLEMS

__all__ = ["RunConfig", "ConfigError", "parse_config", "serialize_config", "load_config"]


class ConfigError(ValueError):
    """Invalid configuration text; ``line`` is the 1-based offending line (0 if global)."""

    def __init__(self, message, line=0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    problem: str
    estimator: str = "jacobi"
    variant: str = "red"
    q: Optional[int] = None
    degree: int = 1
    theta: float = 0.5
    max_dofs: int = 10_000
    norm: str = "h1_semi"
    output: str = "out"
    seed: int = 0
    n: Optional[int] = None
    solver: str = "direct"
    timing: bool = False  # write wall times into the CSV (breaks byte-reproducibility)

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        self.afem_config()  # validates the numerical fields

    def afem_config(self, **overrides):
        try:
            return AfemConfig(theta=self.theta, estimator=self.estimator, norm=self.norm,
                              degree=self.degree, max_dofs=self.max_dofs, variant=self.variant,
                              fine_degree=self.q, solver=self.solver, **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def make_problem(self):
        from .problems import get_problem
        return get_problem(self.problem) if self.n is None else get_problem(self.problem, n=self.n)

    def with_(self, **kw):
        return replace(self, **kw)


def _enum(choices):
    def conv(s):
        if s not in choices:
            raise ValueError(f"must be one of {', '.join(choices)}")
        return s
    return conv


def _int(s):
    return int(s)


def _bool(s):
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _opt_int(s):
    return None if s.lower() in ("", "none") else int(s)


_KEYS = {
    "problem": str,
    "estimator": _enum(ESTIMATORS),
    "variant": _enum(VARIANTS),
    "q": _opt_int,
    "degree": _int,
    "theta": float,
    "max_dofs": _int,
    "norm": _enum(NORMS),
    "output": str,
    "seed": _int,
    "n": _opt_int,
    "solver": _enum(("direct", "cg")),
    "timing": _bool,
}
_ALIASES = {"p": "degree", "fine_degree": "q", "output_dir": "output"}

# first word of a validation message -> config key to blame
_BLAME = {"theta": "theta", "degree": "degree", "max_dofs": "max_dofs", "fine_degree": "q",
          "unknown": "problem"}


def parse_config(text):
    """Parse ``key=value`` lines (``#`` starts a comment) into a :class:`RunConfig`.

    Errors name the offending line.  ``p`` and ``fine_degree`` are accepted as
    aliases of ``degree`` and ``q``.
    """
    values, where = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {raw.strip()!r}", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {where[key]})", lineno)
        try:
            values[key] = _KEYS[key](val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {val!r} ({exc})", lineno) from None
        where[key] = lineno
    if "problem" not in values:
        raise ConfigError("missing required key 'problem'")
    try:
        return RunConfig(**values)
    except ConfigError as exc:
        msg = str(exc)
        key = _BLAME.get(msg.split()[0])
        raise ConfigError(msg, where.get(key, 0)) from None


def serialize_config(cfg):
    """Canonical text: every field, in declaration order."""
    out = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = str(v).lower()
        out.append(f"{f.name}={'none' if v is None else v}")
    return "\n".join(out) + "\n"


def load_config(path):
    return parse_config(Path(path).read_text())


def ensure_output_dir(cfg):
    path = Path(cfg.output)
    path.mkdir(parents=True, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {path} is not writable")
    return path
