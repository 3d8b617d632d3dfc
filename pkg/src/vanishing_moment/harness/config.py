"""Run configuration: a flat ``key = value`` file with documented keys only."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from ..linalg import KrylovOptions
from ..solver import EpsilonSchedule, NewtonOptions
from .io import FormatError, parse_key_values
from .registry import get_case


class ConfigError(ValueError):
    pass


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str) -> float | None:
    return None if s.lower() in ("", "none", "default") else float(s)


@dataclass(frozen=True)
class RunConfig:
    problem: str
    n: int | None = None  # nodes per axis; None -> the case default
    eps_schedule: tuple[float, ...] | None = None
    aux_value: float | None = None  # None -> eps**2 at each stage
    parameter: float | None = None  # e.g. the Gauss curvature K
    sweep: tuple[float, ...] | None = None  # parameter values, swept with warm starts
    out: str = "out"
    abs_tol: float = 1e-8
    rel_tol: float = 1e-10
    max_iters: int = 50
    krylov_tol: float = 1e-10
    krylov_restart: int = 200
    krylov_max_iters: int = 5000
    emit_fields: bool = True
    emit_sections: bool = True
    emit_reports: bool = True

    def validate(self) -> "RunConfig":
        """Resolve defaults and check every value; raises :class:`ConfigError`."""
        try:
            case = get_case(self.problem)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        if self.n is not None and self.n < 1:
            raise ConfigError(f"n must be positive, got {self.n}")
        try:
            case.grid(self.n)
            EpsilonSchedule(self.schedule(case))
            self.newton_options()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if (self.parameter is not None or self.sweep) and case.parameter is None:
            raise ConfigError(f"case {case.name} has no parameter to set or sweep")
        return self

    def schedule(self, case=None) -> tuple[float, ...]:
        case = case or get_case(self.problem)
        return tuple(self.eps_schedule) if self.eps_schedule else case.schedule

    def newton_options(self) -> NewtonOptions:
        kry = KrylovOptions(tol=self.krylov_tol, restart=self.krylov_restart, max_iters=self.krylov_max_iters)
        return NewtonOptions(abs_tol=self.abs_tol, rel_tol=self.rel_tol, max_iters=self.max_iters, krylov=kry)

    def items(self) -> list[tuple[str, str]]:
        """Config echo in file order, with lists comma-separated."""
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ",".join(repr(float(x)) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            out.append((f.name, str(v)))
        return out


_PARSERS = {
    "problem": str,
    "n": int,
    "eps_schedule": _floats,
    "aux_value": _opt_float,
    "parameter": _opt_float,
    "sweep": _floats,
    "out": str,
    "abs_tol": float,
    "rel_tol": float,
    "max_iters": int,
    "krylov_tol": float,
    "krylov_restart": int,
    "krylov_max_iters": int,
    "emit_fields": _bool,
    "emit_sections": _bool,
    "emit_reports": _bool,
}
KNOWN_KEYS = tuple(_PARSERS)


def parse_config(text: str, path="<string>") -> RunConfig:
    values: dict = {}
    for lineno, key, raw in parse_key_values(text, path):
        if key not in _PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}; known keys: {', '.join(KNOWN_KEYS)}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](raw)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    if "problem" not in values:
        raise ConfigError(f"{path}: missing required key 'problem'")
    return RunConfig(**values).validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        return parse_config(text, path)
    except FormatError as exc:
        raise ConfigError(str(exc)) from None


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None}).validate()
