"""Run configuration: TOML file plus command-line overrides.

Precedence is flags > file > defaults. Unknown keys, malformed values and
geometry that does not fit the domain raise :class:`ConfigError`, which the
command line maps to exit code 2.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .capacity import ZERO_THRESHOLD
from .mesh import parse_coefficient
from .region import RegionSpec
from .scenarios import LEVELS, SPECIAL, TIMES, Scenario, load_catalog
from .semigroup import TOL_POS

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

COMMANDS = ("capacity", "evolve", "verify", "sweep", "catalog")


class ConfigError(ValueError):
    exit_code = 2


@dataclass(frozen=True)
class RunConfig:
    command: str
    scenario: str | None = None
    domain: tuple[float, float] = (-1.0, 1.0)
    coeff: str = "constant:1"
    omega: str = "X"
    target: str = "boundary"
    levels: tuple[int, ...] = LEVELS
    times: tuple[float, ...] = TIMES
    breakpoints: tuple[float, ...] | None = None
    grading: str = "uniform"
    ratio: float = 1.1
    schedule: tuple[float, ...] | None = None
    lumped: bool = True
    norm: str = "l2"
    kind: str = "dirichlet"
    phi: str = "one"
    tol_capacity: float = ZERO_THRESHOLD
    tol_pos: float = TOL_POS
    out: str = "out"
    format: str = "both"
    explicit: frozenset = field(default_factory=frozenset, compare=False)

    @property
    def region(self) -> RegionSpec:
        return RegionSpec.from_strings(self.omega, self.target, self.schedule)

    def to_scenario(self) -> Scenario:
        """The scenario this run works on: a catalog entry with overrides, or the inline spec."""
        over = {k: getattr(self, k) for k in self.explicit if k in _SCENARIO_KEYS}
        if "coeff" in over:
            over["coeff"] = parse_coefficient(over["coeff"])
        if "tol_capacity" in self.explicit:
            over["zero_threshold"] = self.tol_capacity
        if self.scenario:
            base = load_catalog()[self.scenario]
            return dataclasses.replace(base, **over)
        return Scenario(
            id="inline",
            coeff=parse_coefficient(self.coeff),
            omega=self.omega,
            target=self.target,
            domain=self.domain,
            levels=self.levels,
            times=self.times,
            breakpoints=self.breakpoints if self.breakpoints is not None else _auto_breaks(self),
            grading=self.grading,
            ratio=self.ratio,
            lumped=self.lumped,
            norm=self.norm,
            zero_threshold=self.tol_capacity,
        )


_SCENARIO_KEYS = {"coeff", "omega", "target", "domain", "levels", "times", "breakpoints", "grading", "ratio", "lumped", "norm"}
_FIELDS = {f.name for f in dataclasses.fields(RunConfig)} - {"explicit"}


def _auto_breaks(cfg: RunConfig) -> tuple[float, ...]:
    """Boundary points of omega and target anchors inside the domain become mesh nodes."""
    lo, hi = cfg.domain
    region = cfg.region
    pts = set(float(p) for p in region.boundary_points(cfg.domain))
    pts |= set(region.resolved_target(cfg.domain).anchors())
    return tuple(sorted(p for p in pts if lo < p < hi))


def _floats(v: Any, name: str) -> tuple[float, ...]:
    if isinstance(v, str):
        v = [s for s in v.replace(";", ",").split(",") if s.strip()]
    try:
        return tuple(float(x) for x in v)
    except (TypeError, ValueError):
        raise ConfigError(f"field '{name}': expected a list of numbers, got {v!r}") from None


def _coerce(name: str, v: Any) -> Any:
    if name in ("levels",):
        vals = _floats(v, name)
        if any(x != int(x) for x in vals):
            raise ConfigError(f"field 'levels': element counts must be integers, got {v!r}")
        return tuple(int(x) for x in vals)
    if name in ("times", "breakpoints", "schedule"):
        return _floats(v, name)
    if name == "domain":
        d = _floats(v, name)
        if len(d) != 2:
            raise ConfigError(f"field 'domain': expected [lo, hi], got {v!r}")
        return d
    if name in ("ratio", "tol_capacity", "tol_pos"):
        try:
            return float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"field '{name}': expected a number, got {v!r}") from None
    if name == "lumped":
        if not isinstance(v, bool):
            raise ConfigError(f"field 'lumped': expected true/false, got {v!r}")
        return v
    if v is not None and not isinstance(v, str):
        raise ConfigError(f"field '{name}': expected a string, got {v!r}")
    return v


def read_config_file(path: str | Path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: malformed TOML: {exc}") from None
    flat = dict(data.pop("run", {}))
    for k, v in data.items():
        if isinstance(v, dict):
            raise ConfigError(f"{p}: unknown section [{k}]")
        flat[k] = v
    return {k.replace("-", "_"): v for k, v in flat.items()}


def parse_config(command: str, path: str | Path | None = None, flags: Mapping[str, Any] | None = None) -> RunConfig:
    """Merge defaults, an optional TOML file and flag overrides, then validate."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    values: dict[str, Any] = {}
    explicit = set()
    sources = [("file", read_config_file(path) if path else {}), ("flag", dict(flags or {}))]
    for src, data in sources:
        for k, v in data.items():
            if v is None:
                continue
            if k not in _FIELDS or k == "command":
                raise ConfigError(f"unknown {src} key '{k}'")
            values[k] = _coerce(k, v)
            explicit.add(k)
    cfg = RunConfig(command=command, explicit=frozenset(explicit), **values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.tol_capacity <= 0 or cfg.tol_pos <= 0:
        raise ConfigError("field 'tol_capacity'/'tol_pos': tolerances must be positive")
    if not cfg.levels or any(n < 2 for n in cfg.levels):
        raise ConfigError("field 'levels': every level needs at least 2 elements")
    if any(b <= a for a, b in zip(cfg.levels, cfg.levels[1:])):
        raise ConfigError("field 'levels': mesh levels must strictly increase")
    if not cfg.times or any(t <= 0 for t in cfg.times):
        raise ConfigError("field 'times': times must be positive")
    if cfg.format not in ("csv", "json", "both"):
        raise ConfigError(f"field 'format': expected csv, json or both, got {cfg.format!r}")
    if cfg.norm not in ("l1", "l2", "inf"):
        raise ConfigError(f"field 'norm': expected l1, l2 or inf, got {cfg.norm!r}")
    if cfg.kind not in ("full", "dirichlet", "neumann"):
        raise ConfigError(f"field 'kind': expected full, dirichlet or neumann, got {cfg.kind!r}")
    if cfg.grading not in ("uniform", "geometric"):
        raise ConfigError(f"field 'grading': expected uniform or geometric, got {cfg.grading!r}")
    lo, hi = cfg.domain
    if not hi > lo:
        raise ConfigError(f"field 'domain': degenerate interval [{lo:g}, {hi:g}]")
    if cfg.scenario is not None:
        if cfg.scenario in SPECIAL or cfg.scenario == "all":
            return
        if cfg.scenario not in load_catalog():
            raise ConfigError(f"field 'scenario': unknown scenario {cfg.scenario!r}")
    try:
        parse_coefficient(cfg.coeff)
        sc = cfg.to_scenario()
        sc.region.validate(sc.domain)
        if cfg.schedule is not None:
            cfg.region
    except ValueError as exc:
        raise ConfigError(f"invalid geometry or coefficient: {exc}") from None
