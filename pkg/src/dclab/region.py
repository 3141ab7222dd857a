"""Open sets, target sets and neighborhood schedules on a 1-D domain.

Conventions. The mesh domain ``[x_lo, x_hi]`` is the whole space X, so its
end points are ordinary points of X, not boundary points. An open set is a
finite union of intervals written with bracket notation; a closed bracket is
only allowed at an end of the domain (``(0,1]`` is open in ``[-1,1]``,
``(0,1)`` is not the same set and has the boundary point 1 as well).
Boundaries are taken relative to X. The token ``X`` denotes the whole space.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf"
_INTERVAL_RE = re.compile(rf"^([\[(])\s*({_NUM})\s*,\s*({_NUM})\s*([\])])$")


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    closed_lo: bool = False
    closed_hi: bool = False

    def __post_init__(self) -> None:
        if not self.hi > self.lo:
            raise ValueError(f"empty interval {self}")

    def contains(self, x: np.ndarray, tol: float) -> np.ndarray:
        lo_ok = x >= self.lo - tol if self.closed_lo else x > self.lo + tol
        hi_ok = x <= self.hi + tol if self.closed_hi else x < self.hi - tol
        return lo_ok & hi_ok

    def __str__(self) -> str:
        return f"{'[' if self.closed_lo else '('}{self.lo:g},{self.hi:g}{']' if self.closed_hi else ')'}"


def parse_interval(text: str) -> Interval:
    m = _INTERVAL_RE.match(text.strip())
    if not m:
        raise ValueError(f"cannot parse interval {text!r}")
    return Interval(float(m.group(2)), float(m.group(3)), m.group(1) == "[", m.group(4) == "]")


def _split_union(text: str) -> list[str]:
    parts = re.split(r"\s*(?:∪|\bU\b|\bu\b|\|)\s*", text.strip())
    return [p for p in parts if p]


def parse_omega(text: str) -> tuple[Interval, ...] | None:
    """Parse an open set; ``None`` stands for the whole space."""
    t = text.strip()
    if t.upper() in ("X", "FULL", "ALL"):
        return None
    return tuple(parse_interval(p) for p in _split_union(t))


@dataclass(frozen=True)
class TargetSet:
    """Finite union of points and closed intervals."""

    points: tuple[float, ...] = ()
    intervals: tuple[tuple[float, float], ...] = ()

    @property
    def empty(self) -> bool:
        return not self.points and not self.intervals

    @property
    def measure(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    def anchors(self) -> list[float]:
        return [*self.points, *(x for iv in self.intervals for x in iv)]

    def distance(self, x: np.ndarray) -> np.ndarray:
        d = np.full(np.shape(x), np.inf)
        for p in self.points:
            d = np.minimum(d, np.abs(x - p))
        for a, b in self.intervals:
            d = np.minimum(d, np.maximum(np.maximum(a - x, x - b), 0.0))
        return d

    def __str__(self) -> str:
        bits = []
        if self.points:
            bits.append("{" + ",".join(f"{p:g}" for p in self.points) + "}")
        bits += [f"[{a:g},{b:g}]" for a, b in self.intervals]
        return " U ".join(bits) if bits else "{}"


BOUNDARY = "boundary"


def parse_target(text: str) -> TargetSet | str:
    """Parse ``{0}``, ``{0,0.5}``, ``[a,b]``, unions thereof, ``{}``,
    or the token ``boundary`` (the boundary of the open set)."""
    t = text.strip()
    if t.lower() in (BOUNDARY, "∂ω", "domega"):
        return BOUNDARY
    if t in ("{}", "", "empty", "∅"):
        return TargetSet()
    points: list[float] = []
    intervals: list[tuple[float, float]] = []
    for part in _split_union(t):
        if part.startswith("{") and part.endswith("}"):
            points += [float(v) for v in part[1:-1].split(",") if v.strip()]
        elif part.startswith("[") and part.endswith("]"):
            iv = parse_interval(part)
            intervals.append((iv.lo, iv.hi))
        else:
            raise ValueError(f"cannot parse target component {part!r}")
    return TargetSet(tuple(sorted(set(points))), tuple(sorted(intervals)))


@dataclass(frozen=True)
class RegionSpec:
    """An open set Omega, a target set A and a shrinking neighborhood schedule.

    ``omega=None`` is the whole space. ``target`` may be the string
    ``"boundary"``, resolved against the domain by :meth:`resolved_target`.
    ``schedule`` holds strictly decreasing radii; ``None`` lets the capacity
    solver derive a mesh-dependent default.
    """

    omega: tuple[Interval, ...] | None = None
    target: TargetSet | str = field(default_factory=TargetSet)
    schedule: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.omega is not None:
            object.__setattr__(self, "omega", _merge(self.omega))
        if self.schedule is not None:
            s = tuple(float(e) for e in self.schedule)
            if not s or any(e <= 0 for e in s) or any(b >= a for a, b in zip(s, s[1:])):
                raise ValueError("neighborhood schedule must be positive and strictly decreasing")
            object.__setattr__(self, "schedule", s)

    @classmethod
    def from_strings(cls, omega: str = "X", target: str = "{}", schedule: Sequence[float] | None = None) -> "RegionSpec":
        return cls(parse_omega(omega), parse_target(target), tuple(schedule) if schedule else None)

    def with_target(self, target: TargetSet | str) -> "RegionSpec":
        return replace(self, target=target)

    @property
    def is_whole_space(self) -> bool:
        return self.omega is None

    def describe_omega(self) -> str:
        return "X" if self.omega is None else " U ".join(str(iv) for iv in self.omega)

    # geometry relative to a domain [lo, hi] --------------------------------

    def validate(self, domain: tuple[float, float]) -> None:
        lo, hi = domain
        tol = 1e-9 * max(abs(lo), abs(hi), hi - lo)
        if self.omega is not None:
            for iv in self.omega:
                if iv.lo < lo - tol or iv.hi > hi + tol:
                    raise ValueError(f"omega component {iv} lies outside the domain [{lo:g},{hi:g}]")
                if iv.closed_lo and abs(iv.lo - lo) > tol:
                    raise ValueError(f"omega component {iv} is not open: '[' only allowed at the domain end {lo:g}")
                if iv.closed_hi and abs(iv.hi - hi) > tol:
                    raise ValueError(f"omega component {iv} is not open: ']' only allowed at the domain end {hi:g}")
        target = self.resolved_target(domain)
        anchors = np.asarray(target.anchors(), dtype=float)
        if anchors.size:
            if np.any(~self.in_closure(anchors, domain)):
                raise ValueError(f"target set {target} is not contained in the closure of omega")
            for a, b in target.intervals:
                probe = np.linspace(a, b, 33)
                if np.any(~self.in_closure(probe, domain)):
                    raise ValueError(f"target interval [{a:g},{b:g}] leaves the closure of omega")

    def _tol(self, domain: tuple[float, float]) -> float:
        lo, hi = domain
        return 1e-9 * max(abs(lo), abs(hi), hi - lo)

    def in_omega(self, x: np.ndarray, domain: tuple[float, float]) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.omega is None:
            return np.ones(x.shape, dtype=bool)
        tol = self._tol(domain)
        out = np.zeros(x.shape, dtype=bool)
        for iv in self.omega:
            out |= iv.contains(x, tol)
        return out

    def boundary_points(self, domain: tuple[float, float]) -> np.ndarray:
        """Boundary of omega relative to the domain."""
        if self.omega is None:
            return np.empty(0)
        pts = []
        for iv in self.omega:
            if not iv.closed_lo:
                pts.append(iv.lo)
            if not iv.closed_hi:
                pts.append(iv.hi)
        return np.unique(np.asarray(pts, dtype=float))

    def on_boundary(self, x: np.ndarray, domain: tuple[float, float]) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        bp = self.boundary_points(domain)
        if bp.size == 0:
            return np.zeros(x.shape, dtype=bool)
        tol = self._tol(domain)
        return np.min(np.abs(x[..., None] - bp), axis=-1) <= tol

    def in_closure(self, x: np.ndarray, domain: tuple[float, float]) -> np.ndarray:
        return self.in_omega(x, domain) | self.on_boundary(x, domain)

    def resolved_target(self, domain: tuple[float, float]) -> TargetSet:
        if isinstance(self.target, str):
            if self.target != BOUNDARY:
                raise ValueError(f"unknown target token {self.target!r}")
            return TargetSet(tuple(float(p) for p in self.boundary_points(domain)))
        return self.target

    def neighborhood(self, x: np.ndarray, eps: float, domain: tuple[float, float]) -> np.ndarray:
        """Mask of points in the open neighborhood {dist(., A) < eps}."""
        tol = self._tol(domain)
        return self.resolved_target(domain).distance(np.asarray(x, dtype=float)) < eps - tol


def _merge(intervals: Iterable[Interval]) -> tuple[Interval, ...]:
    ivs = sorted(intervals, key=lambda iv: (iv.lo, not iv.closed_lo))
    if not ivs:
        raise ValueError("omega must contain at least one interval")
    out = [ivs[0]]
    for iv in ivs[1:]:
        cur = out[-1]
        touching = iv.lo < cur.hi or (iv.lo == cur.hi and (cur.closed_hi or iv.closed_lo))
        if touching:
            if iv.hi > cur.hi or (iv.hi == cur.hi and iv.closed_hi):
                out[-1] = Interval(cur.lo, iv.hi, cur.closed_lo, iv.closed_hi)
        else:
            out.append(iv)
    return tuple(out)
