"""One-dimensional meshes and per-element coefficient fields."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class Mesh:
    """Partition of a closed interval into consecutive elements.

    The interval ``[x_lo, x_hi]`` plays the role of the underlying space:
    its two end nodes carry no boundary condition of their own.
    """

    nodes: np.ndarray

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("a mesh needs at least 2 elements (3 nodes)")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("mesh nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n_elements(self) -> int:
        return self.nodes.size - 1

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    @property
    def h(self) -> float:
        """Largest element length."""
        return float(self.lengths.max())

    @property
    def scale(self) -> float:
        lo, hi = self.domain
        return max(abs(lo), abs(hi), hi - lo)

    def node_index(self, x: float, rtol: float = 1e-9) -> int | None:
        """Index of the node at ``x`` or None if ``x`` is not a node."""
        i = int(np.searchsorted(self.nodes, x))
        tol = rtol * self.scale
        for j in (i - 1, i):
            if 0 <= j < self.n_nodes and abs(self.nodes[j] - x) <= tol:
                return j
        return None

    def element_lengths_near(self, x: float) -> float:
        """Length of the longest element whose closure contains ``x``."""
        lo, hi = self.domain
        x = min(max(x, lo), hi)
        tol = 1e-9 * self.scale
        mask = (self.nodes[:-1] <= x + tol) & (self.nodes[1:] >= x - tol)
        return float(self.lengths[mask].max())


def _graded_lengths(n: int, length: float, ratio: float) -> np.ndarray:
    """n lengths summing to ``length``, increasing by ``ratio``."""
    if ratio == 1.0:
        return np.full(n, length / n)
    first = length * (ratio - 1.0) / (ratio**n - 1.0)
    return first * ratio ** np.arange(n)


def _segment_nodes(a: float, b: float, n: int, left: bool, right: bool, ratio: float) -> np.ndarray:
    """Nodes on [a, b] with n elements, clustered toward the flagged ends."""
    length = b - a
    if not (left or right) or ratio == 1.0:
        return np.linspace(a, b, n + 1)
    if left and right:
        n_left = n // 2
        n_right = n - n_left
        mid = a + length * n_left / n
        lhs = _segment_nodes(a, mid, n_left, True, False, ratio) if n_left else np.array([a])
        rhs = _segment_nodes(mid, b, n_right, False, True, ratio)
        return np.concatenate([lhs[:-1], rhs])
    steps = _graded_lengths(n, length, ratio)
    if right:
        steps = steps[::-1]
    out = a + np.concatenate([[0.0], np.cumsum(steps)])
    out[-1] = b
    return out


def build_mesh(
    interval: Sequence[float],
    n_elements: int,
    grading: str = "uniform",
    toward: Sequence[float] = (),
    ratio: float = 1.1,
    breakpoints: Sequence[float] = (),
) -> Mesh:
    """Partition ``interval`` into ``n_elements`` elements.

    ``grading="geometric"`` clusters nodes toward the points in ``toward``,
    successive element lengths growing by ``ratio`` away from each point.
    Every point of ``toward`` and ``breakpoints`` lying strictly inside the
    interval becomes a node; elements are shared between the resulting
    segments in proportion to their length.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise ValueError(f"degenerate interval [{lo}, {hi}]")
    if int(n_elements) != n_elements or n_elements < 2:
        raise ValueError(f"n_elements must be an integer >= 2, got {n_elements}")
    n_elements = int(n_elements)
    if grading not in ("uniform", "geometric"):
        raise ValueError(f"unknown grading {grading!r}")
    if grading == "geometric" and not ratio > 1.0:
        raise ValueError("geometric grading needs ratio > 1")
    if grading == "geometric" and not toward:
        raise ValueError("geometric grading needs at least one point in 'toward'")

    attract = {float(p) for p in toward} if grading == "geometric" else set()
    cuts = sorted({float(p) for p in (*toward, *breakpoints) if lo < p < hi})
    edges = [lo, *cuts, hi]
    seg_len = np.diff(edges)
    if len(seg_len) > n_elements:
        raise ValueError("more segments than elements; increase n_elements")

    # largest-remainder allocation, at least one element per segment
    share = seg_len / seg_len.sum() * n_elements
    counts = np.maximum(1, np.floor(share).astype(int))
    while counts.sum() < n_elements:
        counts[np.argmax(share - counts)] += 1
    while counts.sum() > n_elements:
        counts[np.argmax(np.where(counts > 1, counts - share, -np.inf))] -= 1

    pieces = []
    tol = 1e-12 * max(abs(lo), abs(hi), hi - lo)
    for (a, b), n in zip(zip(edges[:-1], edges[1:]), counts):
        left = any(abs(a - p) <= tol for p in attract)
        right = any(abs(b - p) <= tol for p in attract)
        pieces.append(_segment_nodes(a, b, int(n), left, right, ratio))
    nodes = np.concatenate([pieces[0]] + [p[1:] for p in pieces[1:]])
    if not np.all(np.diff(nodes) > 0):
        raise ValueError("grading too strong: smallest elements fall below floating-point resolution")
    return Mesh(nodes)


@dataclass(frozen=True)
class CoefficientField:
    """Scalar diffusion coefficient, evaluated at element midpoints.

    ``family`` is one of ``constant``, ``power_law``, ``piecewise`` or
    ``table``; ``params`` holds the family parameters.
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.family not in ("constant", "power_law", "piecewise", "table"):
            raise ValueError(f"unknown coefficient family {self.family!r}")
        p = self.params
        if self.family == "constant" and p.get("value", 1.0) < 0:
            raise ValueError("negative coefficient")
        if self.family == "power_law" and p.get("scale", 1.0) < 0:
            raise ValueError("negative coefficient scale")
        if self.family == "piecewise":
            vals, breaks = list(p["values"]), list(p.get("breaks", []))
            if len(vals) != len(breaks) + 1:
                raise ValueError("piecewise coefficient needs len(values) == len(breaks) + 1")
            if any(v < 0 for v in vals):
                raise ValueError("negative coefficient")
            if breaks != sorted(breaks):
                raise ValueError("piecewise breaks must be increasing")
        if self.family == "table" and np.any(np.asarray(p["values"], dtype=float) < 0):
            raise ValueError("negative coefficient")

    @classmethod
    def constant(cls, value: float = 1.0) -> "CoefficientField":
        return cls("constant", {"value": float(value)})

    @classmethod
    def power_law(cls, alpha: float, scale: float = 1.0, center: float = 0.0) -> "CoefficientField":
        return cls("power_law", {"alpha": float(alpha), "scale": float(scale), "center": float(center)})

    @classmethod
    def piecewise(cls, values: Sequence[float], breaks: Sequence[float]) -> "CoefficientField":
        return cls("piecewise", {"values": [float(v) for v in values], "breaks": [float(b) for b in breaks]})

    @classmethod
    def table(cls, values: Sequence[float]) -> "CoefficientField":
        return cls("table", {"values": [float(v) for v in values]})

    def evaluate(self, mesh: Mesh) -> np.ndarray:
        """Per-element values c_e >= 0."""
        mid = mesh.midpoints
        p = self.params
        if self.family == "constant":
            c = np.full(mesh.n_elements, p.get("value", 1.0))
        elif self.family == "power_law":
            alpha = p["alpha"]
            r = np.abs(mid - p.get("center", 0.0))
            # |x|^0 == 1 everywhere, including a midpoint sitting on the center
            c = p.get("scale", 1.0) * (np.ones_like(r) if alpha == 0 else r**alpha)
        elif self.family == "piecewise":
            idx = np.searchsorted(np.asarray(p["breaks"], dtype=float), mid, side="right")
            c = np.asarray(p["values"], dtype=float)[idx]
        else:
            c = np.asarray(p["values"], dtype=float)
            if c.size != mesh.n_elements:
                raise ValueError(f"table has {c.size} values for {mesh.n_elements} elements")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("coefficient must be finite and nonnegative on every element")
        return c

    def describe(self) -> str:
        p = self.params
        if self.family == "constant":
            return f"constant:{p.get('value', 1.0):g}"
        if self.family == "power_law":
            s = f"power_law:{p['alpha']:g}"
            if p.get("scale", 1.0) != 1.0:
                s += f";scale={p['scale']:g}"
            if p.get("center", 0.0) != 0.0:
                s += f";center={p['center']:g}"
            return s
        if self.family == "piecewise":
            vals = ",".join(f"{v:g}" for v in p["values"])
            brk = ",".join(f"{b:g}" for b in p["breaks"])
            return f"piecewise:values={vals};breaks={brk}"
        return "table:" + ",".join(f"{v:g}" for v in p["values"])


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def parse_coefficient(text: str) -> CoefficientField:
    """Parse ``family:args`` strings.

    Examples: ``constant:1``, ``power_law:2``, ``power_law:2;scale=2``,
    ``piecewise:values=0,1;breaks=0``, ``table:1,2,3``.
    """
    family, _, rest = text.strip().partition(":")
    family = family.strip()
    parts = [s.strip() for s in rest.split(";") if s.strip()]
    positional = [s for s in parts if "=" not in s]
    named = dict(s.split("=", 1) for s in parts if "=" in s)
    named = {k.strip(): v.strip() for k, v in named.items()}
    try:
        if family == "constant":
            value = float(positional[0]) if positional else float(named.pop("value", 1.0))
            return CoefficientField.constant(value)
        if family == "power_law":
            alpha = float(positional[0]) if positional else float(named.pop("alpha"))
            return CoefficientField.power_law(
                alpha, float(named.get("scale", 1.0)), float(named.get("center", 0.0))
            )
        if family == "piecewise":
            return CoefficientField.piecewise(_floats(named["values"]), _floats(named.get("breaks", "")))
        if family == "table":
            return CoefficientField.table(_floats(positional[0] if positional else named["values"]))
    except (KeyError, IndexError) as exc:
        raise ValueError(f"incomplete coefficient spec {text!r}") from exc
    raise ValueError(f"unknown coefficient family {family!r}")

