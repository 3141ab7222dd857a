"""Relative capacities as limits of obstacle problems.

``cap_Omega(A)`` is approximated on a mesh by minimizing the graph norm
``phi^T (M + K) phi`` subject to ``phi >= 1`` at the nodes of ``V_k`` inside
omega, for shrinking open neighborhoods ``V_k = {dist(., A) < eps_k}``. The
values decrease in k; their limit is estimated by Richardson extrapolation
and then tracked across mesh levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._threads import map_ordered
from .extrapolate import decay_exponents, richardson
from .forms import FormPair
from .obstacle import PSOR_TOL, ObstacleProblem, solve_obstacle
from .region import RegionSpec, TargetSet

ZERO_THRESHOLD = 1e-4
SCHEDULE_STEPS = 6
SCHEDULE_WIDTH = 10.0
STABILITY_RTOL = 0.05
EXPONENT_RANGE = (0.25, 4.0)


@dataclass(eq=False)
class CapacityEstimate:
    """Capacity values along a neighborhood schedule on one mesh."""

    epsilons: list[float]
    values: list[float]
    minimizers: list[np.ndarray]
    extrapolated: float
    decay_order: float | None
    skipped: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    h: float = float("nan")
    zero_threshold: float = ZERO_THRESHOLD

    @property
    def limit(self) -> float:
        """Extrapolated value, reported as 0 below the zero threshold."""
        return 0.0 if self.extrapolated < self.zero_threshold else self.extrapolated

    @property
    def last(self) -> float:
        return self.values[-1] if self.values else 0.0


def default_schedule(form: FormPair, target: TargetSet, steps: int = SCHEDULE_STEPS) -> tuple[float, ...]:
    """``eps_k = eps_0 2^-k`` with ``eps_0`` ten local element lengths."""
    h = max(form.mesh.element_lengths_near(a) for a in target.anchors())
    return tuple(SCHEDULE_WIDTH * h * 0.5**k for k in range(steps))


def relative_capacity(
    form: FormPair,
    region: RegionSpec,
    tol: float = PSOR_TOL,
    zero_threshold: float = ZERO_THRESHOLD,
) -> CapacityEstimate:
    """Capacity of the target set relative to omega on a single mesh.

    Neighborhoods with fewer than two constrained nodes are skipped and
    recorded in ``warnings``. Raises ``ValueError`` when none is resolved.
    """
    domain = form.mesh.domain
    region.validate(domain)
    target = region.resolved_target(domain)
    if target.empty:
        return CapacityEstimate([], [], [], 0.0, None, h=form.mesh.h, zero_threshold=zero_threshold)
    schedule = region.schedule or default_schedule(form, target)
    x = form.coords
    inside = region.in_omega(x, domain)
    A = form.A
    est = CapacityEstimate([], [], [], 0.0, None, h=form.mesh.h, zero_threshold=zero_threshold)
    guess = None
    for eps in schedule:
        nodes = np.nonzero(region.neighborhood(x, eps, domain) & inside)[0]
        if nodes.size < 2:
            est.skipped.append(eps)
            est.warnings.append(f"neighborhood eps={eps:.3g} holds {nodes.size} node(s) of omega; skipped")
            continue
        res = solve_obstacle(ObstacleProblem(A, nodes), tol=tol, x0=guess)
        if not res.converged:
            est.warnings.append(f"obstacle solve at eps={eps:.3g} stopped at residual {res.residual:.3g}")
        guess = res.minimizer
        est.epsilons.append(eps)
        est.values.append(res.value)
        est.minimizers.append(res.minimizer)
    if not est.values:
        hmin = min(schedule) / 2
        raise ValueError(f"no neighborhood resolved; use elements shorter than {hmin:.3g} near the target")
    ex = richardson(est.values)
    est.extrapolated = max(ex.value, 0.0)
    est.decay_order = ex.order
    return est


def capacity(form: FormPair, target: TargetSet | str, tol: float = PSOR_TOL, **kw) -> CapacityEstimate:
    """Capacity with omega equal to the whole space."""
    return relative_capacity(form, RegionSpec(None, target), tol=tol, **kw)


@dataclass(eq=False)
class SweepResult:
    levels: list[int]
    h: list[float]
    estimates: list[CapacityEstimate]
    limit: float
    order: float | None
    exponents: list[float]
    verdict: str
    zero_threshold: float = ZERO_THRESHOLD

    @property
    def level_values(self) -> list[float]:
        return [e.extrapolated for e in self.estimates]

    def csv_rows(self) -> list[dict]:
        rows = []
        for lvl, h, est in zip(self.levels, self.h, self.estimates):
            for k, (eps, val) in enumerate(zip(est.epsilons, est.values)):
                rows.append(
                    dict(mesh_level=lvl, h=h, neighborhood_index=k, epsilon=eps, value=val,
                         extrapolated=est.extrapolated, verdict=self.verdict)
                )
            if not est.values:
                rows.append(dict(mesh_level=lvl, h=h, neighborhood_index=-1, epsilon=0.0, value=0.0,
                                 extrapolated=0.0, verdict=self.verdict))
        return rows


def classify(values: Sequence[float], zero_threshold: float = ZERO_THRESHOLD) -> tuple[str, float, float | None, list[float]]:
    """Verdict for per-level capacities on successively halved meshes.

    zero: the extrapolated limit is below the threshold and the last two
    decay exponents are positive, bounded and agree within a factor 2.
    positive: the last values exceed ten times the threshold and change by
    at most 5% between the two finest levels. Otherwise inconclusive.
    """
    v = [float(x) for x in values]
    ex = richardson(v)
    limit = max(ex.value, 0.0)
    exps = decay_exponents(v)
    if max(v[-2:]) <= 1e-14:
        return "zero", 0.0, ex.order, exps
    lo, hi = EXPONENT_RANGE
    tail = exps[-2:]
    stable_decay = (
        len(tail) == 2
        and all(np.isfinite(p) and lo <= p <= hi for p in tail)
        and max(tail) <= 2 * min(tail)
    )
    if limit < zero_threshold and stable_decay:
        return "zero", limit, ex.order, exps
    pos = 10 * zero_threshold
    if limit > pos and min(v[-2:]) > pos and abs(v[-1] - v[-2]) <= STABILITY_RTOL * abs(v[-1]):
        return "positive", limit, ex.order, exps
    return "inconclusive", limit, ex.order, exps


def refinement_sweep(
    build: Callable[[int], FormPair],
    region: RegionSpec,
    levels: Sequence[int],
    tol: float = PSOR_TOL,
    zero_threshold: float = ZERO_THRESHOLD,
) -> SweepResult:
    """Capacity on each mesh level and a verdict on the continuum limit.

    ``build(n)`` returns the form on the level with ``n`` elements; levels
    must number at least three, each refining the previous. Levels run
    concurrently and are merged in level order.
    """
    levels = [int(n) for n in levels]
    if len(levels) < 3:
        raise ValueError("a refinement sweep needs at least 3 mesh levels")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("mesh levels must strictly increase")

    def one(n: int) -> CapacityEstimate:
        return relative_capacity(build(n), region, tol=tol, zero_threshold=zero_threshold)

    ests = map_ordered(one, levels)
    verdict, limit, order, exps = classify([e.extrapolated for e in ests], zero_threshold)
    return SweepResult(levels, [e.h for e in ests], ests, limit, order, exps, verdict, zero_threshold)
