"""Bound-constrained quadratic programs ``min x^T A x`` s.t. ``x_i >= 1`` on a node set.

The workhorse is projected SOR; a primal-dual active-set iteration takes over
when SOR stalls (fine meshes make ``A = M + K`` ill-conditioned), and a final
active-set solve polishes the answer to direct-solver accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

PSOR_OMEGA = 1.6
PSOR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ObstacleProblem:
    """Minimize ``x^T A x`` over ``x >= lower`` on ``constraint_nodes``.

    ``A`` must be symmetric positive definite (for capacities it is M + K,
    definite even when the stiffness degenerates).
    """

    A: sp.csr_matrix
    constraint_nodes: np.ndarray
    lower: float = 1.0

    def __post_init__(self) -> None:
        c = np.unique(np.asarray(self.constraint_nodes, dtype=np.int64))
        if c.size == 0:
            raise ValueError("obstacle problem without constraints; the minimizer is 0")
        n = self.A.shape[0]
        if c[0] < 0 or c[-1] >= n:
            raise ValueError("constraint node out of range")
        object.__setattr__(self, "constraint_nodes", c)
        object.__setattr__(self, "A", sp.csr_matrix(self.A, dtype=float))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def bounds(self) -> np.ndarray:
        lb = np.full(self.n, -np.inf)
        lb[self.constraint_nodes] = self.lower
        return lb


@dataclass(frozen=True, eq=False)
class ObstacleResult:
    minimizer: np.ndarray
    value: float
    active_set: np.ndarray
    residual: float
    iterations: int
    method: str
    converged: bool
    history: list = field(default_factory=list)


@numba.njit(cache=True)
def _psor_sweeps(indptr, indices, data, diag, lb, x, omega, n_sweeps):
    n = x.size
    for _ in range(n_sweeps):
        for i in range(n):
            r = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                r += data[k] * x[indices[k]]
            y = x[i] - omega * r / diag[i]
            x[i] = y if y > lb[i] else lb[i]


def kkt_residual(A: sp.csr_matrix, x: np.ndarray, lb: np.ndarray) -> float:
    """Natural residual ``max |x - max(lb, x - D^-1 A x)|``; zero exactly at the minimizer."""
    g = (A @ x) / A.diagonal()
    return float(np.max(np.abs(x - np.maximum(lb, x - g))))


def _active_guess(A: sp.csr_matrix, x: np.ndarray, problem: ObstacleProblem) -> np.ndarray:
    c = problem.constraint_nodes
    g = (A @ x)[c] / A.diagonal()[c]
    return c[(x[c] - problem.lower) <= g]


def _solve_with_active(A: sp.csr_matrix, active: np.ndarray, lower: float) -> np.ndarray:
    n = A.shape[0]
    x = np.zeros(n)
    x[active] = lower
    free = np.setdiff1d(np.arange(n), active)
    if free.size:
        Aff = A[free][:, free].tocsc()
        rhs = -(A[free][:, active] @ x[active]) if active.size else np.zeros(free.size)
        x[free] = spla.spsolve(Aff, rhs) if free.size > 1 else rhs / Aff[0, 0]
    return x


def _pdas(problem: ObstacleProblem, x: np.ndarray, max_iter: int = 200) -> tuple[np.ndarray, int, bool]:
    """Primal-dual active set iteration for the bound ``x >= lower`` on C."""
    A = problem.A
    c = problem.constraint_nodes
    active = _active_guess(A, x, problem)
    for it in range(1, max_iter + 1):
        x = _solve_with_active(A, active, problem.lower)
        lam = (A @ x)[c]
        new = c[lam / A.diagonal()[c] + (problem.lower - x[c]) > 0]
        if np.array_equal(new, active):
            return x, it, True
        active = new
    return x, max_iter, False


def solve_obstacle(
    problem: ObstacleProblem,
    tol: float = PSOR_TOL,
    max_iter: int | None = None,
    omega: float = PSOR_OMEGA,
    x0: np.ndarray | None = None,
    check_every: int = 50,
    stall_rate: float = 0.995,
) -> ObstacleResult:
    """Projected SOR with stall detection, active-set fallback and polish.

    ``max_iter`` defaults to 50 sweeps per unknown. Every ``check_every``
    sweeps the residual contraction rate is measured; when the predicted
    number of remaining sweeps exceeds the budget the iteration is handed to
    the primal-dual active-set method; so does a per-sweep contraction
    slower than ``stall_rate``. The returned minimizer always has
    the best residual seen.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not 0.0 < omega < 2.0:
        raise ValueError("relaxation parameter must lie in (0, 2)")
    A = problem.A
    n = problem.n
    max_iter = 50 * n if max_iter is None else int(max_iter)
    lb = problem.bounds()
    x = np.maximum(lb, 0.0) if x0 is None else np.maximum(np.asarray(x0, dtype=float).copy(), lb)
    diag = A.diagonal().copy()
    if np.any(diag <= 0):
        raise ValueError("matrix is not positive definite (nonpositive diagonal)")
    indptr, indices, data = A.indptr.astype(np.int64), A.indices.astype(np.int64), A.data

    res = kkt_residual(A, x, lb)
    history = [res]
    sweeps = 0
    method = "psor"
    while res >= tol and sweeps < max_iter:
        step = min(check_every, max_iter - sweeps)
        _psor_sweeps(indptr, indices, data, diag, lb, x, omega, step)
        sweeps += step
        prev, res = res, kkt_residual(A, x, lb)
        history.append(res)
        if res < tol:
            break
        rate = (res / prev) ** (1.0 / step) if prev > 0 and res > 0 else 0.0
        if rate >= stall_rate or (rate > 0 and np.log(tol / res) / np.log(rate) > max_iter - sweeps):
            method = "psor+pdas"
            break

    if res >= tol:
        xp, it, ok = _pdas(problem, x)
        rp = kkt_residual(A, xp, lb)
        sweeps += it
        if rp < res:
            x, res = xp, rp
        method = "psor+pdas"

    # polish: exact solve on the identified active set
    active = _active_guess(A, x, problem)
    xs = _solve_with_active(A, active, problem.lower)
    rs = kkt_residual(A, xs, lb)
    if rs <= max(res, tol):
        x, res = xs, rs
    active = problem.constraint_nodes[np.abs(x[problem.constraint_nodes] - problem.lower) <= 1e-12]
    return ObstacleResult(
        minimizer=x,
        value=float(x @ (A @ x)),
        active_set=active,
        residual=res,
        iterations=sweeps,
        method=method,
        converged=res < tol,
        history=history,
    )
