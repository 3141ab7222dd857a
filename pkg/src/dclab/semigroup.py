"""Heat semigroups ``S_t = exp(-tH)`` generated by assembled forms.

The generator of a form pair (K, M) is ``H = M^-1 K``. Two evaluators are
provided: a spectral one (generalized symmetric eigenproblem, cached) and
the implicit-Euler resolvent product ``(I + (t/n) H)^-n``. All comparisons
between semigroups living on different degree-of-freedom sets happen on the
full mesh, extending every vector by zero.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import FormPair
from .mesh import Mesh
from .region import RegionSpec

EIG_MAX_DOFS = 4000
RESOLVENT_MAX_STEPS = 10_000
TOL_POS = 1e-9


def _is_tridiagonal(A: sp.spmatrix) -> bool:
    coo = sp.coo_matrix(A)
    return bool(np.all(np.abs(coo.row - coo.col) <= 1))


def _is_diagonal(A: sp.spmatrix) -> bool:
    coo = sp.coo_matrix(A)
    return bool(np.all(coo.row == coo.col))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """``K V = M V diag(lam)`` with ``V^T M V = I``."""

    lam: np.ndarray
    V: np.ndarray


def spectrum(form: FormPair) -> Spectrum:
    """Generalized eigendecomposition of (K, M).

    Lumped mass with a tridiagonal stiffness uses the symmetric scaling
    ``M^-1/2 K M^-1/2`` and a tridiagonal eigensolver; anything else goes
    through a dense generalized solve.
    """
    K, M = form.K, form.M
    if _is_diagonal(M) and _is_tridiagonal(K):
        m = M.diagonal()
        s = 1.0 / np.sqrt(m)
        d = K.diagonal() * s * s
        e = K.diagonal(1) * s[:-1] * s[1:]
        if d.size == 1:
            return Spectrum(d.copy(), s.reshape(1, 1))
        lam, W = sla.eigh_tridiagonal(d, e, lapack_driver="stemr")
        return Spectrum(lam, s[:, None] * W)
    lam, V = sla.eigh(K.toarray(), M.toarray())
    return Spectrum(lam, V)


class SemigroupOperator:
    """Semigroup of a form pair with a selectable evaluator.

    ``method`` is ``"eig"``, ``"resolvent"`` or ``"auto"`` (spectral up to
    ``EIG_MAX_DOFS`` unknowns, resolvent powers with ``n = ceil(t/h^2)``
    capped at ``RESOLVENT_MAX_STEPS`` beyond). The spectral data are computed
    once and then shared read-only.
    """

    def __init__(self, form: FormPair, method: str = "auto", n_steps: int | None = None, name: str = ""):
        if method not in ("auto", "eig", "resolvent"):
            raise ValueError(f"unknown semigroup method {method!r}")
        self.form = form
        self.method = method
        self.n_steps = n_steps
        self.name = name or form.label
        self._spec: Spectrum | None = None
        self._lock = threading.Lock()

    @property
    def mesh(self) -> Mesh:
        return self.form.mesh

    def resolved_method(self) -> str:
        if self.method != "auto":
            return self.method
        return "eig" if self.form.n_dofs <= EIG_MAX_DOFS else "resolvent"

    def steps_for(self, t: float) -> int:
        if self.n_steps is not None:
            return self.n_steps
        return int(min(math.ceil(t / self.mesh.h**2), RESOLVENT_MAX_STEPS))

    @property
    def spectrum(self) -> Spectrum:
        with self._lock:
            if self._spec is None:
                self._spec = spectrum(self.form)
            return self._spec

    def apply(self, t: float, phi: np.ndarray) -> np.ndarray:
        """``S_t phi`` on the dofs; ``phi`` may hold several columns."""
        if self.resolved_method() == "eig":
            return apply_semigroup_eig(self.form, t, phi, spec=self.spectrum, check_size=False)
        return apply_resolvent_power(self.form, t, self.steps_for(t), phi)

    def apply_embedded(self, t: float, phi_full: np.ndarray) -> np.ndarray:
        """Act on a full-mesh vector: restrict to the dofs, evolve, extend by zero."""
        return self.form.embed(self.apply(t, self.form.restrict(phi_full)))

    def matrix(self, t: float) -> np.ndarray:
        """Dense matrix of ``S_t`` on the dofs (columns are images of unit vectors)."""
        if self.resolved_method() == "eig":
            sp_ = self.spectrum
            return (sp_.V * np.exp(-sp_.lam * t)) @ (sp_.V.T @ self.form.M.toarray())
        return self.apply(t, np.eye(self.form.n_dofs))

    def embedded_matrix(self, t: float) -> np.ndarray:
        """``S_t`` as a full-mesh matrix, zero on rows/columns outside the dofs."""
        n = self.mesh.n_nodes
        out = np.zeros((n, n))
        idx = self.form.active_nodes
        out[np.ix_(idx, idx)] = self.matrix(t)
        return out


def apply_resolvent_power(form: FormPair, t: float, n: int, phi: np.ndarray) -> np.ndarray:
    """``(I + (t/n) H)^-n phi`` via n solves with ``M + (t/n) K``."""
    if not t > 0:
        raise ValueError("t must be positive")
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    lu = spla.splu(sp.csc_matrix(form.M + (t / n) * form.K))
    psi = np.array(phi, dtype=float, copy=True)
    for _ in range(int(n)):
        psi = lu.solve(np.asarray(form.M @ psi))
    return psi


def apply_semigroup_eig(
    form: FormPair, t: float, phi: np.ndarray, spec: Spectrum | None = None, check_size: bool = True
) -> np.ndarray:
    """``V exp(-lam t) V^T M phi`` from the generalized eigendecomposition."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if check_size and form.n_dofs > EIG_MAX_DOFS:
        raise ValueError(f"{form.n_dofs} dofs exceed the spectral limit {EIG_MAX_DOFS}; use resolvent powers")
    phi = np.asarray(phi, dtype=float)
    if t == 0:
        return phi.copy()
    spec = spec or spectrum(form)
    coef = spec.V.T @ (form.M @ phi)
    decay = np.exp(-spec.lam * t)
    coef = coef * (decay[:, None] if coef.ndim == 2 else decay)
    return spec.V @ coef


@dataclass(frozen=True, eq=False)
class EvolutionResult:
    t: float
    values: np.ndarray
    method: str
    steps: int | None
    mass_loss: float
    negativity: float
    overshoot: float


def evolve(op: SemigroupOperator, t: float, phi: np.ndarray) -> EvolutionResult:
    """Evolve and recompute the submarkovian diagnostics from the output."""
    phi = np.asarray(phi, dtype=float)
    u = op.apply(t, phi)
    w = op.form.mass_weights()
    method = op.resolved_method()
    return EvolutionResult(
        t=t,
        values=u,
        method=method,
        steps=op.steps_for(t) if method == "resolvent" else op.form.n_dofs,
        mass_loss=float(w @ phi - w @ u),
        negativity=float(max(0.0, -u.min())),
        overshoot=float(max(0.0, np.abs(u).max() - np.abs(phi).max())),
    )


# --- full-mesh norms and test functions --------------------------------------


def mesh_weights(mesh: Mesh) -> np.ndarray:
    """Lumped nodal quadrature weights of the full mesh."""
    h = mesh.lengths
    w = np.zeros(mesh.n_nodes)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def weighted_norm(v: np.ndarray, w: np.ndarray, norm: str) -> float:
    if norm == "l1":
        return float(w @ np.abs(v))
    if norm == "l2":
        return float(np.sqrt(w @ (v * v)))
    if norm == "inf":
        return float(np.abs(v).max()) if v.size else 0.0
    raise ValueError(f"unknown norm {norm!r}")


def default_battery(mesh: Mesh) -> dict[str, Callable[[np.ndarray], np.ndarray]]:
    """Test functions: polynomials, a sine, kinked functions and hats."""
    lo, hi = mesh.domain
    L = hi - lo

    def hat(center: float, width: float):
        return lambda x: np.maximum(0.0, 1.0 - np.abs(x - center) / width)

    funcs: dict[str, Callable] = {
        "one": lambda x: np.ones_like(x),
        "x": lambda x: x,
        "x2": lambda x: x * x,
        "sin": lambda x: np.sin(np.pi * x),
        "abs": np.abs,
        "xplus": lambda x: np.maximum(x, 0.0),
        "step": lambda x: (x > 0).astype(float),
    }
    for k in (1, 2, 3):
        funcs[f"hat{k}"] = hat(lo + k * L / 4, L / 8)
    return funcs


def _relative(diff: np.ndarray, ref: np.ndarray, w: np.ndarray, norm: str) -> float:
    den = weighted_norm(ref, w, norm)
    return weighted_norm(diff, w, norm) / den if den > 0 else 0.0


def conservativeness_defect(op: SemigroupOperator, region: RegionSpec, t: float, norm: str = "l1") -> float:
    """Distance between ``S_t 1_Omega`` and ``1_Omega`` on the nodes of omega.

    ``norm="l1"`` gives the mass lost relative to the measure of omega,
    ``"l2"`` the relative weighted 2-norm and ``"inf"`` the sup over nodes.
    """
    mesh = op.mesh
    x = mesh.nodes
    ind = region.in_omega(x, mesh.domain).astype(float)
    u = op.apply_embedded(t, ind)
    on = ind > 0
    w = mesh_weights(mesh)[on]
    return _relative((u - ind)[on], ind[on], w, norm)


def masked_battery(mesh: Mesh, region: RegionSpec, battery: Mapping[str, Callable] | None = None) -> dict[str, np.ndarray]:
    """Battery functions multiplied by the indicator of omega, dropping ones that vanish."""
    battery = battery or default_battery(mesh)
    ind = region.in_omega(mesh.nodes, mesh.domain)
    out = {}
    for name, f in battery.items():
        v = np.asarray(f(mesh.nodes), dtype=float) * ind
        if np.any(v != 0):
            out[name] = v
    return out


def invariance_defect(
    op: SemigroupOperator,
    region: RegionSpec,
    t: float,
    norm: str = "l1",
    battery: Mapping[str, Callable] | None = None,
) -> float:
    """How much of ``S_t phi`` leaks outside the closure of omega, for phi supported in omega.

    Largest relative size of ``1_{outside} S_t phi`` over the battery.
    """
    mesh = op.mesh
    out_mask = ~region.in_closure(mesh.nodes, mesh.domain)
    if not out_mask.any():
        return 0.0
    w = mesh_weights(mesh)
    phis = masked_battery(mesh, region, battery)
    if not phis:
        return 0.0
    names = list(phis)
    block = np.column_stack([phis[k] for k in names])
    U = op.apply_embedded(t, block)
    return max(_relative(U[:, j] * out_mask, block[:, j], w, norm) for j in range(len(names)))


def restricted_difference(
    a: SemigroupOperator,
    b: SemigroupOperator,
    region: RegionSpec,
    t: float,
    norm: str = "l1",
    battery: Mapping[str, Callable] | None = None,
    per_function: bool = False,
):
    """``||S^a_t phi - S^b_t phi||`` for phi in the omega-masked battery.

    Both results are compared on the full mesh (extension by zero). Returns
    the largest relative difference, or the dict per function.
    """
    if a.mesh is not b.mesh and not np.array_equal(a.mesh.nodes, b.mesh.nodes):
        raise ValueError("semigroups live on different meshes")
    mesh = a.mesh
    w = mesh_weights(mesh)
    phis = masked_battery(mesh, region, battery)
    names = list(phis)
    block = np.column_stack([phis[k] for k in names])
    D = a.apply_embedded(t, block) - b.apply_embedded(t, block)
    vals = {k: _relative(D[:, j], block[:, j], w, norm) for j, k in enumerate(names)}
    return vals if per_function else max(vals.values())


@dataclass(frozen=True)
class DominationReport:
    t: float
    min_gap: float
    min_lower: float
    tol_pos: float
    passed: bool = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "passed", self.min_gap >= -self.tol_pos and self.min_lower >= -self.tol_pos)


def domination_check(lower: SemigroupOperator, upper: SemigroupOperator, t: float, tol_pos: float = TOL_POS) -> DominationReport:
    """Entrywise ``0 <= S^lower_t <= S^upper_t`` on the full mesh."""
    if not t > 0:
        raise ValueError("t must be positive")
    if not np.array_equal(lower.mesh.nodes, upper.mesh.nodes):
        raise ValueError("semigroups live on different meshes")
    L = lower.embedded_matrix(t)
    U = upper.embedded_matrix(t)
    return DominationReport(t, float((U - L).min()), float(L.min()), tol_pos)


def resolvent_embedded(form: FormPair, tau: np.ndarray) -> np.ndarray:
    """``(I + H)^-1 tau`` for a full-mesh ``tau``, extended by zero."""
    r = spla.spsolve(sp.csc_matrix(form.A), form.M @ form.restrict(tau))
    return form.embed(r)


def resolvent_comparison(lower: FormPair, upper: FormPair, tau: np.ndarray) -> float:
    """Minimum entry of ``(I+H_upper)^-1 tau - (I+H_lower)^-1 tau``."""
    return float((resolvent_embedded(upper, tau) - resolvent_embedded(lower, tau)).min())
