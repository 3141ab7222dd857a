"""Stiffness/mass assembly, Dirichlet restriction, truncated and Neumann forms.

A :class:`FormPair` stores a symmetric stiffness matrix ``K`` and mass matrix
``M`` over a set of degrees of freedom. Each dof sits on a mesh node
(``active_nodes[i]``); the energy of a nodal vector ``phi`` is ``phi @ K @ phi``
and the graph norm squared is ``phi @ (M + K) @ phi``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import CoefficientField, Mesh
from .region import RegionSpec

NEUMANN_TOL = 1e-10
NEUMANN_MAX_STEPS = 60


@dataclass(frozen=True, eq=False)
class FormPair:
    K: sp.csr_matrix
    M: sp.csr_matrix
    mesh: Mesh
    active_nodes: np.ndarray
    local: bool = True
    lumped: bool = True
    label: str = ""

    def __post_init__(self) -> None:
        n = self.active_nodes.size
        if self.K.shape != (n, n) or self.M.shape != (n, n):
            raise ValueError("K, M and active_nodes disagree in size")

    @property
    def n_dofs(self) -> int:
        return self.active_nodes.size

    @property
    def coords(self) -> np.ndarray:
        return self.mesh.nodes[self.active_nodes]

    @property
    def is_embedded(self) -> bool:
        """True when every dof sits on a distinct mesh node."""
        return np.unique(self.active_nodes).size == self.active_nodes.size

    @property
    def A(self) -> sp.csr_matrix:
        """Graph-norm matrix M + K."""
        return (self.M + self.K).tocsr()

    def energy(self, phi: np.ndarray) -> float:
        phi = np.asarray(phi, dtype=float)
        return float(phi @ (self.K @ phi))

    def graph_norm2(self, phi: np.ndarray) -> float:
        phi = np.asarray(phi, dtype=float)
        return float(phi @ (self.M @ phi) + phi @ (self.K @ phi))

    def mass_weights(self) -> np.ndarray:
        """Row sums of M: the nodal quadrature weights."""
        return np.asarray(self.M.sum(axis=1)).ravel()

    def sample(self, f) -> np.ndarray:
        """Nodal values of a callable at the dof coordinates."""
        return np.asarray(f(self.coords), dtype=float) * np.ones(self.n_dofs)

    def embed(self, v: np.ndarray) -> np.ndarray:
        """Extend dof values by zero to every mesh node."""
        if not self.is_embedded:
            raise ValueError("form has duplicated nodes; no unique embedding")
        v = np.asarray(v)
        out = np.zeros((self.mesh.n_nodes,) + v.shape[1:], dtype=v.dtype)
        out[self.active_nodes] = v
        return out

    def restrict(self, v: np.ndarray) -> np.ndarray:
        """Values of a full-mesh vector at this form's dofs."""
        return np.asarray(v)[self.active_nodes]


def _tridiag(diag: np.ndarray, off: np.ndarray) -> sp.csr_matrix:
    return sp.diags([off, diag, off], [-1, 0, 1], format="csr")


def assemble_elliptic(mesh: Mesh, coeff: CoefficientField | np.ndarray, lumped: bool = True) -> FormPair:
    """Free (Neumann-type) P1 assembly of ``int c |phi'|^2`` on the whole mesh.

    Element ``(i, i+1)`` contributes ``(c_e/h_e) [[1,-1],[-1,1]]`` to K.
    The mass matrix is lumped (diagonal, ``h_e/2`` to each end) unless
    ``lumped=False``, in which case the consistent P1 mass is used.
    """
    c = coeff.evaluate(mesh) if isinstance(coeff, CoefficientField) else np.asarray(coeff, dtype=float)
    if c.shape != (mesh.n_elements,):
        raise ValueError("coefficient must have one value per element")
    if np.any(c < 0):
        raise ValueError("negative coefficient")
    h = mesh.lengths
    w = c / h
    diag = np.zeros(mesh.n_nodes)
    diag[:-1] += w
    diag[1:] += w
    K = _tridiag(diag, -w)
    if lumped:
        m = np.zeros(mesh.n_nodes)
        m[:-1] += h / 2
        m[1:] += h / 2
        M = sp.diags(m, format="csr")
    else:
        md = np.zeros(mesh.n_nodes)
        md[:-1] += h / 3
        md[1:] += h / 3
        M = _tridiag(md, h / 6)
    label = coeff.describe() if isinstance(coeff, CoefficientField) else "custom"
    return FormPair(K, M, mesh, np.arange(mesh.n_nodes), local=True, lumped=lumped, label=label)


def element_weights(form: FormPair) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Edges (i, j) of the stiffness graph and their weights ``-K_ij``.

    For the P1 assembly every edge is one element and the weight is c_e/h_e.
    """
    upper = sp.triu(form.K, k=1).tocoo()
    return upper.row, upper.col, -upper.data


def restrict_dirichlet(form: FormPair, region: RegionSpec) -> FormPair:
    """Keep the dofs lying in the open set and drop the rest.

    This is the discrete closure of the functions with compact support in
    omega. Boundary points of omega must be mesh nodes; they are removed
    together with the exterior.
    """
    mesh = form.mesh
    region.validate(mesh.domain)
    for b in region.boundary_points(mesh.domain):
        if mesh.node_index(b) is None:
            raise ValueError(f"boundary point {b:g} of omega is not a mesh node; refine with breakpoints")
    keep = np.nonzero(region.in_omega(form.coords, mesh.domain))[0]
    if keep.size == 0:
        raise ValueError(f"omega {region.describe_omega()} contains no mesh node: mesh too coarse")
    K = form.K[keep][:, keep].tocsr()
    M = form.M[keep][:, keep].tocsr()
    return replace(form, K=K, M=M, active_nodes=form.active_nodes[keep], label=form.label + " | D")


@dataclass(frozen=True, eq=False)
class Cutoff:
    """Nodal values of a cutoff function, 0 <= chi <= 1."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
            raise ValueError("cutoff values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    def __le__(self, other: "Cutoff") -> bool:
        return bool(np.all(self.values <= other.values))


def truncated_form(form: FormPair, chi: Cutoff | np.ndarray) -> sp.csr_matrix:
    """Matrix of the truncated energy ``E(chi phi, phi) - E(chi, phi^2)/2``.

    Products are nodewise. The closed form is
    ``(D K + K D)/2 - diag(K chi)/2`` with ``D = diag(chi)``.
    """
    c = chi.values if isinstance(chi, Cutoff) else np.asarray(chi, dtype=float)
    if c.shape != (form.n_dofs,):
        raise ValueError(f"cutoff has {c.size} values for {form.n_dofs} dofs")
    D = sp.diags(c)
    Kc = 0.5 * (D @ form.K + form.K @ D) - 0.5 * sp.diags(form.K @ c)
    return Kc.tocsr()


def pinned_dofs(form: FormPair, region: RegionSpec) -> np.ndarray:
    """Dofs where every admissible cutoff must vanish.

    A cutoff below the indicator of omega vanishes at points outside the
    closure of omega. A boundary node is pinned as well when it is joined to
    the exterior by an element of positive stiffness: there the form forces
    continuity, so a nonzero value would leak outside omega. Across an element
    of zero stiffness nothing ties the two ends together and the boundary
    node keeps the freedom of its interior side.
    """
    mesh = form.mesh
    x = form.coords
    pinned = ~region.in_closure(x, mesh.domain)
    boundary = region.on_boundary(x, mesh.domain)
    rows, cols, w = element_weights(form)
    mids = 0.5 * (x[rows] + x[cols])
    outside = ~region.in_omega(mids, mesh.domain)
    leak = outside & (w > 0)
    for i in np.concatenate([rows[leak], cols[leak]]):
        if boundary[i]:
            pinned[i] = True
    return pinned


def _pinned_distance(form: FormPair, region: RegionSpec) -> np.ndarray:
    pinned = pinned_dofs(form, region)
    x = form.coords
    if not pinned.any():
        return np.full(form.n_dofs, np.inf)
    p = np.sort(x[pinned])
    j = np.clip(np.searchsorted(p, x), 1, p.size - 1) if p.size > 1 else np.zeros(x.size, dtype=int)
    d = np.abs(x - p[j])
    if p.size > 1:
        d = np.minimum(d, np.abs(x - p[j - 1]))
    d[pinned] = 0.0
    return d


def plateau_cutoff(form: FormPair, region: RegionSpec, delta: float) -> Cutoff:
    """Piecewise-linear plateau: 0 on pinned dofs, rising to 1 over ``delta``."""
    return Cutoff(np.clip(_pinned_distance(form, region) / delta, 0.0, 1.0))


def plateau_schedule(form: FormPair, region: RegionSpec, steps: int = NEUMANN_MAX_STEPS) -> Iterator[Cutoff]:
    """Increasing cutoffs with margins ``delta_n = L 2^-n``, n = 0, 1, ..."""
    lo, hi = form.mesh.domain
    dist = _pinned_distance(form, region)
    for n in range(steps):
        yield Cutoff(np.clip(dist / ((hi - lo) * 0.5**n), 0.0, 1.0))


class NeumannConvergenceError(RuntimeError):
    def __init__(self, message: str, last: sp.csr_matrix, previous: sp.csr_matrix | None):
        super().__init__(message)
        self.last = last
        self.previous = previous


def neumann_form(
    form: FormPair,
    region: RegionSpec,
    schedule: Iterable[Cutoff] | None = None,
    tol: float = NEUMANN_TOL,
    max_steps: int = NEUMANN_MAX_STEPS,
) -> FormPair:
    """Neumann form as the monotone limit of truncated forms.

    Iterates ``K_chi`` along an increasing cutoff schedule (default: plateau
    cutoffs with halving margins) and stops once the Frobenius change drops
    below ``tol``. The mass matrix is unchanged.
    """
    region.validate(form.mesh.domain)
    cutoffs = schedule if schedule is not None else plateau_schedule(form, region, max_steps)
    pinned = pinned_dofs(form, region)
    prev_chi = None
    prev = older = None
    steps = 0
    for chi in itertools.islice(cutoffs, max_steps):
        if np.any(chi.values[pinned] > 0):
            raise ValueError("cutoff does not vanish where the indicator of omega does")
        if prev_chi is not None and not prev_chi <= chi:
            raise ValueError(f"cutoff schedule is not increasing at step {steps}")
        Kc = truncated_form(form, chi)
        steps += 1
        if prev is not None and spla.norm(Kc - prev) < tol:
            return replace(form, K=Kc, label=form.label + " | N")
        older, prev, prev_chi = prev, Kc, chi
    if prev is None:
        raise ValueError("empty cutoff schedule")
    raise NeumannConvergenceError(f"Neumann limit not reached in {steps} steps", prev, older)


def split_assembly(mesh: Mesh, coeff: CoefficientField, cuts: Sequence[float], lumped: bool = True) -> FormPair:
    """Free assembly with the mesh torn apart at ``cuts``.

    Each cut node is duplicated, one copy per side, and no element couples
    the pieces: the direct sum of independent Neumann problems. The returned
    form is not embedded (``active_nodes`` repeats the cut nodes).
    """
    c = coeff.evaluate(mesh)
    idx = sorted(mesh.node_index(p) for p in cuts)
    if any(i is None for i in idx):
        raise ValueError("cut points must be mesh nodes")
    bounds = [0, *idx, mesh.n_nodes - 1]
    blocks_K, blocks_M, nodes = [], [], []
    for a, b in zip(bounds[:-1], bounds[1:]):
        sub = Mesh(mesh.nodes[a : b + 1]) if b - a >= 2 else None
        if sub is None:
            raise ValueError("each piece needs at least two elements")
        f = assemble_elliptic(sub, c[a:b], lumped=lumped)
        blocks_K.append(f.K)
        blocks_M.append(f.M)
        nodes.append(np.arange(a, b + 1))
    K = sp.block_diag(blocks_K, format="csr")
    M = sp.block_diag(blocks_M, format="csr")
    return FormPair(K, M, mesh, np.concatenate(nodes), local=True, lumped=lumped, label=coeff.describe() + " | split")


def export_coo(matrix: sp.spmatrix, path) -> None:
    """Write ``row col value`` lines, one per stored nonzero."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.12g}\n")
