import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dclab.forms import (
    Cutoff,
    NeumannConvergenceError,
    assemble_elliptic,
    export_coo,
    neumann_form,
    pinned_dofs,
    plateau_cutoff,
    restrict_dirichlet,
    split_assembly,
    truncated_form,
)
from dclab.mesh import CoefficientField, Mesh, build_mesh
from dclab.region import RegionSpec
from oracles import dense_lumped_mass, dense_stiffness, truncated_energy_elementwise

ONE = CoefficientField.constant(1.0)


def test_two_element_laplacian():
    f = assemble_elliptic(build_mesh([0, 1], 2), ONE)
    np.testing.assert_allclose(f.K.toarray(), 2 * np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]]))
    np.testing.assert_allclose(f.M.toarray(), np.diag([0.25, 0.5, 0.25]))


def test_zero_coefficient_gives_zero_energy():
    f = assemble_elliptic(build_mesh([0, 1], 7), CoefficientField.constant(0.0))
    assert f.K.nnz == 0 or np.all(f.K.data == 0)
    assert f.energy(np.random.default_rng(0).normal(size=8)) == 0.0


def test_matches_dense_oracle_on_irregular_mesh():
    rng = np.random.default_rng(3)
    x = np.sort(np.r_[0.0, rng.uniform(0, 1, 9), 1.0])
    c = rng.uniform(0, 3, x.size - 1)
    f = assemble_elliptic(Mesh(x), CoefficientField.table(c))
    np.testing.assert_allclose(f.K.toarray(), dense_stiffness(x, c), atol=1e-12)
    np.testing.assert_allclose(f.M.toarray(), dense_lumped_mass(x), atol=1e-15)


def test_consistent_mass_integrates_products():
    m = build_mesh([0, 1], 50)
    f = assemble_elliptic(m, ONE, lumped=False)
    x = m.nodes
    # P1 interpolant of x is exact: int x^2 = 1/3
    assert x @ (f.M @ x) == pytest.approx(1 / 3, rel=1e-12)


def test_quadrature_energy_converges_at_second_order():
    errs = []
    for n in (32, 64, 128, 256):
        m = build_mesh([0, 1], n)
        f = assemble_elliptic(m, CoefficientField.power_law(2))
        errs.append(abs(f.energy(m.nodes) - 1 / 3))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates > 1.9)


def test_smooth_energy_second_order_for_sine():
    errs = []
    for n in (20, 40, 80, 160):
        m = build_mesh([-1, 1], n)
        f = assemble_elliptic(m, ONE)
        errs.append(abs(f.energy(np.sin(np.pi * m.nodes)) - np.pi**2))
    assert np.all(np.log2(np.array(errs[:-1]) / errs[1:]) > 1.9)


def test_negative_table_rejected():
    with pytest.raises(ValueError):
        assemble_elliptic(build_mesh([0, 1], 3), np.array([1.0, -1.0, 1.0]))


def test_kernel_contains_constants():
    f = assemble_elliptic(build_mesh([-1, 1], 33), CoefficientField.power_law(1.5))
    assert np.abs(f.K @ np.ones(f.n_dofs)).max() < 1e-13


# --- Dirichlet restriction ---------------------------------------------------


def test_restrict_full_open_interval_keeps_interior():
    f = assemble_elliptic(build_mesh([0, 1], 4), ONE)
    d = restrict_dirichlet(f, RegionSpec.from_strings("(0,1)"))
    np.testing.assert_array_equal(d.active_nodes, [1, 2, 3])


def test_restrict_punctured_decouples_at_zero():
    m = build_mesh([-1, 1], 8)
    d = restrict_dirichlet(assemble_elliptic(m, ONE), RegionSpec.from_strings("[-1,0)U(0,1]"))
    assert m.node_index(0.0) not in d.active_nodes
    K = d.K.toarray()
    left = d.coords < 0
    assert np.all(K[np.ix_(left, ~left)] == 0)


def test_restrict_whole_space_is_identity():
    f = assemble_elliptic(build_mesh([-1, 1], 8), ONE)
    d = restrict_dirichlet(f, RegionSpec.from_strings("X"))
    assert (d.K - f.K).nnz == 0 and d.n_dofs == f.n_dofs


def test_restrict_rejects_coarse_mesh_and_offgrid_boundary():
    f = assemble_elliptic(build_mesh([0, 1], 2), ONE)
    with pytest.raises(ValueError, match="not a mesh node"):
        restrict_dirichlet(f, RegionSpec.from_strings("(0,0.3)"))
    with pytest.raises(ValueError, match="no mesh node"):
        restrict_dirichlet(f, RegionSpec.from_strings("(0,0.5)"))


def test_embed_restrict_roundtrip():
    f = assemble_elliptic(build_mesh([-1, 1], 8), ONE)
    d = restrict_dirichlet(f, RegionSpec.from_strings("(0,1]"))
    v = np.arange(d.n_dofs, dtype=float)
    full = d.embed(v)
    assert full.shape == (9,) and np.all(full[:5] == 0)
    np.testing.assert_array_equal(d.restrict(full), v)


# --- truncated forms -----------------------------------------------------------


def _rand_form(seed, n=12):
    rng = np.random.default_rng(seed)
    x = np.sort(np.r_[0.0, rng.uniform(0, 1, n - 2), 1.0])
    c = rng.uniform(0, 2, n - 1) * (rng.random(n - 1) > 0.2)
    return x, c, assemble_elliptic(Mesh(x), CoefficientField.table(c))


def test_truncation_zero_and_one():
    x, c, f = _rand_form(1)
    assert np.abs(truncated_form(f, np.zeros(f.n_dofs)).toarray()).max() == 0
    np.testing.assert_allclose(truncated_form(f, np.ones(f.n_dofs)).toarray(), f.K.toarray(), atol=1e-13)


def test_truncation_hat_cutoff_on_linear_function():
    n = 400
    m = build_mesh([0, 1], n)
    f = assemble_elliptic(m, ONE)
    chi = np.maximum(0, 1 - np.abs(m.nodes - 0.5) / 0.25)
    val = m.nodes @ (truncated_form(f, chi) @ m.nodes)
    assert val == pytest.approx(0.25, rel=1e-12)  # int of the hat


def test_truncation_matches_elementwise_formula():
    x, c, f = _rand_form(5)
    rng = np.random.default_rng(6)
    for _ in range(20):
        chi, phi = rng.random(x.size), rng.normal(size=x.size)
        got = phi @ (truncated_form(f, chi) @ phi)
        assert got == pytest.approx(truncated_energy_elementwise(x, c, chi, phi), rel=1e-12, abs=1e-14)


def test_truncation_matches_bilinear_definition():
    x, c, f = _rand_form(7)
    rng = np.random.default_rng(8)
    chi, phi = rng.random(x.size), rng.normal(size=x.size)
    direct = (chi * phi) @ (f.K @ phi) - 0.5 * chi @ (f.K @ (phi * phi))
    assert phi @ (truncated_form(f, chi) @ phi) == pytest.approx(direct, rel=1e-12)


def test_truncation_dimension_mismatch():
    _, _, f = _rand_form(2)
    with pytest.raises(ValueError):
        truncated_form(f, np.ones(f.n_dofs + 1))


def test_cutoff_range_checked():
    with pytest.raises(ValueError):
        Cutoff(np.array([0.5, 1.2]))


unit = st.floats(0, 1, allow_nan=False)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 10_000), phi=arrays(np.float64, 12, elements=st.floats(-5, 5)), chi1=arrays(np.float64, 12, elements=unit), chi2=arrays(np.float64, 12, elements=unit))
def test_truncation_inequalities(seed, phi, chi1, chi2):
    x, c, f = _rand_form(seed)
    lo, hi = np.minimum(chi1, chi2), np.maximum(chi1, chi2)
    E = f.energy(phi)
    scale = 1e-12 * max(E, 1.0)
    e_lo = phi @ (truncated_form(f, lo) @ phi)
    e_hi = phi @ (truncated_form(f, hi) @ phi)
    assert e_lo >= -scale
    assert e_hi <= hi.max() * E + scale
    assert e_lo <= e_hi + scale
    clamped = np.clip(phi, 0, 1)
    assert clamped @ (truncated_form(f, hi) @ clamped) <= e_hi + scale


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), split=st.integers(2, 9))
def test_locality_disjoint_supports(seed, split):
    x, c, f = _rand_form(seed)
    rng = np.random.default_rng(seed)
    phi = np.zeros(x.size)
    psi = np.zeros(x.size)
    phi[:split - 1] = rng.normal(size=split - 1)
    psi[split + 1:] = rng.normal(size=x.size - split - 1)
    assert phi @ (f.K @ psi) == 0.0


# --- Neumann forms -----------------------------------------------------------


def test_neumann_on_whole_space_is_full_form():
    f = assemble_elliptic(build_mesh([-1, 1], 32), CoefficientField.power_law(2))
    n = neumann_form(f, RegionSpec.from_strings("X"))
    assert abs(n.K - f.K).max() < 1e-12


def test_neumann_punctured_keeps_coupling():
    m = build_mesh([-1, 1], 128)
    f = assemble_elliptic(m, ONE)
    n = neumann_form(f, RegionSpec.from_strings("[-1,0)U(0,1]"))
    for g, exact in ((lambda x: x, 2.0), (np.abs, 2.0), (lambda x: x**2, 8 / 3)):
        phi = g(m.nodes)
        assert abs(n.energy(phi) - exact) <= 2 * m.h


def test_neumann_decoupled_left_half_equals_full():
    m = build_mesh([-8, 8], 256)
    f = assemble_elliptic(m, CoefficientField.piecewise([0, 1], [0]))
    n = neumann_form(f, RegionSpec.from_strings("(0,8]"))
    assert abs(n.K - f.K).max() == 0


def test_neumann_half_interval_drops_exterior():
    m = build_mesh([-1, 1], 64)
    f = assemble_elliptic(m, ONE)
    r = RegionSpec.from_strings("(0,1]")
    n = neumann_form(f, r)
    out = m.nodes < 0
    K = n.K.toarray()
    assert np.all(K[out] == 0)
    assert pinned_dofs(f, r)[m.node_index(0.0)]
    # interior energy of a function supported strictly inside omega is unchanged
    phi = np.where(m.nodes > 0.1, np.sin(np.pi * m.nodes) ** 2, 0.0)
    assert n.energy(phi) == pytest.approx(f.energy(phi), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.sampled_from([0.0, 0.5, 1.0, 2.0]))
def test_dirichlet_energy_contained_in_neumann(seed, alpha):
    m = build_mesh([-1, 1], 40)
    f = assemble_elliptic(m, CoefficientField.power_law(alpha))
    r = RegionSpec.from_strings("(0,1]")
    n = neumann_form(f, r)
    rng = np.random.default_rng(seed)
    phi = np.where(m.nodes > 0.05 + 1e-12, rng.normal(size=m.n_nodes), 0.0)
    assert n.energy(phi) == pytest.approx(f.energy(phi), rel=1e-12, abs=1e-12)


def test_neumann_rejects_nonmonotone_schedule():
    m = build_mesh([-1, 1], 16)
    f = assemble_elliptic(m, ONE)
    r = RegionSpec.from_strings("(0,1]")
    sched = [plateau_cutoff(f, r, 0.25), plateau_cutoff(f, r, 1.0)]
    with pytest.raises(ValueError, match="not increasing"):
        neumann_form(f, r, schedule=sched)


def test_neumann_rejects_cutoff_leaking_outside():
    m = build_mesh([-1, 1], 16)
    f = assemble_elliptic(m, ONE)
    with pytest.raises(ValueError, match="vanish"):
        neumann_form(f, RegionSpec.from_strings("(0,1]"), schedule=[Cutoff(np.ones(17))])


def test_neumann_nonconvergence_reports_iterates():
    m = build_mesh([-1, 1], 64)
    f = assemble_elliptic(m, ONE)
    r = RegionSpec.from_strings("(0,1]")
    with pytest.raises(NeumannConvergenceError) as info:
        neumann_form(f, r, max_steps=3)
    assert info.value.last is not None and info.value.previous is not None


def test_split_assembly_duplicates_cut():
    m = build_mesh([-1, 1], 8)
    s = split_assembly(m, ONE, [0.0])
    assert s.n_dofs == 10 and not s.is_embedded
    assert np.abs(s.K @ np.ones(10)).max() < 1e-13
    with pytest.raises(ValueError):
        s.embed(np.zeros(10))


def test_export_coo(tmp_path):
    f = assemble_elliptic(build_mesh([0, 1], 2), ONE)
    p = tmp_path / "k.txt"
    export_coo(f.K, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "0 0 2" and lines[1] == "0 1 -2"
    assert len(lines) == 7
    back = np.loadtxt(p)
    A = sp.coo_matrix((back[:, 2], (back[:, 0].astype(int), back[:, 1].astype(int))), shape=(3, 3))
    np.testing.assert_allclose(A.toarray(), f.K.toarray())
