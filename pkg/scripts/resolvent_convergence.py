"""First-order convergence of (I + t/n H)^-n 1 to S_t 1 on the (0,1) Dirichlet Laplacian."""

import numpy as np

from dclab.extrapolate import fit_power
from dclab.forms import assemble_elliptic, restrict_dirichlet
from dclab.mesh import CoefficientField, build_mesh
from dclab.region import RegionSpec
from dclab.semigroup import apply_resolvent_power, apply_semigroup_eig

t = 0.1
F = restrict_dirichlet(assemble_elliptic(build_mesh([0, 1], 64), CoefficientField.constant()), RegionSpec.from_strings("(0,1)"))
phi = np.ones(F.n_dofs)
ref = apply_semigroup_eig(F, t, phi)
ns = [8 * 2**k for k in range(8)]
errs = [np.abs(apply_resolvent_power(F, t, n, phi) - ref).max() for n in ns]
for n, e, prev in zip(ns, errs, [None, *errs]):
    print(f"n={n:5d} err={e:.4e}" + (f" ratio={e / prev:.3f}" if prev else ""))
C, p = fit_power(ns, errs)
print(f"err ~ {C:.4f} * n^{p:.3f}")
