"""Boundary capacity of (0,1] under c = |x|^alpha for several exponents.

Prints the per-level extrapolated capacity and the verdict for each alpha.
"""

import argparse

from dclab.capacity import refinement_sweep
from dclab.mesh import CoefficientField, build_mesh
from dclab.forms import assemble_elliptic
from dclab.region import RegionSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alphas", default="0,0.5,1,1.5,2,3")
    ap.add_argument("--levels", default="128,256,512,1024")
    args = ap.parse_args()
    levels = [int(v) for v in args.levels.split(",")]
    region = RegionSpec.from_strings("(0,1]", "boundary")
    print(f"{'alpha':>6} {'verdict':>13} {'limit':>12}  per level")
    for alpha in (float(a) for a in args.alphas.split(",")):
        coeff = CoefficientField.power_law(alpha)
        res = refinement_sweep(lambda n: assemble_elliptic(build_mesh([-1, 1], n, breakpoints=[0.0]), coeff), region, levels)
        per = " ".join(f"{v:.4g}" for v in res.level_values)
        print(f"{alpha:6g} {res.verdict:>13} {res.limit:12.6g}  {per}")


if __name__ == "__main__":
    main()
