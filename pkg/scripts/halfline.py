"""Half-line construction: no stiffness left of 0, free Laplacian right of 0.

S coincides with its Neumann version on (0, 8] while the Dirichlet version
differs, and the capacity of {0} relative to (0, 8] tends to tanh(8).
"""

import argparse

from dclab.scenarios import run_halfline_counterexample


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", default="512,1024,2048,4096")
    args = ap.parse_args()
    rep = run_halfline_counterexample([int(v) for v in args.levels.split(",")])
    for lvl, h in zip(rep.levels, rep.h):
        row = {r["operation"]: r["value"] for r in rep.records if r["level"] == lvl and r.get("t") in (None, 0.1)}
        print(f"N={lvl:5d} h={h:.3e}  cap={row['capacity']:.6f}  |S-S^N|={row['gap_S_SN']:.2e}  |S-S^D|={row['gap_S_SD']:.4f}")
    print(f"extrapolated capacity {rep.conditions['capacity']['value']:.8f}")
    for name, ok in rep.checks.items():
        print(f"  {name:14s} {'ok' if ok else 'FAILED'}")
    print(f"{rep.elapsed:.1f}s")


if __name__ == "__main__":
    main()
