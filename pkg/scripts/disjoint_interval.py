"""Omega = (-1,0) U (0,1) inside (-1,1): does the Neumann semigroup decouple?

Compares S^N with the torn-apart two-interval semigroup on |x| and on x_+.
The even function |x| cannot tell the two apart; x_+ can.
"""

from dclab.scenarios import run_disjoint_interval


def main():
    rep = run_disjoint_interval()
    for name in ("abs", "xplus"):
        gaps = [r["value"] for r in rep.records if r["operation"] == "gap_SN_split_inf" and r["function"] == name]
        print(f"{name:6s} sup gap per level: " + " ".join(f"{g:.3e}" for g in gaps))
    for name, ok in rep.checks.items():
        print(f"  {name:22s} {'ok' if ok else 'FAILED'}")


if __name__ == "__main__":
    main()
