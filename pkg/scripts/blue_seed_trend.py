"""Empirical P(A_B fails) per block side L at nu = L^-6, with per-clause failure counts."""
import argparse
import json

from sirlattice.harness import wilson
from sirlattice.lattice import RngStream
from sirlattice.trials import blue_seed_trial

CLAUSES = ("A1", "A2", "A3", "A4", "A5")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--L", type=int, nargs="+", default=[8, 16, 32])
    ap.add_argument("--alpha", nargs="+", default=["0.005", "0.01", "0.05"])
    ap.add_argument("--blocks", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    for alpha in a.alpha:
        for L in a.L:
            rows = [blue_seed_trial(RngStream(a.seed, (L, i)), L, alpha=alpha) for i in range(a.blocks)]
            k = sum(not r["holds"] for r in rows)
            print(json.dumps({"alpha": alpha, "L": L, "p_fail": k / a.blocks, "ci": wilson(k, a.blocks),
                              "clauses": {c: sum(c in r["failing"].split("+") for r in rows) for c in CLAUSES},
                              "a5_min_mean": sum(r["a5_min"] for r in rows) / a.blocks}))


if __name__ == "__main__":
    main()
