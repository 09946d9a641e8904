"""SSP containment on random grid instances and the exact multiscale trials."""
import argparse
import json

from sirlattice.lattice import RngStream
from sirlattice.trials import multiscale_trial, ssp_containment_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=200)
    ap.add_argument("--radius", type=int, default=100)
    ap.add_argument("--kappa", type=float, default=4001.0)
    ap.add_argument("--p", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    rows = [ssp_containment_trial(RngStream(a.seed, (0, i)), a.radius, a.kappa, a.p) for i in range(a.instances)]
    print(json.dumps({"instances": len(rows), "eligible": sum(r["eligible"] for r in rows),
                      "violations": sum(r["violation"] for r in rows),
                      "audit_violations": sum(r["audit_violations"] for r in rows)}))
    for trial in ("nested", "locality"):
        v = sum(multiscale_trial(RngStream(a.seed, (1, i)), trial)["violation"] for i in range(a.instances))
        print(json.dumps({"trial": trial, "runs": a.instances, "violations": v}))


if __name__ == "__main__":
    main()
