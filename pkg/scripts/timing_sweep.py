"""Wall time of an H-orthogonal fit as n grows at fixed d and k (reported, not asserted)."""
import argparse
import csv
import sys
from pathlib import Path

from meponmf.core import SolverConfig
from meponmf.datagen import GammaSpec, gamma_synthetic
from meponmf.facade import fit
from meponmf.metrics import timed


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    ap.add_argument("--d", type=int, default=10)
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--sizes", default="125,250,500,1000,2000")
    ap.add_argument("--reps", type=int, default=3)
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for n in (int(v) for v in args.sizes.split(",")):
        X = gamma_synthetic(GammaSpec(args.d, n, seed=1))
        res, secs = timed(fit, X, SolverConfig(k_max=args.k), reps=args.reps)
        rows.append((n, secs, res.metrics.recon_error_pct))
        print(f"n={n:6d}  T={secs:7.3f}s  E={res.metrics.recon_error_pct:.3f}%")
    with open(out / "timing_sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "T_sec", "E_pct"])
        w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
