"""Gamma benchmark: MEP-ONMF (both orientations, both variants) against MU-NMF.

Writes one CSV per orientation with per-method means over ``--reps`` runs.
"""
import argparse
import sys
from pathlib import Path

from meponmf.cli import main as cli


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--k", type=int, default=20)
    ap.add_argument("--variants", default="optimal,capacity")
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for orientation in ("w", "h"):
        target = out / f"gamma_benchmark_{orientation}.csv"
        code = cli(["bench", "--gamma-d", "10", "--gamma-n", "1000", "--k", str(args.k),
                    "--reps", str(args.reps), "--orthogonal", orientation,
                    "--variants", args.variants, "--out", str(target)])
        if code:
            return code
        print(f"# {orientation}-orthogonal")
        print(target.read_text(), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
