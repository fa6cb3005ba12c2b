"""Maximum target polarization versus bath polarization for n = 3..8."""

import argparse
from pathlib import Path

import numpy as np

from hbac.cli import rows_to_csv
from hbac.limits import epsilon_max_curve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--num", type=int, default=101)
    ap.add_argument("--out", default="out/limits")
    args = ap.parse_args()

    rows = epsilon_max_curve(range(3, 9), np.linspace(0, 1, args.num))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "limits.csv").write_text(rows_to_csv(rows, ["n", "m", "d", "eps_b", "eps_max", "delta_max"]))
    for n in range(3, 9):
        r = next(r for r in rows if r["n"] == n and abs(r["eps_b"] - 0.1) < 1e-12)
        print(f"n={n}: eps_max(0.1) = {r['eps_max']:.6f}")


if __name__ == "__main__":
    main()
