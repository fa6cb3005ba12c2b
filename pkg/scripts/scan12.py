"""12-qubit PPA (one electron reset qubit) at 300 K, 77 K and 4.2 K.

The electron Larmor frequency defaults to 9.7 GHz.  ``--iterations`` sets
the curve length; the asymptotes at 77 K and 300 K need millions of
iterations, which the compiled merge kernel handles in about a minute.
"""

import argparse
from pathlib import Path

from hbac.cli import rows_to_csv
from hbac.core import SystemShape
from hbac.limits import epsilon_max
from hbac.ppa import run_ppa_12qubit_scan


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--temperatures", type=float, nargs="+", default=[300.0, 77.0, 4.2])
    ap.add_argument("--frequency", type=float, default=9.7e9)
    ap.add_argument("--iterations", type=int, default=1000)
    ap.add_argument("--record-every", type=int, default=1)
    ap.add_argument("--out", default="out/scan12")
    args = ap.parse_args()

    rows = run_ppa_12qubit_scan(args.temperatures, args.frequency, args.iterations, record_every=args.record_every)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scan12.csv").write_text(rows_to_csv(rows, ["temperature", "eps_b", "iteration", "target_polarization"]))
    shape = SystemShape.from_qubits(12)
    for T in args.temperatures:
        last = [r for r in rows if r["temperature"] == T][-1]
        print(
            f"T={T:g} K  eps_b={last['eps_b']:.4g}  after {last['iteration']} iterations "
            f"{last['target_polarization']:.6f}  limit {epsilon_max(shape, last['eps_b']):.6f}"
        )


if __name__ == "__main__":
    main()
