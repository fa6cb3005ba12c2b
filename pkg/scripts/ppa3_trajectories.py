"""Target polarization of 3-qubit PPA versus iteration for several bath polarizations."""

import argparse
from pathlib import Path

from hbac.cli import rows_to_csv
from hbac.core import SystemShape
from hbac.limits import epsilon_max
from hbac.ppa import PpaConfig, run_ppa


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.01, 0.05, 0.1])
    ap.add_argument("--iterations", type=int, default=40)
    ap.add_argument("--out", default="out/ppa3")
    args = ap.parse_args()

    shape = SystemShape.from_qubits(3)
    rows = []
    for eps in args.eps:
        trace = run_ppa(PpaConfig(shape, eps, max_iterations=args.iterations, convergence_epsilon=0.0))
        for t, pol in enumerate(trace.compress_target, start=1):
            rows.append({"eps_b": eps, "iteration": t, "target_polarization": float(pol), "ratio": float(pol / eps)})
        print(f"eps_b={eps:g}: final {trace.final_polarization:.6g}, limit {epsilon_max(shape, eps):.6g}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ppa3.csv").write_text(rows_to_csv(rows, ["eps_b", "iteration", "target_polarization", "ratio"]))


if __name__ == "__main__":
    main()
