"""Electron polarization gain of one pulsed-ENDOR PPA round versus electron T1."""

import argparse
import json
from dataclasses import replace
from pathlib import Path

from hbac.cli import endor_inputs, rows_to_csv
from hbac.opensys import run_endor_ppa_round


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/endor_43K.json")
    ap.add_argument("--t1", type=float, nargs="+", default=[15e-6, 50e-6, 150e-6, 500e-6, 1.5e-3, 5e-3])
    ap.add_argument("--out", default="out/endor")
    args = ap.parse_args()

    params, relax, opts = endor_inputs(json.loads(Path(args.config).read_text()))
    rows = []
    for t1 in args.t1:
        r = replace(relax, T1=(t1,) + relax.T1[1:], T2=(min(relax.T2[0], 2 * t1),) + relax.T2[1:])
        if r.T2_star > r.T2[0]:
            r = replace(r, T2_star=r.T2[0])
        gain = run_endor_ppa_round(params, r, options=opts).gain
        rows.append({"T1e": t1, "gain": gain})
        print(f"T1e={t1:.3g} s  gain={gain:.4f}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "endor_t1_sweep.csv").write_text(rows_to_csv(rows, ["T1e", "gain"]))


if __name__ == "__main__":
    main()
