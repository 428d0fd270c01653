"""Map the phase diagram of the two-constraint power family.

Scans a grid of target pairs (v1, v2) for POWERS[1,2], classifies each
into INADMISSIBLE / INTERIOR_S1 / EXTRANEOUS, and writes a plot-ready
CSV together with the two dividing curves: the admissibility floor
g1(v1) = v1^2 and the condensation boundary g2(v1) = 2 v1^2.

Run:  python3 demos/phase_portrait.py [out.csv]
"""

import csv
import sys

import math

import numpy as np

from microshell import dual_solver as dual
from microshell import observables as obs
from microshell import rate_functions as rf


def main(out_path="demo_phase_portrait.csv"):
    oset = obs.power_set([1, 2])
    v1s = np.linspace(0.5, 2.0, 7)
    v2s = np.linspace(0.25, 6.0, 12)
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["v1", "v2", "regime", "g1", "g2", "rate_value"])
        for v1 in v1s:
            for v2 in v2s:
                rep = dual.classify(oset, (float(v1), float(v2)))
                if rep.regime == "INADMISSIBLE":
                    rate = ""
                else:
                    val = rf.rate_I(oset, (float(v1), float(v2))).value
                    rate = "inf" if math.isinf(val) else f"{val:.6f}"
                w.writerow([
                    f"{v1:.4f}", f"{v2:.4f}", rep.regime,
                    f"{v1 * v1:.6f}", f"{2 * v1 * v1:.6f}", rate,
                ])
    print(f"wrote {out_path}")
    print("floor:    v2 = v1^2   (below: empty shells)")
    print("boundary: v2 = 2 v1^2 (above: surplus condenses on one site)")


if __name__ == "__main__":
    main(*sys.argv[1:])
