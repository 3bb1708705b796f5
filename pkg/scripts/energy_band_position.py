"""Where sqrt(n) ||h_n||^2 sits relative to the 1/13 and 1/3 band constants.

Prints the ratio sqrt(n) ||h_n||^2 / sqrt(E[1/c] / E[cbar]) along dyadic n.
The local limit theorem together with ||h_n||^2 = h_2n(0) predicts the limit
1/sqrt(2 pi) ~ 0.3989 for this ratio; the band constants are 1/13 ~ 0.0769
and 1/3 ~ 0.3333.

    python3 scripts/energy_band_position.py > bands.csv
"""

import argparse
import csv
import math
import sys

from cwlab import environment as E
from cwlab import limits as L

ENVS = {
    "constant": E.constant(1),
    "periodic": E.periodic([1, 2]),
    "periodic3": E.periodic([1, 5, 0.2]),
    "lognormal": E.iid_lognormal(0, 1, seed=1),
    "markov": E.markov([0.5, 3], [[0.7, 0.3], [0.4, 0.6]], seed=1),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--jmax", type=int, default=14)
    args = ap.parse_args()
    schedule = [2**j for j in range(2, args.jmax + 1)]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["env", "n", "ratio", "predicted_limit", "lower_band", "upper_band"])
    for name, spec in ENVS.items():
        env = E.build_env(spec)
        tg = L.targets(env)
        for r in L.verify_energy_bounds(env, schedule, tg=tg):
            if r.theorem == "energy_lower":
                w.writerow([name, r.n, f"{r.observed / tg.ratio_root:.6f}", f"{1 / math.sqrt(2 * math.pi):.6f}",
                            f"{1 / 13:.6f}", f"{1 / 3:.6f}"])


if __name__ == "__main__":
    main()
