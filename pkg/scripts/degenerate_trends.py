"""Pass rates of the dyadic trend test in the two degenerate classes.

For iid_pareto(alpha) (E[cbar] infinite) the return series sqrt(2n) P_0[S_2n = 0],
the sup-kernel series and sqrt(2n) * modulus should vanish; for iid_power(beta)
(E[1/c] infinite) the return series should blow up.  Prints one CSV row per
seed and a pass-rate summary on stderr.

    python3 scripts/degenerate_trends.py --seeds 1-40 --jmax 14 > trends.csv
"""

import argparse
import csv
import sys

from cwlab import environment as E
from cwlab import limits as L


def seed_range(text):
    lo, _, hi = text.partition("-")
    return range(int(lo), int(hi or lo) + 1)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=seed_range, default=seed_range("1-20"))
    ap.add_argument("--jmin", type=int, default=6)
    ap.add_argument("--jmax", type=int, default=14)
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--beta", type=float, default=0.5)
    args = ap.parse_args()
    schedule = [2**j for j in range(args.jmin, args.jmax + 1)]

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["kind", "seed", "series", "passed", "monotone_last4", "last_over_first", "cbar0"])
    passes: dict[str, list[bool]] = {}
    for seed in args.seeds:
        for spec in (E.iid_pareto(args.alpha, seed=seed), E.iid_power(args.beta, seed=seed)):
            env = E.build_env(spec)
            run = L.kernel_for(env, schedule)
            series = {"return": [r.observed for r in L.verify_llt(env, 0, schedule, run)]}
            pareto = spec.kind == "iid_pareto"
            if pareto:
                series["sup_bound"] = [r.observed for r in L.verify_sup_bound(env, schedule, run)]
                series["modulus"] = [r.observed for r in L.verify_regularity(env, 0, schedule, (1.0,), run)
                                     if r.theorem == "regularity_vanishing"]
            for name, vals in series.items():
                direction = "decreasing" if pareto else "increasing"
                factor = None if name == "sup_bound" else 2.0
                t = L.trend_test(vals, direction, factor=factor)
                passes.setdefault(f"{spec.kind}/{name}", []).append(t.passed)
                w.writerow([spec.kind, seed, name, t.passed, t.monotone, f"{t.ratio:.6g}", f"{env.cbar(0):.6g}"])
            sys.stdout.flush()
    for key, vals in passes.items():
        print(f"{key}: {sum(vals)}/{len(vals)} seeds pass", file=sys.stderr)


if __name__ == "__main__":
    main()
