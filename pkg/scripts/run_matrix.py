"""Run the full verification on every bundled environment kind and print a check table.

    python3 scripts/run_matrix.py --n-max 4096 --seed 1
"""

import argparse

from cwlab import environment as E
from cwlab import limits as L


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-max", type=int, default=4096)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    specs = [
        E.constant(1, seed=args.seed),
        E.periodic([1, 2], seed=args.seed),
        E.iid_lognormal(0, 1, seed=args.seed),
        E.iid_pareto(0.5, seed=args.seed),
        E.iid_power(0.5, seed=args.seed),
        E.markov([0.5, 3], [[0.7, 0.3], [0.4, 0.6]], seed=args.seed),
    ]
    for spec in specs:
        rep = L.verify_environment(E.build_env(spec), L.dyadic_schedule(args.n_max))
        print(f"{spec.label}: {'PASS' if rep.passed else 'FAIL'}")
        for c in rep.checks:
            tag = "pass" if c.passed else ("FAIL" if c.asserted else "info")
            print(f"    {tag:4s} {c.name:28s} {c.detail}")


if __name__ == "__main__":
    main()
