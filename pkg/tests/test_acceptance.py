"""Acceptance criteria 1-13 at their stated tolerances.

Each test prints (and the terminal summary repeats) one PASS/FAIL line.
"""

import math
import time

import pytest

from cwlab import cli
from cwlab import environment as E
from cwlab import heat_kernel as hk
from cwlab import limits as L
from cwlab import walker as W
from conftest import matrix_specs

SEEDS = (1, 2, 3)
MATRIX = [spec for seed in SEEDS for spec in matrix_specs(seed)]
DEGENERATE_SCHEDULE = [2**j for j in range(6, 15)]


@pytest.fixture(scope="module")
def identity_records():
    """Duality (n <= 2000), Green (n <= 1000) and Nash (n <= 500) over the environment matrix."""
    t0 = time.perf_counter()
    out = {spec.label: {r.theorem: r for r in L.verify_identities(E.build_env(spec), 2000, 1000, 500)}
           for spec in MATRIX}
    return out, time.perf_counter() - t0


def test_1_small_n_oracles(criterion):
    t0 = time.perf_counter()
    energies = hk.run_to(E.build_env(E.constant(1)), 0, 2).energies.energies
    per = E.build_env(E.periodic([1, 2]))
    occ = hk.occupation(hk.run_to(per, 0, 2, {2}).snapshots[2], per, 0)
    dt = time.perf_counter() - t0
    err = max(max(abs(e - w) for e, w in zip(energies, (1 / 2, 1 / 4, 3 / 16))), abs(occ - 5 / 9))
    criterion(1, err <= 1e-14 and dt < 1, f"max error {err:.2e} (tol 1e-14), {dt:.3f}s (limit 1s)")


def test_2_energy_return_duality(identity_records, criterion):
    recs, dt = identity_records
    worst = max(r["energy_duality"].observed for r in recs.values())
    criterion(2, worst <= 1e-12 and dt < 60,
              f"max relative error {worst:.2e} over n<=2000, {len(recs)} envs (tol 1e-12); "
              f"identity pass {dt:.1f}s (limit 60s)")


def test_3_green_identity(identity_records, criterion):
    recs, _ = identity_records
    worst = max(r["green_identity"].observed for r in recs.values())
    criterion(3, worst <= 1e-12, f"max relative error {worst:.2e} over n<=1000, {len(recs)} envs (tol 1e-12)")


def test_4_complete_monotonicity(criterion):
    t0 = time.perf_counter()
    worst_neg, worst_rel = math.inf, 0.0
    for spec in MATRIX:
        neg, rel = L.verify_complete_monotonicity(E.build_env(spec), N=200, K=12)
        worst_neg = min(worst_neg, neg.observed)
        worst_rel = max(worst_rel, rel.observed)
    dt = time.perf_counter() - t0
    ok = worst_neg >= -1e-10 and worst_rel <= 1e-10 and dt < 300
    criterion(4, ok, f"min Delta/||h0||^2 = {worst_neg:.2e} (>= -1e-10), table vs direct {worst_rel:.2e} "
                     f"(<= 1e-10), N=200 K=12 on {len(MATRIX)} envs, {dt:.1f}s (limit 300s)")


def test_5_nash_bound(identity_records, criterion):
    recs, _ = identity_records
    worst = min(r["nash"].observed for r in recs.values())
    criterion(5, worst >= -1e-12, f"min gap/||h0||^2 = {worst:.2e} over n<=500 (>= -1e-12)")


def test_6_homogeneous_llt(criterion):
    t0 = time.perf_counter()
    (rec,) = L.verify_llt(E.build_env(E.constant(1)), 0, [10**4])
    dt = time.perf_counter() - t0
    err = abs(rec.observed - math.sqrt(2 / math.pi))
    criterion(6, err < 1e-3 and dt < 60, f"|observed - sqrt(2/pi)| = {err:.2e} at n=1e4 (tol 1e-3), {dt:.1f}s")


def test_7_periodic_llt(criterion):
    env = E.build_env(E.periodic([1, 2]))
    target = 3 / (2 * math.sqrt(math.pi))
    run = L.kernel_for(env, [5000])
    rels = {}
    for x0 in (0, 2):
        (rec,) = L.verify_llt(env, x0, [5000], run)
        assert rec.target == pytest.approx(target, rel=1e-15)
        rels[x0] = abs(rec.observed - target) / target
    criterion(7, max(rels.values()) < 0.01,
              f"relative gap {rels[0]:.2e} at x0=0, {rels[2]:.2e} at x0=2 (tol 1%)")


def _return_series(spec):
    env = E.build_env(spec)
    return [r.observed for r in L.verify_llt(env, 0, DEGENERATE_SCHEDULE)]


@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_8a_pareto_return_probability_vanishes(seed, criterion):
    series = _return_series(E.iid_pareto(0.5, 1, seed=seed))
    t = L.trend_test(series, "decreasing")
    criterion(f"8.pareto.seed{seed}", t.passed, f"iid_pareto(0.5) seed {seed}: {t.describe()}")


def test_8b_power_return_probability_diverges(criterion):
    t0 = time.perf_counter()
    series = _return_series(E.iid_power(0.5, seed=1))
    t = L.trend_test(series, "increasing")
    dt = time.perf_counter() - t0
    criterion("8.power", t.passed, f"iid_power(0.5) seed 1: {t.describe()}, {dt:.1f}s")


def test_9_sup_bound_pareto(criterion):
    env = E.build_env(E.iid_pareto(0.5, 1, seed=1))
    series = [r.observed for r in L.verify_sup_bound(env, DEGENERATE_SCHEDULE)]
    top, var = L.running_max_variation(series)
    bounded = math.isfinite(top) and var < 0.5
    t = L.trend_test(series, "decreasing", factor=None)
    criterion(9, bounded and t.passed,
              f"running max {top:.4g} (variation over last 3 = {var:.2g}); {t.describe()}")


def test_10_escape_probabilities(criterion):
    const = E.build_env(E.constant(1))
    per = E.build_env(E.periodic([1, 2]))
    exact_c = W.escape_probability_exact(const, 2)
    exact_p = W.escape_probability_exact(per, 2)
    mc_c = W.escape_probability_mc(const, 2, 10**6, 1)
    mc_p = W.escape_probability_mc(per, 2, 10**6, 1)
    ok = (exact_c == 0.5 and abs(exact_p - 4 / 9) <= 1e-15 and abs(mc_c.mc - 0.5) <= 0.0025
          and mc_p.z_score <= 5)
    criterion(10, ok, f"constant exact={exact_c!r} mc={mc_c.mc} (z={mc_c.z_score:.2f}); "
                      f"periodic exact={exact_p:.15f} mc={mc_p.mc} (z={mc_p.z_score:.2f})")


def test_11_clt_and_monte_carlo(criterion):
    const = E.build_env(E.constant(1))
    per = E.build_env(E.periodic([1, 2]))
    (kc,) = L.clt_check(const, 10**4)
    (kp,) = L.clt_check(per, 10**4)
    assert kc.metadata["sigma2"] == 1 and kp.metadata["sigma2"] == pytest.approx(8 / 9)
    tv = {name: L.mc_agreement(env, 1000, 10**6, 11).observed for name, env in (("constant", const), ("periodic", per))}
    ok = kc.observed < 0.02 and kp.observed < 0.02 and max(tv.values()) < 5e-3
    criterion(11, ok, f"KS constant={kc.observed:.4g}, periodic={kp.observed:.4g} (tol 0.02); "
                      f"TV constant={tv['constant']:.2e}, periodic={tv['periodic']:.2e} (tol 5e-3)")


@pytest.mark.parametrize("spec", [E.constant(1), E.iid_lognormal(0, 1, seed=1)], ids=["constant", "lognormal"])
def test_12a_regularity_constant_stable(spec, criterion):
    env = E.build_env(spec)
    recs = L.verify_regularity(env, 0, DEGENERATE_SCHEDULE, (0.25, 1.0))
    parts, ok = [], True
    for d in (0.25, 1.0):
        c_hat, var = L.running_max_variation([r.observed for r in recs if r.metadata["delta"] == d])
        ok &= math.isfinite(c_hat) and var < 0.5
        parts.append(f"delta={d:g}: C_hat={c_hat:.4g}, variation={var:.3g}")
    criterion(f"12.{spec.kind}", ok, f"{spec.kind}: " + "; ".join(parts) + " (tol 50%)")


def test_12b_regularity_vanishes_pareto(criterion):
    env = E.build_env(E.iid_pareto(0.5, 1, seed=1))
    recs = L.verify_regularity(env, 0, DEGENERATE_SCHEDULE, (1.0,))
    series = [r.observed for r in recs if r.theorem == "regularity_vanishing"]
    t = L.trend_test(series, "decreasing")
    criterion("12.pareto", t.passed, f"iid_pareto(0.5) seed 1, sqrt(2n) modulus: {t.describe()}")


def test_13_verify_is_byte_reproducible(tmp_path, criterion):
    text = "\n".join([
        "[env]", "kind = iid_lognormal", "m = 0", "s = 1", "seed = 1",
        "[run]", "command = verify", "n_max = 4096",
    ])
    for name in ("a", "b"):
        cli.run(cli.parse_config(text), tmp_path / name)
    a = (tmp_path / "a" / "report.csv").read_bytes()
    b = (tmp_path / "b" / "report.csv").read_bytes()
    criterion(13, a == b and len(a) > 0, f"report.csv identical across two runs ({len(a)} bytes)")


def test_energy_band_position(criterion):
    """Lower band asserted at the largest n; position against the upper band reported."""
    sched = [2**j for j in range(6, 15)]
    lines, ok = [], True
    for spec in (E.constant(1), E.periodic([1, 2]), E.iid_lognormal(0, 1, seed=1),
                 E.markov([0.5, 3], [[0.7, 0.3], [0.4, 0.6]], seed=1)):
        recs = L.verify_energy_bounds(E.build_env(spec), sched)
        lo = [r for r in recs if r.theorem == "energy_lower"][-1]
        up = [r for r in recs if r.theorem == "energy_upper"][-1]
        ok &= lo.observed >= 0.9 * lo.target
        lines.append(f"{spec.kind}: {lo.observed:.4g} vs 0.9*lower {0.9 * lo.target:.4g}, "
                     f"observed/upper = {up.observed / up.target:.3g}")
    criterion("bands", ok, "; ".join(lines))
