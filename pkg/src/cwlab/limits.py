"""Finite-n verification of the limit theorems for the walk started at 0.

Every observed value comes from the exact kernel ``h_m = P^m h_0`` based at 0
unless a Monte Carlo mode is requested explicitly.  Verifiers return lists of
:class:`VerificationRecord`; :func:`verify_environment` turns them into
pass/fail checks.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import mpmath
import numpy as np

from . import heat_kernel as hk
from .environment import Environment, analytic_means, birkhoff_mean, integrability_class
from .walker import ks_lattice, simulate, total_variation

NAN = float("nan")
LOWER_BAND = 1 / 13
UPPER_BAND = 1 / 3
IID_WINDOW = 10**6


class DegenerateClassError(ValueError):
    """A verifier was asked to assert a branch the integrability class excludes."""


@dataclass
class VerificationRecord:
    theorem: str
    env: str
    n: int
    observed: float
    target: float = NAN
    metadata: dict = field(default_factory=dict)
    gap: float = field(init=False)

    def __post_init__(self):
        self.observed = float(self.observed)
        self.target = float(self.target)
        self.gap = self.observed - self.target if math.isfinite(self.target) else NAN

    def to_json(self) -> dict:
        d = asdict(self)
        for k in ("observed", "target", "gap"):
            if not math.isfinite(d[k]):
                d[k] = None
        return d


@dataclass(frozen=True)
class LimitTargets:
    mean_cbar: float
    mean_inv_c: float
    sigma2: float
    llt_constant: float
    degenerate: bool
    source: str

    @property
    def ratio_root(self) -> float:
        """``sqrt(E[1/c] / E[cbar])``."""
        return math.sqrt(self.mean_inv_c / self.mean_cbar)


def targets(env: Environment, x0: int = 0, L: int | None = None) -> LimitTargets:
    """Limit constants at ``x0``.

    Means are exact for constant, periodic and Markov kinds, and Birkhoff
    window averages (``L = 10**6`` unless given) for the i.i.d. kinds.
    A passed ``L`` forces window averages for every kind.
    """
    spec = env.spec
    klass = integrability_class(spec)
    use_window = L is not None or spec.kind.startswith("iid_")
    if use_window:
        L = IID_WINDOW if L is None else L
        mean_cbar = birkhoff_mean(env, "cbar", L) if klass.cbar_integrable else math.inf
        mean_inv_c = birkhoff_mean(env, "inv_c", L) if klass.inv_c_integrable else math.inf
        source = f"window(L={L})"
    else:
        mean_c, mean_inv_c = analytic_means(spec)
        mean_cbar = 2 * mean_c
        source = "closed form"
    cbar_x0 = env.cbar(x0)
    if klass.non_degenerate:
        sigma2 = 2 / (mean_cbar * mean_inv_c)
        llt = cbar_x0 / math.sqrt(math.pi) * math.sqrt(mean_inv_c / mean_cbar)
    else:
        sigma2 = 0.0
        if not klass.inv_c_integrable and not klass.cbar_integrable:
            llt = NAN
        else:
            llt = 0.0 if klass.inv_c_integrable else math.inf
    return LimitTargets(mean_cbar, mean_inv_c, sigma2, llt, not klass.non_degenerate, source)


# -- trend tests ---------------------------------------------------------------

@dataclass(frozen=True)
class TrendResult:
    passed: bool
    monotone: bool
    ratio: float
    direction: str

    def describe(self) -> str:
        return f"{self.direction}: monotone(last)={self.monotone}, last/first={self.ratio:.4g}"


def trend_test(
    values: Sequence[float], direction: str, factor: float | None = 2.0, last: int = 4,
    atol: float = 0.0,
) -> TrendResult:
    """Monotone over the last ``last`` points and, unless ``factor`` is None,
    ``last/first >= factor`` (increasing) or ``<= 1/factor`` (decreasing).

    Moves against the direction smaller than ``atol`` are ignored.
    """
    v = [float(x) for x in values]
    if len(v) < max(2, last):
        raise ValueError(f"need at least {max(2, last)} points, got {len(v)}")
    tail = v[-last:]
    pairs = list(zip(tail, tail[1:]))
    if direction == "increasing":
        mono = all(b >= a - atol for a, b in pairs)
        ok_ratio = factor is None or v[-1] >= factor * v[0]
    elif direction == "decreasing":
        mono = all(b <= a + atol for a, b in pairs)
        ok_ratio = factor is None or v[-1] <= v[0] / factor
    else:
        raise ValueError(f"unknown direction {direction!r}")
    ratio = v[-1] / v[0] if v[0] else math.inf
    return TrendResult(mono and ok_ratio, mono, ratio, direction)


def dyadic_schedule(n_max: int, jmin: int = 6) -> list[int]:
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    jmax = int(math.floor(math.log2(n_max)))
    jmin = min(jmin, jmax)
    return [2**j for j in range(jmin, jmax + 1)]


# -- shared kernel run ---------------------------------------------------------

def kernel_for(env: Environment, schedule: Iterable[int], extra_times: Iterable[int] = ()) -> hk.KernelRun:
    """One float64 run from 0 to ``2 max(schedule)`` keeping ``h_2n`` for every
    scheduled ``n`` plus ``extra_times``."""
    schedule = list(schedule)
    times = {2 * n for n in schedule} | set(extra_times)
    return hk.run_to(env, 0, max(times), snapshot_times=times)


def _ensure(run, env, times):
    if run is None or any(t not in run.snapshots for t in times):
        return hk.run_to(env, 0, max(times), snapshot_times=times)
    return run


def _ball(state: hk.KernelState, center: int, radius: float):
    """Values of the state on ``{x even : |x - center| < radius}``."""
    x = state.sites
    mask = (np.abs(x - center) < radius) & (x % 2 == 0)
    return x[mask], state.values[mask]


# -- verifiers -------------------------------------------------------------------

def verify_llt(env: Environment, x0: int, schedule: Sequence[int], run=None,
               tg: LimitTargets | None = None) -> list[VerificationRecord]:
    """``sqrt(2n) P_0[S_2n = x0]`` against the local limit constant."""
    if x0 % 2:
        raise ValueError("x0 must be even")
    run = _ensure(run, env, {2 * n for n in schedule})
    tg = tg or targets(env, x0)
    cb = env.cbar(x0)
    target = tg.llt_constant if math.isfinite(tg.llt_constant) else NAN
    out = []
    for n in schedule:
        h = float(run.snapshots[2 * n].value(x0))
        out.append(VerificationRecord("llt", env.label, n, math.sqrt(2 * n) * h * cb, target,
                                      {"x0": x0, "means": tg.source}))
    return out


def verify_sup_bound(env: Environment, schedule: Sequence[int], run=None) -> list[VerificationRecord]:
    """``sqrt(2n) max h_2n`` over ``B(0, sqrt(2n))`` among even sites."""
    klass = integrability_class(env.spec)
    if not klass.inv_c_integrable:
        raise DegenerateClassError("sup bound needs E[1/c] < inf")
    run = _ensure(run, env, {2 * n for n in schedule})
    target = NAN if klass.cbar_integrable else 0.0
    out = []
    for n in schedule:
        r = math.sqrt(2 * n)
        _, vals = _ball(run.snapshots[2 * n], 0, r)
        out.append(VerificationRecord("sup_bound", env.label, n, r * float(vals.max()), target))
    return out


def verify_energy_bounds(env: Environment, schedule: Sequence[int], run=None,
                         tg: LimitTargets | None = None) -> list[VerificationRecord]:
    """``sqrt(n) ||h_n||^2`` against the lower (1/13) and upper (1/3) bands,
    or against the degenerate limits 0 / infinity."""
    run = _ensure(run, env, {2 * n for n in schedule})
    E = run.energies.energies
    klass = integrability_class(env.spec)
    tg = tg or targets(env, 0)
    out = []
    for n in schedule:
        obs = math.sqrt(n) * float(E[n])
        if klass.non_degenerate:
            out.append(VerificationRecord("energy_lower", env.label, n, obs, LOWER_BAND * tg.ratio_root))
            out.append(VerificationRecord("energy_upper", env.label, n, obs, UPPER_BAND * tg.ratio_root))
        elif klass.inv_c_integrable:
            out.append(VerificationRecord("energy_vanishing", env.label, n, obs, 0.0))
        else:
            out.append(VerificationRecord("energy_divergence", env.label, n, obs))
    return out


def regularity_modulus(env: Environment, x0: int, n: int, delta: float, run=None) -> float:
    """``max |h_2n(x) - h_2n(x0)|`` over even ``x`` with ``|x - x0| < delta sqrt(2n)``."""
    if not integrability_class(env.spec).inv_c_integrable:
        raise DegenerateClassError("regularity modulus needs E[1/c] < inf")
    run = _ensure(run, env, {2 * n})
    state = run.snapshots[2 * n]
    _, vals = _ball(state, x0, delta * math.sqrt(2 * n))
    if len(vals) == 0:
        return 0.0
    return float(np.max(np.abs(vals - state.value(x0))))


def verify_regularity(env: Environment, x0: int, schedule: Sequence[int], deltas: Sequence[float],
                      run=None) -> list[VerificationRecord]:
    """``modulus sqrt(n) / sqrt(delta)`` per scheduled ``n`` and ``delta``; when
    E[cbar] diverges, also ``sqrt(2n) modulus`` at ``delta = 1``."""
    run = _ensure(run, env, {2 * n for n in schedule})
    klass = integrability_class(env.spec)
    out = []
    for d in deltas:
        for n in schedule:
            m = regularity_modulus(env, x0, n, d, run)
            out.append(VerificationRecord("regularity", env.label, n, m * math.sqrt(n) / math.sqrt(d),
                                          metadata={"x0": x0, "delta": d}))
    if not klass.cbar_integrable:
        for n in schedule:
            m = regularity_modulus(env, x0, n, 1.0, run)
            out.append(VerificationRecord("regularity_vanishing", env.label, n, math.sqrt(2 * n) * m, 0.0,
                                          {"x0": x0, "delta": 1.0}))
    return out


CONCENTRATION_EPS = (0.1, 0.5, 1.0)


def clt_check(env: Environment, n: int, mode: str = "exact_kernel", run=None, *,
              walkers: int = 10**6, seed: int = 0, threads: int | None = None,
              tg: LimitTargets | None = None) -> list[VerificationRecord]:
    """KS distance of ``S_n / sqrt(n)`` to N(0, sigma2) for non-degenerate
    environments; tail masses ``P[|S_n / sqrt(n)| > eps]`` otherwise."""
    if mode == "exact_kernel":
        run = _ensure(run, env, {n})
        sites, probs = hk.occupation_law(run.snapshots[n], env, run.coeffs)
        probs = np.asarray(probs, dtype=float)
    elif mode == "monte_carlo":
        ens = simulate(env, n, walkers, seed, threads=threads)
        sites, probs = ens.sites, ens.frequencies
    else:
        raise ValueError(f"unknown mode {mode!r}")
    tg = tg or targets(env, 0)
    meta = {"mode": mode}
    if not tg.degenerate:
        ks = ks_lattice(sites, probs, n, tg.sigma2)
        return [VerificationRecord("clt", env.label, n, ks, 0.0, {**meta, "sigma2": tg.sigma2})]
    z = np.abs(np.asarray(sites)) / math.sqrt(n)
    return [
        VerificationRecord("clt_concentration", env.label, n, float(probs[z > eps].sum()), 0.0,
                           {**meta, "eps": eps})
        for eps in CONCENTRATION_EPS
    ]


def mc_agreement(env: Environment, n: int, walkers: int, seed: int, run=None,
                 threads: int | None = None) -> VerificationRecord:
    """Total variation between a walker ensemble and the exact law at time ``n``."""
    run = _ensure(run, env, {n})
    sites, probs = hk.occupation_law(run.snapshots[n], env, run.coeffs)
    ens = simulate(env, n, walkers, seed, threads=threads)
    tv = total_variation(ens, sites, np.asarray(probs, dtype=float))
    return VerificationRecord("mc_total_variation", env.label, n, tv, 0.0, {"walkers": walkers, "seed": seed})


# -- kernel identities (run in extended precision) ---------------------------

def verify_identities(env: Environment, n_duality: int = 2000, n_green: int = 1000,
                      n_nash: int = 500) -> list[VerificationRecord]:
    """Energy/return duality, Green identity and the Nash-type bound.

    Observed values are relative errors (duality, Green) or the most negative
    Nash gap normalised by ``||h_0||^2``.  Everything runs in longdouble.
    """
    N = max(2 * n_duality, n_green + 1, 2 * n_nash + 1)
    coeffs = hk.Coefficients(env, -N - 1, N + 2, "longdouble")
    state = hk.init_kernel(env, 0, "longdouble")
    E = np.zeros(N + 1, dtype=np.longdouble)
    ret = np.zeros(N + 1, dtype=np.longdouble)
    dirichlet = np.zeros(n_green + 1, dtype=np.longdouble)
    for m in range(N + 1):
        if m:
            state = hk.step(state, env, coeffs)
        E[m] = hk.energy(state, env, coeffs)
        if m % 2 == 0:
            ret[m] = state.value(0)
        if m <= n_green:
            dirichlet[m] = hk.dirichlet(env, state, coeffs)
    n = np.arange(n_duality + 1)
    dual = float(np.max(np.abs(E[n] - ret[2 * n]) / ret[2 * n]))
    g = np.arange(n_green + 1)
    green = float(np.max(np.abs(dirichlet - (E[g] - E[g + 1])) / dirichlet))
    seq = hk.EnergySeq(env.label, 0, E)
    nash = min(hk.check_nash(seq, k) for k in range(n_nash + 1)) / float(E[0])
    return [
        VerificationRecord("energy_duality", env.label, n_duality, dual, 0.0),
        VerificationRecord("green_identity", env.label, n_green, green, 0.0),
        VerificationRecord("nash", env.label, n_nash, nash, 0.0),
    ]


def verify_complete_monotonicity(env: Environment, N: int = 200, K: int = 12,
                                 direct_at: Sequence[int] | None = None, dps: int = hk.DEFAULT_DPS
                                 ) -> list[VerificationRecord]:
    """Most negative ``Delta_n^(k) / ||h_0||^2`` of the difference table, and the
    worst relative disagreement between the table and the direct inner products."""
    direct_at = range(N - K + 1) if direct_at is None else direct_at
    run = hk.run_to(env, 0, N, snapshot_times=set(direct_at), precision="mp", dps=dps)
    table = hk.finite_differences(run.energies, K)
    with mpmath.workdps(dps):
        scale = table.delta[0][0]
        worst_neg = min(min(row) for row in table.delta) / scale
        worst_rel = mpmath.mpf(0)
        for n in direct_at:
            direct = hk.delta_direct_all(env, 0, n, K, state=run.snapshots[n], dps=dps)
            for k in range(K + 1):
                worst_rel = max(worst_rel, abs(direct[k] - table[n, k]) / abs(direct[k]))
    meta = {"N": N, "K": K}
    return [
        VerificationRecord("complete_monotonicity", env.label, N, float(worst_neg), 0.0, meta),
        VerificationRecord("difference_cross_check", env.label, N, float(worst_rel), 0.0, meta),
    ]


# -- assembling checks -------------------------------------------------------------

@dataclass
class Tolerances:
    llt_rel: float = 0.01
    band_margin: float = 0.10
    ks: float = 0.02
    tv: float = 5e-3
    bounded_variation: float = 0.5
    concentration_floor: float = 1e-6
    trend_factor: float = 2.0
    trend_points: int = 4
    identity_rel: float = 1e-12
    nash: float = 1e-12
    monotonicity: float = 1e-10
    cross_check_rel: float = 1e-10


@dataclass
class Check:
    name: str
    passed: bool
    asserted: bool = True
    margin: float | None = None
    detail: str = ""

    def to_json(self) -> dict:
        m = self.margin
        return {"passed": self.passed, "asserted": self.asserted,
                "margin": m if m is None or math.isfinite(m) else None, "detail": self.detail}


@dataclass
class VerificationReport:
    env: str
    records: list[VerificationRecord] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.asserted)

    def series(self, theorem: str, **meta) -> list[VerificationRecord]:
        return [r for r in self.records if r.theorem == theorem
                and all(r.metadata.get(k) == v for k, v in meta.items())]


def _observed(records):
    return [r.observed for r in records]


def running_max_variation(values: Sequence[float], last: int = 3) -> tuple[float, float]:
    """Running maximum at the end of the series and its relative spread over
    the last ``last`` points; infinite when any value is not finite."""
    v = np.asarray([float(x) for x in values])
    if not np.all(np.isfinite(v)):
        return math.inf, math.inf
    running = np.maximum.accumulate(v)
    tail = running[-last:]
    top = float(tail.max())
    return float(running[-1]), (top - float(tail.min())) / top if top > 0 else 0.0


def verify_environment(
    env: Environment,
    schedule: Sequence[int],
    x0: int = 0,
    deltas: Sequence[float] = (0.25, 1.0),
    clt_n: int | None = None,
    tol: Tolerances | None = None,
    identities: bool = True,
    identity_sizes: tuple[int, int, int] = (2000, 1000, 500),
    monotonicity: tuple[int, int] | None = (200, 12),
) -> VerificationReport:
    """Run every verifier the integrability class admits and grade it."""
    tol = tol or Tolerances()
    schedule = sorted(set(schedule))
    clt_n = clt_n or schedule[-1]
    klass = integrability_class(env.spec)
    run = kernel_for(env, schedule, extra_times={clt_n})
    tg = targets(env, x0)
    rep = VerificationReport(env.label)
    add = rep.checks.append
    trend = dict(factor=tol.trend_factor, last=tol.trend_points)

    llt = verify_llt(env, x0, schedule, run, tg)
    rep.records += llt
    if klass.non_degenerate:
        rel = abs(llt[-1].gap) / tg.llt_constant
        add(Check("llt", rel <= tol.llt_rel, margin=tol.llt_rel - rel,
                  detail=f"relative gap {rel:.3e} at n={llt[-1].n}"))
    else:
        direction = "decreasing" if klass.inv_c_integrable else "increasing"
        t = trend_test(_observed(llt), direction, **trend)
        add(Check("llt_trend", t.passed, margin=t.ratio, detail=t.describe()))

    energy = verify_energy_bounds(env, schedule, run, tg)
    rep.records += energy
    if klass.non_degenerate:
        lo = [r for r in energy if r.theorem == "energy_lower"][-1]
        up = [r for r in energy if r.theorem == "energy_upper"][-1]
        floor = lo.target * (1 - tol.band_margin)
        add(Check("energy_lower", lo.observed >= floor, margin=lo.observed - floor,
                  detail=f"sqrt(n)||h_n||^2={lo.observed:.6g} vs {floor:.6g}"))
        add(Check("energy_upper", up.observed <= up.target * (1 + tol.band_margin), asserted=False,
                  margin=up.target - up.observed,
                  detail=f"reported only: observed/upper band = {up.observed / up.target:.4g}"))
    else:
        name = "energy_vanishing" if klass.inv_c_integrable else "energy_divergence"
        direction = "decreasing" if klass.inv_c_integrable else "increasing"
        t = trend_test(_observed([r for r in energy if r.theorem == name]), direction, **trend)
        add(Check(name, t.passed, margin=t.ratio, detail=t.describe()))

    if klass.inv_c_integrable:
        sup = verify_sup_bound(env, schedule, run)
        rep.records += sup
        top, var = running_max_variation(_observed(sup))
        add(Check("sup_bound", var < tol.bounded_variation, margin=tol.bounded_variation - var,
                  detail=f"running max {top:.4g}, variation over last 3 = {var:.3g}"))
        if not klass.cbar_integrable:
            t = trend_test(_observed(sup), "decreasing", factor=None, last=tol.trend_points)
            add(Check("sup_bound_trend", t.passed, margin=t.ratio, detail=t.describe()))

        reg = verify_regularity(env, x0, schedule, deltas, run)
        rep.records += reg
        for d in deltas:
            vals = _observed([r for r in reg if r.theorem == "regularity" and r.metadata["delta"] == d])
            c_hat, var = running_max_variation(vals)
            add(Check(f"regularity(delta={d:g})", var < tol.bounded_variation, margin=tol.bounded_variation - var,
                      detail=f"C_hat={c_hat:.4g}, variation over last 3 = {var:.3g}"))
        if not klass.cbar_integrable:
            t = trend_test(_observed([r for r in reg if r.theorem == "regularity_vanishing"]), "decreasing", **trend)
            add(Check("regularity_vanishing", t.passed, margin=t.ratio, detail=t.describe()))

    if klass.non_degenerate:
        clt = clt_check(env, clt_n, "exact_kernel", run, tg=tg)
        rep.records += clt
        add(Check("clt", clt[0].observed < tol.ks, margin=tol.ks - clt[0].observed,
                  detail=f"KS={clt[0].observed:.4g} at n={clt_n}, sigma2={tg.sigma2:.6g}"))
    else:
        for eps in CONCENTRATION_EPS:
            series = []
            for n in schedule:
                series += [r for r in clt_check(env, 2 * n, "exact_kernel", run, tg=tg) if r.metadata["eps"] == eps]
            rep.records += series
            t = trend_test(_observed(series), "decreasing", factor=None, last=tol.trend_points,
                           atol=tol.concentration_floor)
            add(Check(f"clt_concentration(eps={eps:g})", t.passed, margin=t.ratio, detail=t.describe()))

    if identities:
        nd, ng, nn = identity_sizes
        ids = verify_identities(env, nd, ng, nn)
        rep.records += ids
        for r in ids:
            if r.theorem == "nash":
                add(Check("nash", r.observed >= -tol.nash, margin=r.observed + tol.nash,
                          detail=f"min gap / ||h_0||^2 = {r.observed:.3e}"))
            else:
                add(Check(r.theorem, r.observed <= tol.identity_rel, margin=tol.identity_rel - r.observed,
                          detail=f"max relative error {r.observed:.3e}"))
    if monotonicity:
        N, K = monotonicity
        cm = verify_complete_monotonicity(env, N, K, direct_at=sorted({0, (N - K) // 2, N - K}))
        rep.records += cm
        add(Check("complete_monotonicity", cm[0].observed >= -tol.monotonicity,
                  margin=cm[0].observed + tol.monotonicity, detail=f"min Delta / ||h_0||^2 = {cm[0].observed:.3e}"))
        add(Check("difference_cross_check", cm[1].observed <= tol.cross_check_rel,
                  margin=tol.cross_check_rel - cm[1].observed, detail=f"max relative disagreement {cm[1].observed:.3e}"))
    return rep
