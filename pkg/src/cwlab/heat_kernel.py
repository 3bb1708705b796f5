"""Exact evolution of the heat kernel ``h_n = P^n h_0`` on Z.

``h_0 = 1{x0} / cbar(x0)`` and ``(Pf)(x) = p(x,x-1) f(x-1) + p(x,x+1) f(x+1)``,
so ``h_n(x) = P_{x0}[S_n = x] / cbar(x)``.  A kernel state only stores its
live parity class ``x = x0 - n + 2i``, ``i = 0..n``.

Arithmetic can run in three precisions:

* ``"float64"`` -- default, fast;
* ``"longdouble"`` -- numpy extended precision (80-bit on x86);
* ``"mp"`` -- mpmath numbers in object arrays, for cancellation-heavy checks.
"""

from __future__ import annotations

from contextlib import nullcontext
from dataclasses import dataclass, field
from typing import Iterable

import mpmath
import numpy as np

from .environment import Environment

PRECISIONS = ("float64", "longdouble", "mp")
MAX_STEPS = 2_000_000
DEFAULT_DPS = 50


class KernelCapError(ValueError):
    pass


def _context(precision: str, dps: int):
    if precision not in PRECISIONS:
        raise ValueError(f"precision must be one of {PRECISIONS}, got {precision!r}")
    return mpmath.workdps(dps) if precision == "mp" else nullcontext()


def _convert(a: np.ndarray, precision: str) -> np.ndarray:
    if precision == "float64":
        return np.asarray(a, dtype=np.float64)
    if precision == "longdouble":
        return np.asarray(a, dtype=np.longdouble)
    return np.array([mpmath.mpf(float(v)) for v in np.ravel(a)], dtype=object)


def _zeros(n: int, precision: str) -> np.ndarray:
    if precision == "mp":
        return np.array([mpmath.mpf(0)] * n, dtype=object)
    return np.zeros(n, dtype=np.longdouble if precision == "longdouble" else np.float64)


def _precision_of(a: np.ndarray) -> str:
    if a.dtype == object:
        return "mp"
    return "longdouble" if a.dtype == np.longdouble and np.longdouble != np.float64 else "float64"


def _total(a: np.ndarray):
    if a.dtype == object:
        return mpmath.fsum(a.tolist()) if len(a) else mpmath.mpf(0)
    return a.sum()


class Coefficients:
    """``cbar``, ``p(x,x-1)``, ``p(x,x+1)`` and series conductances on ``lo <= x < hi``.

    Derived in the requested precision from the float64 conductances.
    """

    def __init__(self, env: Environment, lo: int, hi: int, precision: str = "float64"):
        self.lo, self.hi, self.precision = lo, hi, precision
        c = _convert(env.edges(lo - 1, hi), precision)
        left, right = c[:-1], c[1:]
        self.cbar = left + right
        self.p_left = left / self.cbar
        self.p_right = right / self.cbar
        # c(x-1,x) c(x,x+1) / cbar(x), written to avoid overflow of the product
        self.series = self.p_left * right
        self._split: dict = {}

    def covers(self, lo: int, hi: int) -> bool:
        return self.lo <= lo and hi <= self.hi

    def take(self, name: str, start: int, count: int, stride: int = 1) -> np.ndarray:
        i = start - self.lo
        if stride == 2:
            # contiguous copies of each parity class make the kernel update faster
            key = (name, i % 2)
            if key not in self._split:
                self._split[key] = np.ascontiguousarray(getattr(self, name)[i % 2::2])
            j = i // 2
            return self._split[key][j: j + count]
        arr = getattr(self, name)
        return arr[i: i + stride * (count - 1) + 1: stride]


@dataclass
class FiniteFunction:
    """A finitely supported function given on the contiguous sites ``offset + i``."""

    offset: int
    values: np.ndarray

    @property
    def sites(self) -> np.ndarray:
        return self.offset + np.arange(len(self.values))

    def __call__(self, x: int):
        i = x - self.offset
        if 0 <= i < len(self.values):
            return self.values[i]
        return 0 * self.values[0] if len(self.values) else 0.0

    def padded(self, lo: int, hi: int) -> np.ndarray:
        """Values on ``lo <= x < hi`` (which must contain the stored sites)."""
        out = _zeros(hi - lo, _precision_of(self.values))
        i = self.offset - lo
        out[i: i + len(self.values)] = self.values
        return out


@dataclass
class KernelState:
    base: int
    time: int
    values: np.ndarray  # h_time(base - time + 2 i)

    @property
    def offset(self) -> int:
        return self.base - self.time

    @property
    def precision(self) -> str:
        return _precision_of(self.values)

    @property
    def sites(self) -> np.ndarray:
        return self.offset + 2 * np.arange(len(self.values))

    def value(self, x: int):
        d = x - self.offset
        if d < 0 or d % 2 or d // 2 >= len(self.values):
            return 0.0
        return self.values[d // 2]

    def to_function(self) -> FiniteFunction:
        dense = _zeros(2 * len(self.values) - 1, self.precision)
        dense[::2] = self.values
        return FiniteFunction(self.offset, dense)


def init_kernel(env: Environment, x0: int, precision: str = "float64") -> KernelState:
    cb = _convert(env.cbar_window(x0, x0 + 1), precision)
    vals = _zeros(1, precision)
    vals[0] = 1 / cb[0]
    return KernelState(x0, 0, vals)


def step(state: KernelState, env: Environment, coeffs: Coefficients | None = None) -> KernelState:
    """One application of P; the support grows by one site on each side."""
    n = state.time
    start, count = state.base - n - 1, n + 2
    if coeffs is None or not coeffs.covers(start, start + 2 * count - 1):
        coeffs = Coefficients(env, start, start + 2 * count - 1, state.precision)
    pl = coeffs.take("p_left", start, count, 2)
    pr = coeffs.take("p_right", start, count, 2)
    old = state.values
    new = _zeros(count, state.precision)
    if new.dtype == object:
        new[1:] = pl[1:] * old
        new[:-1] += pr[:-1] * old
    else:
        np.multiply(pl[1:], old, out=new[1:])
        tmp = pr[:-1] * old
        new[:-1] += tmp
    return KernelState(state.base, n + 1, new)


def occupation(state: KernelState, env: Environment, x: int) -> float:
    """``P_{base}[S_time = x] = h_time(x) cbar(x)``."""
    h = state.value(x)
    if not h:
        return 0.0
    return h * _convert(env.cbar_window(x, x + 1), state.precision)[0]


def occupation_law(state: KernelState, env: Environment, coeffs: Coefficients | None = None):
    """Sites and probabilities of ``S_time`` on the support."""
    start, count = state.offset, len(state.values)
    if coeffs is None or not coeffs.covers(start, start + 2 * count - 1):
        coeffs = Coefficients(env, start, start + 2 * count - 1, state.precision)
    return state.sites, state.values * coeffs.take("cbar", start, count, 2)


def energy(state: KernelState, env: Environment, coeffs: Coefficients | None = None):
    """``||h||^2 = sum h(x)^2 cbar(x)``."""
    start, count = state.offset, len(state.values)
    if coeffs is None or not coeffs.covers(start, start + 2 * count - 1):
        coeffs = Coefficients(env, start, start + 2 * count - 1, state.precision)
    v = state.values
    return _total(v * coeffs.take("cbar", start, count, 2) * v)


def _as_function(f) -> FiniteFunction:
    return f.to_function() if isinstance(f, KernelState) else f


def dirichlet(env: Environment, f, coeffs: Coefficients | None = None):
    """Dirichlet form of P^2 written with series conductances:
    ``sum_x (f(x-1) - f(x+1))^2 c(x-1,x) c(x,x+1) / cbar(x)``.
    """
    f = _as_function(f)
    m = len(f.values)
    if m == 0:
        return 0.0
    lo, hi = f.offset - 2, f.offset + m + 2
    vals = f.padded(lo, hi)
    diff = vals[:-2] - vals[2:]  # at x = lo+1 .. hi-2
    if coeffs is None or not coeffs.covers(lo + 1, hi - 1):
        coeffs = Coefficients(env, lo + 1, hi - 1, _precision_of(f.values))
    s = coeffs.take("series", lo + 1, hi - lo - 2)
    return _total(diff * diff * s)


def inner(env: Environment, f, g, coeffs: Coefficients | None = None):
    """``(f, g) = sum f g cbar``."""
    f, g = _as_function(f), _as_function(g)
    lo = min(f.offset, g.offset)
    hi = max(f.offset + len(f.values), g.offset + len(g.values))
    if coeffs is None or not coeffs.covers(lo, hi):
        coeffs = Coefficients(env, lo, hi, _precision_of(f.values))
    return _total(f.padded(lo, hi) * g.padded(lo, hi) * coeffs.take("cbar", lo, hi - lo))


def apply_P(env: Environment, f, coeffs: Coefficients | None = None) -> FiniteFunction:
    f = _as_function(f)
    m = len(f.values)
    lo, hi = f.offset - 1, f.offset + m + 1
    vals = f.padded(lo - 1, hi + 1)
    if coeffs is None or not coeffs.covers(lo, hi):
        coeffs = Coefficients(env, lo, hi, _precision_of(f.values))
    pl = coeffs.take("p_left", lo, hi - lo)
    pr = coeffs.take("p_right", lo, hi - lo)
    return FiniteFunction(lo, pl * vals[:-2] + pr * vals[2:])


# -- batch driver ------------------------------------------------------------

@dataclass
class EnergySeq:
    env_label: str
    base: int
    energies: np.ndarray  # entry m = ||h_m||^2
    dps: int = DEFAULT_DPS

    def __len__(self) -> int:
        return len(self.energies)

    @property
    def precision(self) -> str:
        return _precision_of(self.energies)


@dataclass
class KernelRun:
    env: Environment
    energies: EnergySeq
    snapshots: dict[int, KernelState] = field(default_factory=dict)
    coeffs: Coefficients | None = None


def run_to(
    env: Environment,
    x0: int,
    N: int,
    snapshot_times: Iterable[int] = (),
    precision: str = "float64",
    max_steps: int = MAX_STEPS,
    dps: int = DEFAULT_DPS,
) -> KernelRun:
    """Evolve from ``h_0`` to ``h_N``, recording every energy and the requested states."""
    if N < 0:
        raise ValueError("N must be >= 0")
    if N > max_steps:
        raise KernelCapError(f"N={N} exceeds the configured cap of {max_steps} steps")
    wanted = set(int(t) for t in snapshot_times)
    if any(t < 0 or t > N for t in wanted):
        raise ValueError("snapshot times must lie in [0, N]")
    with _context(precision, dps):
        coeffs = Coefficients(env, x0 - N - 1, x0 + N + 2, precision)
        energies = _zeros(N + 1, precision)
        state = init_kernel(env, x0, precision)
        snaps = {}
        for n in range(N + 1):
            if n:
                state = step(state, env, coeffs)
            energies[n] = energy(state, env, coeffs)
            if n in wanted:
                snaps[n] = state
    return KernelRun(env, EnergySeq(env.label, x0, energies, dps), snaps, coeffs)


# -- complete monotonicity ---------------------------------------------------

@dataclass
class DifferenceTable:
    source: EnergySeq
    K: int
    delta: list  # delta[k][n] = Delta_n^(k), n = 0 .. N - k

    def __getitem__(self, nk):
        n, k = nk
        return self.delta[k][n]


def finite_differences(e: EnergySeq, K: int) -> DifferenceTable:
    """Iterated differences ``D^(k+1)_n = D^(k)_n - D^(k)_{n+1}``.

    Float inputs are accumulated in longdouble; mpmath inputs stay in mpmath.
    """
    if K < 0 or K > len(e) - 1:
        raise ValueError(f"K must lie in [0, {len(e) - 1}]")
    with _context(e.precision, e.dps):
        cur = e.energies if e.precision == "mp" else np.asarray(e.energies, dtype=np.longdouble)
        delta = [cur]
        for _ in range(K):
            cur = cur[:-1] - cur[1:]
            delta.append(cur)
    return DifferenceTable(e, K, delta)


def delta_direct(
    env: Environment, x0: int, n: int, k: int, precision: str = "mp", dps: int = DEFAULT_DPS
):
    """``(h_n, (I - P^2)^k h_n)`` computed from the kernel itself."""
    return delta_direct_all(env, x0, n, k, precision, dps)[k]


def delta_direct_all(
    env: Environment, x0: int, n: int, K: int, precision: str = "mp", dps: int = DEFAULT_DPS,
    state: KernelState | None = None,
) -> list:
    """``[(h_n, (I - P^2)^k h_n) for k = 0..K]``; reuses ``state`` when given."""
    with _context(precision, dps):
        if state is None:
            state = init_kernel(env, x0, precision)
            coeffs = Coefficients(env, x0 - n - 1, x0 + n + 2, precision)
            for _ in range(n):
                state = step(state, env, coeffs)
        g0 = state.to_function()
        lo, hi = g0.offset - 2 * K - 1, g0.offset + len(g0.values) + 2 * K + 1
        coeffs = Coefficients(env, lo, hi, precision)
        out = [inner(env, g0, g0, coeffs)]
        g = g0
        for _ in range(K):
            p2g = apply_P(env, apply_P(env, g, coeffs), coeffs)
            g = FiniteFunction(p2g.offset, g.padded(p2g.offset, p2g.offset + len(p2g.values)) - p2g.values)
            out.append(inner(env, g0, g, coeffs))
    return out


@dataclass(frozen=True)
class Violation:
    n: int
    k: int
    value: float


def check_complete_monotonicity(t: DifferenceTable, tol: float) -> list[Violation]:
    """Entries with ``Delta_n^(k) < -tol * Delta_0^(0)``."""
    scale = t.delta[0][0]
    out = []
    for k, row in enumerate(t.delta):
        for n, v in enumerate(row):
            if v < -tol * scale:
                out.append(Violation(n, k, float(v)))
    return out


def nash_factor(n: int) -> float:
    """``n^n / (n+1)^(n+1)`` with ``0^0 = 1``; the max of ``x^n (1-x)`` on [0, 1]."""
    return (n / (n + 1)) ** n / (n + 1)


def check_nash(e: EnergySeq, n: int) -> float:
    """``nash_factor(n) ||h_n||^2 - (||h_2n||^2 - ||h_2n+1||^2)``; non-negative in theory."""
    E = e.energies
    if 2 * n + 1 > len(E) - 1:
        raise ValueError(f"need energies up to index {2 * n + 1}, have {len(E) - 1}")
    with _context(e.precision, e.dps):
        return float(nash_factor(n) * E[n] - (E[2 * n] - E[2 * n + 1]))
