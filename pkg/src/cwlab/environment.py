"""Stationary conductance environments on the edges of the integer line.

An environment is the two-sided sequence ``c(x, x+1)``, x in Z.  The i.i.d.
kinds draw edge ``x`` from a counter-based uniform keyed by ``(seed, x)``;
the Markov kind runs a stationary chain outwards from edge 0 (the reversed
chain to the left) and memoises the materialised halves.
"""

from __future__ import annotations

import bisect
import math
import threading
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from . import rng

MAX_INDEX = 2**31
C_MIN, C_MAX = 1e-300, 1e300

KINDS = ("constant", "periodic", "iid_lognormal", "iid_pareto", "iid_power", "markov")

# extreme uniforms the generator can emit
_U_LO = 2.0**-53
_U_HI = 1.0 - 2.0**-53


class EnvSpecError(ValueError):
    """Invalid environment description; ``key`` names the offending field."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class EnvRangeError(ValueError):
    pass


@dataclass(frozen=True)
class EnvSpec:
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        validate(self)

    @property
    def label(self) -> str:
        args = ",".join(f"{k}={_fmt_param(v)}" for k, v in self.params.items())
        return f"{self.kind}({args})#seed={self.seed}"

    def with_seed(self, seed: int) -> "EnvSpec":
        return EnvSpec(self.kind, dict(self.params), seed)


def _fmt_param(v) -> str:
    if isinstance(v, (list, tuple)):
        return "[" + ";".join(_fmt_param(u) for u in v) + "]"
    return format(v, "g") if isinstance(v, float) else str(v)


# factories -----------------------------------------------------------------

def constant(kappa: float, seed: int = 0) -> EnvSpec:
    return EnvSpec("constant", {"kappa": float(kappa)}, seed)


def periodic(cycle: Sequence[float], phase: int = 0, seed: int = 0) -> EnvSpec:
    return EnvSpec("periodic", {"cycle": tuple(float(c) for c in cycle), "phase": int(phase)}, seed)


def iid_lognormal(m: float, s: float, seed: int = 0) -> EnvSpec:
    return EnvSpec("iid_lognormal", {"m": float(m), "s": float(s)}, seed)


def iid_pareto(alpha: float, xm: float = 1.0, seed: int = 0) -> EnvSpec:
    return EnvSpec("iid_pareto", {"alpha": float(alpha), "xm": float(xm)}, seed)


def iid_power(beta: float, seed: int = 0) -> EnvSpec:
    return EnvSpec("iid_power", {"beta": float(beta)}, seed)


def markov(states: Sequence[float], transition_matrix, seed: int = 0) -> EnvSpec:
    mat = tuple(tuple(float(v) for v in row) for row in transition_matrix)
    return EnvSpec("markov", {"states": tuple(float(s) for s in states), "transition_matrix": mat}, seed)


# validation -----------------------------------------------------------------

_REQUIRED = {
    "constant": ("kappa",),
    "periodic": ("cycle", "phase"),
    "iid_lognormal": ("m", "s"),
    "iid_pareto": ("alpha", "xm"),
    "iid_power": ("beta",),
    "markov": ("states", "transition_matrix"),
}


def _positive(name: str, value) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise EnvSpecError(f"env.{name}", f"expected a number, got {value!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise EnvSpecError(f"env.{name}", f"must be positive and finite, got {value!r}")
    return v


def _in_range(name: str, lo: float, hi: float):
    if not (lo >= C_MIN and hi <= C_MAX):
        raise EnvSpecError(
            f"env.{name}", f"conductances would leave [{C_MIN:g}, {C_MAX:g}] (range {lo:.3g}..{hi:.3g})"
        )


def validate(spec: EnvSpec) -> None:
    if spec.kind not in _REQUIRED:
        raise EnvSpecError("env.kind", f"unknown kind {spec.kind!r}; expected one of {', '.join(KINDS)}")
    if not isinstance(spec.seed, (int, np.integer)) or not 0 <= int(spec.seed) < 2**64:
        raise EnvSpecError("env.seed", f"must be a 64-bit unsigned integer, got {spec.seed!r}")
    p = spec.params
    missing = [k for k in _REQUIRED[spec.kind] if k not in p]
    if missing:
        raise EnvSpecError(f"env.{missing[0]}", "missing parameter")
    extra = sorted(set(p) - set(_REQUIRED[spec.kind]))
    if extra:
        raise EnvSpecError(f"env.{extra[0]}", f"not a parameter of kind {spec.kind!r}")

    if spec.kind == "constant":
        k = _positive("kappa", p["kappa"])
        _in_range("kappa", k, k)
    elif spec.kind == "periodic":
        cycle = p["cycle"]
        if len(cycle) == 0:
            raise EnvSpecError("env.cycle", "must be non-empty")
        vals = [_positive("cycle", c) for c in cycle]
        _in_range("cycle", min(vals), max(vals))
    elif spec.kind == "iid_lognormal":
        s = _positive("s", p["s"])
        m = float(p["m"])
        if not math.isfinite(m):
            raise EnvSpecError("env.m", "must be finite")
        lo_log, hi_log = m + s * ndtri(_U_LO), m + s * ndtri(_U_HI)
        if lo_log < math.log(C_MIN) or hi_log > math.log(C_MAX):
            raise EnvSpecError(
                "env.s", f"conductances would leave [{C_MIN:g}, {C_MAX:g}] (log range {lo_log:.4g}..{hi_log:.4g})"
            )
    elif spec.kind == "iid_pareto":
        a = _positive("alpha", p["alpha"])
        xm = _positive("xm", p["xm"])
        hi_log = math.log(xm) - math.log(_U_LO) / a
        if hi_log > math.log(C_MAX):
            raise EnvSpecError("env.alpha", f"alpha={a:g} gives conductances above {C_MAX:g}")
        _in_range("xm", xm * _U_HI ** (-1 / a), math.exp(hi_log))
    elif spec.kind == "iid_power":
        b = _positive("beta", p["beta"])
        lo_log = math.log(_U_LO) / b
        if lo_log < math.log(C_MIN):
            raise EnvSpecError("env.beta", f"beta={b:g} gives conductances below {C_MIN:g}")
    elif spec.kind == "markov":
        states = [_positive("states", s) for s in p["states"]]
        if not states:
            raise EnvSpecError("env.states", "must be non-empty")
        _in_range("states", min(states), max(states))
        mat = np.asarray(p["transition_matrix"], dtype=float)
        k = len(states)
        if mat.shape != (k, k):
            raise EnvSpecError("env.transition_matrix", f"expected a {k}x{k} matrix, got shape {mat.shape}")
        if np.any(mat < 0) or not np.all(np.isfinite(mat)):
            raise EnvSpecError("env.transition_matrix", "entries must be finite and non-negative")
        if np.any(np.abs(mat.sum(axis=1) - 1.0) > 1e-12):
            raise EnvSpecError("env.transition_matrix", "rows must sum to 1 within 1e-12")
        if not _irreducible(mat):
            raise EnvSpecError("env.transition_matrix", "chain is not irreducible")


def _irreducible(mat: np.ndarray) -> bool:
    k = len(mat)
    reach = (mat > 0) | np.eye(k, dtype=bool)
    for _ in range(max(1, int(math.ceil(math.log2(k))) + 1)):
        reach = reach | ((reach.astype(np.int64) @ reach.astype(np.int64)) > 0)
    return bool(reach.all())


def stationary_distribution(mat) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    k = len(mat)
    # pi (P - I) = 0 with sum(pi) = 1, solved in least squares
    a = np.vstack([mat.T - np.eye(k), np.ones(k)])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


# integrability / analytic means ---------------------------------------------

@dataclass(frozen=True)
class IntegrabilityClass:
    cbar_integrable: bool
    inv_c_integrable: bool

    @property
    def non_degenerate(self) -> bool:
        return self.cbar_integrable and self.inv_c_integrable


def integrability_class(spec: EnvSpec) -> IntegrabilityClass:
    """Analytic classification of E[c] < inf and E[1/c] < inf."""
    if spec.kind == "iid_pareto":
        return IntegrabilityClass(spec.params["alpha"] > 1, True)
    if spec.kind == "iid_power":
        return IntegrabilityClass(True, spec.params["beta"] > 1)
    return IntegrabilityClass(True, True)


def analytic_means(spec: EnvSpec) -> tuple[float, float]:
    """``(E[c], E[1/c])`` under the stationary law; ``inf`` when divergent.

    For fixed-phase periodic environments these are the cycle averages.
    """
    p = spec.params
    if spec.kind == "constant":
        return p["kappa"], 1.0 / p["kappa"]
    if spec.kind == "periodic":
        cyc = np.asarray(p["cycle"], dtype=float)
        return float(cyc.mean()), float((1.0 / cyc).mean())
    if spec.kind == "iid_lognormal":
        m, s = p["m"], p["s"]
        return math.exp(m + s * s / 2), math.exp(-m + s * s / 2)
    if spec.kind == "iid_pareto":
        a, xm = p["alpha"], p["xm"]
        mean_c = a * xm / (a - 1) if a > 1 else math.inf
        return mean_c, a / ((a + 1) * xm)
    if spec.kind == "iid_power":
        b = p["beta"]
        return b / (b + 1), (b / (b - 1) if b > 1 else math.inf)
    states = np.asarray(p["states"], dtype=float)
    pi = stationary_distribution(p["transition_matrix"])
    return float(pi @ states), float(pi @ (1.0 / states))


# the environment ---------------------------------------------------------

class Environment:
    """Read-only view of one realised conductance sequence.

    ``edges(lo, hi)`` is the workhorse: it returns ``c(x, x+1)`` for
    ``lo <= x < hi`` as a float64 array.  Scalar accessors are thin wrappers.
    """

    def __init__(self, spec: EnvSpec):
        validate(spec)
        self.spec = spec
        self._lock = threading.Lock()
        if spec.kind == "markov":
            p = spec.params
            self._states = np.asarray(p["states"], dtype=float)
            mat = np.asarray(p["transition_matrix"], dtype=float)
            pi = stationary_distribution(mat)
            rev = (mat.T * pi[None, :]) / pi[:, None]
            self._cdf_pi = np.cumsum(pi).tolist()
            self._cdf_fwd = [np.cumsum(r).tolist() for r in mat]
            self._cdf_rev = [np.cumsum(r).tolist() for r in rev]
            x0 = _draw(self._cdf_pi, rng.edge_uniform(spec.seed, 0))
            self._right = np.array([x0], dtype=np.int32)  # chain states at x = 0, 1, ...
            self._left = np.zeros(0, dtype=np.int32)  # chain states at x = -1, -2, ...

    @property
    def label(self) -> str:
        return self.spec.label

    def __repr__(self) -> str:
        return f"Environment({self.label})"

    # -- bulk queries
    def edges(self, lo: int, hi: int) -> np.ndarray:
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError("hi must be >= lo")
        if lo < -MAX_INDEX or hi - 1 > MAX_INDEX:
            raise EnvRangeError(f"edge window [{lo}, {hi}) exceeds |x| <= 2**31")
        if self.spec.kind == "markov":
            return self._markov_edges(lo, hi)
        return self._edges(np.arange(lo, hi, dtype=np.int64))

    def edges_at(self, x) -> np.ndarray:
        """``c(x, x+1)`` for an arbitrary integer array ``x``."""
        x = np.asarray(x, dtype=np.int64)
        if x.size and (x.min() < -MAX_INDEX or x.max() > MAX_INDEX):
            raise EnvRangeError("edge index exceeds |x| <= 2**31")
        if self.spec.kind == "markov":
            if x.size == 0:
                return np.zeros(0)
            lo, hi = int(x.min()), int(x.max()) + 1
            return self._markov_edges(lo, hi)[x - lo]
        return self._edges(x)

    def _edges(self, x: np.ndarray) -> np.ndarray:
        spec, p = self.spec, self.spec.params
        if spec.kind == "constant":
            return np.full(x.shape, p["kappa"], dtype=float)
        if spec.kind == "periodic":
            cyc = np.asarray(p["cycle"], dtype=float)
            return cyc[(x + p["phase"]) % len(cyc)]
        u = rng.edge_uniforms(spec.seed, x)
        if spec.kind == "iid_lognormal":
            return np.exp(p["m"] + p["s"] * ndtri(u))
        if spec.kind == "iid_pareto":
            return p["xm"] * u ** (-1.0 / p["alpha"])
        return u ** (1.0 / p["beta"])

    def cbar_window(self, lo: int, hi: int) -> np.ndarray:
        c = self.edges(lo - 1, hi)
        return c[:-1] + c[1:]

    def transition_window(self, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
        c = self.edges(lo - 1, hi)
        cb = c[:-1] + c[1:]
        return c[:-1] / cb, c[1:] / cb

    # -- scalar queries
    def conductance(self, x: int) -> float:
        return float(self.edges(x, x + 1)[0])

    def cbar(self, x: int) -> float:
        return float(self.cbar_window(x, x + 1)[0])

    def transition(self, x: int) -> tuple[float, float]:
        pl, pr = self.transition_window(x, x + 1)
        return float(pl[0]), float(pr[0])

    # -- markov materialisation
    def _markov_edges(self, lo: int, hi: int) -> np.ndarray:
        with self._lock:
            if hi > len(self._right):
                self._extend(right=True, upto=hi)
            if -lo > len(self._left):
                self._extend(right=False, upto=-lo)
            right, left = self._right, self._left
        out = np.empty(hi - lo, dtype=np.int32)
        x = np.arange(lo, hi)
        pos = x >= 0
        out[pos] = right[x[pos]]
        out[~pos] = left[-x[~pos] - 1]
        return self._states[out]

    def _extend(self, right: bool, upto: int) -> None:
        cur = self._right if right else self._left
        target = max(upto, 2 * len(cur), 1024)
        start = len(cur)
        new = np.empty(target - start, dtype=np.int32)
        if right:
            xs = np.arange(start, target)
            cdfs = self._cdf_fwd
        else:
            xs = -np.arange(start, target) - 1
            cdfs = self._cdf_rev
        us = rng.edge_uniforms(self.spec.seed, xs).tolist()
        state = int(cur[-1]) if len(cur) else int(self._right[0])
        for i, u in enumerate(us):
            state = _draw(cdfs[state], u)
            new[i] = state
        if right:
            self._right = np.concatenate([cur, new])
        else:
            self._left = np.concatenate([cur, new])


def _draw(cdf: list, u: float) -> int:
    return min(bisect.bisect_right(cdf, u), len(cdf) - 1)


def build_env(spec: EnvSpec) -> Environment:
    return Environment(spec)


def birkhoff_mean(env: Environment, observable: str, L: int) -> float:
    """Window average over ``-L <= x < L`` of ``cbar`` or ``inv_c``."""
    if L < 1:
        raise ValueError("L must be >= 1")
    if observable == "cbar":
        vals = env.cbar_window(-L, L)
    elif observable == "inv_c":
        vals = 1.0 / env.edges(-L, L)
    else:
        raise ValueError(f"unknown observable {observable!r}")
    return math.fsum(vals.tolist()) / (2 * L)
