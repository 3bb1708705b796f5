"""Monte Carlo walker ensembles.

Walker ``i`` draws its ``t``-th uniform from a counter-based stream keyed by
``(master_seed, i)``, so an ensemble does not depend on chunking or on how
many threads run it.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import rng
from .environment import Environment

DEFAULT_CHUNK = 1 << 17
CAP_PER_K2 = 10**6


def _resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("CWLAB_THREADS", "1") or 1)
    return max(1, int(threads))


def right_thresholds(p_right: np.ndarray) -> np.ndarray:
    """Integer thresholds ``T`` with ``word < T  <=>  unit(word) < p_right``.

    ``unit(w) = ((w >> 12) + 0.5) 2**-52``, so for integer ``m = w >> 12`` the
    test ``m + 0.5 < p 2**52`` is ``m < ceil(p 2**52 - 0.5)``; all of it is
    exact in float64 because ``p < 1``.
    """
    t = np.ceil(np.asarray(p_right, dtype=float) * 2.0**52 - 0.5).astype(np.uint64)
    return t << np.uint64(12)


class _Stepper:
    """In-place evaluation of ``word(key, t)`` for a block of walker keys."""

    def __init__(self, keys: np.ndarray):
        self.keys = keys
        self.z = np.empty_like(keys)
        self.tmp = np.empty_like(keys)

    def compact(self, keep: np.ndarray) -> None:
        self.keys = self.keys[keep]
        self.z = self.z[: len(self.keys)]
        self.tmp = self.tmp[: len(self.keys)]

    def words(self, t: int) -> np.ndarray:
        z, tmp = self.z, self.tmp
        inc = np.uint64(((t + 1) * rng.GOLDEN) & rng.MASK64)
        with np.errstate(over="ignore"):
            np.add(self.keys, inc, out=z)
            np.right_shift(z, _S30, out=tmp)
            np.bitwise_xor(z, tmp, out=z)
            np.multiply(z, _M1, out=z)
            np.right_shift(z, _S27, out=tmp)
            np.bitwise_xor(z, tmp, out=z)
            np.multiply(z, _M2, out=z)
        np.right_shift(z, _S31, out=tmp)
        np.bitwise_xor(z, tmp, out=z)
        return z


_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)
_M1, _M2 = np.uint64(0xBF58476D1CE4E5B9), np.uint64(0x94D049BB133111EB)


def _chunks(n: int, size: int):
    return [(lo, min(n, lo + size)) for lo in range(0, n, size)]


def _map_chunks(fn, n_walkers: int, chunk: int, threads: int | None):
    spans = _chunks(n_walkers, chunk)
    threads = _resolve_threads(threads)
    if threads == 1 or len(spans) == 1:
        return [fn(lo, hi) for lo, hi in spans]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: fn(*s), spans))


@dataclass
class WalkEnsemble:
    env_label: str
    n_steps: int
    n_walkers: int
    master_seed: int
    sites: np.ndarray  # sorted, only sites with nonzero counts
    counts: np.ndarray

    @property
    def occupancy(self) -> dict[int, int]:
        return {int(x): int(c) for x, c in zip(self.sites, self.counts)}

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.n_walkers


def simulate(
    env: Environment,
    n_steps: int,
    n_walkers: int,
    master_seed: int,
    threads: int | None = None,
    chunk: int = DEFAULT_CHUNK,
) -> WalkEnsemble:
    """Positions at time ``n_steps`` of independent walkers started at 0."""
    if n_steps < 1 or n_walkers < 1:
        raise ValueError("n_steps and n_walkers must be >= 1")
    _, p_right = env.transition_window(-n_steps, n_steps + 1)
    thr = right_thresholds(p_right)
    k = rng.key(master_seed, rng.DOMAIN_WALK)

    def run(lo: int, hi: int) -> np.ndarray:
        stepper = _Stepper(rng.subkey_array(k, np.arange(lo, hi, dtype=np.uint64)))
        pos = np.full(hi - lo, n_steps, dtype=np.int64)  # shifted by +n_steps
        right = np.empty(hi - lo, dtype=bool)
        for t in range(n_steps):
            np.less(stepper.words(t), thr[pos], out=right)
            # step is +1 when right, -1 otherwise
            pos += right
            pos += right
            pos -= 1
        return np.bincount(pos, minlength=2 * n_steps + 1)

    total = np.zeros(2 * n_steps + 1, dtype=np.int64)
    for part in _map_chunks(run, n_walkers, chunk, threads):
        total += part
    nz = np.flatnonzero(total)
    return WalkEnsemble(env.label, n_steps, n_walkers, master_seed, nz - n_steps, total[nz])


# -- escape probabilities ----------------------------------------------------

def escape_probability_exact(env: Environment, K: int) -> float:
    """Probability of hitting {-K, K} before returning to 0: effective
    conductance between 0 and {-K, K}, divided by cbar(0)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    r_left = math.fsum((1.0 / env.edges(-K, 0)).tolist())
    r_right = math.fsum((1.0 / env.edges(0, K)).tolist())
    return (1.0 / r_left + 1.0 / r_right) / env.cbar(0)


@dataclass
class EscapeReport:
    K: int
    exact: float
    mc: float
    stderr: float
    capped_fraction: float
    n_walkers: int

    def to_json(self) -> dict:
        return {
            "K": self.K,
            "exact": self.exact,
            "mc": self.mc,
            "stderr": self.stderr,
            "capped_fraction": self.capped_fraction,
        }

    @property
    def z_score(self) -> float:
        if self.stderr == 0:
            return 0.0 if self.mc == self.exact else math.inf
        return abs(self.mc - self.exact) / self.stderr


def escape_probability_mc(
    env: Environment,
    K: int,
    n_walkers: int,
    master_seed: int,
    threads: int | None = None,
    chunk: int = DEFAULT_CHUNK,
    step_cap: int | None = None,
) -> EscapeReport:
    """Fraction of walkers from 0 that reach {-K, K} before coming back to 0.

    Walkers still running after ``step_cap`` steps (default ``10**6 K**2``)
    are counted as returned and reported in ``capped_fraction``.
    """
    if K < 1 or n_walkers < 1:
        raise ValueError("K and n_walkers must be >= 1")
    cap = CAP_PER_K2 * K * K if step_cap is None else step_cap
    _, p_right = env.transition_window(-K, K + 1)
    thr = right_thresholds(p_right)
    k = rng.key(master_seed, rng.DOMAIN_ESCAPE)

    def run(lo: int, hi: int) -> tuple[int, int]:
        stepper = _Stepper(rng.subkey_array(k, np.arange(lo, hi, dtype=np.uint64)))
        pos = np.full(hi - lo, K, dtype=np.int64)  # shifted by +K
        escaped = 0
        t = 0
        while len(pos) and t < cap:
            right = stepper.words(t) < thr[pos]
            pos += 2 * right - 1
            t += 1
            hit = (pos == 0) | (pos == 2 * K)
            done = hit | (pos == K)
            escaped += int(np.count_nonzero(hit))
            if done.any():
                keep = ~done
                stepper.compact(keep)
                pos = pos[keep]
        return escaped, len(pos)

    parts = _map_chunks(run, n_walkers, chunk, threads)
    escaped = sum(p[0] for p in parts)
    capped = sum(p[1] for p in parts)
    mc = escaped / n_walkers
    exact = escape_probability_exact(env, K)
    stderr = math.sqrt(exact * (1 - exact) / n_walkers)
    return EscapeReport(K, exact, mc, stderr, capped / n_walkers, n_walkers)


# -- distributional distances -----------------------------------------------

def ks_lattice(sites, probs, n: int, sigma2: float) -> float:
    """Kolmogorov-Smirnov distance between the law of ``S_n / sqrt(n)`` (atoms
    ``sites`` with masses ``probs``) and N(0, sigma2).

    The supremum is attained at an atom, from the left or the right.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    sites = np.asarray(sites)
    probs = np.asarray(probs, dtype=float)
    order = np.argsort(sites, kind="stable")
    z = sites[order] / math.sqrt(n)
    cdf = np.cumsum(probs[order])
    cdf_left = np.concatenate([[0.0], cdf[:-1]])
    phi = ndtr(z / math.sqrt(sigma2))
    return float(max(np.max(np.abs(cdf - phi)), np.max(np.abs(cdf_left - phi))))


def ks_distance(ens: WalkEnsemble, sigma2: float) -> float:
    return ks_lattice(ens.sites, ens.frequencies, ens.n_steps, sigma2)


def total_variation(ens: WalkEnsemble, sites, probs) -> float:
    """Half the l1 distance between the ensemble frequencies and a law on Z."""
    law = dict(zip(np.asarray(sites).tolist(), np.asarray(probs, dtype=float).tolist()))
    emp = dict(zip(ens.sites.tolist(), ens.frequencies.tolist()))
    keys = set(law) | set(emp)
    return 0.5 * math.fsum(abs(emp.get(x, 0.0) - law.get(x, 0.0)) for x in keys)
