"""Command-line front end: ``cwlab --config run.ini``.

The configuration is an INI file with three sections::

    [env]
    kind = periodic          # constant | periodic | iid_lognormal | iid_pareto | iid_power | markov
    cycle = 1, 2             # kind parameters; lists are comma separated,
    phase = 0                # matrix rows are separated by ';'
    seed = 0

    [run]
    command = verify         # env-sample | kernel | walk | verify | all
    n_max = 4096             # largest scheduled n (the kernel runs to time 2 n_max)
    schedule = 64, 128       # optional; dyadic 2^6 .. n_max by default
    x0 = 0
    delta = 0.25, 1
    walkers = 1000000
    walk_steps = 1000
    K = 1, 2, 5, 10
    out = out

    [tolerances]
    llt_rel = 0.01

Exit status: 0 when every asserted check passes, 1 when some check fails,
2 for configuration or usage errors.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import re
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import heat_kernel as hk
from . import limits
from .environment import EnvSpec, EnvSpecError, Environment, birkhoff_mean, build_env, integrability_class
from .svg import line_plot
from .walker import escape_probability_mc, simulate, total_variation

COMMANDS = ("env-sample", "kernel", "walk", "verify", "all")

_ENV_PARAMS = {
    "constant": {"kappa": "float"},
    "periodic": {"cycle": "floats", "phase": "int"},
    "iid_lognormal": {"m": "float", "s": "float"},
    "iid_pareto": {"alpha": "float", "xm": "float"},
    "iid_power": {"beta": "float"},
    "markov": {"states": "floats", "transition_matrix": "matrix"},
}
_ENV_DEFAULTS = {"periodic": {"phase": "0"}, "iid_pareto": {"xm": "1"}}

_RUN_KEYS = {
    "command": "str",
    "n_max": "int",
    "schedule": "ints",
    "x0": "int",
    "delta": "floats",
    "walkers": "int",
    "walk_steps": "int",
    "walk_seed": "int",
    "K": "ints",
    "out": "str",
    "clt_n": "int",
    "snapshots": "ints",
    "identities": "bool",
    "monotonicity": "bool",
}


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is a dotted path such as ``env.kappa``."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = key or ""
        if line is not None:
            where = f"line {line}" + (f" ({key})" if key else "")
        super().__init__(f"{where}: {message}" if where else message)
        self.key = key
        self.line = line


@dataclass
class RunConfig:
    env: EnvSpec
    command: str = "verify"
    n_max: int = 4096
    schedule: list[int] = field(default_factory=list)
    x0: int = 0
    delta: list[float] = field(default_factory=lambda: [0.25, 1.0])
    walkers: int = 10**6
    walk_steps: int = 0
    walk_seed: int = 0
    K: list[int] = field(default_factory=lambda: [1, 2, 5, 10])
    out: str = "out"
    clt_n: int = 0
    snapshots: list[int] = field(default_factory=list)
    identities: bool = True
    monotonicity: bool = True
    tolerances: limits.Tolerances = field(default_factory=limits.Tolerances)

    def describe(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("env", "tolerances", "out")}
        d["env"] = self.env.label
        return d


# -- parsing -----------------------------------------------------------------

def _parse_value(raw: str, kind: str, key: str, lines: dict[str, int] | None = None):
    raw = raw.strip()
    try:
        if kind == "str":
            return raw
        if kind == "int":
            return int(raw, 0)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind in ("ints", "floats"):
            conv = (lambda s: int(s, 0)) if kind == "ints" else float
            return [conv(p) for p in re.split(r"[,\s]+", raw) if p]
        if kind == "matrix":
            return [[float(p) for p in re.split(r"[,\s]+", row.strip()) if p] for row in raw.split(";") if row.strip()]
    except ValueError:
        pass
    raise ConfigError(f"cannot read {raw!r} as {kind}", key, (lines or {}).get(key))


def _key_lines(text: str) -> dict[str, int]:
    """Line number of every ``section.key`` for error messages."""
    lines, section = {}, None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
        elif section and s and not s.startswith(("#", ";")) and ("=" in s or ":" in s):
            key = re.split(r"[=:]", s, 1)[0].strip()
            lines.setdefault(f"{section}.{key}", i)
    return lines


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration text."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError("expected a [section] header", line=e.lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as e:
        raise ConfigError(e.message.split(":", 1)[-1].strip(), line=e.lineno) from None
    except configparser.ParsingError as e:
        lineno = e.errors[0][0]
        line = text.splitlines()[lineno - 1].strip()
        raise ConfigError(f"expected 'key = value', got {line!r}", line=lineno) from None
    lines = _key_lines(text)

    def err(msg, key):
        return ConfigError(msg, key, lines.get(key))

    unknown = [s for s in cp.sections() if s not in ("env", "run", "tolerances")]
    if unknown:
        raise ConfigError(f"unknown section [{unknown[0]}]", unknown[0])
    if "env" not in cp:
        raise ConfigError("missing [env] section", "env")

    env_sec = dict(cp["env"])
    kind = env_sec.pop("kind", None)
    if kind is None:
        raise err("missing", "env.kind")
    if kind not in _ENV_PARAMS:
        raise err(f"unknown kind {kind!r}; expected one of {', '.join(_ENV_PARAMS)}", "env.kind")
    seed = _parse_value(env_sec.pop("seed", "0"), "int", "env.seed", lines)
    raw = {**_ENV_DEFAULTS.get(kind, {}), **env_sec}
    params = {}
    for k, v in raw.items():
        if k not in _ENV_PARAMS[kind]:
            raise err(f"not a parameter of kind {kind!r}", f"env.{k}")
        val = _parse_value(v, _ENV_PARAMS[kind][k], f"env.{k}", lines)
        params[k] = tuple(tuple(r) for r in val) if _ENV_PARAMS[kind][k] == "matrix" else (
            tuple(val) if isinstance(val, list) else val)
    try:
        spec = EnvSpec(kind, params, seed)
    except EnvSpecError as e:
        raise ConfigError(str(e).split(": ", 1)[1], e.key, lines.get(e.key)) from None

    cfg = RunConfig(env=spec)
    run = dict(cp["run"]) if "run" in cp else {}
    for k, v in run.items():
        if k not in _RUN_KEYS:
            raise err("unknown key", f"run.{k}")
        setattr(cfg, k, _parse_value(v, _RUN_KEYS[k], f"run.{k}", lines))
    tol_names = {f.name: f.type for f in fields(limits.Tolerances)}
    overrides = {}
    for k, v in (dict(cp["tolerances"]) if "tolerances" in cp else {}).items():
        if k not in tol_names:
            raise err("unknown key", f"tolerances.{k}")
        kind_ = "int" if "int" in str(tol_names[k]) else "float"
        val = _parse_value(v, kind_, f"tolerances.{k}", lines)
        if not val > 0:
            raise err("must be positive", f"tolerances.{k}")
        overrides[k] = val
    cfg.tolerances = replace(limits.Tolerances(), **overrides)
    _check(cfg, err)
    return cfg


def _check(cfg: RunConfig, err) -> None:
    if cfg.command not in COMMANDS:
        raise err(f"unknown command {cfg.command!r}; expected one of {', '.join(COMMANDS)}", "run.command")
    if cfg.n_max < 1:
        raise err("must be >= 1", "run.n_max")
    if cfg.n_max > hk.MAX_STEPS // 2:
        raise err(f"must be <= {hk.MAX_STEPS // 2}", "run.n_max")
    if not cfg.schedule:
        # dyadic from 2^6, started lower when needed to keep enough points for trend tests
        jmax = cfg.n_max.bit_length() - 1
        cfg.schedule = limits.dyadic_schedule(cfg.n_max, jmin=max(0, min(6, jmax - cfg.tolerances.trend_points + 1)))
    if any(n < 1 or n > cfg.n_max for n in cfg.schedule):
        raise err(f"entries must lie in [1, n_max={cfg.n_max}]", "run.schedule")
    if sorted(set(cfg.schedule)) != cfg.schedule:
        raise err("must be strictly increasing", "run.schedule")
    if cfg.x0 % 2 or abs(cfg.x0) > cfg.n_max:
        raise err("must be even with |x0| <= n_max", "run.x0")
    if not cfg.delta or any(not (d > 0 and math.isfinite(d)) for d in cfg.delta):
        raise err("must be positive", "run.delta")
    if cfg.walkers < 1:
        raise err("must be >= 1", "run.walkers")
    if cfg.walk_steps == 0:
        cfg.walk_steps = min(cfg.n_max, 1000)
    if cfg.walk_steps < 1:
        raise err("must be >= 1", "run.walk_steps")
    if not 0 <= cfg.walk_seed < 2**64:
        raise err("must be a 64-bit unsigned integer", "run.walk_seed")
    if not cfg.K or any(k < 1 for k in cfg.K):
        raise err("entries must be >= 1", "run.K")
    if cfg.clt_n == 0:
        cfg.clt_n = 2 * cfg.schedule[-1]
    if not 1 <= cfg.clt_n <= 2 * cfg.n_max:
        raise err("must lie in [1, 2 n_max]", "run.clt_n")
    if not cfg.snapshots:
        cfg.snapshots = [2 * cfg.n_max]
    if any(t < 0 or t > 2 * cfg.n_max for t in cfg.snapshots):
        raise err("entries must lie in [0, 2 n_max]", "run.snapshots")
    if cfg.schedule and len(cfg.schedule) < cfg.tolerances.trend_points and cfg.command in ("verify", "all"):
        raise err(f"verify needs at least {cfg.tolerances.trend_points} scheduled points", "run.schedule")


# -- output helpers ---------------------------------------------------------------

def _num(v) -> str:
    v = float(v)
    return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return _json_safe(obj.item())
    return obj


def series_key(r: limits.VerificationRecord) -> str:
    """Record series name: theorem id qualified by delta or eps when present."""
    for k in ("delta", "eps"):
        if k in r.metadata:
            return f"{r.theorem}[{k}={r.metadata[k]:g}]"
    return r.theorem


def _sort_records(records):
    return sorted(records, key=lambda r: (r.theorem, r.env, r.n, json.dumps(_json_safe(r.metadata), sort_keys=True)))


# -- the runner -----------------------------------------------------------------

class Runner:
    def __init__(self, cfg: RunConfig, out: Path, threads: int | None, quiet: bool):
        self.cfg, self.out, self.threads, self.quiet = cfg, out, threads, quiet
        self.env: Environment = build_env(cfg.env)
        self.records: list[limits.VerificationRecord] = []
        self.checks: list[limits.Check] = []
        self.extra: dict = {}

    def log(self, msg: str) -> None:
        if not self.quiet:
            print(msg, file=sys.stderr)

    def env_sample(self) -> None:
        n = self.cfg.n_max
        c = self.env.edges(-n, n)
        cb = self.env.cbar_window(-n, n)
        pl, pr = self.env.transition_window(-n, n)
        xs = range(-n, n)
        write_csv(self.out / "environment.csv", ["x", "conductance", "cbar", "p_left", "p_right"],
                  [(x, _num(a), _num(b), _num(p), _num(q)) for x, a, b, p, q in zip(xs, c, cb, pl, pr)])
        klass = integrability_class(self.cfg.env)
        self.extra["environment"] = {
            "label": self.env.label,
            "cbar_integrable": klass.cbar_integrable,
            "inv_c_integrable": klass.inv_c_integrable,
            "window_mean_cbar": birkhoff_mean(self.env, "cbar", n),
            "window_mean_inv_c": birkhoff_mean(self.env, "inv_c", n),
            "window_L": n,
        }
        self.log(f"wrote environment.csv ({2 * n} edges)")

    def kernel(self) -> None:
        cfg = self.cfg
        N = 2 * cfg.n_max
        run = hk.run_to(self.env, cfg.x0, N, snapshot_times=cfg.snapshots)
        E = run.energies.energies
        write_csv(self.out / "energies.csv", ["n", "energy"], [(m, _num(e)) for m, e in enumerate(E)])
        worst_mass = 0.0
        for t in sorted(cfg.snapshots):
            st = run.snapshots[t]
            sites, occ = hk.occupation_law(st, self.env, run.coeffs)
            write_csv(self.out / f"snapshot_{t}.csv", ["x", "h_value", "occupation"],
                      [(int(x), _num(h), _num(p)) for x, h, p in zip(sites, st.values, occ)])
            worst_mass = max(worst_mass, abs(math.fsum(occ.tolist()) - 1) / (t + 1))
        increasing = int(np.count_nonzero(np.diff(E) > 0))
        self.checks.append(limits.Check("mass_conservation", worst_mass <= 1e-12, margin=1e-12 - worst_mass,
                                        detail=f"max |mass - 1| / (n + 1) = {worst_mass:.3e}"))
        self.checks.append(limits.Check("energy_monotone", increasing == 0, margin=-increasing,
                                        detail=f"{increasing} increasing steps in {N}"))
        self.log(f"kernel to time {N}: energies.csv and {len(cfg.snapshots)} snapshot(s)")

    def walk(self) -> None:
        cfg, tol = self.cfg, self.cfg.tolerances
        n = cfg.walk_steps
        ens = simulate(self.env, n, cfg.walkers, cfg.walk_seed, threads=self.threads)
        write_csv(self.out / "occupancy.csv", ["x", "count", "frequency"],
                  [(int(x), int(c), _num(f)) for x, c, f in zip(ens.sites, ens.counts, ens.frequencies)])
        run = hk.run_to(self.env, 0, n, snapshot_times={n})
        sites, probs = hk.occupation_law(run.snapshots[n], self.env, run.coeffs)
        tv = total_variation(ens, sites, probs)
        self.records.append(limits.VerificationRecord("mc_total_variation", self.env.label, n, tv, 0.0,
                                                      {"walkers": cfg.walkers, "seed": cfg.walk_seed}))
        self.checks.append(limits.Check("mc_total_variation", tv < tol.tv, margin=tol.tv - tv,
                                        detail=f"TV={tv:.3e} at n={n} with {cfg.walkers} walkers"))
        escapes = []
        for K in cfg.K:
            rep = escape_probability_mc(self.env, K, cfg.walkers, cfg.walk_seed, threads=self.threads)
            escapes.append(rep.to_json())
            self.records.append(limits.VerificationRecord("escape", self.env.label, K, rep.mc, rep.exact,
                                                          {"K": K, "stderr": rep.stderr,
                                                           "capped_fraction": rep.capped_fraction}))
            self.checks.append(limits.Check(f"escape(K={K})", rep.z_score <= 5, margin=5 - rep.z_score,
                                            detail=f"mc={rep.mc:.6f} exact={rep.exact:.6f} z={rep.z_score:.2f} "
                                                   f"capped={rep.capped_fraction:g}"))
        (self.out / "escape.json").write_text(json.dumps(_json_safe(escapes), indent=2) + "\n", encoding="utf-8")
        self.log(f"walk: {cfg.walkers} walkers, n={n}, TV={tv:.3e}; escape for K={cfg.K}")

    def verify(self) -> None:
        cfg = self.cfg
        rep = limits.verify_environment(
            self.env, cfg.schedule, x0=cfg.x0, deltas=cfg.delta, clt_n=cfg.clt_n, tol=cfg.tolerances,
            identities=cfg.identities, monotonicity=(200, 12) if cfg.monotonicity else None,
        )
        self.records += rep.records
        self.checks += rep.checks
        self.log(f"verify: {len(rep.records)} records, {sum(c.passed for c in rep.checks)}/{len(rep.checks)} checks")

    def plots(self) -> None:
        groups: dict[str, list] = {}
        for r in self.records:
            groups.setdefault(series_key(r), []).append(r)
        for name, rs in groups.items():
            rs = sorted(rs, key=lambda r: r.n)
            if len(rs) < 2:
                continue
            ys = {"observed": [r.observed for r in rs]}
            if any(math.isfinite(r.target) for r in rs):
                ys["target"] = [r.target for r in rs]
            fname = re.sub(r"[^A-Za-z0-9_.-]+", "", name.replace("[", "_"))
            x_label = "K" if name == "escape" else "n"
            (self.out / f"series_{fname}.svg").write_text(
                line_plot(f"{name}: {self.env.label}", [r.n for r in rs], ys, x_label=x_label), encoding="utf-8")

    def report(self) -> bool:
        asserted = [c for c in self.checks if c.asserted]
        failures = [c.name for c in asserted if not c.passed]
        records = _sort_records(self.records)
        doc = {
            "version": __version__,
            "env": self.env.label,
            "command": self.cfg.command,
            "config": self.cfg.describe(),
            "tolerances": asdict(self.cfg.tolerances),
            "records": [r.to_json() for r in records],
            "summary": {c.name: c.to_json() for c in self.checks},
            "failures": failures,
            "passed": not failures,
            **self.extra,
        }
        (self.out / "report.json").write_text(json.dumps(_json_safe(doc), indent=2) + "\n", encoding="utf-8")
        write_csv(self.out / "report.csv", ["theorem", "n", "observed", "target", "gap"],
                  [(series_key(r), r.n, _num(r.observed), _num(r.target), _num(r.gap)) for r in records])
        self.plots()
        for c in self.checks:
            tag = "PASS" if c.passed else ("FAIL" if c.asserted else "INFO")
            self.log(f"  {tag} {c.name}: {c.detail}")
        return not failures

    def run(self) -> bool:
        self.out.mkdir(parents=True, exist_ok=True)
        cmd = self.cfg.command
        if cmd in ("env-sample", "all"):
            self.env_sample()
        if cmd in ("kernel", "all"):
            self.kernel()
        if cmd in ("walk", "all"):
            self.walk()
        if cmd in ("verify", "all"):
            self.verify()
        return self.report()


def run(cfg: RunConfig, out: str | os.PathLike | None = None, threads: int | None = None,
        quiet: bool = True) -> int:
    """Execute ``cfg``; returns the process exit status."""
    ok = Runner(cfg, Path(out or cfg.out), threads, quiet).run()
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cwlab", description="Random walks in random conductance environments on Z.")
    p.add_argument("--config", required=True, help="path to the INI configuration")
    p.add_argument("--seed", type=lambda s: int(s, 0), help="override the environment seed (u64)")
    p.add_argument("--out", help="output directory (overrides run.out)")
    p.add_argument("--threads", type=int, help="walker threads (default: $CWLAB_THREADS or 1)")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as e:
        print(f"cwlab: cannot read config: {e}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
        if args.seed is not None:
            try:
                cfg.env = cfg.env.with_seed(args.seed)
            except EnvSpecError as e:
                raise ConfigError(str(e).split(": ", 1)[1], "--seed") from None
        if args.threads is not None and args.threads < 1:
            raise ConfigError("must be >= 1", "--threads")
    except ConfigError as e:
        print(f"cwlab: config error: {e}", file=sys.stderr)
        return 2
    return run(cfg, args.out, args.threads, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
