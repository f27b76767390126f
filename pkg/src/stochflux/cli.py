"""Command-line entry point.

``stochflux run <config> [--section.key=value ...] [--workers N]`` runs one
experiment and writes its artifacts under ``<outdir>/<experiment>-<hash>/``;
``stochflux replay <artifact>`` re-runs an artifact and checks that every
file comes out byte-identical.

Exit codes: 0 success, 1 a checked property failed (or replay differs),
2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import field as fld
from .field import Field, Grid
from .model import ModelError, ModelSpec, builtin_model, validate_assumptions
from .noise import KickSpec, KickStream, gradient_variance
from .solver import FLUX_SCHEMES, SolverConfig, evolve_many, phi_flow

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SEED_ENV = "STOCHFLUX_SEED"
MANIFEST = "manifest.json"


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every offending key."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# -- schema -----------------------------------------------------------------------

_NUM = "number"
_OPT_NUM = "number|null"
_INT = "integer"
_OPT_INT = "integer|null"
_STR = "string"
_BOOL = "boolean"
_NUMS = "number list"
_INTS = "integer list"
_OPT_INTS = "integer list|null"

SECTIONS = {
    "model": {
        "name": (_STR, "burgers"),
        "hamiltonian": (_STR, "default"),
        "hamiltonian_coef": (_OPT_NUM, None),
        "kappa0": (_OPT_NUM, None),
        "c_kappa": (_OPT_NUM, None),
        "lambda_": (_OPT_NUM, None),
        "c1": (_OPT_NUM, None),
        "c2": (_OPT_NUM, None),
        "c_h": (_OPT_NUM, None),
        "q": (_OPT_NUM, None),
    },
    "grid": {"L": (_NUM, 16.0), "N": (_INT, 512)},
    "kick": {"sigma_target": (_NUM, 0.5), "n_modes": (_INT, 32), "cutoff": (_NUM, 8.0)},
    "solver": {
        "cfl_safety": (_NUM, 0.45),
        "max_dt": (_NUM, 1.0),
        "flux_scheme": (_STR, "engquist_osher"),
        "record_every": (_NUM, 0.125),
        "weight_ells": (_NUMS, [0.5]),
    },
}

EXPERIMENTS = {
    "validate": {"u_min": (_NUM, -10.0), "u_max": (_NUM, 10.0), "n_samples": (_INT, 4001)},
    "simulate": {"a": (_NUM, 0.0), "T": (_NUM, 4.0), "init": (_STR, "constant"),
                 "amplitude": (_NUM, 1.0), "mode": (_INT, 1), "snapshots": (_BOOL, False)},
    "invariant": {"a": (_NUM, 0.0), "T": (_NUM, 32.0), "M": (_INT, 64),
                  "probe": (_OPT_INT, None)},
    "ordering": {"initials": (_NUMS, [0.0, 1.0]), "T": (_NUM, 8.0), "burn_in": (_NUM, 0.0)},
    "contraction": {"T": (_NUM, 2.0), "amplitude": (_NUM, 1.0), "mode": (_INT, 1),
                    "kicked": (_BOOL, False), "weighted_ell": (_OPT_NUM, None)},
    "colehopf": {"T": (_NUM, 2.0), "lam": (_OPT_NUM, None), "c2": (_OPT_NUM, None),
                 "amplitude": (_NUM, 1.0), "M": (_INT, 16), "horizon": (_INT, 8)},
    "supersolution": {"samples": (_INT, 100), "times": (_NUMS, [0.1, 0.5, 1.0]),
                      "lam": (_OPT_NUM, None)},
    "distribution": {"a": (_NUM, 0.0), "probe_cells": (_OPT_INTS, None), "lag": (_NUM, 0.5),
                     "T": (_NUM, 64.0), "M": (_INT, 32), "bins": (_INT, 40),
                     "burn_in": (_OPT_NUM, None), "threshold": (_NUM, 0.1),
                     "horizons": (_NUMS, [])},
}

TOP_LEVEL = {"seed_root": (_INT, 0), "outdir": (_STR, "runs"), "workers": (_INT, 1)}
# keys that do not change results and so stay out of the hash
UNHASHED = ("outdir", "workers")


def _coerce(kind: str, value, path: str, errors: list):
    def is_int(v):
        return isinstance(v, (int, np.integer)) and not isinstance(v, bool)

    def is_num(v):
        return (is_int(v) or isinstance(v, (float, np.floating))) and math.isfinite(float(v))

    if kind.endswith("|null") and value is None:
        return None
    base = kind.split("|")[0]
    if base == _NUM and is_num(value):
        return float(value)
    if base == _INT and is_int(value):
        return int(value)
    if base == _STR and isinstance(value, str):
        return value
    if base == _BOOL and isinstance(value, bool):
        return value
    if base == _NUMS and isinstance(value, (list, tuple)) and all(is_num(v) for v in value):
        return [float(v) for v in value]
    if base == _INTS and isinstance(value, (list, tuple)) and all(is_int(v) for v in value):
        return [int(v) for v in value]
    errors.append(f"{path}: expected {kind}, got {value!r}")
    return None


def _resolve_table(raw, schema: dict, prefix: str, errors: list) -> dict:
    if not isinstance(raw, dict):
        errors.append(f"{prefix}: expected a table")
        raw = {}
    for key in sorted(set(raw) - set(schema)):
        errors.append(f"{prefix}.{key}: unknown key" if prefix else f"{key}: unknown key")
    out = {}
    for key, (kind, default) in schema.items():
        out[key] = copy.deepcopy(default)
        if key in raw:
            n = len(errors)
            value = _coerce(kind, raw[key], f"{prefix}.{key}" if prefix else key, errors)
            if len(errors) == n:
                out[key] = value
    return out


@dataclass
class ExperimentConfig:
    """Fully resolved run configuration (every default filled in)."""

    experiment: dict
    model: dict
    grid: dict
    kick: dict
    solver: dict
    seed_root: int = 0
    outdir: str = "runs"
    workers: int = 1

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        errors = []
        if not isinstance(raw, dict):
            raise ConfigError(["config: expected a table"])
        known = set(SECTIONS) | set(TOP_LEVEL) | {"experiment"}
        for key in sorted(set(raw) - known):
            errors.append(f"{key}: unknown key")
        exp_raw = raw.get("experiment", {})
        if not isinstance(exp_raw, dict):
            errors.append("experiment: expected a table")
            exp_raw = {}
        name = exp_raw.get("name")
        if name not in EXPERIMENTS:
            errors.append(f"experiment.name: expected one of {sorted(EXPERIMENTS)}, "
                          f"got {name!r}")
            experiment = {"name": name}
        else:
            params = {k: v for k, v in exp_raw.items() if k != "name"}
            experiment = {"name": name,
                          **_resolve_table(params, EXPERIMENTS[name], "experiment", errors)}
        sections = {s: _resolve_table(raw.get(s, {}), schema, s, errors)
                    for s, schema in SECTIONS.items()}
        top = _resolve_table({k: v for k, v in raw.items() if k in TOP_LEVEL},
                             TOP_LEVEL, "", errors)
        # bad values were replaced by defaults above, so the range checks
        # still run and every offending key gets reported
        cfg = cls(experiment=experiment, **sections, **top)
        if experiment["name"] in EXPERIMENTS:
            try:
                cfg.check()
            except ConfigError as exc:
                errors.extend(exc.errors)
        if errors:
            raise ConfigError(errors)
        return cfg

    def check(self):
        """Range checks that need the typed values; raises ConfigError."""
        errors = []
        g, k, s = self.grid, self.kick, self.solver
        if not g["L"] > 0:
            errors.append("grid.L: must be positive")
        if g["N"] < 8:
            errors.append("grid.N: must be at least 8")
        if k["sigma_target"] < 0:
            errors.append("kick.sigma_target: must be non-negative")
        if k["n_modes"] < 1:
            errors.append("kick.n_modes: must be positive")
        elif k["sigma_target"] > 0 and g["N"] < 8 * k["n_modes"]:
            errors.append("kick.n_modes: grid.N must be at least 8 * n_modes")
        if not k["cutoff"] > 0:
            errors.append("kick.cutoff: must be positive")
        if not 0 < s["cfl_safety"] <= 1:
            errors.append("solver.cfl_safety: must lie in (0, 1]")
        if not s["max_dt"] > 0:
            errors.append("solver.max_dt: must be positive")
        if s["flux_scheme"] not in FLUX_SCHEMES:
            errors.append(f"solver.flux_scheme: expected one of {sorted(FLUX_SCHEMES)}")
        if not s["record_every"] > 0:
            errors.append("solver.record_every: must be positive")
        if any(not 0 <= e < 1 for e in s["weight_ells"]):
            errors.append("solver.weight_ells: entries must lie in [0, 1)")
        if self.workers < 1:
            errors.append("workers: must be at least 1")
        e = self.experiment
        for key in ("T", "lag", "amplitude"):
            if key in e and not e[key] > 0 and not (key == "amplitude" and e[key] == 0):
                errors.append(f"experiment.{key}: must be positive")
        for key in ("M", "samples", "bins", "horizon", "mode", "n_samples"):
            if key in e and e[key] < 1:
                errors.append(f"experiment.{key}: must be positive")
        if e["name"] == "invariant":
            if e["M"] < 8:
                errors.append("experiment.M: need at least 8 paths")
            if e["T"] < 4:
                errors.append("experiment.T: need T >= 4")
        if e["name"] == "ordering" and len(e["initials"]) < 2:
            errors.append("experiment.initials: need at least two values")
        if e["name"] == "supersolution" and any(not 0 < t <= 1 for t in e["times"]):
            errors.append("experiment.times: entries must lie in (0, 1]")
        if e["name"] == "distribution":
            if e["probe_cells"] is not None and (
                    not e["probe_cells"] or
                    any(not 0 <= c < g["N"] for c in e["probe_cells"])):
                errors.append("experiment.probe_cells: need cells in [0, N)")
            if any(not 0 < h <= e["T"] for h in e["horizons"]):
                errors.append("experiment.horizons: entries must lie in (0, T]")
        if e["name"] == "validate" and not e["u_min"] < e["u_max"]:
            errors.append("experiment.u_max: must exceed u_min")
        try:
            self.model_spec()
        except (ModelError, ValueError) as exc:
            errors.append(f"model: {exc}")
        if errors:
            raise ConfigError(errors)

    # -- serialization --

    def to_dict(self) -> dict:
        return {"experiment": dict(self.experiment), "model": dict(self.model),
                "grid": dict(self.grid), "kick": dict(self.kick),
                "solver": dict(self.solver), "seed_root": self.seed_root,
                "outdir": self.outdir, "workers": self.workers}

    def hashed_dict(self) -> dict:
        d = self.to_dict()
        for k in UNHASHED:
            d.pop(k)
        return d

    def config_hash(self) -> str:
        return config_hash(self.hashed_dict())

    # -- domain objects --

    def model_spec(self) -> ModelSpec:
        m = self.model
        consts = {k: m[k] for k in ("kappa0", "c_kappa", "lambda_", "c1", "c2", "c_h", "q")
                  if m[k] is not None}
        return builtin_model(m["name"], hamiltonian=m["hamiltonian"],
                             hamiltonian_coef=m["hamiltonian_coef"], **consts)

    def grid_obj(self) -> Grid:
        return Grid(self.grid["L"], self.grid["N"])

    def kick_spec(self) -> KickSpec:
        return KickSpec(sigma_target=self.kick["sigma_target"], n_modes=self.kick["n_modes"],
                        cutoff=self.kick["cutoff"], seed_root=self.seed_root)

    def solver_config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(cfl_safety=s["cfl_safety"], max_dt=s["max_dt"],
                            flux_scheme=s["flux_scheme"], record_every=s["record_every"],
                            weight_ells=tuple(s["weight_ells"]))


def canonical_json(obj) -> str:
    """Sorted keys, no whitespace, shortest round-trip floats."""
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(d: dict) -> str:
    """64-bit hex digest of the canonical serialization."""
    return hashlib.sha256(canonical_json(d).encode()).hexdigest()[:16]


def serialize_config(cfg: ExperimentConfig) -> str:
    return canonical_json(cfg.to_dict())


def parse_config(text: str, fmt: str = "json") -> ExperimentConfig:
    try:
        raw = json.loads(text) if fmt == "json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError([f"config: cannot parse ({exc})"])
    return ExperimentConfig.from_dict(raw)


def load_config(path, overrides=(), env=None) -> ExperimentConfig:
    """Read a TOML or JSON config, apply ``section.key=value`` overrides and the
    seed environment variable."""
    path = Path(path)
    env = os.environ if env is None else env
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path} ({exc.strerror})"])
    fmt = "toml" if path.suffix.lower() == ".toml" else "json"
    try:
        raw = json.loads(text) if fmt == "json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError([f"config: cannot parse {path} ({exc})"])
    if not isinstance(raw, dict):
        raise ConfigError(["config: expected a table"])
    errors = []
    for item in overrides:
        apply_override(raw, item, errors)
    if env.get(SEED_ENV):
        try:
            raw["seed_root"] = int(env[SEED_ENV], 0)
        except ValueError:
            errors.append(f"{SEED_ENV}: not an integer ({env[SEED_ENV]!r})")
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig.from_dict(raw)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(raw: dict, item: str, errors: list):
    """Apply ``dotted.path=value`` in place."""
    if "=" not in item:
        errors.append(f"override {item!r}: expected key=value")
        return
    key, text = item.split("=", 1)
    key = key.lstrip("-")
    parts = key.split(".")
    if not all(parts):
        errors.append(f"override {item!r}: malformed key")
        return
    node = raw
    for p in parts[:-1]:
        nxt = node.setdefault(p, {})
        if not isinstance(nxt, dict):
            errors.append(f"override {item!r}: {p} is not a table")
            return
        node = nxt
    node[parts[-1]] = _parse_value(text)


# -- results ----------------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


@dataclass
class Outcome:
    checks: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)   # name -> str or bytes

    def check(self, prop: str, passed: bool, margin: float, detail: str = ""):
        self.checks.append({"property": prop, "passed": bool(passed),
                            "margin": float(margin), "detail": detail})

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)


def _report_line(c: dict) -> str:
    word = "PASS" if c["passed"] else "FAIL"
    extra = f"; {c['detail']}" if c.get("detail") else ""
    return f"{word} {c['property']} (margin {c['margin']:.3e}{extra})"


# -- experiments --------------------------------------------------------------------

def _exp_validate(cfg: ExperimentConfig, workers: int) -> Outcome:
    e = cfg.experiment
    rep = validate_assumptions(cfg.model_spec(), e["u_min"], e["u_max"], e["n_samples"])
    out = Outcome()
    for entry in rep.entries:
        out.check(f"assumption {entry['inequality']}", entry["slack"] >= 0, entry["slack"],
                  f"worst u = {entry['worst_u']:.6g}")
    out.summary = {"entries": rep.to_json()}
    return out


def _initial(grid: Grid, a: float, amplitude: float, mode: int, kind: str) -> Field:
    if kind == "constant":
        return Field.constant(grid, a)
    if kind == "sin":
        return Field.from_function(
            grid, lambda x: a + amplitude * np.sin(2 * np.pi * mode * x / grid.length))
    raise ConfigError([f"experiment.init: expected 'constant' or 'sin', got {kind!r}"])


def _exp_simulate(cfg: ExperimentConfig, workers: int) -> Outcome:
    e = cfg.experiment
    grid = cfg.grid_obj()
    spec = cfg.model_spec()
    u0 = _initial(grid, e["a"], e["amplitude"], e["mode"], e["init"])
    traj = phi_flow(u0, 0.0, e["T"], spec, cfg.kick_spec(), cfg.solver_config(),
                    store=True)
    out = Outcome()
    m0 = float(np.sum(u0.values))
    drift = max(abs(float(np.sum(s.values)) - m0) for s in traj.snapshots) / grid.cells
    tol = 1e-12 * max(1.0, float(np.max(np.abs(u0.values))))
    out.check("spatial mean conservation", drift <= tol, tol - drift)
    wkeys = [k for k in traj.diagnostics[0] if k.startswith("weighted_sup_")]
    worst = max((row[k] for row in traj.diagnostics for k in wkeys), default=0.0)
    out.check("weighted sup norm finite", math.isfinite(worst), worst)
    out.files["diagnostics.jsonl"] = traj.to_jsonl()
    out.files["final.csv"] = fld.to_csv(traj.final())
    if e["snapshots"]:
        out.files["snapshots.bin"] = b"".join(fld.to_bytes(s) for s in traj.snapshots)
    out.summary = {"steps": traj.steps, "records": len(traj.times),
                   "final": traj.diagnostics[-1]}
    return out


def _exp_invariant(cfg: ExperimentConfig, workers: int) -> Outcome:
    from .ergodics import invariant_estimate

    e = cfg.experiment
    grid = cfg.grid_obj()
    stats = invariant_estimate(e["a"], cfg.model_spec(), cfg.kick_spec(), cfg.solver_config(),
                               grid, e["M"], e["T"], cfg.seed_root, workers=workers,
                               probe=e["probe"])
    out = Outcome()
    for c in stats.checks:
        out.check(c["property"], c["passed"], c["margin"])
    out.summary = stats.to_json()
    out.summary["gradient_variance"] = gradient_variance(cfg.kick_spec(), grid.length)
    lines = ["t," + ",".join(f"{n},{n}_se" for n in stats.averages)]
    for k, t in enumerate(stats.times):
        vals = [f"{float(stats.averages[n][k])!r},{float(stats.standard_errors[n][k])!r}"
                for n in stats.averages]
        lines.append(f"{float(t)!r}," + ",".join(vals))
    out.files["time_averages.csv"] = "\n".join(lines) + "\n"
    return out


def _exp_ordering(cfg: ExperimentConfig, workers: int) -> Outcome:
    from .ergodics import ordering_experiment

    e = cfg.experiment
    grid = cfg.grid_obj()
    initials = [Field.constant(grid, a) for a in e["initials"]]
    rep = ordering_experiment(initials, cfg.model_spec(), cfg.kick_spec(),
                              cfg.solver_config(), e["T"], cfg.seed_root, e["burn_in"])
    out = Outcome()
    for (j, i) in rep.labels:
        aj, ai = e["initials"][j], e["initials"][i]
        want = ("always_plus" if aj > ai else "always_minus" if aj < ai
                else "identically_zero")
        got = rep.signs[(j, i)]
        after = rep.times >= e["burn_in"]
        if want == "always_plus":
            margin = float(np.min(rep.minima[(j, i)][after]))
        elif want == "always_minus":
            margin = float(-np.max(rep.maxima[(j, i)][after]))
        else:
            margin = -float(np.max(np.abs(np.concatenate(
                [rep.minima[(j, i)], rep.maxima[(j, i)]]))))
        out.check(f"comparison principle u{j} - u{i}", got == want, margin,
                  f"sign {got}, expected {want}")
    out.summary = rep.to_json()
    return out


def _exp_contraction(cfg: ExperimentConfig, workers: int) -> Outcome:
    from .ergodics import contraction_test

    e = cfg.experiment
    grid = cfg.grid_obj()
    u0 = _initial(grid, 0.0, e["amplitude"], e["mode"], "sin")
    v0 = Field.constant(grid, 0.0)
    ks = cfg.kick_spec() if e["kicked"] else None
    res = contraction_test(u0, v0, cfg.model_spec(), cfg.solver_config(), e["T"],
                           kick_spec=ks, seed=cfg.seed_root, weighted_ell=e["weighted_ell"])
    out = Outcome()
    tol = 1e-10 * float(res["distance"][0])
    out.check("L1 contraction", res["passed"], tol - res["max_increase"])
    lines = ["t,l1_distance" + (",weighted_distance" if "weighted_distance" in res else "")]
    for k, t in enumerate(res["times"]):
        row = f"{float(t)!r},{float(res['distance'][k])!r}"
        if "weighted_distance" in res:
            row += f",{float(res['weighted_distance'][k])!r}"
        lines.append(row)
    out.files["distance.csv"] = "\n".join(lines) + "\n"
    out.summary = {k: v for k, v in res.items() if k not in ("times", "distance",
                                                             "weighted_distance")}
    return out


def _exp_colehopf(cfg: ExperimentConfig, workers: int) -> Outcome:
    from .transforms import (cole_hopf, fit_growth, hopf_growth, hopf_pde_residual,
                             integrate_hj)

    e = cfg.experiment
    spec = cfg.model_spec()
    m = cfg.model
    exact = m["hamiltonian"] == "quadratic" and spec.kernel[0] == 0
    lam = e["lam"] if e["lam"] is not None else (
        m["hamiltonian_coef"] / spec.kernel[1] if exact else spec.lambda_)
    c2 = e["c2"] if e["c2"] is not None else (0.0 if exact else spec.c2)
    ks = cfg.kick_spec()
    sc = cfg.solver_config()
    out = Outcome()
    rows = []
    for factor in (1, 2):
        grid = Grid(cfg.grid["L"], cfg.grid["N"] * factor)
        sc_f = SolverConfig(sc.cfl_safety, sc.max_dt, sc.flux_scheme,
                            sc.record_every / factor, (), sc.weight_ells)
        u0 = _initial(grid, 0.0, e["amplitude"], 1, "sin")
        traj = phi_flow(u0, 0.0, e["T"], spec, ks, sc_f, store=True)
        pot = integrate_hj(traj, spec, KickStream(ks, grid))
        err = max(float(np.max(np.abs(pot.gradient(k).values - traj.snapshots[k].values)))
                  for k in range(len(traj.times)))
        row = {"N": grid.cells, "dx": grid.dx, "gradient_error": err,
               "u_sup": max(fld.sup_norm(s) for s in traj.snapshots)}
        if exact:
            # one shift for the whole path keeps phi a solution of the same equation
            shift = min(float(np.min(h.values)) for h in pot.h_snapshots)
            phis = [cole_hopf(h - shift, lam) for h in pot.h_snapshots]
            row["residual"] = hopf_pde_residual(traj.times, phis, spec, c2, lam,
                                                kick_times=sorted(traj.pre_kick))
        rows.append(row)
    for r in rows:
        bound = 5 * r["dx"] ** 2 * max(r["u_sup"], 1.0)
        out.check(f"potential gradient consistency N={r['N']}", r["gradient_error"] <= bound,
                  bound - r["gradient_error"])
    order = math.log2(rows[0]["gradient_error"] / rows[1]["gradient_error"]) \
        if rows[1]["gradient_error"] > 0 else math.inf
    out.check("potential gradient refinement order", order >= 1.9, order - 1.9)
    if exact:
        r0, r1 = rows[0]["residual"], rows[1]["residual"]
        rate = math.log2(r0 / r1) if r1 > 0 else math.inf
        out.summary["residual_order"] = rate
        out.check("Cole-Hopf residual refinement order", rate >= 1.9, rate - 1.9,
                  f"residuals {r0:.3e} -> {r1:.3e}")
    grid = cfg.grid_obj()
    short = hopf_growth(spec, ks, grid, sc, e["M"], e["horizon"], cfg.seed_root, lam, c2)
    long_ = hopf_growth(spec, ks, grid, sc, e["M"], 2 * e["horizon"], cfg.seed_root, lam, c2)
    f1 = fit_growth(short)
    f2 = fit_growth(long_)
    tol = 3 * math.hypot(f1["slope_se"], f2["slope_se"])
    diff = abs(f1["slope"] - f2["slope"])
    out.check("exponential moment growth rate stable under horizon doubling", diff <= tol,
              tol - diff, f"slopes {f1['slope']:.4f}, {f2['slope']:.4f}")
    out.summary.update({"lambda": lam, "c2": c2, "refinement": rows,
                        "growth": {"short": f1, "long": f2,
                                   "log_mean": long_["log_mean"], "se": long_["se"]}})
    return out


def random_positive_fields(grid: Grid, n: int, seed: int) -> np.ndarray:
    """Positive test profiles: exponentials of random smooth fields plus spikes."""
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 7])
    x = grid.centers
    out = np.empty((n, grid.cells))
    for i in range(n):
        k = np.arange(1, 9)
        amp = rng.normal(size=(2, 8)) * rng.uniform(0.2, 2.0) / k
        phase = 2 * np.pi * np.outer(k, x) / grid.length
        h = amp[0] @ np.cos(phase) + amp[1] @ np.sin(phase)
        f = np.exp(h)
        spikes = rng.integers(0, grid.cells, size=rng.integers(0, 4))
        f[spikes] *= rng.uniform(1.0, 20.0, size=len(spikes))
        out[i] = f / f.max()
    return out


def _exp_supersolution(cfg: ExperimentConfig, workers: int) -> Outcome:
    from .transforms import hopf_evolve, supersolution_bound

    e = cfg.experiment
    spec = cfg.model_spec()
    grid = cfg.grid_obj()
    sc = cfg.solver_config()
    lam = e["lam"] if e["lam"] is not None else spec.lambda_
    P0 = random_positive_fields(grid, e["samples"], cfg.seed_root)
    P = P0.copy()
    t_prev = 0.0
    worst = math.inf
    rows = []
    for t in sorted(e["times"]):
        P = hopf_evolve(P, t - t_prev, grid, spec, lam, 0.0, sc)
        t_prev = t
        for i in range(len(P)):
            bound = supersolution_bound(Field(grid, P0[i]), t, spec.kappa0).values
            scale = float(np.max(P[i]))
            margin = float(np.min(bound - P[i])) / scale
            worst = min(worst, margin)
            rows.append({"t": t, "sample": i, "relative_margin": margin})
    out = Outcome()
    out.check("supersolution majorant", worst >= -1e-8, worst + 1e-8)
    out.summary = {"worst_relative_margin": worst, "rows": rows}
    return out


def _exp_distribution(cfg: ExperimentConfig, workers: int) -> Outcome:
    from .ergodics import empirical_distribution, histogram_csv

    e = cfg.experiment
    grid = cfg.grid_obj()
    probes = e["probe_cells"] or [grid.cells // 4, 3 * grid.cells // 4]
    res = empirical_distribution(e["a"], probes, e["lag"], cfg.model_spec(), cfg.kick_spec(),
                                 cfg.solver_config(), grid, e["M"], e["T"], cfg.seed_root,
                                 bins=e["bins"], burn_in=e["burn_in"], workers=workers,
                                 horizons=e["horizons"])
    out = Outcome()
    thr = e["threshold"]
    out.check("time-averaged law stabilization", res["half_window_distance"] < thr,
              thr - res["half_window_distance"])
    if len(probes) > 1:
        out.check("spatial stationarity", res["cross_cell_distance"] < thr,
                  thr - res["cross_cell_distance"])
    for k, cell in enumerate(probes):
        out.files[f"histogram_cell{cell}.csv"] = histogram_csv(res["edges"],
                                                               res["histograms"][k])
    out.summary = {"probe_cells": probes,
                   "half_window_distance": res["half_window_distance"],
                   "cross_cell_distance": res["cross_cell_distance"],
                   "by_horizon": {str(T): {"half_window_distance": r["half_window_distance"],
                                           "cross_cell_distance": r["cross_cell_distance"]}
                                  for T, r in res["by_horizon"].items()}}
    return out


RUNNERS = {
    "validate": _exp_validate,
    "simulate": _exp_simulate,
    "invariant": _exp_invariant,
    "ordering": _exp_ordering,
    "contraction": _exp_contraction,
    "colehopf": _exp_colehopf,
    "supersolution": _exp_supersolution,
    "distribution": _exp_distribution,
}


def execute(cfg: ExperimentConfig, workers: Optional[int] = None) -> Outcome:
    return RUNNERS[cfg.experiment["name"]](cfg, cfg.workers if workers is None else workers)


def _encode(content) -> bytes:
    return content if isinstance(content, bytes) else content.encode()


def write_artifacts(cfg: ExperimentConfig, outcome: Outcome, directory: Path) -> Path:
    """Write result files and the manifest; returns the directory."""
    directory.mkdir(parents=True, exist_ok=True)
    h = cfg.config_hash()
    files = dict(outcome.files)
    files["result.json"] = canonical_json({
        "config_hash": h, "seed_root": cfg.seed_root, "experiment": cfg.experiment["name"],
        "checks": outcome.checks, "passed": outcome.passed, "summary": outcome.summary}) + "\n"
    digests = {}
    for name in sorted(files):
        data = _encode(files[name])
        (directory / name).write_bytes(data)
        digests[name] = hashlib.sha256(data).hexdigest()
    manifest = {"config": cfg.hashed_dict(), "config_hash": h, "seed_root": cfg.seed_root,
                "files": digests}
    (directory / MANIFEST).write_text(canonical_json(manifest) + "\n")
    return directory


def artifact_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.outdir) / f"{cfg.experiment['name']}-{cfg.config_hash()}"


def run(config_path, overrides=(), workers: Optional[int] = None, env=None,
        stream=None) -> int:
    stream = sys.stdout if stream is None else stream
    try:
        cfg = load_config(config_path, overrides, env)
        if workers is not None:
            if workers < 1:
                raise ConfigError(["workers: must be at least 1"])
            cfg.workers = workers
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    outcome = execute(cfg)
    directory = write_artifacts(cfg, outcome, artifact_dir(cfg))
    print(f"{cfg.experiment['name']} seed={cfg.seed_root} hash={cfg.config_hash()} "
          f"-> {directory}", file=stream)
    for c in outcome.checks:
        print(_report_line(c), file=stream)
    return EXIT_OK if outcome.passed else EXIT_FAIL


def _locate_manifest(path: Path) -> Path:
    if path.is_dir():
        return path / MANIFEST
    if path.name == MANIFEST:
        return path
    return path.parent / MANIFEST


def replay(artifact_path, workers: Optional[int] = None, stream=None) -> int:
    """Re-run an artifact and compare every file byte for byte."""
    stream = sys.stdout if stream is None else stream
    mpath = _locate_manifest(Path(artifact_path))
    try:
        manifest = json.loads(mpath.read_text())
        stored = manifest["config"]
        if config_hash(stored) != manifest["config_hash"]:
            print(f"hash mismatch: manifest says {manifest['config_hash']}, "
                  f"config hashes to {config_hash(stored)}", file=sys.stderr)
            return EXIT_USAGE
        cfg = ExperimentConfig.from_dict(stored)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        msg = "; ".join(exc.errors) if isinstance(exc, ConfigError) else str(exc)
        print(f"cannot replay {artifact_path}: {msg}", file=sys.stderr)
        return EXIT_USAGE
    if workers is not None:
        cfg.workers = workers
    outcome = execute(cfg)
    with tempfile.TemporaryDirectory() as tmp:
        fresh = write_artifacts(cfg, outcome, Path(tmp))
        names = sorted(set(manifest["files"]) | {p.name for p in fresh.iterdir()})
        differing = []
        for name in names:
            old, new = mpath.parent / name, fresh / name
            if not (old.exists() and new.exists() and old.read_bytes() == new.read_bytes()):
                differing.append(name)
    if differing:
        print(f"replay differs: {', '.join(differing)}", file=stream)
        return EXIT_FAIL
    print(f"replay identical ({len(names)} files, hash {manifest['config_hash']})",
          file=stream)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochflux", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment from a TOML or JSON config")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=None)
    rp = sub.add_parser("replay", help="re-run an artifact and verify it byte for byte")
    rp.add_argument("artifact")
    rp.add_argument("--workers", type=int, default=None)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.command == "replay":
        if extra:
            print(f"unexpected arguments: {' '.join(extra)}", file=sys.stderr)
            return EXIT_USAGE
        return replay(args.artifact, args.workers)
    bad = [x for x in extra if not (x.startswith("--") and "=" in x)]
    if bad:
        print(f"unexpected arguments: {' '.join(bad)} (overrides look like "
              f"--section.key=value)", file=sys.stderr)
        return EXIT_USAGE
    return run(args.config, [x[2:] for x in extra], args.workers)


if __name__ == "__main__":
    sys.exit(main())
