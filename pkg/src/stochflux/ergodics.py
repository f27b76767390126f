"""Monte Carlo ensembles over kicked trajectories.

Paths are independent work units keyed by ``(seed_root, path_index)``.
Results are sorted by path index and reduced with numpy's pairwise
summation, so the totals do not depend on completion order or on the number
of workers.  Space-stationary expectations ``E f(u(t, x))`` are estimated by
averaging over the torus as well as over paths.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import field as fld
from .field import Field, Grid
from .model import ModelSpec
from .noise import KickSpec, gradient_variance
from .solver import INTEGRAL_COLUMNS, SolverConfig, evolve_many, phi_flow


def path_seed(seed_root: int, path_index: int) -> int:
    """64-bit kick seed of one path, derived from (seed_root, path_index)."""
    state = np.random.SeedSequence([int(seed_root) & 0xFFFFFFFFFFFFFFFF,
                                    int(path_index)]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def bracket2(a: float) -> float:
    return 4.0 + a * a


def run_paths(fn, args_list: list, workers: int = 1) -> list:
    """Apply ``fn`` to each argument tuple; results come back in input order."""
    if workers <= 1 or len(args_list) <= 1:
        return [fn(*args) for args in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *args) for args in args_list]
        return [f.result() for f in futures]


# -- invariant statistics -------------------------------------------------------

def _constant_path(a, spec, kick_spec, cfg, grid, T, seed):
    traj = phi_flow(Field.constant(grid, a), 0.0, T, spec, kick_spec, cfg,
                    seed=seed, store=False)
    means = np.array([row["mean"] for row in traj.diagnostics])
    return traj.times, traj.integrals, float(np.max(np.abs(means - a)))


@dataclass
class EnsembleStats:
    a: float
    n_paths: int
    horizon: float
    burn_in: float
    times: np.ndarray
    # time averages over [0, t] at each record time, mean over paths and SE
    averages: dict
    standard_errors: dict
    spatial_mean_deviation: float
    checks: list = field(default_factory=list)
    seed: int = 0

    def at(self, name: str, t: float) -> tuple[float, float]:
        k = int(np.argmin(np.abs(self.times - t)))
        return float(self.averages[name][k]), float(self.standard_errors[name][k])

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_json(self) -> dict:
        return {"a": self.a, "n_paths": self.n_paths, "horizon": self.horizon,
                "burn_in": self.burn_in, "seed": self.seed,
                "times": self.times.tolist(),
                "averages": {k: v.tolist() for k, v in self.averages.items()},
                "standard_errors": {k: v.tolist() for k, v in self.standard_errors.items()},
                "spatial_mean_deviation": self.spatial_mean_deviation,
                "checks": self.checks}


def derivative_bound(a: float, t: float, kappa0: float, grad_var: float) -> float:
    """Right side of the time-averaged gradient energy bound."""
    return a * a / (2 * kappa0 * t) + grad_var / kappa0


def invariant_estimate(a: float, spec: ModelSpec, kick_spec: KickSpec, cfg: SolverConfig,
                       grid: Grid, n_paths: int, horizon: float, seed: int,
                       workers: int = 1, burn_in: Optional[float] = None,
                       probe: Optional[int] = None) -> EnsembleStats:
    """Time-averaged statistics of paths started from ``u(0-) = a``.

    Checks attached to the result:

    * gradient energy: at every record ``t >= 1`` the time-averaged mean
      squared centred gradient is at most ``a^2/(2 kappa0 t) +
      E(V_x)^2/kappa0`` plus three standard errors;
    * mean identity: the probe-cell time average is within three standard
      errors of ``a`` and every spatial mean equals ``a`` to 1e-12;
    * the time-averaged mean Hamiltonian is finite.
    """
    if n_paths < 8:
        raise ValueError("need at least 8 paths")
    if horizon < 4:
        raise ValueError("horizon must be at least 4")
    probe = grid.cells // 2 if probe is None else probe
    cfg = replace(cfg, probe_cells=(probe,))
    args = [(a, spec, kick_spec, cfg, grid, horizon, path_seed(seed, p))
            for p in range(n_paths)]
    results = run_paths(_constant_path, args, workers)
    times = results[0][0]
    integ = np.stack([r[1] for r in results])  # (M, n_rec, cols)
    mean_dev = max(r[2] for r in results)

    names = list(INTEGRAL_COLUMNS) + ["probe_mean"]
    with np.errstate(invalid="ignore", divide="ignore"):
        per_path = integ / np.where(times > 0, times, np.nan)[None, :, None]
    avg = np.mean(per_path, axis=0)
    se = np.std(per_path, axis=0, ddof=1) / math.sqrt(n_paths)
    averages = {n: avg[:, i] for i, n in enumerate(names)}
    ses = {n: se[:, i] for i, n in enumerate(names)}
    stats = EnsembleStats(a=a, n_paths=n_paths, horizon=horizon,
                          burn_in=horizon / 4 if burn_in is None else burn_in,
                          times=times, averages=averages, standard_errors=ses,
                          spatial_mean_deviation=mean_dev, seed=seed)

    gv = gradient_variance(kick_spec, grid.length)
    late = times >= 1.0
    bound = derivative_bound(a, times[late], spec.kappa0, gv)
    margin = bound + 3 * ses["grad_energy"][late] - averages["grad_energy"][late]
    stats.checks.append({"property": "gradient energy bound",
                         "passed": bool(np.all(margin >= 0)),
                         "margin": float(np.min(margin))})
    pm, pse = averages["probe_mean"][-1], ses["probe_mean"][-1]
    # roundoff floor so that deterministic (zero-variance) runs are judged fairly
    tol = 1e-12 * max(1.0, abs(a))
    stats.checks.append({"property": "time-averaged mean identity",
                         "passed": bool(abs(pm - a) <= 3 * pse + tol),
                         "margin": float(3 * pse + tol - abs(pm - a))})
    stats.checks.append({"property": "spatial mean conservation",
                         "passed": bool(mean_dev <= tol),
                         "margin": float(tol - mean_dev)})
    h = averages["hamiltonian"][-1]
    stats.checks.append({"property": "hamiltonian moment finite",
                         "passed": bool(np.isfinite(h)), "margin": float(h)})
    return stats


def moment_growth_scan(a_list: Sequence[float], spec: ModelSpec, kick_spec: KickSpec,
                       cfg: SolverConfig, grid: Grid, n_paths: int, horizon: float,
                       seed: int, workers: int = 1) -> dict:
    """Time-averaged E H(u) and E|u - a|^q against <a>^2 = 4 + a^2.

    Each row compares the averages over ``[0, horizon/2]`` and ``[0, horizon]``
    of the same paths (the shorter run is a prefix of the longer one since
    kicks are keyed by time index).  Reports the least-squares constant ``C``
    in ``avg ~ C <a>^2``, the max/median ratio across the scan and the
    largest change under doubling in units of the combined standard error.
    """
    if not a_list:
        raise ValueError("a_list must be nonempty")
    rows = []
    stats_list = []
    for a in a_list:
        st = invariant_estimate(a, spec, kick_spec, cfg, grid, n_paths, horizon, seed, workers)
        stats_list.append(st)
        w = bracket2(a)
        row = {"a": a, "bracket2": w}
        for name in ("hamiltonian", "qmoment"):
            full, full_se = st.at(name, horizon)
            half, half_se = st.at(name, horizon / 2)
            comb = math.hypot(full_se, half_se)
            row.update({f"{name}_avg": full, f"{name}_se": full_se,
                        f"{name}_avg_half": half, f"{name}_se_half": half_se,
                        f"{name}_ratio": full / w, f"{name}_ratio_half": half / w,
                        f"{name}_doubling_z": abs(full - half) / comb if comb > 0 else
                        (0.0 if full == half else math.inf)})
        rows.append(row)
    summary = {}
    for name in ("hamiltonian", "qmoment"):
        ratios = np.array([r[f"{name}_ratio"] for r in rows])
        ws = np.array([r["bracket2"] for r in rows])
        avgs = np.array([r[f"{name}_avg"] for r in rows])
        med = float(np.median(ratios))
        summary[name] = {
            "fitted_c": float(np.sum(avgs * ws) / np.sum(ws * ws)),
            "max_ratio": float(np.max(ratios)),
            "median_ratio": med,
            "max_over_median": float(np.max(ratios) / med) if med > 0 else
            (1.0 if np.max(ratios) == 0 else math.inf),
            "max_doubling_z": float(max(r[f"{name}_doubling_z"] for r in rows)),
        }
    return {"rows": rows, "summary": summary, "stats": stats_list}


# -- pathwise structure ---------------------------------------------------------

def contraction_test(u0: Field, v0: Field, spec: ModelSpec, cfg: SolverConfig, T: float,
                     kick_spec: Optional[KickSpec] = None, seed: int = 0,
                     weighted_ell: Optional[float] = None) -> dict:
    """L1 distance between two solutions sharing steps (and kicks, if any).

    ``passed`` is True when the distance never increases by more than
    1e-10 times the initial distance between consecutive records.  With
    ``weighted_ell`` the zeta-weighted distance is reported too, along with
    the smallest ``C`` such that it stays below ``exp(C t)`` times its
    initial value.
    """
    ks = kick_spec if kick_spec is not None else KickSpec(sigma_target=0.0)
    tu, tv = evolve_many([u0, v0], 0.0, T, spec, ks, cfg, seed=seed)
    times = tu.times
    diffs = [a - b for a, b in zip(tu.snapshots, tv.snapshots)]
    dist = np.array([fld.l1_norm(d) for d in diffs])
    tol = 1e-10 * dist[0]
    increments = np.diff(dist)
    out = {"times": times, "distance": dist,
           "passed": bool(np.all(increments <= tol)),
           "max_increase": float(np.max(increments)) if len(increments) else 0.0}
    if weighted_ell is not None:
        wd = np.array([fld.weighted_l1_zeta(d, weighted_ell) for d in diffs])
        with np.errstate(divide="ignore", invalid="ignore"):
            rates = np.log(wd[1:] / wd[0]) / times[1:]
        out["weighted_distance"] = wd
        out["weighted_growth_constant"] = float(np.max(rates)) if wd[0] > 0 else 0.0
    return out


@dataclass
class OrderingReport:
    labels: list                 # (j, i) pairs, difference u_j - u_i
    times: np.ndarray
    minima: dict                 # pair -> per-record min of the difference
    maxima: dict
    signs: dict                  # pair -> classification after burn-in
    mixed_times: dict            # pair -> record times with both signs present

    def to_json(self) -> dict:
        return {"pairs": [
            {"pair": list(p), "sign": self.signs[p],
             "min": self.minima[p].tolist(), "max": self.maxima[p].tolist(),
             "mixed_times": self.mixed_times[p]} for p in self.labels],
            "times": self.times.tolist()}


def classify_signs(mins: np.ndarray, maxs: np.ndarray) -> str:
    """always_plus / always_minus / identically_zero / mixed.

    A record with both strictly positive and strictly negative cells makes the
    pair mixed; so does a sign flip between records.
    """
    if np.any((mins < 0) & (maxs > 0)):
        return "mixed"
    if np.all((mins == 0) & (maxs == 0)):
        return "identically_zero"
    if np.all(mins >= 0):
        return "always_plus"
    if np.all(maxs <= 0):
        return "always_minus"
    return "mixed"


def ordering_experiment(initials: Sequence[Field], spec: ModelSpec, kick_spec: KickSpec,
                        cfg: SolverConfig, T: float, seed: int,
                        burn_in: float = 0.0) -> OrderingReport:
    """Evolve all initial states under one kick realization and classify the sign
    of every pairwise difference."""
    if len(initials) < 2:
        raise ValueError("need at least two initial fields")
    trajs = evolve_many(list(initials), 0.0, T, spec, kick_spec, cfg, seed=seed)
    times = trajs[0].times
    after = times >= burn_in
    labels, mins, maxs, signs, mixed = [], {}, {}, {}, {}
    for j in range(len(initials)):
        for i in range(j):
            d = np.array([sj.values - si.values for sj, si in
                          zip(trajs[j].snapshots, trajs[i].snapshots)])
            p = (j, i)
            labels.append(p)
            mins[p] = d.min(axis=1)
            maxs[p] = d.max(axis=1)
            signs[p] = classify_signs(mins[p][after], maxs[p][after])
            mixed[p] = times[(mins[p] < 0) & (maxs[p] > 0)].tolist()
    return OrderingReport(labels, times, mins, maxs, signs, mixed)


# -- empirical distributions ------------------------------------------------------

def _probe_path(a, spec, kick_spec, cfg, grid, T, seed, probe_cells):
    traj = phi_flow(Field.constant(grid, a), 0.0, T, spec, kick_spec, cfg,
                    seed=seed, store=True)
    vals = np.array([s.values[list(probe_cells)] for s in traj.snapshots])
    return traj.times, vals


def binned_ks(x: np.ndarray, y: np.ndarray, edges: np.ndarray) -> float:
    """Sup distance between binned cumulative histograms of two samples."""
    cx = np.cumsum(np.histogram(x, edges)[0]) / max(len(x), 1)
    cy = np.cumsum(np.histogram(y, edges)[0]) / max(len(y), 1)
    return float(np.max(np.abs(cx - cy)))


def empirical_distribution(a: float, probe_cells: Sequence[int], lag: float,
                           spec: ModelSpec, kick_spec: KickSpec, cfg: SolverConfig,
                           grid: Grid, n_paths: int, horizon: float, seed: int,
                           bins: int = 40, burn_in: Optional[float] = None,
                           workers: int = 1, horizons: Sequence[float] = ()) -> dict:
    """Time-aggregated histograms of u(t, x_probe) after burn-in.

    Samples are taken every ``lag`` time units.  ``half_window_distance``
    compares the first and second halves of the window at the first probe
    cell; ``cross_cell_distance`` compares the first two probe cells over the
    whole window.  Extra ``horizons`` (each at most ``horizon``) reuse the
    same paths truncated, with burn-in a quarter of each horizon.
    """
    if lag <= 0:
        raise ValueError("lag must be positive")
    if len(probe_cells) < 1:
        raise ValueError("need at least one probe cell")
    cfg = replace(cfg, record_every=lag)
    args = [(a, spec, kick_spec, cfg, grid, horizon, path_seed(seed, p), tuple(probe_cells))
            for p in range(n_paths)]
    results = run_paths(_probe_path, args, workers)
    times = results[0][0]
    vals = np.stack([r[1] for r in results])  # (M, n_rec, n_probe)

    def window_report(T):
        b = T / 4 if burn_in is None or T != horizon else burn_in
        sel = (times >= b) & (times <= T + 1e-12)
        w = vals[:, sel, :]
        tw = times[sel]
        lo, hi = float(w.min()), float(w.max())
        if hi - lo < 1e-12:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, bins + 1)
        mid = (b + T) / 2
        first = w[:, tw < mid, 0].ravel()
        second = w[:, tw >= mid, 0].ravel()
        rep = {"horizon": T, "burn_in": b, "edges": edges,
               "half_window_distance": binned_ks(first, second, edges),
               "histograms": [np.histogram(w[:, :, k].ravel(), edges)[0] / w[:, :, k].size
                              for k in range(w.shape[2])]}
        rep["cross_cell_distance"] = (binned_ks(w[:, :, 0].ravel(), w[:, :, 1].ravel(), edges)
                                      if w.shape[2] > 1 else 0.0)
        return rep

    out = window_report(horizon)
    out["by_horizon"] = {float(T): window_report(T) for T in horizons}
    return out


def histogram_csv(edges: np.ndarray, mass: np.ndarray) -> str:
    lines = ["bin_left,bin_right,mass"]
    for lo, hi, m in zip(edges[:-1], edges[1:], mass):
        lines.append(f"{float(lo)!r},{float(hi)!r},{float(m)!r}")
    return "\n".join(lines) + "\n"
