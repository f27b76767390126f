"""Hamilton-Jacobi potentials, the Cole-Hopf transform and its majorant.

The potential ``h`` of a trajectory satisfies ``h_x = u``.  On the torus it
is split into a linear part ``a*x`` (``a`` the conserved spatial mean) and a
periodic remainder, anchored by a compactly supported mollifier.  Between
kicks ``h`` advances by the mollified flux ``kappa(u) u_x - H(u)``; at a kick
it jumps by the kick potential.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from . import field as fld
from .field import Field, Grid
from .kernels import core
from .model import ModelSpec, kappa_primitive
from .noise import KickSample, KickSpec, KickStream
from .solver import SolverConfig, TrajectoryRecord

EXP_LIMIT = 700.0


class TransformError(ValueError):
    pass


# -- potential reconstruction ---------------------------------------------------

def mollifier_weights(grid: Grid, center: float = 0.0, radius: float = 1.0) -> np.ndarray:
    """Discrete quintic bump on [center - radius, center + radius], summing to 1/dx."""
    z = (grid.centers - center) / radius
    w = np.where(np.abs(z) < 1.0, 1.0 - fld.smoothstep5(np.abs(z)), 0.0)
    if w.sum() == 0:
        raise TransformError("mollifier support contains no grid point")
    return w / (w.sum() * grid.dx)


@dataclass
class PotentialTrajectory:
    times: np.ndarray
    h_snapshots: list      # full h = slope * x + remainder
    slopes: np.ndarray
    remainders: list       # periodic parts
    normalization: str = "quintic bump on [-1, 1], unit integral"

    def gradient(self, k: int) -> Field:
        return fld.deriv(self.remainders[k]) + float(self.slopes[k])


def periodic_antiderivative(w: np.ndarray, dx: float) -> np.ndarray:
    """Trapezoid antiderivative of a zero-mean periodic sample, W[0] = 0."""
    out = np.empty_like(w)
    out[0] = 0.0
    out[1:] = np.cumsum(0.5 * dx * (w[:-1] + w[1:]))
    return out


def mollified_flux(u: Field, spec: ModelSpec, zeta: np.ndarray) -> float:
    K = kappa_primitive(spec, u.values)
    flux = (np.roll(K, -1) - np.roll(K, 1)) / (2 * u.grid.dx) - spec.hamiltonian(u.values)
    return float(u.grid.dx * np.sum(zeta * flux))


def integrate_hj(traj: TrajectoryRecord, spec: ModelSpec,
                 kicks: Union[Mapping[int, KickSample], Sequence[KickSample], Callable]
                 ) -> PotentialTrajectory:
    """Reconstruct the Hamilton-Jacobi potential of a recorded trajectory.

    ``kicks`` supplies the kick potentials applied along the trajectory (a
    mapping or list of samples keyed by kick index, or a callable
    ``s -> KickSample``).  The time integral of the mollified flux uses the
    trapezoid rule between records, with the stored pre-kick state as the
    right end of every interval that closes at a kick.
    """
    if traj.snapshots is None:
        raise TransformError("trajectory was recorded without snapshots")
    if callable(kicks) and not isinstance(kicks, Mapping):
        lookup = kicks
    else:
        table = dict(kicks) if isinstance(kicks, Mapping) else {k.kick_index: k for k in kicks}
        if set(table) != set(traj.pre_kick):
            raise TransformError(f"kick list {sorted(table)} does not match the "
                                 f"trajectory's kicks {sorted(traj.pre_kick)}")
        lookup = table.__getitem__

    grid = traj.snapshots[0].grid
    zeta = mollifier_weights(grid)
    x = grid.centers
    times = traj.times
    drift = 0.0
    prev_flux = None
    slopes, rems, hs = [], [], []
    for k, t in enumerate(times):
        u = traj.snapshots[k]
        s = int(round(t))
        is_kick = s in traj.pre_kick and abs(t - s) < 1e-12
        if k > 0:
            right = traj.pre_kick[s] if is_kick else u
            drift += 0.5 * (t - times[k - 1]) * (prev_flux + mollified_flux(right, spec, zeta))
        if is_kick:
            V = lookup(s).potential
            if V.grid != grid:
                raise TransformError("kick potential lives on a different grid")
            drift += grid.dx * float(np.sum(zeta * V.values))
        prev_flux = mollified_flux(u, spec, zeta)
        a = fld.mean(u)
        W = periodic_antiderivative(u.values - a, grid.dx)
        rem = W - grid.dx * np.sum(zeta * (a * x + W)) + drift
        slopes.append(a)
        rems.append(Field(grid, rem))
        hs.append(Field(grid, a * x + rem))
    return PotentialTrajectory(times=np.array(times), h_snapshots=hs,
                               slopes=np.array(slopes), remainders=rems)


# -- Cole-Hopf ------------------------------------------------------------------

@dataclass(frozen=True)
class HopfField:
    phi: Field
    lambda_: float


def cole_hopf(h: Field, lam: float) -> HopfField:
    if not lam > 0:
        raise TransformError("lambda must be positive")
    expo = -lam * h.values
    if np.max(expo) > EXP_LIMIT:
        raise TransformError("exp(-lambda*h) overflows; shift h by a constant "
                             "or use a smaller lambda")
    return HopfField(Field(h.grid, np.exp(expo)), float(lam))


def inverse_cole_hopf(phi: HopfField) -> Field:
    if np.any(phi.phi.values <= 0):
        raise TransformError("phi must be positive")
    return Field(phi.phi.grid, -np.log(phi.phi.values) / phi.lambda_)


def hopf_jump(phi: HopfField, potential: Field) -> HopfField:
    """Multiplicative kick phi(k+) = exp(-lambda V_k) phi(k-)."""
    return HopfField(Field(phi.phi.grid, np.exp(-phi.lambda_ * potential.values)
                           * phi.phi.values), phi.lambda_)


def hopf_pde_residual(times: Sequence[float], phis: Sequence[HopfField], spec: ModelSpec,
                      c2: float, lam: float, kick_times: Sequence[float] = ()) -> float:
    """Max normalized residual of phi_t = kappa(-phi_x/(lam phi)) phi_xx + lam c2 phi.

    Centred differences in time and space.  Record points whose centred
    time stencil straddles a kick are skipped.
    """
    times = np.asarray(times, float)
    kicks = np.asarray(sorted(kick_times), float)
    worst = 0.0
    for k in range(1, len(times) - 1):
        lo, hi = times[k - 1], times[k + 1]
        if np.any((kicks > lo) & (kicks <= hi)):
            continue
        p = phis[k].phi.values
        if np.any(p <= 0) or np.any(phis[k - 1].phi.values <= 0) \
                or np.any(phis[k + 1].phi.values <= 0):
            raise TransformError("phi must be positive")
        dx = phis[k].phi.grid.dx
        pt = (phis[k + 1].phi.values - phis[k - 1].phi.values) / (hi - lo)
        px = (np.roll(p, -1) - np.roll(p, 1)) / (2 * dx)
        pxx = (np.roll(p, -1) - 2 * p + np.roll(p, 1)) / dx ** 2
        res = pt - spec.kappa(-px / (lam * p)) * pxx - lam * c2 * p
        worst = max(worst, float(np.max(np.abs(res)) / np.max(np.abs(p))))
    return worst


# -- explicit supersolution --------------------------------------------------------

def heat_profile(t, x, kappa0: float):
    """t^(-a) exp(-b x^2 / t) with a = kappa0^2/2, b = kappa0/4."""
    a = kappa0 ** 2 / 2
    b = kappa0 / 4
    return t ** (-a) * np.exp(-b * np.asarray(x, float) ** 2 / t)


def unit_window_sups(phi0: Field) -> tuple[np.ndarray, np.ndarray]:
    """(window centres j + 1/2, sup of phi0 over cells in [j, j+1))."""
    x = phi0.grid.centers
    j = np.floor(x).astype(int)
    js = np.unique(j)
    sups = np.array([phi0.values[j == jj].max() for jj in js])
    return js + 0.5, sups


def supersolution_bound(phi0: Field, t: float, kappa0: float,
                        tail_tol: float = 1e-12) -> Field:
    """Gaussian-sum majorant (1/B) sum_j phi_j psi(t+1, x - (j+1/2)) on the torus.

    Periodic copies of the window sums are added until the next pair of
    copies contributes less than ``tail_tol`` relative to the result (and at
    least the neighbouring copy on each side).
    """
    if np.any(phi0.values < 0):
        raise TransformError("phi0 must be non-negative")
    if not 0.0 < t <= 1.0:
        raise TransformError("t must lie in (0, 1]")
    B = float(heat_profile(1.0, 0.5, kappa0))
    centers, sups = unit_window_sups(phi0)
    x = phi0.grid.centers
    L = phi0.grid.length

    def copy_sum(c):
        d = x[:, None] - (centers[None, :] + c * L)
        return heat_profile(t + 1.0, d, kappa0) @ sups / B

    out = copy_sum(0) + copy_sum(-1) + copy_sum(1)
    c = 2
    while True:
        tail = copy_sum(-c) + copy_sum(c)
        if np.all(tail <= tail_tol * out) or not np.any(tail > 0):
            break
        out = out + tail
        c += 1
        if c > 1000:
            raise TransformError("majorant tail does not decay")
    return Field(phi0.grid, out)


# -- Hopf evolution ------------------------------------------------------------------

def hopf_evolve(phi: np.ndarray, duration: float, grid: Grid, spec: ModelSpec, lam: float,
                c2: float, cfg: SolverConfig) -> np.ndarray:
    """Advance rows of ``phi`` by the linear-in-phi equation (explicit, monotone)."""
    kc, k0, k1, _, _ = spec.kernel
    P = np.ascontiguousarray(phi, dtype=float)
    core.hopf_advance(P, float(duration), grid.dx, cfg.cfl_safety, cfg.max_dt,
                      spec.kappa0, kc, k0, k1, float(lam), float(c2))
    return P


def hopf_growth(spec: ModelSpec, kick_spec: KickSpec, grid: Grid, cfg: SolverConfig,
                n_paths: int, horizon: int, seed: int, lam: float = None,
                c2: float = None) -> dict:
    """Monte Carlo log E phi(n-, x) for n = 1..horizon, starting from phi(0-) = 1.

    The expectation is estimated by averaging over paths and cells.  Each
    path is renormalized after every unit of time with its log-scale kept
    separately.  Returns per-time log-means and their jackknife standard
    errors over paths.
    """
    from .ergodics import path_seed

    lam = spec.lambda_ if lam is None else lam
    c2 = spec.c2 if c2 is None else c2
    logm = np.empty((n_paths, horizon))
    for p in range(n_paths):
        kicks = KickStream(_seeded(kick_spec, path_seed(seed, p)), grid)
        phi = np.ones((1, grid.cells))
        scale = 0.0
        for n in range(horizon):
            phi[0] *= np.exp(-lam * kicks(n).potential.values)
            phi = hopf_evolve(phi, 1.0, grid, spec, lam, c2, cfg)
            m = float(np.max(phi))
            phi /= m
            scale += math.log(m)
            logm[p, n] = scale + math.log(float(np.mean(phi)))
    return _log_mean_stats(logm)


def _seeded(kick_spec: KickSpec, seed: int) -> KickSpec:
    from dataclasses import replace
    return replace(kick_spec, seed_root=int(seed))


def _logmeanexp(a, axis=0):
    m = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(m, axis=axis) + np.log(np.mean(np.exp(a - m), axis=axis))


def _log_mean_stats(logm: np.ndarray) -> dict:
    M, T = logm.shape
    est = _logmeanexp(logm, axis=0)
    jack = np.array([_logmeanexp(np.delete(logm, i, axis=0), axis=0) for i in range(M)])
    se = np.sqrt((M - 1) / M * np.sum((jack - jack.mean(axis=0)) ** 2, axis=0))
    times = np.arange(1, T + 1, dtype=float)
    return {"times": times, "log_mean": est, "se": se, "jackknife": jack}


def fit_growth(stats: dict, t_max: float = None, t_min: float = 1.0) -> dict:
    """Least-squares slope of log E phi(t-) over [t_min, t_max], with jackknife SE,
    and the smallest C with E phi(t-) <= exp(C (t + 1)) on that window."""
    t = stats["times"]
    sel = (t >= t_min) & (t <= (t_max if t_max is not None else t[-1]))
    tt = t[sel]

    def slope(y):
        return float(np.polyfit(tt, y[sel], 1)[0])

    s = slope(stats["log_mean"])
    jack = np.array([slope(row) for row in stats["jackknife"]])
    M = len(jack)
    se = float(math.sqrt((M - 1) / M * np.sum((jack - jack.mean()) ** 2)))
    c_env = float(np.max(stats["log_mean"][sel] / (tt + 1.0)))
    return {"slope": s, "slope_se": se, "envelope_constant": c_env}
