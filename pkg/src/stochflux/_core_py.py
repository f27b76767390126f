"""Pure numpy implementation of the stepping kernels.

Used when the compiled extension is unavailable, and as the reference the
compiled core is benchmarked and tested against.

``advance`` moves every row of ``U`` forward by ``duration`` with a shared
step size.  The conserved update is::

    u_i <- u_i - dt/dx * (G_{i+1/2} - G_{i-1/2})
    G_{i+1/2} = F(u_i, u_{i+1}) - (K(u_{i+1}) - K(u_i)) / dx

where ``K`` is the primitive of the diffusivity and ``F`` a monotone flux for
``H`` (``flux`` 0: local Lax-Friedrichs, 1: Engquist-Osher, the latter for
convex ``H`` with minimum ``H(0) = 0``).  The step size
is the smaller of ``cfl*dx^2*kappa0/2`` and ``cfl*dx/max|H'|``, capped by
``max_dt``, with the last step clipped to land on ``duration``.

When ``acc`` has columns, the left-rule time integrals of the centred
gradient energy, the mean Hamiltonian, the mean of ``|u - ref|^q`` and the
probe-cell values are added to it.
"""
from __future__ import annotations

import math

import numpy as np

LOG2 = math.log(2.0)


def _kappa(u, kc, k0, k1):
    if kc == 0:
        return np.full_like(u, k0)
    return k0 + k1 * np.tanh(u)


def _kprim(u, kc, k0, k1):
    if kc == 0:
        return k0 * u
    a = np.abs(u)
    return k0 * u + k1 * (a + np.log1p(np.exp(-2.0 * a)) - LOG2)


def _ham(u, hc, h0):
    if hc == 0:
        return h0 * u * u
    return h0 * ((1.0 + u * u) ** 0.75 - 1.0)


def _hamp(u, hc, h0):
    if hc == 0:
        return 2.0 * h0 * u
    return 1.5 * h0 * u * (1.0 + u * u) ** -0.25


def max_abs_hprime(U, hc, h0):
    return float(np.max(np.abs(_hamp(U, hc, h0))))


def _num_flux(ul, ur, hl, hr, hpl, hpr, flux, hc, h0):
    if flux == 0:
        alpha = np.maximum(np.abs(hpl), np.abs(hpr))
        return 0.5 * (hl + hr) - 0.5 * alpha * (ur - ul)
    # H(max(u, 0)) is H(u) or H(0) = 0, so the stored values suffice
    return np.where(ul > 0.0, hl, 0.0) + np.where(ur < 0.0, hr, 0.0)


def advance(U, duration, dx, cfl, max_dt, kappa0, kc, k0, k1, hc, h0, flux,
            acc, ref, q, probes):
    N = U.shape[1]
    rdx = 1.0 / dx
    dt_diff = cfl * dx * dx * kappa0 / 2.0
    nacc = acc.shape[1]
    t = 0.0
    nsteps = 0
    last = duration <= 0.0
    while not last:
        hmax = float(np.max(np.abs(_hamp(U, hc, h0))))
        dt = dt_diff
        if hmax > 0.0 and cfl * dx / hmax < dt:
            dt = cfl * dx / hmax
        dt = min(dt, max_dt)
        remaining = duration - t
        if remaining <= dt * (1.0 + 1e-9):
            dt = remaining
            last = True
        if nacc > 0:
            g = (np.roll(U, -1, axis=1) - np.roll(U, 1, axis=1)) * 0.5 * rdx
            acc[:, 0] += dt * np.sum(g * g, axis=1) / N
            acc[:, 1] += dt * np.sum(_ham(U, hc, h0), axis=1) / N
            acc[:, 2] += dt * np.sum(np.abs(U - ref[:, None]) ** q, axis=1) / N
            if len(probes):
                acc[:, 3:3 + len(probes)] += dt * U[:, probes]
        K = _kprim(U, kc, k0, k1)
        Hv = _ham(U, hc, h0)
        Hp = _hamp(U, hc, h0)
        Up = np.roll(U, -1, axis=1)
        G = (_num_flux(U, Up, Hv, np.roll(Hv, -1, axis=1), Hp, np.roll(Hp, -1, axis=1),
                       flux, hc, h0)
             - (np.roll(K, -1, axis=1) - K) * rdx)
        U -= dt * rdx * (G - np.roll(G, 1, axis=1))
        if not np.all(np.isfinite(U)):
            raise FloatingPointError(f"non-finite state at step {nsteps}")
        t += dt
        nsteps += 1
    return nsteps


def hopf_advance(P, duration, dx, cfl, max_dt, kappa0, kc, k0, k1, lam, c2):
    """Explicit step of phi_t = kappa(-phi_x/(lam phi)) phi_xx + lam c2 phi."""
    rdx = 1.0 / dx
    rdx2 = rdx * rdx
    t = 0.0
    nsteps = 0
    last = duration <= 0.0
    while not last:
        dt = min(cfl * dx * dx * kappa0 / 2.0, max_dt)
        remaining = duration - t
        if remaining <= dt * (1.0 + 1e-9):
            dt = remaining
            last = True
        Pp = np.roll(P, -1, axis=1)
        Pm = np.roll(P, 1, axis=1)
        ux = -(Pp - Pm) * 0.5 * rdx / (lam * P)
        P += dt * (_kappa(ux, kc, k0, k1) * (Pp - 2.0 * P + Pm) * rdx2 + lam * c2 * P)
        t += dt
        nsteps += 1
    return nsteps
