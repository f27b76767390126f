# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled time-stepping kernels.

Mirrors :mod:`stochflux._core_py` argument for argument; see that module for
the meaning of each parameter.
"""
from libc.math cimport fabs, tanh, log1p, exp, pow, sqrt, log, isfinite

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double LOG2 = 0.6931471805599453


cdef inline double kappa(double u, int kc, double k0, double k1) noexcept nogil:
    if kc == 0:
        return k0
    return k0 + k1 * tanh(u)


cdef inline double kprim(double u, int kc, double k0, double k1) noexcept nogil:
    cdef double a
    if kc == 0:
        return k0 * u
    a = fabs(u)
    return k0 * u + k1 * (a + log1p(exp(-2.0 * a)) - LOG2)


cdef inline double ham(double u, int hc, double h0) noexcept nogil:
    cdef double r
    if hc == 0:
        return h0 * u * u
    r = sqrt(sqrt(1.0 + u * u))
    return h0 * (r * r * r - 1.0)


cdef inline double hamp(double u, int hc, double h0) noexcept nogil:
    if hc == 0:
        return 2.0 * h0 * u
    return 1.5 * h0 * u / sqrt(sqrt(1.0 + u * u))


cdef inline void ham_both(double u, int hc, double h0, double *hv, double *hp) noexcept nogil:
    cdef double r
    if hc == 0:
        hv[0] = h0 * u * u
        hp[0] = 2.0 * h0 * u
    else:
        r = sqrt(sqrt(1.0 + u * u))
        hv[0] = h0 * (r * r * r - 1.0)
        hp[0] = 1.5 * h0 * u / r


cdef inline double qpow(double x, double q) noexcept nogil:
    if q == 2.0:
        return x * x
    if q == 1.5:
        return x * sqrt(x)
    return pow(x, q)


cdef inline double num_flux(double ul, double ur, double hl, double hr,
                            double hpl, double hpr, int flux, int hc, double h0) noexcept nogil:
    cdef double alpha
    if flux == 0:
        alpha = fabs(hpl)
        if fabs(hpr) > alpha:
            alpha = fabs(hpr)
        return 0.5 * (hl + hr) - 0.5 * alpha * (ur - ul)
    # Engquist-Osher for H convex with minimum H(0) = 0: H(max(u, 0)) is H(u) or 0
    return (hl if ul > 0.0 else 0.0) + (hr if ur < 0.0 else 0.0)


def max_abs_hprime(double[:, ::1] U, int hc, double h0):
    cdef Py_ssize_t m, i
    cdef double best = 0.0, v
    for m in range(U.shape[0]):
        for i in range(U.shape[1]):
            v = fabs(hamp(U[m, i], hc, h0))
            if v > best:
                best = v
    return best


def advance(double[:, ::1] U, double duration, double dx, double cfl,
            double max_dt, double kappa0, int kc, double k0, double k1,
            int hc, double h0, int flux, double[:, ::1] acc,
            double[::1] ref, double q, long[::1] probes):
    cdef Py_ssize_t M = U.shape[0], N = U.shape[1]
    cdef Py_ssize_t m, i, im, ip, p
    cdef Py_ssize_t nacc = acc.shape[1]
    cdef double[:, ::1] K = np.empty((M, N))
    cdef double[:, ::1] Hv = np.empty((M, N))
    cdef double[:, ::1] Hp = np.empty((M, N))
    cdef double[::1] G = np.empty(N)
    cdef double t = 0.0, dt, dt_diff, hmax, remaining, g, s0, s1, s2, u, gim
    cdef double rdx = 1.0 / dx, r
    cdef long nsteps = 0
    cdef bint last = duration <= 0.0
    dt_diff = cfl * dx * dx * kappa0 / 2.0
    with nogil:
        while not last:
            hmax = 0.0
            for m in range(M):
                for i in range(N):
                    u = U[m, i]
                    K[m, i] = kprim(u, kc, k0, k1)
                    ham_both(u, hc, h0, &Hv[m, i], &Hp[m, i])
                    if fabs(Hp[m, i]) > hmax:
                        hmax = fabs(Hp[m, i])
            dt = dt_diff
            if hmax > 0.0 and cfl * dx / hmax < dt:
                dt = cfl * dx / hmax
            if max_dt < dt:
                dt = max_dt
            remaining = duration - t
            if remaining <= dt * (1.0 + 1e-9):
                dt = remaining
                last = True
            if nacc > 0:
                for m in range(M):
                    s0 = 0.0
                    s1 = 0.0
                    s2 = 0.0
                    for i in range(N):
                        im = i - 1 if i > 0 else N - 1
                        ip = i + 1 if i < N - 1 else 0
                        g = (U[m, ip] - U[m, im]) * 0.5 * rdx
                        s0 += g * g
                        s1 += Hv[m, i]
                        s2 += qpow(fabs(U[m, i] - ref[m]), q)
                    acc[m, 0] += dt * s0 / N
                    acc[m, 1] += dt * s1 / N
                    acc[m, 2] += dt * s2 / N
                    for p in range(probes.shape[0]):
                        acc[m, 3 + p] += dt * U[m, probes[p]]
            r = dt * rdx
            for m in range(M):
                for i in range(N):
                    ip = i + 1 if i < N - 1 else 0
                    G[i] = num_flux(U[m, i], U[m, ip], Hv[m, i], Hv[m, ip],
                                    Hp[m, i], Hp[m, ip], flux, hc, h0) \
                        - (K[m, ip] - K[m, i]) * rdx
                gim = G[N - 1]
                for i in range(N):
                    U[m, i] = U[m, i] - r * (G[i] - gim)
                    gim = G[i]
                    if not isfinite(U[m, i]):
                        with gil:
                            raise FloatingPointError(
                                f"non-finite state at step {nsteps} (field {m}, cell {i})")
            t += dt
            nsteps += 1
    return nsteps


def hopf_advance(double[:, ::1] P, double duration, double dx, double cfl,
                 double max_dt, double kappa0, int kc, double k0, double k1,
                 double lam, double c2):
    cdef Py_ssize_t M = P.shape[0], N = P.shape[1]
    cdef Py_ssize_t m, i, im, ip
    cdef double[::1] W = np.empty(N)
    cdef double t = 0.0, dt, remaining, ux
    cdef double rdx = 1.0 / dx, rdx2 = 1.0 / (dx * dx)
    cdef long nsteps = 0
    cdef bint last = duration <= 0.0
    with nogil:
        while not last:
            dt = cfl * dx * dx * kappa0 / 2.0
            if max_dt < dt:
                dt = max_dt
            remaining = duration - t
            if remaining <= dt * (1.0 + 1e-9):
                dt = remaining
                last = True
            for m in range(M):
                for i in range(N):
                    im = i - 1 if i > 0 else N - 1
                    ip = i + 1 if i < N - 1 else 0
                    ux = -(P[m, ip] - P[m, im]) * 0.5 * rdx / (lam * P[m, i])
                    W[i] = P[m, i] + dt * (kappa(ux, kc, k0, k1)
                                           * (P[m, ip] - 2.0 * P[m, i] + P[m, im]) * rdx2
                                           + lam * c2 * P[m, i])
                for i in range(N):
                    P[m, i] = W[i]
            t += dt
            nsteps += 1
    return nsteps
