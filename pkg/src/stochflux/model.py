"""Diffusivity / Hamiltonian model families and assumption checks.

A :class:`ModelSpec` bundles the diffusivity ``kappa(u)``, the Hamiltonian
``H(u)``, their derivatives, and the constants that appear in the growth
and ellipticity bounds.  Builtin families also carry a ``kernel`` tuple so
the compiled stepping kernels can evaluate them without calling back into
Python.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Callable, Optional

import numpy as np
from scipy import integrate

# kernel codes shared with the compiled core
KAPPA_CONST = 0
KAPPA_TANH = 1
HAM_QUADRATIC = 0
HAM_SUBQUADRATIC = 1

BUILTIN_MODELS = ("burgers", "tanh_kappa_subquadratic")


class ModelError(ValueError):
    pass


# -- module-level model functions (picklable through functools.partial) ------

def _kappa_const(u, c):
    return np.full_like(np.asarray(u, dtype=float), c)


def _zero(u):
    return np.zeros_like(np.asarray(u, dtype=float))


def _kappa_tanh(u, k0, k1):
    return k0 + k1 * np.tanh(u)


def _kappa_tanh_prime(u, k0, k1):
    return k1 / np.cosh(u) ** 2


def _primitive_const(u, c):
    return c * np.asarray(u, dtype=float)


def _log_cosh(u):
    a = np.abs(u)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def _primitive_tanh(u, k0, k1):
    u = np.asarray(u, dtype=float)
    return k0 * u + k1 * _log_cosh(u)


def _ham_quadratic(u, c):
    u = np.asarray(u, dtype=float)
    return c * u * u


def _ham_quadratic_prime(u, c):
    return 2.0 * c * np.asarray(u, dtype=float)


def _ham_subquadratic(u, c):
    u = np.asarray(u, dtype=float)
    return c * ((1.0 + u * u) ** 0.75 - 1.0)


def _ham_subquadratic_prime(u, c):
    u = np.asarray(u, dtype=float)
    return 1.5 * c * u * (1.0 + u * u) ** -0.25


@dataclass(frozen=True)
class ModelSpec:
    """Diffusivity, Hamiltonian and assumption constants.

    The four callables are vectorized over numpy arrays.  ``kernel`` is
    ``(kappa_code, k0, k1, ham_code, h0)`` for builtin families and ``None``
    for ad-hoc models, which can be validated but not stepped.
    """

    name: str
    kappa: Callable
    kappa_prime: Callable
    hamiltonian: Callable
    hamiltonian_prime: Callable
    kappa0: float
    c_kappa: float
    lambda_: float
    c1: float
    c2: float
    c_h: float
    q: float
    primitive: Optional[Callable] = None
    kernel: Optional[tuple] = None
    # Hölder exponents are metadata only
    holder: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0.0 < self.kappa0 <= 1.0:
            raise ModelError(f"kappa0 must lie in (0, 1], got {self.kappa0}")
        if not 1.0 < self.q <= 2.0:
            raise ModelError(f"q must lie in (1, 2], got {self.q}")
        for nm in ("c_kappa", "lambda_", "c1", "c2", "c_h"):
            if not getattr(self, nm) > 0:
                raise ModelError(f"{nm} must be positive, got {getattr(self, nm)}")

    @property
    def convex_at_zero(self) -> bool:
        """True when H is convex with its minimum at u = 0 (builtin families)."""
        return self.kernel is not None

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in
               ("name", "kappa0", "c_kappa", "lambda_", "c1", "c2", "c_h", "q")}
        out["kernel"] = list(self.kernel) if self.kernel is not None else None
        return out


def builtin_model(name: str, hamiltonian: str = "default",
                  hamiltonian_coef: Optional[float] = None, **constants) -> ModelSpec:
    """Instantiate one of the builtin model families.

    Parameters
    ----------
    name : {"burgers", "tanh_kappa_subquadratic"}
    hamiltonian : {"default", "zero", "quadratic"}
        ``"zero"`` drops the transport term (pure nonlinear diffusion);
        ``"quadratic"`` uses ``H(u) = hamiltonian_coef * u**2``.
    **constants
        Overrides for the declared assumption constants.
    """
    if name == "burgers":
        k_code, k0, k1 = KAPPA_CONST, 1.0, 0.0
        kap = partial(_kappa_const, c=1.0)
        kap_p = _zero
        prim = partial(_primitive_const, c=1.0)
        h_code, h0 = HAM_QUADRATIC, 0.5
        consts = dict(kappa0=1.0, c_kappa=1.0, lambda_=0.5, c1=0.5, c2=1.0,
                      c_h=1.0, q=2.0)
    elif name == "tanh_kappa_subquadratic":
        k_code, k0, k1 = KAPPA_TANH, 1.0, 0.5
        kap = partial(_kappa_tanh, k0=1.0, k1=0.5)
        kap_p = partial(_kappa_tanh_prime, k0=1.0, k1=0.5)
        prim = partial(_primitive_tanh, k0=1.0, k1=0.5)
        h_code, h0 = HAM_SUBQUADRATIC, 1.0
        consts = dict(kappa0=0.5, c_kappa=1.0, lambda_=1.0, c1=0.5, c2=1.0,
                      c_h=1.5, q=1.5)
    else:
        raise ModelError(f"unknown model family {name!r}; "
                         f"known: {', '.join(BUILTIN_MODELS)}")

    if hamiltonian == "default":
        pass
    elif hamiltonian == "zero":
        h_code, h0 = HAM_QUADRATIC, 0.0
    elif hamiltonian == "quadratic":
        if hamiltonian_coef is None:
            raise ModelError("hamiltonian='quadratic' needs hamiltonian_coef")
        h_code, h0 = HAM_QUADRATIC, float(hamiltonian_coef)
        consts["q"] = 2.0
    else:
        raise ModelError(f"unknown hamiltonian override {hamiltonian!r}")

    if h_code == HAM_QUADRATIC:
        ham = partial(_ham_quadratic, c=h0)
        ham_p = partial(_ham_quadratic_prime, c=h0)
    else:
        ham = partial(_ham_subquadratic, c=h0)
        ham_p = partial(_ham_subquadratic_prime, c=h0)

    unknown = set(constants) - set(consts)
    if unknown:
        raise ModelError(f"unknown model constants: {sorted(unknown)}")
    consts.update({k: float(v) for k, v in constants.items()})
    label = name if hamiltonian == "default" else f"{name}+{hamiltonian}"
    return ModelSpec(name=label, kappa=kap, kappa_prime=kap_p, hamiltonian=ham,
                     hamiltonian_prime=ham_p, primitive=prim,
                     kernel=(k_code, k0, k1, h_code, h0),
                     holder={"alpha_kappa": 0.75, "beta_kappa": 0.5, "alpha_h": 0.5},
                     **consts)


def with_constants(spec: ModelSpec, **constants) -> ModelSpec:
    return replace(spec, **{k: float(v) for k, v in constants.items()})


# -- assumption validation ----------------------------------------------------

@dataclass
class ValidationReport:
    entries: list  # dicts {inequality, worst_u, slack}

    @property
    def passed(self) -> bool:
        return all(e["slack"] >= 0.0 for e in self.entries)

    def slack(self, inequality: str) -> float:
        for e in self.entries:
            if e["inequality"] == inequality:
                return e["slack"]
        raise KeyError(inequality)

    def failures(self) -> list:
        return [e for e in self.entries if e["slack"] < 0.0]

    def to_json(self) -> list:
        return [dict(e) for e in self.entries]


def _finite_or_raise(values, u, what):
    bad = ~np.isfinite(values)
    if bad.any():
        raise ModelError(f"{what} is not finite at u={float(u[np.argmax(bad)])!r}")
    return values


def validate_assumptions(spec: ModelSpec, u_min: float = -10.0, u_max: float = 10.0,
                         n_samples: int = 4001, fd_step: float = 1e-4,
                         fd_tol: float = 1e-6) -> ValidationReport:
    """Check ellipticity, growth and derivative bounds on a uniform u-grid.

    Each entry holds the minimal slack of one inequality and where it is
    attained.  The derivative-consistency entries compare the declared
    derivatives against centered differences with step ``fd_step``.
    """
    if not u_min < u_max:
        raise ModelError("u_min must be smaller than u_max")
    if n_samples < 2:
        raise ModelError("n_samples must be at least 2")
    u = np.linspace(u_min, u_max, n_samples)
    k = _finite_or_raise(np.asarray(spec.kappa(u), float), u, "kappa")
    kp = _finite_or_raise(np.asarray(spec.kappa_prime(u), float), u, "kappa_prime")
    h = _finite_or_raise(np.asarray(spec.hamiltonian(u), float), u, "H")
    hp = _finite_or_raise(np.asarray(spec.hamiltonian_prime(u), float), u, "H'")
    au = np.abs(u)

    h_fd = (np.asarray(spec.hamiltonian(u + fd_step)) -
            np.asarray(spec.hamiltonian(u - fd_step))) / (2 * fd_step)
    k_fd = (np.asarray(spec.kappa(u + fd_step)) -
            np.asarray(spec.kappa(u - fd_step))) / (2 * fd_step)
    _finite_or_raise(h_fd, u, "H finite difference")
    _finite_or_raise(k_fd, u, "kappa finite difference")

    checks = {
        "kappa_lower": k - spec.kappa0,
        "kappa_upper": 1.0 / spec.kappa0 - k,
        "kappa_prime_growth": spec.c_kappa * (1 + au) - np.abs(kp),
        "hamiltonian_lower": h - (spec.c1 * au ** spec.q - 1.0 / spec.c1),
        "hamiltonian_upper": spec.lambda_ * spec.kappa0 * u * u + spec.c2 - h,
        "hamiltonian_prime_growth": spec.c_h * (1 + au) ** (spec.q / 2) - np.abs(hp),
        "hamiltonian_prime_consistency": fd_tol - np.abs(hp - h_fd),
        "kappa_prime_consistency": fd_tol - np.abs(kp - k_fd),
    }
    entries = []
    for name, slack in checks.items():
        i = int(np.argmin(slack))
        entries.append({"inequality": name, "worst_u": float(u[i]),
                        "slack": float(slack[i])})
    return ValidationReport(entries)


def kappa_primitive(spec: ModelSpec, u):
    """Primitive of the diffusivity, K(u) = int_0^u kappa(r) dr.

    Closed form for builtin families; adaptive quadrature otherwise.
    """
    if spec.primitive is not None:
        out = spec.primitive(u)
        return float(out) if np.ndim(u) == 0 else np.asarray(out, float)

    def one(x):
        val, _ = integrate.quad(lambda r: float(spec.kappa(r)), 0.0, float(x),
                                epsabs=0.0, epsrel=1e-10, limit=200)
        return val

    if np.ndim(u) == 0:
        return one(u)
    return np.array([one(x) for x in np.ravel(u)]).reshape(np.shape(u))
