import json
from functools import partial

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stochflux.model import (ModelError, ModelSpec, builtin_model, kappa_primitive,
                             validate_assumptions, with_constants)


def broken_model():
    return ModelSpec(name="unbounded", kappa=lambda u: 2.0 + u,
                     kappa_prime=lambda u: np.ones_like(u),
                     hamiltonian=lambda u: 0.5 * u * u, hamiltonian_prime=lambda u: u,
                     kappa0=1.0, c_kappa=1.0, lambda_=0.5, c1=0.5, c2=1.0, c_h=1.0, q=2.0)


def test_burgers_hamiltonian_value():
    assert builtin_model("burgers").hamiltonian(np.array(2.0)) == 2.0


def test_burgers_constants():
    m = builtin_model("burgers")
    assert (m.kappa0, m.q, m.lambda_, m.c1, m.c2, m.c_h, m.c_kappa) == (1, 2, 0.5, 0.5, 1, 1, 1)


def test_burgers_kappa_is_one():
    u = np.linspace(-10, 10, 101)
    assert np.all(builtin_model("burgers").kappa(u) == 1.0)


def test_tanh_kappa_range():
    m = builtin_model("tanh_kappa_subquadratic")
    k = m.kappa(np.linspace(-40, 40, 2001))
    assert k.min() >= 0.5 and k.max() <= 1.5 <= 1 / m.kappa0
    assert k.min() == pytest.approx(0.5, abs=1e-12)


def test_unknown_model():
    with pytest.raises(ModelError, match="unknown model"):
        builtin_model("kdv")


@pytest.mark.parametrize("bad", [dict(kappa0=0.0), dict(kappa0=1.5), dict(q=1.0),
                                 dict(q=2.5), dict(c1=-1.0)])
def test_invalid_constants(bad):
    with pytest.raises(ModelError):
        builtin_model("burgers", **bad)


def test_unknown_constant():
    with pytest.raises(ModelError):
        builtin_model("burgers", gamma=1.0)


@pytest.mark.parametrize("name", ["burgers", "tanh_kappa_subquadratic"])
def test_builtins_validate(name):
    rep = validate_assumptions(builtin_model(name), -10, 10, 4001)
    assert rep.passed, rep.failures()


def test_burgers_upper_slack_at_zero():
    rep = validate_assumptions(builtin_model("burgers"), -10, 10, 1001)
    assert rep.slack("hamiltonian_upper") == pytest.approx(1.0)
    # H(u) = u^2/2 touches lambda*kappa0*u^2 + c2 - c2, so the slack is c2 at every u
    m = builtin_model("burgers")
    assert m.lambda_ * m.kappa0 * 0.0 + m.c2 - m.hamiltonian(np.array(0.0)) == 1.0


def test_unbounded_kappa_fails_at_right_end():
    rep = validate_assumptions(broken_model(), -10, 10, 1001)
    assert not rep.passed
    fail = {e["inequality"]: e for e in rep.failures()}
    assert fail["kappa_upper"]["worst_u"] == 10.0


def test_tanh_fd_consistency():
    m = builtin_model("tanh_kappa_subquadratic")
    u = np.linspace(-10, 10, 4001)
    h = 1e-4
    fd = (m.hamiltonian(u + h) - m.hamiltonian(u - h)) / (2 * h)
    assert np.max(np.abs(fd - m.hamiltonian_prime(u))) <= 1e-6


def test_non_finite_reports_u():
    bad = ModelSpec(name="log", kappa=lambda u: np.ones_like(u), kappa_prime=lambda u: 0 * u,
                    hamiltonian=lambda u: np.log(u + 20.0), hamiltonian_prime=lambda u: 1 / (u + 20),
                    kappa0=1.0, c_kappa=1.0, lambda_=0.5, c1=0.5, c2=1.0, c_h=1.0, q=2.0)
    with np.errstate(all="ignore"):
        with pytest.raises(ModelError, match=r"u=-25\.0"):
            validate_assumptions(bad, -25, 10, 36)


def test_validation_deterministic_and_json():
    m = builtin_model("tanh_kappa_subquadratic")
    a = validate_assumptions(m).to_json()
    b = validate_assumptions(m).to_json()
    assert json.dumps(a) == json.dumps(b)
    assert set(a[0]) == {"inequality", "worst_u", "slack"}


def test_bad_range():
    with pytest.raises(ModelError):
        validate_assumptions(builtin_model("burgers"), 1, 1)


def test_primitive_closed_forms():
    assert kappa_primitive(builtin_model("burgers"), 3.0) == 3.0
    for name in ("burgers", "tanh_kappa_subquadratic"):
        assert kappa_primitive(builtin_model(name), 0.0) == 0.0


def test_tanh_primitive_vs_riemann_sum():
    m = builtin_model("tanh_kappa_subquadratic")
    n = 10 ** 6
    r = (np.arange(n) + 0.5) / n
    assert kappa_primitive(m, 1.0) == pytest.approx(np.mean(m.kappa(r)), abs=1e-8)


def test_quadrature_fallback_matches_closed_form():
    m = builtin_model("tanh_kappa_subquadratic")
    from dataclasses import replace
    bare = replace(m, primitive=None)
    u = np.array([-3.0, -0.5, 0.7, 4.0])
    assert np.allclose(kappa_primitive(bare, u), kappa_primitive(m, u), rtol=1e-9)


@given(st.floats(-30, 30), st.floats(-30, 30))
def test_primitive_sandwich(u1, u2):
    m = builtin_model("tanh_kappa_subquadratic")
    lo, hi = min(u1, u2), max(u1, u2)
    d = kappa_primitive(m, hi) - kappa_primitive(m, lo)
    assert m.kappa0 * (hi - lo) - 1e-12 <= d <= (hi - lo) / m.kappa0 + 1e-12
    if hi > lo + 1e-9:
        assert d > 0


def test_overrides():
    m = builtin_model("burgers", hamiltonian="quadratic", hamiltonian_coef=0.25)
    assert m.hamiltonian(np.array(2.0)) == 1.0
    assert builtin_model("burgers", hamiltonian="zero").hamiltonian(np.array(3.0)) == 0.0
    with pytest.raises(ModelError):
        builtin_model("burgers", hamiltonian="quadratic")
    assert with_constants(m, c2=2.0).c2 == 2.0


def test_spec_pickles():
    import pickle
    m = builtin_model("tanh_kappa_subquadratic")
    m2 = pickle.loads(pickle.dumps(m))
    assert m2.kappa(np.array(0.3)) == m.kappa(np.array(0.3))
