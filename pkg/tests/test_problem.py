import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import cases
from superbsde.errors import ConfigError, EvaluationError
from superbsde.expr import Expression
from superbsde.problem import (ForwardModel, GeneratorSpec, GrowthParams, ProblemSpec, TerminalSpec,
                               eval_generator, eval_terminal, manufactured_target, truncated_problem)

finite = st.floats(-50, 50, allow_nan=False)


def test_expression_whitelist():
    e = Expression("abs(z)**3 + sin(x)")
    assert float(e(t=0.0, x=0.0, y=0.0, z=2.0)) == 8.0
    for bad in ("__import__('os')", "x.real", "foo(x)", "w + 1", "lambda: 1"):
        with pytest.raises(ConfigError):
            Expression(bad)


@given(finite, finite)
def test_power_generator_matches_formula(x, z):
    gen = GeneratorSpec("power", {"c0": 0.5, "c_x": 2.0, "c_y": -1.0, "c_z": 3.0, "q": 2.5, "r_f": 0.25})
    got = float(gen(0.3, x, 1.5, z, cases.FWD))
    want = 0.5 + 2.0 * abs(x) ** 1.25 - 1.5 + 3.0 * abs(z) ** 2.5
    assert math.isclose(got, want, rel_tol=1e-12, abs_tol=1e-12)


@given(finite)
def test_kpz_generator(z):
    assert math.isclose(float(cases.KPZ3(0.0, 0.0, 0.0, z, cases.FWD)), abs(z) ** 3, rel_tol=1e-12)


def test_manufactured_source_makes_target_exact():
    # residual of u_t + u_xx/2 + h + c_z |u_x|^q at random points
    fwd = ForwardModel(x0=0.0, T=1.0, drift="0.3*x", sigma="1 + 0.5*t", K_b=0.3)
    gen = GeneratorSpec("manufactured", {"c_z": 0.7, "q": 3.0})
    rng = np.random.default_rng(0)
    t, x = rng.uniform(0, 1, 200), rng.uniform(-3, 3, 200)
    h = 1e-5
    u = lambda t, x: manufactured_target(t, x)[0]  # noqa: E731
    ut = (u(t + h, x) - u(t - h, x)) / (2 * h)
    ux = (u(t, x + h) - u(t, x - h)) / (2 * h)
    uxx = (u(t, x + h) - 2 * u(t, x) + u(t, x - h)) / h**2
    sig = fwd.sig(t)
    z = sig * ux
    res = ut + fwd.b(t, x) * ux + 0.5 * sig**2 * uxx + gen(t, x, u(t, x), z, fwd)
    assert np.max(np.abs(res)) < 1e-4


def test_terminal_families():
    x = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    np.testing.assert_allclose(TerminalSpec("power", {"coef": 2, "p": 0.5, "offset": 1})(x), 2 * np.sqrt(np.abs(x)) + 1)
    np.testing.assert_allclose(TerminalSpec("lipschitz", {"slope": 3, "center": 0.5})(x), 3 * np.abs(x - 0.5))
    np.testing.assert_allclose(TerminalSpec("linear", {"c": 2, "d": -1})(x), 2 * x - 1)
    # the step takes its upper value at the jump
    np.testing.assert_array_equal(TerminalSpec("step", {"jump": 0.0, "low": -1, "high": 1})(x), [-1, -1, 1, 1, 1])
    np.testing.assert_allclose(TerminalSpec("expr", {"expr": "cos(x)"})(x), np.cos(x))


def test_lower_semicontinuity_flags():
    assert TerminalSpec("step").lower_semicontinuous
    assert not TerminalSpec("expr", {"expr": "x"}).lower_semicontinuous
    assert TerminalSpec("expr", {"expr": "x"}, lsc_flag=True).lower_semicontinuous


def test_lipschitz_constants():
    assert TerminalSpec("linear", {"c": -3.0}).lipschitz_constant() == 3.0
    assert TerminalSpec("lipschitz", {"slope": 2.0}).lipschitz_constant() == 2.0
    assert TerminalSpec("power", {"p": 0.5}).lipschitz_constant() is None
    assert TerminalSpec("step").lipschitz_constant() is None


@pytest.mark.parametrize("kw", [dict(l=1.0), dict(l=2.0, r_f=-0.1), dict(l=2.0, eta=3.0), dict(l=2.0, gamma=-1.0)])
def test_growth_rejects_out_of_range(kw):
    with pytest.raises(ConfigError):
        GrowthParams(**kw)


def test_growth_violations_and_problem_check():
    g = GrowthParams(l=2.0, p_g=2.0)
    assert g.violations()
    with pytest.raises(ConfigError):
        g.require_admissible()
    assert GrowthParams(l=2.0, p_g=0.4).violations(theorem=True) == []
    assert GrowthParams(l=2.0, p_g=0.6).violations(theorem=True)
    # a declared z exponent other than l + 1 is rejected with its key path
    with pytest.raises(ConfigError) as err:
        ProblemSpec(cases.FWD, cases.KPZ25, TerminalSpec(), GrowthParams(l=2.0))
    assert "q" in str(err.value)


def test_forward_model_validation():
    with pytest.raises(ConfigError):
        ForwardModel(T=0.0)
    with pytest.raises(ConfigError):
        ForwardModel(drift="x")  # state-dependent drift needs K_b
    with pytest.raises(ConfigError):
        ForwardModel(sigma="x")  # sigma depends on t only
    with pytest.raises(ConfigError):
        ForwardModel(dimension=2)


def test_eval_guards():
    p = cases.affine()
    with pytest.raises(ValueError):
        eval_generator(p, 1.5, 0.0, 0.0, 0.0)
    with pytest.raises(EvaluationError):
        eval_generator(p, 0.5, 0.0, 0.0, np.nan)
    with pytest.raises(EvaluationError):
        eval_terminal(p, np.array([0.0, np.inf]))


@settings(max_examples=50)
@given(st.floats(2.0, 20.0), finite)
def test_truncation_projects_the_state(M, x):
    # the projection acts on x: identity on |x| <= M - 1, saturating at M
    gen = GeneratorSpec("power", {"c_x": 1.0, "r_f": 1.0})
    p = ProblemSpec(cases.FWD, gen, TerminalSpec("power", {"coef": 1.0, "p": 2.0}), GrowthParams(l=2.0, r_f=1.0))
    pt = truncated_problem(p, M)
    f = float(pt.generator(0.0, x, 0.0, 0.0, p.forward))
    g = float(pt.terminal(x))
    if abs(x) <= M - 1:
        assert math.isclose(f, x * x, rel_tol=1e-12) and math.isclose(g, x * x, rel_tol=1e-12)
    assert f <= M * M * (1 + 1e-12) and g <= M * M * (1 + 1e-12)
