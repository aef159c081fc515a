import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superbsde.errors import ConfigError, GrowthError
from superbsde.problem import GrowthParams, TerminalSpec
from superbsde.supconv import (SmoothProjection, SupConvConfig, admissible_n0, smooth_project, sup_convolve,
                               supconv_terminal)

ROOT = TerminalSpec("power", {"coef": 1.0, "p": 0.5})
ROOT_K = dict(C_growth=1.0, alpha_bar=1.0, p_g=0.5)
STEP = TerminalSpec("step", {"jump": 0.0, "low": 0.0, "high": 1.0})
STEP_K = dict(C_growth=1.0, alpha_bar=0.0, p_g=0.0)


def root_exact(n, x):
    """Closed form for g = sqrt|x|: the supremum sits at u = x unless |x| < 1/(4n^2)."""
    ax = np.abs(x)
    return np.where(ax >= 1 / (4 * n * n), np.sqrt(ax), 1 / (4 * n) + n * ax)


def test_step_closed_form():
    # g_n(x) = max(0, 1 - n|x|) for x < 0 and 1 for x >= 0
    x = np.linspace(-2, 2, 81)
    for n in (1.0, 2.0, 5.0):
        r = sup_convolve(STEP, SupConvConfig(n, h_u=1e-4), x, **STEP_K)
        want = np.where(x >= 0, 1.0, np.maximum(0.0, 1 - n * np.abs(x)))
        assert np.all(r.value <= want + 1e-12)
        assert np.all(want <= r.value + r.gap + 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(-4, 4), st.sampled_from([2.0, 3.0, 6.0]))
def test_certified_bracket_contains_exact(x, n):
    r = sup_convolve(ROOT, SupConvConfig(n, h_u=1e-3), np.array([x]), **ROOT_K)
    b = root_exact(n, x)
    assert r.value[0] - 1e-12 <= b <= r.value[0] + r.gap[0] + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.floats(2.0, 10), st.floats(0.1, 5))
def test_monotone_in_n_and_dominates(n, dn):
    x = np.linspace(-3, 3, 121)
    lo = sup_convolve(ROOT, SupConvConfig(n), x, **ROOT_K)
    hi = sup_convolve(ROOT, SupConvConfig(n + dn), x, **ROOT_K)
    assert np.all(hi.value <= lo.value + hi.gap + 1e-12)
    assert np.all(hi.value >= ROOT(x) - 1e-12)


def test_grid_value_is_exactly_n_lipschitz():
    x = np.sort(np.random.default_rng(3).uniform(-5, 5, 400))
    for n in (2.0, 4.0, 16.0):
        r = sup_convolve(ROOT, SupConvConfig(n), x, **ROOT_K)
        assert np.all(np.abs(np.diff(r.grid_value)) <= n * np.diff(x) * (1 + 1e-9) + 1e-12)


def test_lipschitz_terminal_is_fixed():
    g = TerminalSpec("lipschitz", {"slope": 2.0, "center": -1.0, "offset": 0.5})
    x = np.linspace(-4, 4, 33)
    r = sup_convolve(g, SupConvConfig(3.0), x, C_growth=1.0, alpha_bar=2.0, p_g=1.0)
    np.testing.assert_array_equal(r.value, g(x))
    assert np.all(r.gap == 0)


def test_refine_never_lowers():
    x = np.linspace(-1, 1, 41)
    a = sup_convolve(ROOT, SupConvConfig(3.0, h_u=1e-2), x, **ROOT_K)
    b = sup_convolve(ROOT, SupConvConfig(3.0, h_u=1e-2, refine=True), x, **ROOT_K)
    assert np.all(b.value >= a.value)
    assert np.all(b.value <= a.value + a.gap + 1e-12)


def test_admissible_threshold():
    assert admissible_n0(STEP, **STEP_K) == 1.0
    assert admissible_n0(ROOT, **ROOT_K) == 2.0
    assert admissible_n0(TerminalSpec("linear", {"c": 3.0}), C_growth=1.0, alpha_bar=3.0, p_g=1.0) == 4.0
    with pytest.raises(GrowthError):
        admissible_n0(TerminalSpec("power", {"p": 1.5}), C_growth=1.0, alpha_bar=1.0, p_g=1.5)
    with pytest.raises(ConfigError):
        sup_convolve(ROOT, SupConvConfig(1.0), np.zeros(1), **ROOT_K)


def test_config_validation():
    for kw in (dict(n=0.0), dict(n=1.0, h_u=0.0), dict(n=1.0, search_radius_factor=-1.0)):
        with pytest.raises(ConfigError):
            SupConvConfig(**kw)
    with pytest.raises(ConfigError):
        sup_convolve(ROOT, SupConvConfig(2.0), np.zeros(1))  # growth constants missing


def test_supconv_terminal_spec():
    growth = GrowthParams(l=1.5, **STEP_K)
    g4 = supconv_terminal(STEP, 4.0, growth)
    assert g4.lower_semicontinuous and g4.lipschitz_constant() == 4.0
    np.testing.assert_allclose(g4(np.array([-0.125, 0.3])), [0.5, 1.0], atol=3e-3)


@given(st.floats(2, 50), st.floats(-100, 100))
def test_smooth_projection(M, x):
    rho = SmoothProjection(M)
    y = float(smooth_project(rho, x))
    if abs(x) <= M - 1:
        assert y == x
    assert abs(y) <= M
    if abs(x) >= M + 1:
        assert abs(y) == pytest.approx(M)


def test_smooth_projection_is_c1():
    rho = SmoothProjection(5.0)
    x = np.linspace(0, 8, 80_001)
    d = np.diff(smooth_project(rho, x)) / np.diff(x)
    assert np.max(np.abs(np.diff(d))) < 1e-3
    with pytest.raises(ConfigError):
        SmoothProjection(1.0)
