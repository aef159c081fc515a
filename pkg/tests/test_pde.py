import numpy as np
import pytest

import cases
from superbsde.bounds import BoundParams
from superbsde.csvio import read_rows
from superbsde.errors import CflError, ConfigError, FitError
from superbsde.pde import PdeConfig, conditional_power_integral, extract_rate_near_T, solve_pde
from superbsde.problem import ForwardModel, GeneratorSpec, GrowthParams, ProblemSpec, TerminalSpec, manufactured_target


def test_affine_exact_everywhere():
    p = cases.affine()
    fld = solve_pde(p, PdeConfig(N_x=200))
    exact = 2 * fld.x[None, :] + 8 * (1 - fld.t[:, None])
    assert np.max(np.abs(fld.u - exact)) < 1e-8
    assert np.max(np.abs(fld.z - 2)) < 1e-8


def test_heat_exact():
    p = cases.heat(0.5)
    fld = solve_pde(p, PdeConfig(N_x=400, N_t=2000))
    assert fld.value_at(0.5) == pytest.approx(1.25, abs=1e-6)
    assert fld.gradient_at(0.5) == pytest.approx(1.0, abs=1e-6)


def _manufactured():
    fwd = ForwardModel(x0=0.0, T=1.0, drift="0.2*x", sigma="1 + 0.25*t", K_b=0.2)
    return ProblemSpec(fwd, GeneratorSpec("manufactured", {"c_z": 0.5, "q": 3.0}),
                       TerminalSpec("expr", {"expr": "exp(-1)*sin(x)"}), GrowthParams(l=2.0), "mms")


def test_manufactured_solution_converges():
    p = _manufactured()
    errs = []
    # the domain must be wide enough that the extrapolated boundary does not
    # reach the audited window within [0, T]
    for N_x in (200, 400, 800):
        fld = solve_pde(p, PdeConfig(N_x=N_x, N_t=N_x, x_min=-8.0, x_max=8.0))
        inner = np.abs(fld.x) <= 2.0
        exact = manufactured_target(0.0, fld.x[inner])[0]
        errs.append(np.max(np.abs(fld.u[0, inner] - exact)))
    # first order in dt with dt proportional to dx
    assert errs[0] / errs[1] > 1.6 and errs[1] / errs[2] > 1.6
    assert errs[2] < 2e-3


def test_conditional_power_integral_affine():
    p = cases.affine()
    fld = solve_pde(p, PdeConfig(N_x=100))
    w = conditional_power_integral(p, fld, 3.0)
    exact = 8 * (1 - fld.t)[:, None] * np.ones_like(fld.x)
    assert np.max(np.abs(w - exact)) < 1e-8


def test_heat_rate_of_root_terminal():
    # f = 0, g = |x|^p: max |u_x| ~ (T - t)^(-(1 - p)/2)
    heat_root = ProblemSpec(cases.FWD, cases.ZERO, TerminalSpec("power", {"p": 0.5}), GrowthParams(l=2.0, p_g=0.5))
    fit = extract_rate_near_T(solve_pde(heat_root, PdeConfig(N_x=800)))
    assert fit.exponent == pytest.approx(-0.25, abs=0.02)
    assert fit.r2 > 0.99


def test_lipschitz_rate_is_flat_and_window_guard():
    p = cases.root_rate().with_terminal(TerminalSpec("lipschitz", {"slope": 1.0}))
    fld = solve_pde(p, PdeConfig(N_x=400))
    assert abs(extract_rate_near_T(fld).exponent) < 0.05
    with pytest.raises(FitError):
        extract_rate_near_T(fld, window=(0.05, 0.0501))


def test_gradient_clip_counts_events():
    # Z = 2 against a bound near 1 at early times
    p = cases.affine()
    env = BoundParams.from_growth("z_temporal", p.growth, p.T, calibration="analytic", C=0.5)
    fld = solve_pde(p, PdeConfig(N_x=200, gradient_clip=env))
    assert fld.clip_events > 0
    assert fld.metadata["clip_events"] == fld.clip_events


def test_write_csv(tmp_path):
    fld = solve_pde(cases.heat(), PdeConfig(N_x=64, N_t=10))
    path = fld.write_csv(tmp_path / "u.csv", levels=[0, 10])
    header, rows = read_rows(path)
    assert header[:2] == ["t", "x"] and len(rows) == 2 * 65


def test_explicit_step_limit_enforced():
    # the z-nonlinearity is explicit: too few steps must be refused, not run unstably
    with pytest.raises(CflError):
        solve_pde(cases.affine(), PdeConfig(N_x=400, N_t=100))
    assert solve_pde(cases.affine(), PdeConfig(N_x=400)).metadata["N_t"] >= 100


@pytest.mark.parametrize("kw", [dict(N_x=10), dict(N_t=0), dict(theta=0.5), dict(boundary="dirichlet")])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        PdeConfig(**kw)
