import json
from pathlib import Path

import pytest

from superbsde.config import (config_digest, load_config, parse_text, plan_from_mapping, problem_from_mapping,
                              run_settings)
from superbsde.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]

PROBLEM = """
[problem]
label = "t"
[problem.forward]
x0 = 0.5
T = 2.0
sigma = "1 + t"
[problem.generator]
family = "power"
params = { c_z = 1.0, q = 3.0 }
claimed_assumptions = ["B2a"]
[problem.terminal]
family = "supconv"
params = { n = 4.0, base = { family = "step" } }
[problem.growth]
l = 2.0
"""


def test_shipped_configs_load():
    data = load_config(ROOT / "benchmarks/linear_kpz.cfg")
    p = problem_from_mapping(data["problem"])
    assert p.generator.family == "kpz" and p.growth.gamma == 6.0
    assert run_settings(data)["n_paths"] == 100_000
    plan = plan_from_mapping(load_config(ROOT / "plans/comparison_shift.cfg"))
    assert plan.claim == "comparison" and len(plan.problems) == 2 and plan.resolutions[0].n_paths == 20000


def test_nested_supconv_and_growth_defaults():
    p = problem_from_mapping(parse_text(PROBLEM, "toml")["problem"])
    assert p.T == 2.0 and p.terminal.params["base"].family == "step"
    # growth constants flow into the sup-convolution
    assert p.terminal.params["C_growth"] == 1.0 and p.terminal.params["p_g"] == 0.0
    assert p.generator.claimed_assumptions == frozenset({"B2a"})


def test_toml_and_json_agree(tmp_path):
    data = parse_text(PROBLEM, "toml")
    (tmp_path / "c.json").write_text(json.dumps(data))
    assert load_config(tmp_path / "c.json") == data
    assert config_digest(data) == config_digest(json.loads(json.dumps(data)))
    assert config_digest(data) != config_digest({**data, "x": 1})


@pytest.mark.parametrize("patch, path", [
    (("problem", "generator", "params", "q"), "problem.generator.params.q"),
    (("problem", "forward", "T"), "problem.forward"),
    (("problem", "growth", "l"), "problem.growth"),
])
def test_errors_name_the_key(patch, path):
    data = parse_text(PROBLEM, "toml")
    node = data
    for k in patch[:-1]:
        node = node[k]
    node[patch[-1]] = 2.5 if patch[-1] == "q" else 0.5 if patch[-1] == "l" else -1.0
    with pytest.raises(ConfigError) as err:
        problem_from_mapping(data["problem"])
    assert err.value.path == path


def test_unknown_and_missing_keys():
    data = parse_text(PROBLEM, "toml")
    data["problem"]["forward"]["speed"] = 1
    with pytest.raises(ConfigError) as err:
        problem_from_mapping(data["problem"])
    assert err.value.path == "problem.forward" and "speed" in str(err.value)
    del data["problem"]["forward"]
    with pytest.raises(ConfigError) as err:
        problem_from_mapping(data["problem"])
    assert err.value.path == "problem.forward"


def test_parse_failures(tmp_path):
    with pytest.raises(ConfigError):
        parse_text("[a\nb", "toml")
    with pytest.raises(ConfigError):
        parse_text("[1, 2]", "json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_run_settings_types():
    assert run_settings({"run": {"N": 10, "k_sigma": 5, "refine": True}}) == {"N": 10, "k_sigma": 5.0, "refine": True}
    for bad in ({"N": 1.5}, {"refine": 1}, {"seed": True}, {"wat": 1}):
        with pytest.raises(ConfigError) as err:
            run_settings({"run": bad})
        assert err.value.path.startswith("run.")


def test_plan_errors():
    data = load_config(ROOT / "plans/comparison_shift.cfg")
    data["plan"]["resolutions"] = [{"N": 10, "paths": 5}]
    with pytest.raises(ConfigError) as err:
        plan_from_mapping(data)
    assert err.value.path == "plan.resolutions[0]"
    data = load_config(ROOT / "plans/comparison_shift.cfg")
    data["problems"] = data["problems"][:1]
    with pytest.raises(ConfigError):
        plan_from_mapping(data)
