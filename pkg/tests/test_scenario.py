from pathlib import Path

import pytest

from freshen.runtime import FreshenMode
from freshen.scenario import DEFAULT_SIZE_GRID, ScenarioError, load_scenario, parse_scenario, validate_scenario

ROOT = Path(__file__).resolve().parent.parent
SHIPPED = sorted((ROOT / "scenarios").glob("*.toml"))

BASE = """
name = "t"
[[topology]]
id = "s"
rtt_ms = 5
bandwidth = 1000
[[functions]]
name = "a"
constants = { E = "s", O = "o" }
steps = [{ op = "get", endpoint = "E", object = "O" }, { op = "compute", ms = 3 }]
[[functions]]
name = "b"
constants = { E = "s", O = "o" }
steps = [{ op = "put", endpoint = "E", object = "O" }]
"""


def write(tmp_path, text):
    p = tmp_path / "s.toml"
    p.write_text(text)
    return p


@pytest.mark.parametrize("path", SHIPPED, ids=lambda p: p.stem)
def test_shipped_scenarios_validate(path):
    assert validate_scenario(path) == []


def test_defaults(tmp_path):
    sc = load_scenario(write(tmp_path, BASE))
    assert sc.object_sizes == DEFAULT_SIZE_GRID
    assert sc.modes == tuple(FreshenMode)
    assert [c.name for c in sc.all_chains()] == ["solo:a", "solo:b"]


def test_dangling_endpoint_is_reported(tmp_path):
    text = BASE.replace('constants = { E = "s", O = "o" }\nsteps = [{ op = "put"',
                        'constants = { E = "nowhere", O = "o" }\nsteps = [{ op = "put"')
    diags = validate_scenario(write(tmp_path, text))
    assert any("nowhere" in d.message and "not in topology" in d.message for d in diags)
    assert any(d.location.startswith("functions[1].steps[0]") for d in diags)


def test_cycle_is_reported(tmp_path):
    text = BASE + '''
[[functions]]
name = "c"
constants = {}
steps = [{ op = "compute", ms = 1 }]
[[chains]]
name = "loop"
entry = "a"
nodes = ["a", "b", "c"]
edges = [["a", "b", "sns"], ["b", "c", "sns"], ["c", "b", "sns"]]
'''
    diags = validate_scenario(write(tmp_path, text))
    assert any("cycle" in d.message for d in diags)


def test_multiple_problems_collected(tmp_path):
    text = BASE + '\nmodes = ["turbo"]\nobject_sizes = [-1]\n'
    text = text.replace("rtt_ms = 5", "rtt_ms = 0")
    diags = validate_scenario(write(tmp_path, text))
    assert len(diags) >= 3
    with pytest.raises(ScenarioError):
        load_scenario(write(tmp_path, text))


def test_syntax_and_missing_file(tmp_path):
    assert validate_scenario(write(tmp_path, "name = ["))[0].location == "syntax"
    assert validate_scenario(tmp_path / "absent.toml")[0].location == "file"


def test_parse_from_dict():
    sc, diags = parse_scenario({"topology": [{"id": "s", "rtt_ms": 1, "bandwidth": 1}],
                                "functions": [{"name": "x", "constants": {}, "steps": [{"op": "compute", "ms": 1}]}]})
    assert diags == [] and sc.functions[0].name == "x"
