import json

import pytest

from maxcloak.config import ConfigError, config_hash, dump_scenario, from_preset, load_scenario, parse_scenario
from maxcloak.scenarios import PRESETS, builtin_scenario


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_round_trip_preserves_hash(name, tmp_path):
    cfg = from_preset(name)
    p = tmp_path / "s.json"
    dump_scenario(cfg, p)
    back = load_scenario(p)
    assert back.data == cfg.data
    assert back.hash == cfg.hash
    assert parse_scenario(cfg.to_json()).hash == cfg.hash


def test_hash_ignores_key_order_and_tracks_values():
    d = builtin_scenario("tiny")
    a = parse_scenario(d)
    b = parse_scenario(json.loads(json.dumps(d, sort_keys=True)))
    assert a.hash == b.hash
    d["time"]["steps"] = 17
    assert parse_scenario(d).hash != a.hash
    assert config_hash({"x": 1, "y": 2}) == config_hash({"y": 2, "x": 1})


def test_zero_permittivity_names_the_field():
    d = builtin_scenario("tiny")
    d["materials"]["epsilon"] = 0.0
    with pytest.raises(ConfigError) as ei:
        parse_scenario(d)
    assert any(e.startswith("materials.epsilon") and "ellipticity" in e for e in ei.value.errors)


def test_indefinite_tensor_rejected():
    d = builtin_scenario("tiny")
    d["materials"]["mu"] = [[1.0, 0, 0], [0, -1.0, 0], [0, 0, 1.0]]
    with pytest.raises(ConfigError, match="materials.mu"):
        parse_scenario(d)


def test_all_errors_listed_with_key_paths():
    d = builtin_scenario("tiny")
    d["bogus"] = 1
    d["time"]["stepz"] = 3
    d["time"]["steps"] = 0
    d["solver"]["method"] = "gmres"
    d["sources"][0]["region"] = "nowhere"
    with pytest.raises(ConfigError) as ei:
        parse_scenario(d)
    errs = ei.value.errors
    assert "unknown key 'bogus'" in errs
    assert "unknown key 'time.stepz'" in errs
    assert any(e.startswith("time.steps") for e in errs)
    assert any(e.startswith("solver.method") for e in errs)
    assert any("sources[0].region" in e for e in errs)
    assert len(errs) >= 5


def test_bad_inputs():
    with pytest.raises(ConfigError, match="invalid JSON"):
        parse_scenario("{not json")
    with pytest.raises(ConfigError):
        parse_scenario([1, 2])
    d = builtin_scenario("tiny")
    d["materials"]["epsilon"] = {"value": 1.0, "absorber": {"sigma_max": 1.0, "L_abs": 0.1}}
    with pytest.raises(ConfigError, match="only sigma"):
        parse_scenario(d)


def test_defaults_filled():
    d = builtin_scenario("tiny")
    del d["solver"]
    cfg = parse_scenario(d)
    assert cfg.data["solver"]["method"] in ("cg", "direct", "dense")
    assert cfg.data["solver"]["tol"] > 0
