import pytest

from amlgraph.config import (
    PipelineConfig,
    config_from_dict,
    config_hash,
    config_to_dict,
    load_config,
)
from amlgraph.errors import InvalidConfigError


def test_defaults_validate():
    cfg = config_from_dict({})
    cfg.validate()
    assert cfg.workers == 1
    assert cfg.reduction.method == "NONE"
    assert cfg.communities.theta == 0.01


def test_unknown_key_rejected():
    with pytest.raises(InvalidConfigError) as err:
        config_from_dict({"communities": {"thetta": 0.1}})
    assert "thetta" in err.value.field


def test_unknown_top_level_key_rejected():
    with pytest.raises(InvalidConfigError):
        config_from_dict({"communityes": {}})


def test_nested_values_applied():
    cfg = config_from_dict({
        "reduction": {"method": "RM2", "rm2_top_pct": 0.25},
        "detect": {"rng_seed": 9, "threshold": "T1"},
        "workers": 4,
    })
    assert cfg.reduction.method == "RM2"
    assert cfg.reduction.rm2_top_pct == 0.25
    assert cfg.detect.rng_seed == 9
    assert cfg.workers == 4


def test_validation_failures():
    for bad in (
        {"reduction": {"method": "RM9"}},
        {"communities": {"alpha": 1.5}},
        {"communities": {"walk_mode": "sideways"}},
        {"detect": {"threshold": "T9"}},
        {"evaluate": {"share_mode": "SOMETHING"}},
        {"workers": 0},
    ):
        with pytest.raises(InvalidConfigError):
            config_from_dict(bad)


def test_ppr_epsilon_defaults_to_tenth_of_theta():
    cfg = config_from_dict({"communities": {"theta": 0.05}})
    assert cfg.ppr_epsilon == pytest.approx(0.005)
    explicit = config_from_dict({"communities": {"theta": 0.05, "epsilon": 0.001}})
    assert explicit.ppr_epsilon == 0.001


def test_env_override(monkeypatch):
    monkeypatch.setenv("AMLGRAPH_COMMUNITIES_THETA", "0.02")
    monkeypatch.setenv("AMLGRAPH_WORKERS", "3")
    cfg = config_from_dict({})
    assert cfg.communities.theta == 0.02
    assert cfg.workers == 3


def test_yaml_round_trip(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("reduction:\n  method: RM1\noutput_dir: runs/x\n")
    cfg = load_config(path)
    assert cfg.reduction.method == "RM1"
    assert cfg.output_dir == "runs/x"


def test_bad_yaml(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("reduction: [unclosed\n")
    with pytest.raises(InvalidConfigError):
        load_config(path)


def test_missing_file():
    with pytest.raises(InvalidConfigError):
        load_config("/nonexistent/cfg.yaml")


def test_hash_tracks_content():
    a = config_from_dict({})
    b = config_from_dict({})
    c = config_from_dict({"workers": 2})
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)
    assert isinstance(config_to_dict(a)["communities"], dict)
