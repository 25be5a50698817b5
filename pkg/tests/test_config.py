import pytest

from prosoda.config import PipelineConfig, dump_config, load_config, parse_overrides


def test_defaults():
    cfg = load_config()
    assert cfg == PipelineConfig()
    assert cfg.K == 100 and cfg.n_bins == 32 and cfg.grid().d == 32
    assert cfg.tracker().transition_weight == 0.35


def test_file_then_overrides(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("# comment\nseed = 4\nK = 50\nemotion_lr = 0.01\n")
    cfg = load_config(p, ["K=60"])
    assert (cfg.seed, cfg.K, cfg.emotion_lr) == (4, 60, 0.01)
    q = tmp_path / "d.ini"
    q.write_text("[prosoda]\nn_bins = 16\n")
    assert load_config(q).grid().d == 16
    assert load_config(overrides={"seed": 9}).seed == 9


def test_dump_round_trip(tmp_path):
    cfg = load_config(overrides=["seed=3", "pred_lr=0.005"])
    p = tmp_path / "dump.ini"
    p.write_text(dump_config(cfg))
    assert load_config(p) == cfg


def test_errors(tmp_path):
    with pytest.raises(KeyError):
        parse_overrides(["nonsense=1"])
    with pytest.raises(ValueError):
        parse_overrides(["K"])
    with pytest.raises(ValueError):
        parse_overrides(["K=ten"])
    with pytest.raises(OSError):
        load_config(tmp_path / "none.ini")


def test_component_configs_follow_seed():
    cfg = load_config(overrides=["seed=7"])
    assert cfg.emotion_config().seed == 7
    assert cfg.predictor_config().seed == 7
    assert cfg.ser_config().epochs == cfg.ser_epochs
