"""Run-config parsing: defaults, rejection, echo round trip, digests."""

import pytest

from ofat.config import RunConfig
from ofat.errors import ConfigurationError


def test_empty_config_gets_all_defaults():
    cfg = RunConfig.from_text("")
    assert cfg.seed == 0
    assert cfg.data["train"]["steps"] == 300
    assert cfg.data["distill"]["p"] == 0.65
    assert cfg.data["distill"]["k"] == 8
    space = cfg.space()
    assert space.embed_dims == (32, 48, 64)
    assert space.head_dim == 8


def test_overrides_apply_and_nested_defaults_survive():
    cfg = RunConfig.from_text("""
seed: 9
train:
  steps: 50
distill:
  teacher:
    depth: 9
""")
    assert cfg.seed == 9
    assert cfg.data["train"]["steps"] == 50
    assert cfg.data["train"]["batch_size"] == 4  # untouched default
    assert cfg.data["distill"]["teacher"]["depth"] == 9
    assert cfg.data["distill"]["teacher"]["heads"] == 8


def test_unknown_key_rejected_with_path():
    with pytest.raises(ConfigurationError, match="train.stepz"):
        RunConfig.from_text("train:\n  stepz: 10\n")
    with pytest.raises(ConfigurationError, match="distill.teacher.depht"):
        RunConfig.from_text("distill:\n  teacher:\n    depht: 3\n")
    with pytest.raises(ConfigurationError, match="bogus"):
        RunConfig.from_text("bogus: 1\n")


def test_invalid_values_name_their_field():
    with pytest.raises(ConfigurationError, match="train.steps"):
        RunConfig.from_text("train:\n  steps: 0\n")
    with pytest.raises(ConfigurationError, match="distill.p"):
        RunConfig.from_text("distill:\n  p: 1.5\n")
    with pytest.raises(ConfigurationError, match="distill.k"):
        RunConfig.from_text("distill:\n  k: 99\n")
    with pytest.raises(ConfigurationError, match="warmup"):
        RunConfig.from_text("train:\n  steps: 5\n  warmup_steps: 6\n")


def test_echo_round_trip_lossless():
    cfg = RunConfig.from_text("seed: 4\ntrain:\n  steps: 77\n")
    echoed = cfg.echo()
    again = RunConfig.from_text(echoed)
    assert again.data == cfg.data
    assert again.echo() == echoed


def test_digest_stable_and_sensitive():
    a = RunConfig.from_text("seed: 1\n")
    b = RunConfig.from_text("seed: 1\n")
    c = RunConfig.from_text("seed: 2\n")
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()
    assert len(a.digest()) == 16


def test_space_presets():
    small = RunConfig.from_text("space:\n  preset: small\n").space()
    assert small.embed_dims == (256, 384, 512)
    base = RunConfig.from_text("space:\n  preset: base\n").space()
    assert base.depths == (12,)
    with pytest.raises(ConfigurationError, match="preset"):
        RunConfig.from_text("space:\n  preset: giant\n")


def test_builders_produce_consistent_objects():
    cfg = RunConfig.from_text("")
    tc = cfg.train_config(stage=1)
    assert tc.stage == 1 and tc.steps == 300
    assert tc.adam_betas == (0.9, 0.98)
    ms = cfg.mask_spec()
    assert ms.p == 0.65 and ms.span_length == 10
    tg = cfg.target_config()
    assert tg.k == 8
    arch = cfg.teacher_arch()
    assert arch.dim == 64 and arch.depth == 8
    budget = cfg.search_budget(max_params=12345)
    assert budget.max_params == 12345 and budget.n_candidates == 1000


def test_yaml_error_is_config_error(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("train: [unclosed\n")
    with pytest.raises(ConfigurationError, match="YAML"):
        RunConfig.from_file(path)
