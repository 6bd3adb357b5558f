"""Checkpoint format: byte-exact round trips and model bridges."""

import numpy as np
import pytest

from ofat.checkpoint import (
    Checkpoint,
    load_checkpoint,
    save_checkpoint,
    static_from_checkpoint,
    static_to_checkpoint,
    supernet_from_checkpoint,
    supernet_to_checkpoint,
)
from ofat.errors import ConfigurationError
from ofat.rng import Rng
from ofat.spaces import max_subnet, sample_subnet
from ofat.supernet import extract_subnet, forward
from ofat.train import make_teacher, teacher_from_checkpoint, teacher_to_checkpoint, TeacherArch


def test_round_trip_bytes_exact(tmp_path):
    tensors = {
        "alpha": np.arange(12, dtype=np.float32).reshape(3, 4),
        "beta": np.linspace(-1, 1, 7, dtype=np.float32),
        "gamma.w": Rng(1, 1).normal((2, 2, 2)).astype(np.float32),
    }
    meta = {"role": "supernet", "seed": 9, "note": "abc"}
    p1, p2 = tmp_path / "a.ofat", tmp_path / "b.ofat"
    save_checkpoint(p1, tensors, meta)
    loaded, meta2 = load_checkpoint(p1)
    assert meta2 == meta
    for name in tensors:
        np.testing.assert_array_equal(loaded[name], tensors[name])
    save_checkpoint(p2, loaded, meta2)
    assert p1.read_bytes() == p2.read_bytes()


def test_magic_and_version_guards(tmp_path):
    bad = tmp_path / "bad.ofat"
    bad.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ConfigurationError, match="magic"):
        load_checkpoint(bad)
    versioned = tmp_path / "v9.ofat"
    versioned.write_bytes(b"OFAT" + (9).to_bytes(4, "little") + b"\x00" * 16)
    with pytest.raises(ConfigurationError, match="version"):
        load_checkpoint(versioned)


def test_supernet_checkpoint_forward_identical(tmp_path, tiny_space, tiny_model):
    cfg = max_subnet(tiny_space)
    x = (Rng(2, 2).uniform((6, tiny_space.frontend_dim)) * 2 - 1).astype(np.float32)
    _, _, before = forward(tiny_model, cfg, x)
    path = tmp_path / "model.ofat"
    supernet_to_checkpoint(tiny_model, {"seed": 11}).save(path)
    restored = supernet_from_checkpoint(Checkpoint.load(path))
    _, _, after = forward(restored, cfg, x)
    np.testing.assert_array_equal(before.data, after.data)


def test_supernet_checkpoint_metadata_has_space_and_role(tmp_path, tiny_model):
    ckpt = supernet_to_checkpoint(tiny_model, {"seed": 3})
    assert ckpt.metadata["role"] == "supernet"
    assert "space" in ckpt.metadata


def test_extracted_checkpoint_round_trip_reverify(tmp_path, tiny_space, tiny_model):
    cfg = sample_subnet(tiny_space, Rng(3, 4))
    enc = extract_subnet(tiny_model, cfg)
    path = tmp_path / "subnet.ofat"
    static_to_checkpoint(enc, tiny_model.frontend, {"role": "subnet", "seed": 0}).save(path)
    enc2, fe2 = static_from_checkpoint(Checkpoint.load(path))
    for i in range(3):
        x = (Rng(50 + i, 2).uniform((8, tiny_space.frontend_dim)) * 2 - 1).astype(np.float32)
        _, _, a = enc.forward(x)
        _, _, b = enc2.forward(x)
        np.testing.assert_array_equal(a.data, b.data)
        _, _, s = forward(tiny_model, cfg, x)
        assert float(np.abs(b.data - s.data).max()) < 1e-6


def test_teacher_checkpoint_round_trip(tmp_path, tiny_space):
    arch = TeacherArch(dim=16, depth=3, heads=4, ffn_ratio=2.0, head_dim=4,
                       conv_groups=4, conv_kernel=3)
    teacher = make_teacher(seed=5, arch=arch, frontend_spec=tiny_space.frontend)
    path = tmp_path / "teacher.ofat"
    teacher_to_checkpoint(teacher, {"seed": 5}).save(path)
    loaded = teacher_from_checkpoint(Checkpoint.load(path))
    raw = (Rng(6, 2).uniform(72) * 2 - 1).astype(np.float32)
    feats_a = teacher.frontend.forward(raw)
    feats_b = loaded.frontend.forward(raw)
    np.testing.assert_array_equal(feats_a, feats_b)
    ha = teacher.hidden_layers(feats_a)
    hb = loaded.hidden_layers(feats_b)
    for a, b in zip(ha, hb):
        np.testing.assert_array_equal(a.data, b.data)
    for p in loaded.encoder.named_parameters().values():
        assert p.requires_grad is False


def test_teacher_loader_rejects_wrong_role(tmp_path, tiny_model):
    path = tmp_path / "supernet.ofat"
    supernet_to_checkpoint(tiny_model, {"seed": 1}).save(path)
    with pytest.raises(ConfigurationError, match="role"):
        teacher_from_checkpoint(Checkpoint.load(path))


def test_load_then_save_supernet_is_byte_identical(tmp_path, tiny_model):
    p1 = tmp_path / "one.ofat"
    p2 = tmp_path / "two.ofat"
    supernet_to_checkpoint(tiny_model, {"seed": 4}).save(p1)
    Checkpoint.load(p1).save(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_supernet_loader_rejects_mismatched_tensor_shape(tiny_model):
    ckpt = supernet_to_checkpoint(tiny_model, {"seed": 4})
    ckpt.tensors["head.w"] = ckpt.tensors["head.w"][:-1]
    with pytest.raises(ConfigurationError, match="head.w"):
        supernet_from_checkpoint(ckpt)


def test_checkpoint_snapshot_detached_from_training(tiny_space, tiny_model):
    """Saving then mutating the model must not change the snapshot."""
    ckpt = supernet_to_checkpoint(tiny_model, {"seed": 4})
    before = ckpt.tensors["input_proj.w"].copy()
    tiny_model.input_w.data[0, 0] += 1.0
    np.testing.assert_array_equal(ckpt.tensors["input_proj.w"], before)
    tiny_model.input_w.data[0, 0] -= 1.0  # restore the session fixture
