"""Named-tensor checkpoint archive, shared by teacher, supernet and subnets.

Layout (all integers little-endian):

    magic "OFAT" | version u32 | metadata_len u32 | metadata UTF-8 JSON |
    tensor_count u64 | per tensor: name_len u16, name UTF-8, rank u8,
    extents u64 each, payload raw f32

Metadata is canonical JSON (sorted keys, no whitespace) so load-then-save
reproduces the file byte for byte. Tensor order is preserved.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .frontend import Frontend
from .spaces import SearchSpace
from .supernet import StaticEncoder, SupernetModel, _BLOCK_FIELDS

MAGIC = b"OFAT"
VERSION = 1


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]  # insertion order == file order
    metadata: dict

    def save(self, path) -> None:
        save_checkpoint(path, self.tensors, self.metadata)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        tensors, metadata = load_checkpoint(path)
        return cls(tensors, metadata)


def canonical_metadata(metadata: dict) -> bytes:
    return json.dumps(metadata, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode()


def save_checkpoint(path, tensors: dict[str, np.ndarray], metadata: dict) -> None:
    meta = canonical_metadata(metadata)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<Q", len(tensors)))
        for name, arr in tensors.items():
            encoded = name.encode()
            arr32 = np.ascontiguousarray(arr, dtype="<f4")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr32.ndim))
            for extent in arr32.shape:
                fh.write(struct.pack("<Q", extent))
            fh.write(arr32.tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ConfigurationError(f"{path}: not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise ConfigurationError(f"{path}: unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", fh.read(4))
        metadata = json.loads(fh.read(meta_len).decode())
        (count,) = struct.unpack("<Q", fh.read(8))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode()
            (rank,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(rank))
            n = int(np.prod(shape)) if shape else 1
            payload = fh.read(4 * n)
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    return tensors, metadata


# -- model <-> tensor-dict bridges -------------------------------------------


def supernet_to_checkpoint(model: SupernetModel, metadata: dict) -> Checkpoint:
    # Copies, not views: a checkpoint must stay a snapshot even if the model
    # keeps training in place afterwards.
    tensors = {name: arr.copy() for name, arr in model.frontend.named_arrays().items()}
    for name, t in model.named_parameters().items():
        tensors[name] = t.data.copy()
    meta = dict(metadata)
    meta["role"] = meta.get("role", "supernet")
    meta["space"] = model.space.to_dict()
    return Checkpoint(tensors, meta)


def supernet_from_checkpoint(ckpt: Checkpoint) -> SupernetModel:
    from .rng import Rng
    from .supernet import build_supernet

    space = SearchSpace.from_dict(ckpt.metadata["space"])
    model = build_supernet(space, Rng(0, 0))
    model.frontend.load_arrays(ckpt.tensors)
    for name, t in model.named_parameters().items():
        arr = ckpt.tensors[name]
        if arr.shape != t.shape:
            raise ConfigurationError(f"checkpoint tensor {name} has shape {arr.shape}, expected {t.shape}")
        t.data = arr.astype(t.dtype)
    return model


def static_to_checkpoint(enc: StaticEncoder, frontend: Frontend, metadata: dict) -> Checkpoint:
    tensors = {name: arr.copy() for name, arr in frontend.named_arrays().items()}
    for name, t in enc.named_parameters().items():
        tensors[name] = t.data.copy()
    meta = dict(metadata)
    meta["arch"] = {
        "embed_dim": enc.embed_dim,
        "head_dim": enc.head_dim,
        "groups": enc.groups,
        "heads": list(enc.heads_per_layer()),
        "frontend": frontend.spec.to_dict(),
    }
    return Checkpoint(tensors, meta)


def static_from_checkpoint(ckpt: Checkpoint, trainable: bool = False):
    """Rebuild (StaticEncoder, Frontend) from an extracted/teacher checkpoint."""
    from .frontend import FrontendSpec

    arch = ckpt.metadata["arch"]
    spec = FrontendSpec.from_dict(arch["frontend"])
    frontend = Frontend.build(spec, _zero_rng())
    frontend.load_arrays(ckpt.tensors)
    heads = arch["heads"]
    blocks = []
    for i in range(len(heads)):
        blk = {"heads": int(heads[i])}
        for name in _BLOCK_FIELDS:
            blk[name] = ckpt.tensors[f"blocks.{i}.{name}"]
        blocks.append(blk)
    enc = StaticEncoder(
        embed_dim=int(arch["embed_dim"]),
        head_dim=int(arch["head_dim"]),
        groups=int(arch["groups"]),
        input_w=ckpt.tensors["input_proj.w"],
        input_b=ckpt.tensors["input_proj.b"],
        pos_w=ckpt.tensors["pos_conv.w"],
        pos_b=ckpt.tensors["pos_conv.b"],
        mask_emb=ckpt.tensors["mask_emb"],
        blocks=blocks,
        final_g=ckpt.tensors["final_norm.g"],
        final_b=ckpt.tensors["final_norm.b"],
        head_w=ckpt.tensors["head.w"],
        head_b=ckpt.tensors["head.b"],
        trainable=trainable,
    )
    return enc, frontend


def _zero_rng():
    from .rng import Rng

    return Rng(0, 0)


def file_digest(path) -> str:
    import hashlib

    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
