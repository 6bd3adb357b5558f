"""Masked distillation: targets, span masking, and the masked L1 loss.

Targets are built from a frozen teacher by normalizing each of its top-k
hidden layers per time step (zero mean, unit variance over features) and
averaging them. The student sees the same features with span-masked frames
replaced by its learned mask embedding and is penalized, at masked steps
only, by the L1 distance between its prediction-head output and the
targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, ContractError
from .frontend import Frontend
from .rng import Rng
from .spaces import SubnetConfig
from .supernet import StaticEncoder, SupernetModel, encode, project_input

_NORM_EPS = 1e-5


@dataclass(frozen=True)
class TargetConfig:
    """How many top teacher layers feed the targets (k=8 by convention)."""

    k: int = 8

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError(f"k must be positive, got {self.k}")


@dataclass(frozen=True)
class MaskSpec:
    """Span masking: target fraction p of frames, spans of span_length."""

    p: float = 0.65
    span_length: int = 10
    convention: str = "fraction"  # or "span_start": p is the per-frame start probability

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ConfigurationError(f"masking probability must be in [0, 1], got {self.p}")
        if self.span_length < 1:
            raise ConfigurationError(f"span_length must be >= 1, got {self.span_length}")
        if self.convention not in ("fraction", "span_start"):
            raise ConfigurationError(f"unknown mask convention '{self.convention}'")


@dataclass
class MaskResult:
    masked_input: Tensor  # [t, d]; equals the original outside the mask
    mask_indices: np.ndarray  # sorted int64 time indices


def apply_mask(x, spec: MaskSpec, mask_embedding: Tensor, rng: Rng) -> MaskResult:
    """Replace span-covered frames of x [t, d] by the mask embedding.

    Under the default "fraction" convention, span starts are drawn without
    replacement until the union of length-span windows (clipped at t)
    reaches ceil(p * t) covered frames; the final window may overshoot by
    at most span_length - 1. Under "span_start", every frame independently
    starts a span with probability p (with one forced span when p > 0 and
    none were drawn).
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    t = x.shape[0]
    if t < 1:
        raise ContractError("apply_mask needs at least one frame")
    covered = np.zeros(t, dtype=bool)
    if spec.p > 0.0:
        if spec.convention == "fraction":
            target = math.ceil(spec.p * t)
            for s in rng.permutation(t):
                if int(covered.sum()) >= target:
                    break
                covered[s : s + spec.span_length] = True
        else:
            starts = np.nonzero(rng.uniform(t) < spec.p)[0]
            if starts.size == 0:
                starts = np.array([rng.index(t)])
            for s in starts:
                covered[s : s + spec.span_length] = True
    indices = np.nonzero(covered)[0].astype(np.int64)
    if indices.size == 0:
        return MaskResult(masked_input=x, mask_indices=indices)
    col = Tensor(covered[:, None].astype(x.dtype))
    masked = x * (1.0 - col) + mask_embedding * col
    return MaskResult(masked_input=masked, mask_indices=indices)


def compute_targets(teacher_hidden: list, cfg: TargetConfig) -> Tensor:
    """Average of the top-k per-step-normalized teacher layers.

    Each layer is standardized per time step over the feature dimension
    (parameter-free, eps 1e-5) before averaging, so every layer contributes
    at the same scale.
    """
    if len(teacher_hidden) < cfg.k:
        raise ConfigurationError(
            f"k={cfg.k} exceeds the {len(teacher_hidden)} available teacher layers"
        )
    shapes = {tuple(h.shape) for h in teacher_hidden}
    if len(shapes) != 1:
        raise ConfigurationError(f"teacher layers disagree in shape: {sorted(shapes)}")
    acc = None
    for h in teacher_hidden[-cfg.k :]:
        arr = h.data if isinstance(h, Tensor) else np.asarray(h)
        mu = arr.mean(axis=-1, keepdims=True)
        var = arr.var(axis=-1, keepdims=True)
        normed = (arr - mu) / np.sqrt(var + _NORM_EPS)
        acc = normed if acc is None else acc + normed
    return Tensor(acc / cfg.k)


def distill_loss(student_head_out: Tensor, targets: Tensor, mask_indices, reduction: str = "mean") -> Tensor:
    """Masked L1: mean over masked steps of the per-step feature distance.

    With reduction="mean" (default) the per-step L1 is averaged over the
    feature dimension, making the loss comparable across target widths;
    "sum" keeps the raw per-step sum. Gradients at unmasked steps are
    exactly zero because the difference is gated by a 0/1 column.
    """
    indices = np.asarray(mask_indices, dtype=np.int64)
    if indices.size == 0:
        raise ContractError("distill_loss needs at least one masked step")
    if student_head_out.shape != targets.shape:
        raise ContractError(
            f"student/target shapes disagree: {student_head_out.shape} vs {targets.shape}"
        )
    if reduction not in ("mean", "sum"):
        raise ContractError(f"unknown reduction '{reduction}'")
    t, d = student_head_out.shape
    gate = np.zeros((t, 1), dtype=student_head_out.dtype)
    gate[indices] = 1.0
    per_entry = ad.tabs(student_head_out - targets) * Tensor(gate)
    denom = float(indices.size * (d if reduction == "mean" else 1))
    return ad.tsum(per_entry) * (1.0 / denom)


@dataclass
class TeacherModel:
    """Frozen static Transformer plus its frontend; hidden layers exposed."""

    frontend: Frontend
    encoder: StaticEncoder
    _target_cache: dict = field(default_factory=dict, repr=False)

    @property
    def depth(self) -> int:
        return self.encoder.depth

    @property
    def dim(self) -> int:
        return self.encoder.embed_dim

    def hidden_layers(self, features) -> list:
        """All block outputs on unmasked features, no tape recorded."""
        with ad.no_grad():
            _, hidden, _ = self.encoder.forward(features, collect_hidden=True)
        return hidden

    def targets_from_features(self, features, cfg: TargetConfig, cache_key=None) -> Tensor:
        """Distillation targets for one feature sequence, optionally cached.

        Caching is exact, not approximate: the teacher is frozen and
        deterministic, so targets depend only on the sequence identity.
        """
        key = (cache_key, cfg.k) if cache_key is not None else None
        if key is not None and key in self._target_cache:
            return self._target_cache[key]
        out = compute_targets(self.hidden_layers(features), cfg)
        if key is not None:
            self._target_cache[key] = out
        return out


def teacher_targets(teacher: TeacherModel, raw_signal, cfg: TargetConfig) -> Tensor:
    """Frontend + all teacher layers on the unmasked signal, then targets."""
    features = teacher.frontend.forward(np.asarray(raw_signal))
    return teacher.targets_from_features(features, cfg)


def student_forward_masked(
    model: SupernetModel,
    config: SubnetConfig,
    features,
    mask_spec: MaskSpec,
    rng: Rng,
    collect_hidden: bool = False,
):
    """Project, mask in embedding space with the sliced mask embedding, encode.

    Returns (final, hidden, head_out, MaskResult).
    """
    h = project_input(model, config, features)
    mask_emb = ad.slice_prefix(model.mask_emb, 0, config.embed_dim)
    result = apply_mask(h, mask_spec, mask_emb, rng)
    final, hidden, head_out = encode(model, config, result.masked_input, collect_hidden)
    return final, hidden, head_out, result


def static_forward_masked(
    encoder: StaticEncoder,
    features,
    mask_spec: MaskSpec,
    rng: Rng,
    collect_hidden: bool = False,
):
    """The extracted-model twin of student_forward_masked."""
    h = encoder.project(features)
    result = apply_mask(h, mask_spec, encoder.mask_emb, rng)
    final, hidden, head_out = encoder.encode(result.masked_input, collect_hidden)
    return final, hidden, head_out, result
