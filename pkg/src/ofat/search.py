"""Budgeted random architecture search over a trained supernet.

Candidates come from the same per-dimension uniform sampler used during
once-for-all training, rejection-filtered by a parameter ceiling, and are
scored with the masked distillation objective on held-out data. Evaluation
masks are fixed by a dedicated seed so every candidate sees identical
masks. The minimal and maximal subnets are always evaluated as performance
bounds, whatever the budget.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .distill import MaskSpec, TargetConfig, TeacherModel, distill_loss, static_forward_masked, student_forward_masked
from .errors import BudgetInfeasibleError, ConfigurationError
from .rng import Rng, STREAM_EVAL_MASK, STREAM_SEARCH
from .spaces import SearchSpace, SubnetConfig, max_subnet, min_subnet, sample_subnet
from .supernet import StaticEncoder, SupernetModel, count_params

ATTEMPT_FACTOR = 100  # rejection-sampling cap: 100 x n_candidates attempts


@dataclass(frozen=True)
class SearchBudget:
    max_params: int
    n_candidates: int = 1000
    eval_batches: int = 4
    seed: int = 0
    includes_frontend: bool = True
    includes_head: bool = True

    def __post_init__(self):
        if self.n_candidates < 1:
            raise ConfigurationError(f"n_candidates must be >= 1, got {self.n_candidates}")
        if self.eval_batches < 1:
            raise ConfigurationError(f"eval_batches must be >= 1, got {self.eval_batches}")


@dataclass
class SearchEntry:
    config: SubnetConfig
    params: int
    loss: float
    index: int  # draw order, the deterministic tie-breaker


@dataclass
class SearchResult:
    entries: list[SearchEntry]  # sorted ascending by (loss, index)
    bound_min: SearchEntry
    bound_max: SearchEntry
    budget: SearchBudget
    acceptance_rate: float

    @property
    def best(self) -> SearchEntry:
        return self.entries[0]


def subnet_params(space: SearchSpace, config: SubnetConfig, budget: SearchBudget) -> int:
    return count_params(
        space, config,
        includes_frontend=budget.includes_frontend,
        includes_head=budget.includes_head,
    ).total


def evaluate_subnet(
    model: SupernetModel,
    config: SubnetConfig,
    val_sequences,
    teacher: TeacherModel,
    mask_spec: MaskSpec,
    target_cfg: TargetConfig,
    eval_seed: int = 0,
    eval_batches: int = 4,
    l1_reduction: str = "mean",
) -> float:
    """Mean masked distillation loss over eval_batches held-out sequences.

    No weights change; masks are drawn from a fresh (eval_seed,
    STREAM_EVAL_MASK) stream, so repeated calls and different candidates
    are scored on identical masks.
    """

    def run(feats, masked_rng):
        _, _, head_out, mask = student_forward_masked(model, config, feats, mask_spec, masked_rng)
        return head_out, mask

    return _evaluate(run, model.frontend, val_sequences, teacher, target_cfg,
                     eval_seed, eval_batches, l1_reduction)


def evaluate_static(
    encoder: StaticEncoder,
    frontend,
    val_sequences,
    teacher: TeacherModel,
    mask_spec: MaskSpec,
    target_cfg: TargetConfig,
    eval_seed: int = 0,
    eval_batches: int = 4,
    l1_reduction: str = "mean",
) -> float:
    """evaluate_subnet's twin for an extracted standalone model."""

    def run(feats, masked_rng):
        _, _, head_out, mask = static_forward_masked(encoder, feats, mask_spec, masked_rng)
        return head_out, mask

    return _evaluate(run, frontend, val_sequences, teacher, target_cfg,
                     eval_seed, eval_batches, l1_reduction)


def _evaluate(run, frontend, val_sequences, teacher, target_cfg, eval_seed, eval_batches,
              l1_reduction="mean"):
    if len(val_sequences) == 0:
        raise ConfigurationError("validation data is empty")
    mask_rng = Rng(eval_seed, STREAM_EVAL_MASK)
    losses = []
    with ad.no_grad():
        for b in range(eval_batches):
            idx = b % len(val_sequences)
            feats = frontend.forward(val_sequences[idx])
            targets = teacher.targets_from_features(feats, target_cfg, cache_key=("val", idx))
            head_out, mask = run(feats, mask_rng)
            loss = distill_loss(head_out, targets, mask.mask_indices, reduction=l1_reduction)
            losses.append(loss.item())
    return float(np.mean(losses))


def sample_candidates(space: SearchSpace, budget: SearchBudget):
    """Rejection-sample n_candidates budget-satisfying configs.

    Returns (configs, acceptance_rate). The raw sampler is untouched so
    accepted candidates keep the training-time per-dimension uniform
    distribution, just truncated by the budget.
    """
    floor = subnet_params(space, min_subnet(space), budget)
    if budget.max_params < floor:
        raise ConfigurationError(
            f"budget {budget.max_params} is below the minimal subnet size {floor}"
        )
    rng = Rng(budget.seed, STREAM_SEARCH)
    configs = []
    attempts = 0
    cap = ATTEMPT_FACTOR * budget.n_candidates
    while len(configs) < budget.n_candidates:
        if attempts >= cap:
            rate = len(configs) / attempts
            raise BudgetInfeasibleError(
                f"found only {len(configs)}/{budget.n_candidates} candidates in "
                f"{attempts} attempts (acceptance rate {rate:.4f})",
                acceptance_rate=rate,
            )
        config = sample_subnet(space, rng)
        attempts += 1
        if subnet_params(space, config, budget) <= budget.max_params:
            configs.append(config)
    return configs, len(configs) / attempts


def random_search(
    model: SupernetModel,
    space: SearchSpace,
    budget: SearchBudget,
    val_sequences,
    teacher: TeacherModel,
    mask_spec: MaskSpec = MaskSpec(),
    target_cfg: TargetConfig = TargetConfig(),
    workers: int = 1,
    l1_reduction: str = "mean",
) -> SearchResult:
    """Score budget-satisfying random subnets; rank ascending by loss."""
    configs, acceptance = sample_candidates(space, budget)

    # Warm the per-sequence target cache before any threading so the
    # threaded evaluations only ever read it.
    for b in range(budget.eval_batches):
        idx = b % len(val_sequences)
        feats = model.frontend.forward(val_sequences[idx])
        teacher.targets_from_features(feats, target_cfg, cache_key=("val", idx))

    def score(config):
        return evaluate_subnet(
            model, config, val_sequences, teacher, mask_spec, target_cfg,
            eval_seed=budget.seed, eval_batches=budget.eval_batches,
            l1_reduction=l1_reduction,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            losses = list(pool.map(score, configs))
    else:
        losses = [score(c) for c in configs]

    entries = [
        SearchEntry(config=c, params=subnet_params(space, c, budget), loss=loss, index=i)
        for i, (c, loss) in enumerate(zip(configs, losses))
    ]
    entries.sort(key=lambda e: (e.loss, e.index))
    assert all(e.params <= budget.max_params for e in entries)

    lo, hi = min_subnet(space), max_subnet(space)
    bound_min = SearchEntry(lo, subnet_params(space, lo, budget), score(lo), -1)
    bound_max = SearchEntry(hi, subnet_params(space, hi, budget), score(hi), -2)
    return SearchResult(
        entries=entries,
        bound_min=bound_min,
        bound_max=bound_max,
        budget=budget,
        acceptance_rate=acceptance,
    )


# -- reporting ----------------------------------------------------------------


def report_scatter(result: SearchResult, header_lines=()) -> str:
    """CSV of every candidate (ranked) plus the min/max bound rows."""
    lines = [f"# {line}" for line in header_lines]
    lines.append("params,loss,embed,depth,tag")
    for e in result.entries:
        lines.append(f"{e.params},{e.loss:.8e},{e.config.embed_dim},{e.config.depth},")
    for tag, e in (("min", result.bound_min), ("max", result.bound_max)):
        lines.append(f"{e.params},{e.loss:.8e},{e.config.embed_dim},{e.config.depth},{tag}")
    return "\n".join(lines) + "\n"


def parse_scatter(text: str):
    """Re-parse report_scatter output into (candidate_rows, bound_rows)."""
    candidates, bounds = [], []
    rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    for ln in rows[1:]:
        params, loss, embed, depth, tag = ln.split(",")
        row = (int(params), float(loss), int(embed), int(depth))
        (bounds if tag else candidates).append(row + (tag,))
    return candidates, bounds


def summarize(result: SearchResult) -> dict:
    """Structured summary: best config, bounds, budget, seed."""
    return {
        "budget": {
            "max_params": result.budget.max_params,
            "n_candidates": result.budget.n_candidates,
            "eval_batches": result.budget.eval_batches,
            "seed": result.budget.seed,
            "includes_frontend": result.budget.includes_frontend,
            "includes_head": result.budget.includes_head,
        },
        "acceptance_rate": result.acceptance_rate,
        "best": {
            "config": result.best.config.to_dict(),
            "params": result.best.params,
            "loss": result.best.loss,
        },
        "bounds": {
            "min": {"params": result.bound_min.params, "loss": result.bound_min.loss},
            "max": {"params": result.bound_max.params, "loss": result.bound_max.loss},
        },
    }
