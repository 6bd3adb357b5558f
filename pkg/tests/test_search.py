"""Budgeted random search: determinism, budget enforcement, reporting."""

import numpy as np
import pytest

from ofat.data import make_synthetic_dataset
from ofat.distill import MaskSpec, TargetConfig, compute_targets, distill_loss
from ofat.errors import BudgetInfeasibleError, ConfigurationError
from ofat.rng import Rng, STREAM_EVAL_MASK, STREAM_SEARCH
from ofat.search import (
    SearchBudget,
    evaluate_static,
    evaluate_subnet,
    parse_scatter,
    random_search,
    report_scatter,
    sample_candidates,
    subnet_params,
    summarize,
)
from ofat.spaces import desk_space, max_subnet, min_subnet, sample_subnet
from ofat.supernet import build_supernet, extract_subnet
from ofat.train import TeacherArch, make_teacher

MASK = MaskSpec(p=0.5, span_length=3)
TGT = TargetConfig(k=2)


@pytest.fixture(scope="module")
def setup():
    space = desk_space(
        embed_dims=(8, 12, 16),
        head_choices=(1, 2),
        ffn_ratios=(2.0, 3.0),
        depths=(1, 2),
        head_dim=4,
        conv_groups=4,
        conv_kernel=3,
        frontend_dim=8,
        teacher_dim=16,
    )
    model = build_supernet(space, Rng(40, 1))
    arch = TeacherArch(dim=16, depth=3, heads=4, ffn_ratio=2.0, head_dim=4,
                       conv_groups=4, conv_kernel=3)
    teacher = make_teacher(seed=41, arch=arch, frontend_spec=space.frontend)
    val = make_synthetic_dataset(seed=42, n_sequences=5, length=64)
    return space, model, teacher, val


def max_params_of(space, budget_like=None):
    b = SearchBudget(max_params=1, n_candidates=1)
    return subnet_params(space, max_subnet(space), b)


# -- evaluate_subnet -----------------------------------------------------------


def test_evaluate_deterministic_bitwise(setup):
    space, model, teacher, val = setup
    cfg = sample_subnet(space, Rng(1, 4))
    a = evaluate_subnet(model, cfg, val.sequences, teacher, MASK, TGT, eval_seed=7, eval_batches=3)
    b = evaluate_subnet(model, cfg, val.sequences, teacher, MASK, TGT, eval_seed=7, eval_batches=3)
    assert a == b


def test_evaluate_supernet_vs_extracted(setup):
    space, model, teacher, val = setup
    cfg = sample_subnet(space, Rng(2, 4))
    via_supernet = evaluate_subnet(model, cfg, val.sequences, teacher, MASK, TGT,
                                   eval_seed=8, eval_batches=4)
    enc = extract_subnet(model, cfg)
    via_static = evaluate_static(enc, model.frontend, val.sequences, teacher, MASK, TGT,
                                 eval_seed=8, eval_batches=4)
    assert abs(via_supernet - via_static) < 1e-6


def test_evaluate_cycles_when_batches_exceed_data(setup):
    space, model, teacher, val = setup
    cfg = sample_subnet(space, Rng(21, 4))
    loss = evaluate_subnet(model, cfg, val.sequences, teacher, MASK, TGT,
                           eval_seed=3, eval_batches=len(val.sequences) + 3)
    assert np.isfinite(loss)
    again = evaluate_subnet(model, cfg, val.sequences, teacher, MASK, TGT,
                            eval_seed=3, eval_batches=len(val.sequences) + 3)
    assert loss == again


def test_evaluate_no_weight_updates(setup):
    space, model, teacher, val = setup
    before = {n: p.data.copy() for n, p in model.named_parameters().items()}
    evaluate_subnet(model, min_subnet(space), val.sequences, teacher, MASK, TGT)
    for n, p in model.named_parameters().items():
        np.testing.assert_array_equal(p.data, before[n])


def test_teacher_as_student_beats_random_subnets(setup):
    """An oracle student built from the teacher's own top layer scores far
    below any untrained random subnet: its only error is the irreducible
    normalization/averaging gap of the target construction."""
    space, model, teacher, val = setup
    mask_rng = Rng(9, STREAM_EVAL_MASK)
    from ofat.distill import apply_mask
    from ofat.autodiff import Tensor

    oracle_losses, random_losses = [], []
    for seq in val.sequences[:3]:
        feats = teacher.frontend.forward(seq)
        hidden = teacher.hidden_layers(feats)
        targets = compute_targets(hidden, TGT)
        mask = apply_mask(Tensor(feats @ np.zeros((feats.shape[1], 1), dtype=np.float32)),
                          MASK, Tensor(np.zeros(1, np.float32)), mask_rng)
        oracle_out = hidden[-1]
        oracle_losses.append(distill_loss(oracle_out, targets, mask.mask_indices).item())
    rng = Rng(10, 4)
    for _ in range(5):
        cfg = sample_subnet(space, rng)
        random_losses.append(
            evaluate_subnet(model, cfg, val.sequences, teacher, MASK, TGT, eval_seed=9)
        )
    assert max(oracle_losses) < min(random_losses)


# -- candidate sampling -----------------------------------------------------------


def test_vacuous_budget_acceptance_rate_one(setup):
    space, model, teacher, val = setup
    budget = SearchBudget(max_params=max_params_of(space), n_candidates=50, seed=3)
    configs, rate = sample_candidates(space, budget)
    assert rate == 1.0
    assert len(configs) == 50
    # reproducible multiset under the same seed
    configs2, _ = sample_candidates(space, budget)
    assert configs == configs2


def test_budget_below_min_subnet_rejected(setup):
    space, model, teacher, val = setup
    lo = subnet_params(space, min_subnet(space), SearchBudget(max_params=1, n_candidates=1))
    with pytest.raises(ConfigurationError, match="minimal"):
        sample_candidates(space, SearchBudget(max_params=lo - 1, n_candidates=5))


def test_attempt_cap_reports_acceptance_rate():
    # In the standard desk space only 1 of ~22k configs meets a budget equal
    # to the minimal subnet size, so the 100x attempt cap trips quickly.
    space = desk_space()
    lo = subnet_params(space, min_subnet(space), SearchBudget(max_params=1, n_candidates=1))
    with pytest.raises(BudgetInfeasibleError) as err:
        sample_candidates(space, SearchBudget(max_params=lo, n_candidates=10, seed=1))
    assert 0.0 <= err.value.acceptance_rate < 0.01


# -- random_search -----------------------------------------------------------------


def test_search_contract_small_run(setup):
    space, model, teacher, val = setup
    budget = SearchBudget(max_params=max_params_of(space) - 1, n_candidates=30,
                          eval_batches=2, seed=5)
    result = random_search(model, space, budget, val.sequences, teacher, MASK, TGT)
    assert len(result.entries) == 30
    losses = [e.loss for e in result.entries]
    assert losses == sorted(losses)
    for e in result.entries:
        assert e.params <= budget.max_params
    assert result.bound_min.params == subnet_params(space, min_subnet(space), budget)
    assert result.bound_max.params == subnet_params(space, max_subnet(space), budget)
    assert result.best.loss <= np.median(losses)


def test_search_bitwise_reproducible(setup):
    space, model, teacher, val = setup
    budget = SearchBudget(max_params=max_params_of(space), n_candidates=12, eval_batches=2, seed=6)
    r1 = random_search(model, space, budget, val.sequences, teacher, MASK, TGT)
    r2 = random_search(model, space, budget, val.sequences, teacher, MASK, TGT)
    assert [(e.config, e.loss, e.params, e.index) for e in r1.entries] == \
           [(e.config, e.loss, e.params, e.index) for e in r2.entries]
    assert (r1.bound_min.loss, r1.bound_max.loss) == (r2.bound_min.loss, r2.bound_max.loss)


def test_search_workers_match_serial(setup):
    space, model, teacher, val = setup
    budget = SearchBudget(max_params=max_params_of(space), n_candidates=10, eval_batches=2, seed=7)
    serial = random_search(model, space, budget, val.sequences, teacher, MASK, TGT, workers=1)
    threaded = random_search(model, space, budget, val.sequences, teacher, MASK, TGT, workers=4)
    assert [(e.config, e.loss) for e in serial.entries] == \
           [(e.config, e.loss) for e in threaded.entries]


def test_bounds_always_evaluated_even_when_over_budget(setup):
    space, model, teacher, val = setup
    lo = subnet_params(space, min_subnet(space), SearchBudget(max_params=1, n_candidates=1))
    budget = SearchBudget(max_params=lo, n_candidates=3, eval_batches=2, seed=8)
    result = random_search(model, space, budget, val.sequences, teacher, MASK, TGT)
    # max subnet exceeds the budget but its bound entry exists regardless
    assert result.bound_max.params > budget.max_params
    assert np.isfinite(result.bound_max.loss) and np.isfinite(result.bound_min.loss)
    for e in result.entries:
        assert e.params <= budget.max_params


def test_monotone_budget_property(setup):
    """On a shared candidate stream, a larger budget's accepted superset can
    only improve (never worsen) the best loss over the shared prefix."""
    space, model, teacher, val = setup
    b_small = max_params_of(space) // 2
    b_large = max_params_of(space)
    rng = Rng(99, STREAM_SEARCH)
    shared = [sample_subnet(space, rng) for _ in range(60)]
    probe = SearchBudget(max_params=1, n_candidates=1)

    def best_loss(budget_cap):
        accepted = [c for c in shared if subnet_params(space, c, probe) <= budget_cap]
        losses = [
            evaluate_subnet(model, c, val.sequences, teacher, MASK, TGT, eval_seed=99,
                            eval_batches=2)
            for c in accepted
        ]
        return min(losses)

    assert best_loss(b_large) <= best_loss(b_small)


# -- reporting ---------------------------------------------------------------------


def test_scatter_row_count_and_reparse(setup):
    space, model, teacher, val = setup
    budget = SearchBudget(max_params=max_params_of(space), n_candidates=9, eval_batches=2, seed=11)
    result = random_search(model, space, budget, val.sequences, teacher, MASK, TGT)
    csv_text = report_scatter(result, header_lines=("seed=11",))
    rows = [ln for ln in csv_text.splitlines() if ln and not ln.startswith("#")]
    assert len(rows) == 1 + 9 + 2  # header + candidates + bounds
    candidates, bounds = parse_scatter(csv_text)
    # ranked order survives the round trip: int fields exactly, losses sorted
    assert [(c[0], c[2], c[3]) for c in candidates] == \
           [(e.params, e.config.embed_dim, e.config.depth) for e in result.entries]
    parsed_losses = [c[1] for c in candidates]
    assert parsed_losses == sorted(parsed_losses)
    np.testing.assert_allclose(parsed_losses, [e.loss for e in result.entries], rtol=1e-7)
    assert {b[4] for b in bounds} == {"min", "max"}


def test_summary_contents(setup):
    space, model, teacher, val = setup
    budget = SearchBudget(max_params=max_params_of(space), n_candidates=5, eval_batches=2, seed=12)
    result = random_search(model, space, budget, val.sequences, teacher, MASK, TGT)
    summary = summarize(result)
    assert summary["budget"]["max_params"] == budget.max_params
    assert summary["budget"]["seed"] == 12
    assert summary["best"]["loss"] == result.best.loss
    assert set(summary["bounds"]) == {"min", "max"}
