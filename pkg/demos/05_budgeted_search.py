"""Budgeted random search: sample subnets under a parameter ceiling, score
them with the distillation objective on held-out data, rank, and report."""

from ofat.data import make_synthetic_dataset
from ofat.distill import MaskSpec, TargetConfig
from ofat.search import SearchBudget, random_search, report_scatter, subnet_params
from ofat.spaces import desk_space, max_subnet
from ofat.train import TeacherArch, TrainConfig, make_teacher, stage1_train, stage2_train

space = desk_space()
teacher = make_teacher(seed=7777, arch=TeacherArch(), frontend_spec=space.frontend)
train_data = make_synthetic_dataset(seed=101, n_sequences=48, length=512)
val_data = make_synthetic_dataset(seed=102, n_sequences=16, length=512)
mask, tgt = MaskSpec(), TargetConfig(k=8)

print("== brief two-stage training first ==")
c1 = TrainConfig(stage=1, steps=100, batch_size=4, learning_rate=2e-3, warmup_steps=10, seed=0)
_, model, _ = stage1_train(c1, space, teacher, train_data, mask, tgt)
c2 = TrainConfig(stage=2, steps=100, batch_size=4, learning_rate=2e-3, warmup_steps=10,
                 seed=0, ofa_init="stage1_weights", init_checkpoint="-")
_, model, _ = stage2_train(c2, space, teacher, train_data, mask, tgt, init_model=model)

full = subnet_params(space, max_subnet(space), SearchBudget(max_params=1, n_candidates=1))
budget = SearchBudget(max_params=int(full * 0.6), n_candidates=200, eval_batches=4, seed=5)
print(f"\n== search: 200 candidates under {budget.max_params:,} params "
      f"(60% of the {full:,}-param maximum) ==")
result = random_search(model, space, budget, val_data.sequences, teacher, mask, tgt)
print(f"acceptance rate {result.acceptance_rate:.2f}")
print(f"bounds: min subnet loss {result.bound_min.loss:.4f} "
      f"({result.bound_min.params:,} params), max subnet loss {result.bound_max.loss:.4f} "
      f"({result.bound_max.params:,} params)")
print("top 5 found:")
for e in result.entries[:5]:
    print(f"  loss {e.loss:.4f}  params {e.params:6,}  "
          f"embed={e.config.embed_dim} depth={e.config.depth} heads={e.config.heads}")

csv_text = report_scatter(result)
print(f"\nscatter CSV: {len(csv_text.splitlines())} lines, first three:")
for line in csv_text.splitlines()[:3]:
    print(" ", line)
