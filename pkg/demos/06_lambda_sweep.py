"""
Sensitivity to the leak factor
==============================

One model per leak factor, all trained from the same seed, scored on the
test split.  A short training budget keeps this demo quick; the acceptance
suite runs the same sweep at 50 epochs.
"""

# %%
from dysign import SplitSpec, TrainConfig, dynamic_sbm, lambda_sweep, make_splits

graph = dynamic_sbm(seed=0)
graph = graph.with_splits(make_splits(graph, SplitSpec(seed=0)))
rows = lambda_sweep(graph, TrainConfig(seed=0, epochs=25))
print("lambda  macro-F1  micro-F1")
for r in rows:
    print(f"{r['lambda']:<7g} {r['macro_f1']:.3f}     {r['micro_f1']:.3f}")
