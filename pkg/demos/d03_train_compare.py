"""
Confidence baseline against energy gating
=========================================

A short run of each policy on the same data. Longer runs (the acceptance
suite uses 5000 iterations over three seeds) give steadier numbers.
"""

from dataclasses import replace

from inpl.data import LongTailSpec, default_mixture, make_dataset
from inpl.policy import PolicyConfig
from inpl.trainer import TrainConfig, train

ds = make_dataset(LongTailSpec(K=5, gamma=10, N1=100, M1=1000), default_mixture(5), seed=0)

base = TrainConfig(iterations=1500, eval_interval=500, policy=PolicyConfig(kind="confidence", tau_c=0.95))
inpl = replace(base, policy=PolicyConfig(kind="energy"), loss_variant="aml")

for name, cfg in [("confidence + CE", base), ("energy + AML", inpl)]:
    last = train(cfg, ds).final()
    print(
        f"{name:16s} acc {last['test_acc']:.3f}  precision {last['micro_precision']:.3f}  "
        f"tail recall {last['tail_recall']:.3f}  accept {last['accept_rate']:.3f}"
    )
