"""
Energy and confidence on hand-picked logits
===========================================

Confidence ignores a constant shift of the logits. Energy moves with it.
A sample can therefore be confident yet far from the data, or unsure yet
well inside it.
"""

import numpy as np

from inpl.policy import PolicyConfig, decide_batch
from inpl.scoring import decoupling_residual, energy, softmax_confidence

# two rows with the same shape of logits, one shifted up by 10
logits = np.array([[3.0, 1.0, 0.0], [13.0, 11.0, 10.0]])
_, conf, label = softmax_confidence(logits)
print("confidence:", conf)      # identical
print("energy:    ", energy(logits))  # differs by exactly 10

# a flat row has low confidence but can still have low energy
flat = np.array([[8.0, 8.0, 8.0]])
print("flat row  conf %.3f  energy %.3f" % (softmax_confidence(flat)[1][0], energy(flat)[0]))

# the two scores are tied by a log identity; the residual is rounding noise
rng = np.random.default_rng(0)
print("max identity residual:", decoupling_residual(rng.normal(0, 5, (1000, 10))).max())

# the gates disagree on the flat row
both = np.vstack([logits, flat])
c = decide_batch(both, PolicyConfig(kind="confidence", tau_c=0.8))
e = decide_batch(both, PolicyConfig(kind="energy", tau_e_mode="fixed", tau_e=-5.0))
print("confidence gate accepts:", c.accepted)
print("energy gate accepts:    ", e.accepted)
