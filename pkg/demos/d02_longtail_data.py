"""
Building a long-tailed mixture
==============================

Labeled and unlabeled counts decay geometrically from the head class.
"""

import numpy as np

from inpl.data import LongTailSpec, default_mixture, longtail_counts, make_dataset
from inpl.metrics import GroupSpec, group_partition

spec = LongTailSpec(K=5, gamma=10, N1=100, mode="dual", M1=1000)
n, m = longtail_counts(spec)
print("labeled:  ", n)
print("unlabeled:", m)

# complement mode keeps N_k + M_k constant per class
n2, m2 = longtail_counts(LongTailSpec(K=5, gamma=10, N1=100, mode="complement", M1=None, D=350))
print("complement totals:", n2 + m2)

ds = make_dataset(spec, default_mixture(5), seed=0)
print("shapes:", ds.labeled_x.shape, ds.unlabeled_x.shape, ds.test_x.shape)
print("groups:", group_partition(ds.labeled_counts, GroupSpec.default_for(5)))

# the same seed gives the same arrays
again = make_dataset(spec, default_mixture(5), seed=0)
print("reproducible:", np.array_equal(ds.unlabeled_x, again.unlabeled_x))
