import mpmath
import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from inpl import losses
from inpl.data import LongTailSpec, longtail_counts
from inpl.metrics import GroupSpec, group_partition, pseudo_label_pr
from inpl.numerics import ema_update, logsumexp
from inpl.policy import BatchDecisions, PolicyConfig, decide_batch
from inpl.scoring import decoupling_residual, energy, sharpen, softmax, softmax_confidence

finite = st.floats(-20, 20, allow_nan=False, width=64)


def logit_rows(max_k=12, max_n=30):
    return st.integers(2, max_k).flatmap(
        lambda k: st.integers(1, max_n).flatmap(lambda n: arrays(np.float64, (n, k), elements=finite))
    )


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 8), elements=finite))
def test_logsumexp_matches_high_precision(v):
    mpmath.mp.dps = 40
    exact = mpmath.log(mpmath.fsum(mpmath.exp(mpmath.mpf(float(x))) for x in v))
    assert abs(logsumexp(v) - float(exact)) <= 1e-12 * max(1.0, abs(float(exact)))


@given(logit_rows(), st.floats(-50, 50))
def test_energy_shift(logits, c):
    np.testing.assert_allclose(energy(logits + c), energy(logits) - c, rtol=0, atol=1e-10)


@given(logit_rows(), st.floats(-50, 50))
def test_confidence_shift_invariance(logits, c):
    p1, c1, l1 = softmax_confidence(logits)
    p2, c2, l2 = softmax_confidence(logits + c)
    np.testing.assert_allclose(p1, p2, rtol=0, atol=1e-12)
    # argmax may only flip between logits tied up to rounding
    same = l1 == l2
    assert np.all(same | np.isclose(logits[np.arange(len(l1)), l1], logits[np.arange(len(l2)), l2]))


@given(logit_rows())
def test_decoupling_identity(logits):
    assert decoupling_residual(logits).max() <= 1e-9


@given(logit_rows(), st.lists(st.floats(0.01, 1.05), min_size=2, max_size=10))
def test_confidence_acceptance_nonincreasing(logits, taus):
    counts = [decide_batch(logits, PolicyConfig(kind="confidence", tau_c=t)).accepted.sum() for t in sorted(taus)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


@given(logit_rows(), st.lists(st.floats(-40, 10), min_size=2, max_size=10))
def test_energy_acceptance_nonincreasing_as_threshold_drops(logits, taus):
    counts = [decide_batch(logits, PolicyConfig(kind="energy", tau_e_mode="fixed", tau_e=t)).accepted.sum()
              for t in sorted(taus, reverse=True)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


@given(logit_rows(), st.floats(-10, 10), st.floats(-30, 5))
def test_energy_decision_shifts_with_logits(logits, c, tau):
    e = energy(logits)
    # stay clear of the boundary where rounding can flip the comparison
    assume(np.all(np.abs(e - tau) > 1e-6) and np.all(np.abs(e - (tau + c)) > 1e-6))
    shifted = decide_batch(logits + c, PolicyConfig(kind="energy", tau_e_mode="fixed", tau_e=tau))
    moved = decide_batch(logits, PolicyConfig(kind="energy", tau_e_mode="fixed", tau_e=tau + c))
    np.testing.assert_array_equal(shifted.accepted, moved.accepted)


@given(logit_rows(), st.floats(0.05, 3.0))
def test_sharpen_keeps_simplex_and_argmax(logits, T_s):
    p = softmax(logits)
    q = sharpen(p, T_s)
    np.testing.assert_allclose(q.sum(axis=-1), 1.0, atol=1e-12)
    top = p.argmax(axis=-1)
    assert np.all(q[np.arange(len(q)), top] >= q.max(axis=-1) - 1e-12)


@given(st.integers(2, 60), st.floats(1, 300), st.integers(1, 5000))
def test_longtail_profile_shape(K, gamma, N1):
    n, m = longtail_counts(LongTailSpec(K=K, gamma=gamma, N1=N1, M1=N1))
    assert n[0] == N1
    assert np.all(np.diff(n) <= 0)
    assert n.min() >= 1
    np.testing.assert_array_equal(n, m)


@given(st.lists(st.integers(0, 1000), min_size=2, max_size=30), st.data())
def test_groups_partition_classes(counts, data):
    K = len(counts)
    head = data.draw(st.integers(0, K))
    tail = data.draw(st.integers(0, K - head))
    g = group_partition(counts, GroupSpec(head, tail))
    assert sorted(g["head"] + g["body"] + g["tail"]) == list(range(K))
    if g["head"] and g["tail"]:
        assert min(counts[c] for c in g["head"]) >= max(counts[c] for c in g["tail"])


@given(st.integers(2, 6).flatmap(lambda K: st.tuples(
    st.just(K),
    st.lists(st.tuples(st.booleans(), st.integers(0, K - 1), st.integers(-1, K - 1)), min_size=1, max_size=60),
)))
def test_pr_rates_bounded(case):
    K, rows = case
    acc, pred, true = (np.array(c) for c in zip(*rows))
    dec = BatchDecisions(acc.astype(bool), pred, np.zeros(len(acc)), np.zeros(len(acc)))
    r = pseudo_label_pr(dec, true, K)
    assert np.all(r.true_pos <= r.accepted)
    assert all(p is None or 0.0 <= p <= 1.0 for p in r.precision)
    assert all(0.0 <= x <= 1.0 for x in r.recall)
    assert r.accepted.sum() == acc.sum()


@given(logit_rows(max_k=6, max_n=10), st.floats(0.0, 2.0))
def test_aml_equals_ce_under_uniform_prior(logits, lam):
    n, K = logits.shape
    dec = BatchDecisions(np.ones(n, bool), logits.argmax(axis=1), np.zeros(n), np.zeros(n))
    delta = losses.margins(losses.PriorTracker.uniform(K, lambda_m=lam))
    ce = losses.unsupervised_loss(logits, dec, "ce")
    aml = losses.unsupervised_loss(logits, dec, "aml", delta)
    assert abs(ce - aml) <= 1e-10 * max(1.0, abs(ce))


@given(st.integers(2, 8).flatmap(lambda K: st.tuples(
    arrays(np.float64, K, elements=st.floats(0.01, 1)),
    arrays(np.float64, (4, K), elements=st.floats(0, 1)),
)), st.floats(0, 0.9999))
def test_prior_stays_on_simplex(case, m):
    p0, batch = case
    assume(np.all(batch.sum(axis=1) > 0))
    t = losses.PriorTracker(p0 / p0.sum(), momentum=m)
    out = losses.update_prior(t, batch / batch.sum(axis=1, keepdims=True))
    assert abs(out.p.sum() - 1.0) <= 1e-12
    assert out.p.min() > 0


@given(finite, finite, st.floats(0, 0.999))
def test_ema_stays_between(a, b, m):
    out = float(ema_update(np.array(a), np.array(b), m))
    assert min(a, b) - 1e-12 <= out <= max(a, b) + 1e-12
