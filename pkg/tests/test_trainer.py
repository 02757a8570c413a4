import json

import numpy as np
import pytest

from inpl.data import LongTailSpec, default_mixture, default_ood_mixture, inject_ood, make_dataset
from inpl.io import load_checkpoint, save_checkpoint
from inpl.numerics import mlp_forward
from inpl.policy import PolicyConfig
from inpl.trainer import (
    OptimizerConfig,
    TrainConfig,
    TrainingDiverged,
    init_state,
    run,
    train,
    train_step,
    with_policy,
)


@pytest.fixture(scope="module")
def ds():
    lt = LongTailSpec(K=3, gamma=4, N1=40, M1=120)
    d = make_dataset(lt, default_mixture(3, radius=3.0), seed=0, test_per_class=30)
    return inject_ood(d, 0.2, default_ood_mixture(3, radius=3.0), seed=0)


def small_cfg(**kw):
    base = dict(iterations=40, eval_interval=20, batch_labeled=16, batch_unlabeled=16, hidden=(8, 8),
                dtype="float64", policy=PolicyConfig(kind="confidence", tau_c=0.6))
    base.update(kw)
    return TrainConfig(**base)


class TestStep:
    def test_zero_learning_rate_keeps_params(self, ds):
        cfg = small_cfg(optimizer=OptimizerConfig(lr=0.0), iterations=5, eval_interval=5)
        metrics, state = run(cfg, ds)
        init = init_state(cfg, ds.dim, ds.K, len(ds.labeled_y), len(ds.unlabeled_y))
        for a, b in zip(state.params.arrays(), init.params.arrays()):
            np.testing.assert_array_equal(a, b)
        assert len(metrics.records) == 2

    def test_repeated_batch_overfits(self, ds):
        cfg = small_cfg(supervised_only=True, optimizer=OptimizerConfig(lr=0.05))
        state = init_state(cfg, ds.dim, ds.K, len(ds.labeled_y), 0)
        x, y = ds.labeled_x[:16], ds.labeled_y[:16]
        losses = []
        for _ in range(200):
            state, rec = train_step(state, cfg, x, y)
            losses.append(rec.loss_s)
        assert losses[-1] < losses[0]

    def test_record_has_both_scores(self, ds):
        cfg = small_cfg()
        state = init_state(cfg, ds.dim, ds.K, len(ds.labeled_y), len(ds.unlabeled_y))
        idx = np.arange(16)
        _, rec = train_step(state, cfg, ds.labeled_x[:8], ds.labeled_y[:8], ds.unlabeled_x[idx], idx)
        assert rec.confidence.shape == rec.energy.shape == (16,)
        assert rec.accepted.shape == (16,)

    def test_step_does_not_mutate_params(self, ds):
        cfg = small_cfg()
        state = init_state(cfg, ds.dim, ds.K, len(ds.labeled_y), len(ds.unlabeled_y))
        before = [a.copy() for a in state.params.arrays()]
        train_step(state, cfg, ds.labeled_x[:8], ds.labeled_y[:8], ds.unlabeled_x[:8], np.arange(8))
        for a, b in zip(state.params.arrays(), before):
            np.testing.assert_array_equal(a, b)


class TestRun:
    def test_zero_iterations_single_eval(self, ds):
        m = train(small_cfg(iterations=0), ds)
        assert len(m.records) == 1 and m.records[0]["iteration"] == 0
        assert m.records[0]["loss_s"] is None

    def test_eval_schedule_includes_last(self, ds):
        m = train(small_cfg(iterations=45, eval_interval=20), ds)
        assert m.column("iteration") == [0, 20, 40, 45]

    def test_deterministic(self, ds):
        a = json.dumps(train(small_cfg(), ds).records, sort_keys=True)
        b = json.dumps(train(small_cfg(), ds).records, sort_keys=True)
        assert a == b

    def test_seed_changes_run(self, ds):
        a = train(small_cfg(seed=0), ds).records
        b = train(small_cfg(seed=1), ds).records
        assert json.dumps(a) != json.dumps(b)

    def test_energy_quantile_records_threshold(self, ds):
        pol = PolicyConfig(kind="energy", tau_e_mode="labeled_quantile", tau_e_quantile=0.5)
        m = train(small_cfg(policy=pol, loss_variant="aml"), ds)
        assert all(isinstance(t, float) for t in m.column("tau_e"))

    def test_ood_counter_is_cumulative(self, ds):
        m = train(small_cfg(iterations=60), ds)
        c = m.column("ood_accepted_cum")
        assert c == sorted(c)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_partial_metrics(self, ds):
        cfg = small_cfg(optimizer=OptimizerConfig(lr=1e12), iterations=200)
        with pytest.raises(TrainingDiverged) as err:
            train(cfg, ds)
        assert len(err.value.metrics.records) >= 1

    def test_ema_model_used_for_eval(self, ds):
        cfg = small_cfg(ema_momentum=0.0)
        m, state = run(cfg, ds)
        pred = np.argmax(mlp_forward(state.params, ds.test_x), axis=1)
        assert m.final()["test_acc"] == pytest.approx(float((pred == ds.test_y).mean()))


class TestCheckpoint:
    def test_resume_is_bit_identical(self, ds, tmp_path):
        cfg = small_cfg(iterations=60, policy=PolicyConfig(kind="energy", tau_e_mode="labeled_quantile"),
                        loss_variant="aml", optimizer=OptimizerConfig(kind="adam", lr=1e-3))
        full, full_state = run(cfg, ds)
        _, mid = run(cfg, ds, stop_at=25)
        save_checkpoint(tmp_path / "mid.npz", mid)
        resumed, res_state = run(cfg, ds, state=load_checkpoint(tmp_path / "mid.npz"))
        assert json.dumps(resumed.records, sort_keys=True) == json.dumps(full.records, sort_keys=True)
        for a, b in zip(res_state.params.arrays(), full_state.params.arrays()):
            assert a.tobytes() == b.tobytes()


class TestConfig:
    @pytest.mark.parametrize("changes", [
        {"iterations": -1},
        {"batch_labeled": 0},
        {"strong_views": 0},
        {"eval_interval": 0},
        {"loss_variant": "focal"},
        {"dtype": "float16"},
        {"ema_momentum": 1.0},
    ])
    def test_invalid(self, changes):
        with pytest.raises(ValueError):
            TrainConfig(**changes).validate()

    def test_with_policy(self):
        cfg = with_policy(TrainConfig(), kind="confidence", tau_c=0.7)
        assert cfg.policy.kind == "confidence" and cfg.policy.tau_c == 0.7
        assert TrainConfig().policy.kind == "energy"
