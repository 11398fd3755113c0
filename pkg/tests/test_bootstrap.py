import numpy as np
import pytest

from streamaft.bootstrap import (
    BootstrapEnsemble,
    confidence_intervals,
    covariance,
    draw_weights,
    ensemble_step,
    init_ensemble,
)
from streamaft.errors import ConfigError, DataError, SequencingError
from streamaft.sgd import LearningRateSchedule, init_state, sgd_step

from conftest import random_batch


def run_stream(ensemble, rng, n_batches, k=4, p=2):
    for i in range(1, n_batches + 1):
        ensemble = ensemble_step(ensemble, random_batch(rng, k=k, p=p, index=i))
    return ensemble


class TestWeights:
    def test_deterministic(self):
        w1 = draw_weights(3, 7, 10, seed=42)
        w2 = draw_weights(3, 7, 10, seed=42)
        np.testing.assert_array_equal(w1, w2)

    def test_distinct_across_keys(self):
        base = draw_weights(1, 1, 8, seed=1)
        assert not np.array_equal(base, draw_weights(2, 1, 8, seed=1))
        assert not np.array_equal(base, draw_weights(1, 2, 8, seed=1))
        assert not np.array_equal(base, draw_weights(1, 1, 8, seed=2))

    def test_nonnegative(self):
        for rep in range(1, 20):
            assert (draw_weights(rep, 1, 50, seed=0) >= 0).all()

    def test_mean_one_variance_one(self):
        pool = np.concatenate(
            [draw_weights(rep, bi, 100, seed=5) for rep in range(1, 21) for bi in range(1, 11)]
        )
        assert pool.mean() == pytest.approx(1.0, abs=0.02)
        assert pool.var() == pytest.approx(1.0, abs=0.05)

    def test_unit_law(self):
        np.testing.assert_array_equal(draw_weights(2, 3, 6, seed=9, law="unit"), np.ones(6))

    def test_validation(self):
        with pytest.raises(ConfigError):
            draw_weights(0, 1, 4, seed=0)
        with pytest.raises(ConfigError):
            draw_weights(1, 1, 1, seed=0)
        with pytest.raises(ConfigError):
            draw_weights(1, 1, 4, seed=0, law="cauchy")


class TestEnsemble:
    def test_replicates_start_at_main_iterate(self):
        ens = init_ensemble(2, LearningRateSchedule(), B=5, seed=1, beta0=[0.5, -0.5])
        np.testing.assert_array_equal(ens.rep_hat, np.tile([0.5, -0.5], (5, 1)))
        np.testing.assert_array_equal(ens.rep_bar, np.tile([0.5, -0.5], (5, 1)))

    def test_main_chain_matches_plain_sgd(self, rng):
        """Row 0 runs unit weights, so main must track sgd_step bit for bit in
        the stacked kernel up to path rounding."""
        sched = LearningRateSchedule(gamma1=0.5, alpha=0.7)
        ens = init_ensemble(2, sched, B=8, seed=3)
        plain = init_state(2, sched)
        rng2 = np.random.default_rng(20240824)
        for i in range(1, 25):
            batch = random_batch(rng, k=4, p=2, index=i)
            random_batch(rng2, k=4, p=2, index=i)  # keep generators aligned
            ens = ensemble_step(ens, batch)
            plain = sgd_step(plain, batch)
            np.testing.assert_allclose(ens.main.beta_hat, plain.beta_hat,
                                       rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(ens.main.beta_bar, plain.beta_bar,
                                   rtol=1e-12, atol=1e-14)

    def test_b_zero_still_fits(self, rng):
        ens = run_stream(init_ensemble(2, LearningRateSchedule(), B=0, seed=1), rng, 10)
        assert ens.main.batch_count == 10
        with pytest.raises(DataError):
            covariance(ens)

    def test_unit_law_replicates_collapse_to_main(self, rng):
        ens = init_ensemble(2, LearningRateSchedule(), B=4, seed=1, weight_law="unit")
        ens = run_stream(ens, rng, 15)
        for b in range(4):
            np.testing.assert_allclose(ens.rep_bar[b], ens.main.beta_bar,
                                       rtol=1e-12, atol=1e-14)

    def test_deterministic_reruns(self, rng):
        rng_a = np.random.default_rng(7)
        rng_b = np.random.default_rng(7)
        a = run_stream(init_ensemble(2, LearningRateSchedule(), B=6, seed=11), rng_a, 12)
        b = run_stream(init_ensemble(2, LearningRateSchedule(), B=6, seed=11), rng_b, 12)
        np.testing.assert_array_equal(a.rep_bar, b.rep_bar)

    def test_seed_changes_replicates_not_main(self, rng):
        rng_a = np.random.default_rng(7)
        rng_b = np.random.default_rng(7)
        a = run_stream(init_ensemble(2, LearningRateSchedule(), B=6, seed=11), rng_a, 12)
        b = run_stream(init_ensemble(2, LearningRateSchedule(), B=6, seed=12), rng_b, 12)
        np.testing.assert_array_equal(a.main.beta_bar, b.main.beta_bar)
        assert not np.array_equal(a.rep_bar, b.rep_bar)

    def test_replicate_order_independent_of_count(self, rng):
        """The first replicates draw the same weights whether B is 3 or 10."""
        rng_a = np.random.default_rng(7)
        rng_b = np.random.default_rng(7)
        a = run_stream(init_ensemble(2, LearningRateSchedule(), B=3, seed=5), rng_a, 8)
        b = run_stream(init_ensemble(2, LearningRateSchedule(), B=10, seed=5), rng_b, 8)
        np.testing.assert_array_equal(a.rep_bar, b.rep_bar[:3])

    def test_sequencing_and_config_errors(self, rng):
        ens = init_ensemble(2, LearningRateSchedule(), B=2, seed=1)
        with pytest.raises(SequencingError):
            ensemble_step(ens, random_batch(rng, k=3, p=2, index=5))
        with pytest.raises(ConfigError):
            ensemble_step(ens, random_batch(rng, k=3, p=3, index=1))
        ens = ensemble_step(ens, random_batch(rng, k=3, p=2, index=1))
        with pytest.raises(ConfigError):
            ensemble_step(ens, random_batch(rng, k=5, p=2, index=2))

    def test_replicate_states_view(self, rng):
        ens = run_stream(init_ensemble(2, LearningRateSchedule(), B=3, seed=2), rng, 6)
        states = ens.replicate_states()
        assert [s.replicate_id for s in states] == [1, 2, 3]
        for b, rs in enumerate(states):
            np.testing.assert_array_equal(rs.state.beta_hat, ens.rep_hat[b])
            np.testing.assert_allclose(rs.state.beta_bar, ens.rep_bar[b])
            assert rs.rng_lineage["seed"] == 2


class TestCovarianceAndIntervals:
    def test_covariance_matches_numpy(self, rng):
        ens = run_stream(init_ensemble(2, LearningRateSchedule(), B=30, seed=4), rng, 20)
        expected = np.cov(ens.rep_bar, rowvar=False, ddof=1)
        np.testing.assert_allclose(covariance(ens), expected, rtol=1e-10)

    def test_covariance_psd_symmetric(self, rng):
        ens = run_stream(init_ensemble(3, LearningRateSchedule(), B=25, seed=4), rng, 20, p=3)
        cov = covariance(ens)
        np.testing.assert_array_equal(cov, cov.T)
        assert np.linalg.eigvalsh(cov).min() >= -1e-12

    def test_covariance_requires_data(self, rng):
        with pytest.raises(DataError):
            covariance(init_ensemble(2, LearningRateSchedule(), B=5, seed=1))
        ens = run_stream(init_ensemble(2, LearningRateSchedule(), B=1, seed=1), rng, 3)
        with pytest.raises(DataError):
            covariance(ens)

    def test_normal_interval_geometry(self, rng):
        ens = run_stream(init_ensemble(2, LearningRateSchedule(), B=40, seed=4), rng, 20)
        ci = confidence_intervals(ens, level=0.95, method="normal")
        center = ens.main.beta_bar
        se = np.sqrt(np.diag(covariance(ens)))
        np.testing.assert_allclose(ci.lower, center - 1.959963984540054 * se)
        np.testing.assert_allclose(ci.upper, center + 1.959963984540054 * se)
        assert (ci.upper > ci.lower).all()

    def test_wider_level_widens_interval(self, rng):
        ens = run_stream(init_ensemble(2, LearningRateSchedule(), B=40, seed=4), rng, 20)
        narrow = confidence_intervals(ens, level=0.90)
        wide = confidence_intervals(ens, level=0.99)
        assert ((wide.upper - wide.lower) > (narrow.upper - narrow.lower)).all()

    def test_percentile_interval_reflects_differences(self, rng):
        ens = run_stream(init_ensemble(2, LearningRateSchedule(), B=50, seed=4), rng, 20)
        ci = confidence_intervals(ens, level=0.90, method="percentile")
        center = ens.main.beta_bar
        diffs = ens.rep_bar - center
        np.testing.assert_allclose(ci.lower, center - np.quantile(diffs, 0.95, axis=0))
        np.testing.assert_allclose(ci.upper, center - np.quantile(diffs, 0.05, axis=0))

    def test_interval_validation(self, rng):
        ens = run_stream(init_ensemble(2, LearningRateSchedule(), B=5, seed=4), rng, 5)
        with pytest.raises(ConfigError):
            confidence_intervals(ens, level=1.2)
        with pytest.raises(ConfigError):
            confidence_intervals(ens, method="studentized")
        with pytest.raises(DataError):
            confidence_intervals(ens, method="percentile")  # needs B >= 20
