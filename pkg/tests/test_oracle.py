import numpy as np
import pytest

from streamaft.errors import ConfigError, DataError, DegenerateProblemError
from streamaft.gehan import Dataset, full_loss
from streamaft.oracle import OracleResult, solve_batch

from conftest import random_dataset


def grid_minimum(dataset, lo=-3.0, hi=3.0, step=0.01):
    """Dense 1-d grid argmin, an independent check on the optimizer."""
    grid = np.arange(lo, hi + step / 2, step)
    losses = [full_loss(dataset, np.array([g])) for g in grid]
    j = int(np.argmin(losses))
    return grid[j], losses[j]


@pytest.fixture
def hand_case():
    # log T = beta * x + eps with x in {0,1}; the Gehan minimum sits where the
    # two covariate groups' residuals interleave, at beta = 1 exactly
    log_times = np.array([0.0, 0.2, 1.0, 1.2])
    events = np.array([True, True, True, True])
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    return Dataset(log_times, events, X)


class TestSolveBatch:
    def test_hand_case_matches_grid(self, hand_case):
        result = solve_batch(hand_case, tol=1e-4)
        g_beta, g_loss = grid_minimum(hand_case, step=0.005)
        assert result.objective <= g_loss + 1e-9
        assert abs(result.beta[0] - g_beta) < 0.02
        assert result.converged

    def test_beats_grid_on_random_problems(self, rng):
        for _ in range(10):
            ds = random_dataset(rng, 30, 1)
            if not ds.events.any():
                continue
            result = solve_batch(ds, tol=1e-4)
            _, g_loss = grid_minimum(ds, step=0.02)
            assert result.objective <= g_loss + 1e-6

    def test_warm_start_no_worse(self, rng):
        ds = random_dataset(rng, 60, 2)
        cold = solve_batch(ds, tol=1e-4)
        warm = solve_batch(ds, init=cold.beta, tol=1e-4)
        assert warm.objective <= cold.objective + 1e-12
        assert np.linalg.norm(warm.beta - cold.beta, np.inf) < 0.02

    def test_polish_off_reduces_evaluations(self, rng):
        ds = random_dataset(rng, 40, 2)
        full = solve_batch(ds, max_iter=50)
        quick = solve_batch(ds, max_iter=50, polish=False)
        assert quick.iterations <= full.iterations
        assert isinstance(quick, OracleResult)

    def test_result_score_norm_finite(self, rng):
        ds = random_dataset(rng, 40, 2)
        result = solve_batch(ds)
        assert np.isfinite(result.score_norm)
        assert np.isfinite(result.objective)

    def test_all_censored_degenerate(self, rng):
        ds = Dataset(rng.standard_normal(10), np.zeros(10, bool), rng.standard_normal((10, 2)))
        with pytest.raises(DegenerateProblemError):
            solve_batch(ds)

    def test_too_small(self):
        ds = Dataset(np.array([0.0]), np.array([True]), np.array([[1.0]]))
        with pytest.raises(DataError):
            solve_batch(ds)

    def test_rank_deficient_warns_and_never_certifies(self, rng):
        x = rng.standard_normal(20)
        X = np.column_stack([x, 2 * x])  # perfectly collinear
        ds = Dataset(rng.standard_normal(20), np.ones(20, bool), X)
        with pytest.warns(UserWarning):
            result = solve_batch(ds, max_iter=30)
        assert not result.converged

    def test_bad_init_shape(self, rng):
        ds = random_dataset(rng, 20, 2)
        with pytest.raises(ConfigError):
            solve_batch(ds, init=[0.0, 0.0, 0.0])
