import math

import numpy as np
import pytest

from parapde.features import BlockSystem, TermDescriptor, build_blocks
from parapde.selection import (LOSS_FLOOR, aic_loss, epsilon_range, hyperparameter_grid,
                               lambda_max, select_index, sweep)
from parapde.simulate import solve_burgers
from parapde.solvers import GlassoParams, SgtrParams, glasso, least_squares_refit, sgtr


def system(theta, b, n_data=None):
    theta = np.asarray(theta, dtype=float)
    terms = [TermDescriptor((), "x" * g) for g in range(theta.shape[2])]
    return BlockSystem.from_raw(theta, b, terms, "time", np.arange(theta.shape[0]), n_data)


def random_system(seed, B=3, r=20, d=4):
    rng = np.random.default_rng(seed)
    return system(rng.standard_normal((B, r, d)), rng.standard_normal((B, r)))


def two_term_system(seed=0, B=8, r=80, d=8):
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal((B, r, d))
    xi = np.zeros((d, B))
    xi[2] = 1.5 + 0.2 * np.sin(np.arange(B))
    xi[5] = -0.8
    return system(theta, np.einsum("jri,ij->jr", theta, xi)), xi


@pytest.fixture(scope="module")
def burgers_system():
    return build_blocks(solve_burgers())


class TestLoss:
    def exact_system(self):
        rng = np.random.default_rng(0)
        theta = rng.standard_normal((2, 10, 3))
        b = theta[:, :, 0] - 2 * theta[:, :, 2]
        s = system(theta, b)
        return s, least_squares_refit(s, [0, 2])

    def test_zero_residual_value(self):
        s, coeffs = self.exact_system()
        expected = 100 * math.log(1e-5) + 4
        assert aic_loss((coeffs, 2), s, N=100) == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(-1147.2925, abs=1e-4)

    def test_each_term_costs_two(self):
        s = random_system(1)
        coeffs = least_squares_refit(s, [0, 1])
        base = aic_loss((coeffs, 2), s, N=500)
        for k in range(3, 8):
            assert aic_loss((coeffs, k), s, N=500) - base == pytest.approx(2 * (k - 2), abs=1e-9)

    def test_floor_dominates_tiny_residuals(self):
        s, coeffs = self.exact_system()
        perturbed = coeffs + 1e-9
        a = aic_loss((coeffs, 2), s, N=1000)
        b = aic_loss((perturbed, 2), s, N=1000)
        assert abs(a - b) < 1e-6
        assert a == pytest.approx(1000 * math.log(LOSS_FLOOR) + 4, abs=1e-9)

    def test_defaults_to_dataset_size(self):
        s = random_system(2)
        s = system(s.theta_raw, s.b_raw, n_data=12345)
        m = sgtr(s, SgtrParams(0.0))
        assert aic_loss(m, s) == aic_loss(m, s, N=12345)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            aic_loss((np.zeros((2, 2)), 1), random_system(0))


class TestLambdaMax:
    def test_single_group_equal_to_target(self):
        v = np.random.default_rng(0).standard_normal(25)
        s = system(v[None, :, None], v[None, :])
        assert lambda_max(s) == pytest.approx(1 / 25, rel=1e-14)

    def test_orthogonal_groups(self):
        theta = np.zeros((1, 4, 2))
        theta[0, 0, 0] = theta[0, 1, 1] = 1.0
        s = system(theta, np.array([[0, 0, 1.0, 0]]))
        assert lambda_max(s) == 0.0

    @pytest.mark.parametrize("seed", range(20))
    def test_glasso_just_above_is_empty(self, seed):
        s = random_system(seed)
        assert glasso(s, GlassoParams(1.01 * lambda_max(s))).k == 0


class TestEpsilonRange:
    def test_definitional_example(self):
        rest = math.sqrt(1 - 0.125**2 - 0.5**2 - 0.75**2)
        theta = np.tile(np.eye(4), (16, 1, 1))
        b = np.tile([0.125, 0.5, 0.75, rest], (16, 1))
        lo, hi = epsilon_range(system(theta, b), ridge=0.0)
        assert lo == pytest.approx(0.5, abs=1e-12) and hi == pytest.approx(3.0, abs=1e-12)

    def test_single_group(self):
        rng = np.random.default_rng(3)
        lo, hi = epsilon_range(system(rng.standard_normal((3, 10, 1)), rng.standard_normal((3, 10))))
        assert lo == hi

    @pytest.mark.parametrize("seed", range(20))
    def test_lower_end_is_first_effective_threshold(self, seed):
        s = random_system(seed, d=5)
        lo, hi = epsilon_range(s)
        assert sgtr(s, SgtrParams(lo * (1 - 1e-6))).k == 5
        assert sgtr(s, SgtrParams(lo * (1 + 1e-6))).k < 5
        assert sgtr(s, SgtrParams(hi)).k == 0

    def test_flagged_groups_skipped(self):
        rng = np.random.default_rng(4)
        theta = rng.standard_normal((2, 10, 3))
        theta[:, :, 1] = 0
        lo, _ = epsilon_range(system(theta, rng.standard_normal((2, 10))))
        assert lo > 0


class TestSelectIndex:
    def test_argmin(self):
        assert select_index([3.0, 1.0, 2.0], [1, 2, 3], [1, 2, 3]) == 1

    def test_ties_prefer_fewer_terms_then_larger_hyperparameter(self):
        assert select_index([1.0, 1.0, 1.0], [3, 2, 2], [0.1, 0.2, 0.5]) == 2
        assert select_index([1.0, 1.0], [2, 3], [0.1, 0.5]) == 0

    def test_non_finite_losses(self):
        assert select_index([np.nan, 5.0, np.inf], [1, 2, 3], [1, 2, 3]) == 1
        with pytest.raises(ValueError):
            select_index([np.nan, np.nan], [1, 2], [1, 2])


class TestSweep:
    @pytest.mark.parametrize("method", ["sgtr", "glasso"])
    def test_grid_endpoints(self, method):
        s = random_system(5)
        grid = hyperparameter_grid(s, method)
        assert grid.size == 50
        if method == "glasso":
            ends = (1e-5 * lambda_max(s), lambda_max(s))
        else:
            ends = epsilon_range(s)
        assert grid[0] == pytest.approx(ends[0], rel=1e-12)
        assert grid[-1] == pytest.approx(ends[1], rel=1e-12)
        assert np.allclose(np.diff(np.log(grid)), np.log(grid[1] / grid[0]), rtol=1e-9)

    @pytest.mark.parametrize("method", ["sgtr", "glasso"])
    def test_recovers_two_term_support(self, method):
        s, xi = two_term_system()
        result = sweep(s, method, seed=3)
        assert result.model.active == (2, 5)
        assert np.allclose(result.model.coeffs, xi, atol=1e-10)
        assert len(result.entries) == 50

    @pytest.mark.parametrize("method", ["sgtr", "glasso"])
    def test_deterministic(self, method):
        s = random_system(6, r=40, d=6)
        a, b = sweep(s, method, seed=11), sweep(s, method, seed=11)
        assert a.trace() == b.trace() and a.selected == b.selected
        assert a.model.coeffs.tobytes() == b.model.coeffs.tobytes()

    def test_threads_do_not_change_results(self, monkeypatch):
        s = random_system(7, r=40, d=6)
        one = sweep(s, "glasso", seed=2)
        monkeypatch.setenv("PARAPDE_THREADS", "4")
        four = sweep(s, "glasso", seed=2)
        assert one.trace() == four.trace()
        assert one.model.coeffs.tobytes() == four.model.coeffs.tobytes()

    def test_selected_model_is_refit_on_all_rows(self):
        s, _ = two_term_system(1)
        result = sweep(s, "sgtr", seed=0)
        assert result.model.coeffs_normalized.shape == (8, 8)
        assert np.array_equal(result.model.coeffs_normalized,
                              least_squares_refit(s, result.model.active))
        assert result.best.loss == result.model.info["loss"]

    def test_argument_errors(self):
        s = random_system(0)
        with pytest.raises(ValueError):
            sweep(s, "lasso")
        with pytest.raises(ValueError):
            sweep(s, count=0)
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="two groups"):
            sweep(system(rng.standard_normal((2, 10, 1)), rng.standard_normal((2, 10))))

    def test_burgers_trace_dips_between_extremes(self, burgers_system):
        result = sweep(burgers_system, "sgtr", seed=0)
        losses = np.array([e.loss for e in result.entries])
        best = losses.min()
        # the dense end fits to the floor, so only the term penalty lifts it
        assert losses[0] > best + 2 * (result.entries[0].k - 2) - 5
        assert losses[-1] > best + 1000
        assert 0 < result.selected < 49
        assert result.model.active_names == ["u*u_x", "u_xx"]
