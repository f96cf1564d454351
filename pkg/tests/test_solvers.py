import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from parapde.features import BlockSystem, TermDescriptor
from parapde.selection import lambda_max
from parapde.solvers import (GlassoParams, SgtrParams, glasso, group_lasso_bcd, group_norms,
                             least_squares_refit, ridge_blockwise, sgtr)


def system(theta, b, n_data=None):
    theta = np.asarray(theta, dtype=float)
    d = theta.shape[2]
    terms = [TermDescriptor((), "x" * g) for g in range(d)]
    return BlockSystem.from_raw(theta, b, terms, "time", np.arange(theta.shape[0]), n_data)


def random_system(seed, B=3, r=20, d=4):
    rng = np.random.default_rng(seed)
    return system(rng.standard_normal((B, r, d)), rng.standard_normal((B, r)))


def dense(s):
    A = scipy.linalg.block_diag(*s.theta)
    return A, s.b.ravel()


def as_blocks(w, s):
    B, _, d = s.shape
    return w.reshape(B, d).T


def kkt_gaps(s, W, lam):
    r = s.b - np.einsum("jri,ij->jr", s.theta, W)
    g = np.linalg.norm(np.einsum("jri,jr->ij", s.theta, r), axis=1) / s.n_rows
    active = np.any(W != 0, axis=1)
    return g[active] - lam, g[~active] - lam


class TestRidge:
    def test_orthonormal_block(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((10, 3)))
        s = system(q[None], rng.standard_normal((1, 10)))
        assert np.allclose(ridge_blockwise(s, 0.0)[:, 0], q.T @ s.b[0], atol=1e-12)

    def test_shrinks_monotonically(self):
        s = random_system(1)
        norms = [np.linalg.norm(ridge_blockwise(s, lam)) for lam in np.logspace(-4, 6, 30)]
        assert np.all(np.diff(norms) < 0) and norms[-1] < 1e-5

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_dense_global_solve(self, seed):
        s = random_system(seed, B=3, r=12, d=4)
        A, b = dense(s)
        lam = 10.0 ** np.random.default_rng(seed).uniform(-5, 1)
        w = np.linalg.solve(A.T @ A + lam * np.eye(A.shape[1]), A.T @ b)
        assert np.max(np.abs(ridge_blockwise(s, lam) - as_blocks(w, s))) <= 1e-10

    def test_negative_lambda(self):
        with pytest.raises(ValueError):
            ridge_blockwise(random_system(0), -1.0)

    def test_restricted_columns(self):
        s = random_system(2)
        w = ridge_blockwise(s, 1e-3, active=[0, 2])
        assert not w[[1, 3]].any() and w[[0, 2]].all()


class TestLeastSquares:
    @pytest.mark.parametrize("seed", range(100))
    def test_matches_dense_restricted_solve(self, seed):
        s = random_system(seed, B=3, r=12, d=5)
        rng = np.random.default_rng(seed + 1000)
        active = sorted(rng.choice(5, size=rng.integers(1, 6), replace=False).tolist())
        A, b = dense(s)
        cols = [j * 5 + g for j in range(3) for g in active]
        w = np.zeros(A.shape[1])
        w[cols] = np.linalg.lstsq(A[:, cols], b, rcond=None)[0]
        assert np.max(np.abs(least_squares_refit(s, active) - as_blocks(w, s))) <= 1e-10

    def test_square_invertible_block(self, rng):
        theta = rng.standard_normal((2, 4, 4))
        xi = rng.standard_normal((4, 2))
        s = system(theta, np.einsum("jri,ij->jr", theta, xi))
        fit = least_squares_refit(s, range(4))
        assert np.allclose(np.einsum("jri,ij->jr", s.theta, fit), s.b, atol=1e-12)

    def test_column_equal_to_target(self, rng):
        theta = rng.standard_normal((2, 8, 3))
        b = theta[:, :, 1].copy()
        s = system(theta, b)
        fit = least_squares_refit(s, [1])
        assert np.allclose(fit[1], 1.0, atol=1e-12) and not fit[[0, 2]].any()
        assert np.allclose(np.einsum("jri,ij->jr", s.theta, fit), s.b, atol=1e-12)

    def test_rank_deficiency_warns(self, rng):
        theta = rng.standard_normal((2, 8, 3))
        theta[:, :, 2] = 2 * theta[:, :, 0]
        s = system(theta, rng.standard_normal((2, 8)))
        with pytest.warns(RuntimeWarning, match="rank-deficient"):
            fit = least_squares_refit(s, [0, 2])
        assert np.all(np.isfinite(fit))

    def test_empty_active_set(self):
        assert not least_squares_refit(random_system(0), []).any()


class TestSgtr:
    def test_identity_example(self):
        s = system(np.eye(2)[None], np.array([[1.0, 1e-3]]))
        m = sgtr(s, SgtrParams(threshold=0.1, ridge=0.0))
        assert m.active == (0,)
        assert m.coeffs[0, 0] == pytest.approx(1.0, abs=1e-14)
        assert m.coeffs[1, 0] == 0.0

    def test_threshold_above_every_norm_is_empty(self):
        s = random_system(3)
        top = group_norms(ridge_blockwise(s, 1e-5)).max()
        m = sgtr(s, SgtrParams(threshold=top))
        assert m.k == 0 and not m.coeffs.any()

    def test_zero_threshold_is_least_squares(self):
        s = random_system(4)
        m = sgtr(s, SgtrParams(threshold=0.0))
        assert m.active == (0, 1, 2, 3)
        assert np.allclose(m.coeffs_normalized, least_squares_refit(s, range(4)), atol=1e-14)

    def test_flagged_groups_never_enter(self, rng):
        theta = rng.standard_normal((2, 10, 3))
        theta[:, :, 1] = 0.0
        m = sgtr(system(theta, rng.standard_normal((2, 10))), SgtrParams(threshold=0.0))
        assert 1 not in m.active

    def test_tie_at_threshold_removes(self):
        s = random_system(5, d=2)
        fixed = SgtrParams(threshold=0.5, relevance=lambda x: np.array([0.5, 1.0]))
        assert sgtr(s, fixed).active == (1,)

    @given(st.integers(0, 10_000), st.floats(0.0, 1.0))
    def test_survivors_shrink_and_terminate(self, seed, frac):
        s = random_system(seed, d=6)
        top = group_norms(ridge_blockwise(s, 1e-5)).max()
        m = sgtr(s, SgtrParams(threshold=frac * top))
        hist = m.info["history"]
        assert all(set(b) <= set(a) for a, b in zip(hist, hist[1:]))
        assert m.info["iterations"] <= 6
        assert m.k == np.count_nonzero(np.any(m.coeffs != 0, axis=1))

    def test_params_validation(self):
        with pytest.raises(ValueError):
            SgtrParams(threshold=-1)
        with pytest.raises(ValueError):
            SgtrParams(threshold=1, maxit=0)


class TestGlasso:
    @pytest.mark.parametrize("seed", range(10))
    def test_lambda_max_gives_empty(self, seed):
        s = random_system(seed)
        m = glasso(s, GlassoParams(lambda_max(s)))
        assert m.k == 0 and not m.coeffs.any()

    def test_soft_threshold_on_orthonormal_group(self):
        # four blocks whose single column equals the target: |c_g| = 2
        e = np.zeros((4, 3, 1))
        e[:, 0, 0] = 1.0
        s = system(e, e[:, :, 0] * 3.0)
        lam = 1.0 / s.n_rows
        W, _, converged, _ = group_lasso_bcd(s, GlassoParams(lam))
        assert converged
        assert np.allclose(W, 0.5, atol=1e-15)

    @pytest.mark.parametrize("seed", range(20))
    def test_kkt_conditions(self, seed):
        s = random_system(seed)
        lam = np.random.default_rng(seed).uniform(0.05, 0.9) * lambda_max(s)
        tol = 1e-8
        W, _, converged, _ = group_lasso_bcd(s, GlassoParams(lam, tol=1e-14, maxit=100_000))
        assert converged
        on, off = kkt_gaps(s, W, lam)
        assert np.all(np.abs(on) <= 10 * tol)
        assert np.all(off <= 10 * tol)

    @given(st.integers(0, 10_000), st.floats(0.01, 1.0))
    def test_objective_never_increases(self, seed, frac):
        s = random_system(seed, d=5)
        _, _, _, obj = group_lasso_bcd(s, GlassoParams(frac * lambda_max(s), tol=1e-12))
        assert np.all(np.diff(obj) <= 1e-13 * max(1.0, obj[0]))

    def test_debiased_on_support(self):
        s = random_system(7)
        m = glasso(s, GlassoParams(0.2 * lambda_max(s)))
        assert 0 < m.k
        assert np.allclose(m.coeffs_normalized, least_squares_refit(s, m.active), atol=1e-14)

    def test_non_convergence_warns(self):
        s = random_system(8, d=6)
        with pytest.warns(RuntimeWarning, match="converge"):
            m = glasso(s, GlassoParams(1e-4 * lambda_max(s), tol=1e-16, maxit=2))
        assert m.info["converged"] is False

    def test_negative_lambda(self):
        with pytest.raises(ValueError):
            GlassoParams(-0.1)


@pytest.mark.parametrize("solver", ["sgtr", "glasso"])
def test_two_term_recovery_at_good_hyperparameter(solver, rng):
    theta = rng.standard_normal((6, 60, 6))
    xi = np.zeros((6, 6))
    xi[1] = 2.0 + 0.1 * np.arange(6)
    xi[4] = -0.5
    s = system(theta, np.einsum("jri,ij->jr", theta, xi))
    if solver == "sgtr":
        m = sgtr(s, SgtrParams(threshold=0.1))
    else:
        m = glasso(s, GlassoParams(0.1 * lambda_max(s)))
    assert m.active == (1, 4)
    assert np.allclose(m.coeffs, xi, atol=1e-10)


def test_model_metadata():
    s = random_system(9)
    m = sgtr(s, SgtrParams(threshold=0.0))
    assert m.method == "sgtr" and m.axis == "time"
    assert m.active_names == [t.name for t in s.terms]
    assert np.array_equal(m.series(s.terms[2].name), m.coeffs[2])
    assert "k=4" in repr(m)
