import numpy as np
import pytest

from netident.errors import ParameterError
from netident.lasso import coordinate_descent, kkt_violation, lasso_standardized


def random_problem(T=200, K=8, sparsity=3, noise=0.0, seed=0, corr=0.3):
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((T, K))
    X = base + corr * rng.standard_normal((T, 1))
    w = np.zeros(K)
    idx = rng.choice(K, size=sparsity, replace=False)
    w[idx] = rng.uniform(0.5, 2.0, size=sparsity) * rng.choice([-1, 1], size=sparsity)
    y = X @ w + noise * rng.standard_normal(T)
    return X, y, w


class TestCoordinateDescent:
    def test_zero_penalty_matches_least_squares(self):
        # oracle: the normal equations solved directly
        X, y, _ = random_problem(noise=0.05, seed=1)
        w, _ = coordinate_descent(X, y, lam=0.0)
        w_ols = np.linalg.solve(X.T @ X, X.T @ y)
        assert np.max(np.abs(w - w_ols)) / max(np.max(np.abs(w_ols)), 1) < 1e-6

    def test_huge_penalty_all_zero(self):
        X, y, _ = random_problem(seed=2)
        lam = float(np.abs(X.T @ y).max()) * 1.01
        w, _ = coordinate_descent(X, y, lam=lam)
        assert np.all(w == 0.0)

    def test_kkt_conditions_hold(self):
        for seed in range(5):
            X, y, _ = random_problem(noise=0.1, seed=seed)
            T = X.shape[0]
            mean, = (X.mean(axis=0),)
            Xc = X - mean
            scale = np.sqrt((Xc**2).sum(axis=0) / T)
            Xs = Xc / scale
            ys = y - y.mean()
            lam = 0.05 * float(np.abs(Xs.T @ ys).max())
            w, _ = coordinate_descent(Xs, ys, lam)
            assert kkt_violation(Xs, ys, w, lam) <= 1e-6

    def test_zero_norm_columns_skipped(self):
        X, y, _ = random_problem(seed=3)
        X[:, 2] = 0.0
        w, _ = coordinate_descent(X, y, lam=0.1)
        assert w[2] == 0.0

    def test_negative_penalty_rejected(self):
        X, y, _ = random_problem()
        with pytest.raises(ParameterError):
            coordinate_descent(X, y, lam=-1.0)

    def test_monotone_sparsity_in_lambda(self):
        X, y, _ = random_problem(T=300, K=10, noise=0.05, seed=4)
        T = X.shape[0]
        Xc = X - X.mean(axis=0)
        Xs = Xc / np.sqrt((Xc**2).sum(axis=0) / T)
        ys = y - y.mean()
        lam_max = float(np.abs(Xs.T @ ys).max())
        sizes = []
        for frac in (1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.1):
            w, _ = coordinate_descent(Xs, ys, frac * lam_max)
            sizes.append(int(np.sum(w != 0)))
        assert sizes == sorted(sizes, reverse=True)


class TestStandardizedLasso:
    def test_recovers_sparse_truth(self):
        X, y, w_true = random_problem(T=400, K=10, sparsity=3, noise=0.001, seed=5)
        lam = 0.01 * float(np.abs(X.T @ y).max())
        fit = lasso_standardized(X, y, lam)
        support_true = set(np.nonzero(w_true)[0])
        support_got = set(np.nonzero(fit.coef)[0])
        assert support_true <= support_got

    def test_intercept_absorbs_offset(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((300, 4))
        y = 2.5 + X @ np.array([1.0, 0.0, -0.5, 0.0])
        fit = lasso_standardized(X, y, lam=1e-8)
        assert fit.intercept == pytest.approx(2.5, abs=1e-4)

    def test_no_intercept_mode(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((200, 3))
        y = X @ np.array([1.0, -2.0, 0.0])
        fit = lasso_standardized(X, y, lam=1e-10, fit_intercept=False)
        assert fit.intercept == 0.0
        assert np.allclose(fit.coef, [1.0, -2.0, 0.0], atol=1e-6)

    def test_constant_column_dropped(self):
        rng = np.random.default_rng(8)
        X = np.concatenate([np.ones((100, 1)), rng.standard_normal((100, 2))], axis=1)
        y = 3.0 + X[:, 1]
        fit = lasso_standardized(X, y, lam=1e-9)
        assert fit.coef[0] == 0.0  # zero-variance column dropped from descent
        assert fit.intercept == pytest.approx(3.0, abs=1e-6)
