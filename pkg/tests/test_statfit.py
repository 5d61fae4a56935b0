import numpy as np
import pytest
from scipy.optimize import linprog

from progsearch.statfit import (
    check_loss,
    empirical_quantile,
    kde_conditional,
    kde_fit,
    logistic_fit,
    logistic_gradient,
    ols_fit,
    ols_predict_interval,
    quantile_fit,
)


def normal_equations(xs, ys):
    design = np.column_stack([np.ones(len(ys)), np.atleast_2d(xs.T).T])
    return np.linalg.solve(design.T @ design, design.T @ ys)


def lp_quantile_regression(xs, ys, tau):
    """Exact check-loss minimum via the standard LP split of residuals."""
    n = len(ys)
    design = np.column_stack([np.ones(n), np.atleast_2d(xs.T).T]) if xs is not None \
        else np.ones((n, 1))
    p = design.shape[1]
    # variables: beta+ (p), beta- (p), u (n), v (n); minimize tau*u + (1-tau)*v
    c = np.concatenate([np.zeros(2 * p), tau * np.ones(n), (1 - tau) * np.ones(n)])
    a_eq = np.hstack([design, -design, np.eye(n), -np.eye(n)])
    res = linprog(c, A_eq=a_eq, b_eq=ys, method="highs")
    assert res.success
    return res.fun


class TestOls:
    def test_exact_line(self):
        x = np.array([0.0, 1, 2, 3, 4])
        model = ols_fit(x, 2 * x + 1)
        assert model.coefficients[0] == pytest.approx(2.0)
        assert model.intercept == pytest.approx(1.0)
        assert model.residual_sigma == pytest.approx(0.0, abs=1e-9)

    def test_constant_predictor_rejected(self):
        with pytest.raises(ValueError, match="predictor 0"):
            ols_fit(np.ones(10), np.arange(10.0))

    def test_matches_normal_equations(self, rng):
        x = rng.normal(size=(200, 2))
        y = x @ [1.5, -2.0] + 0.7 + rng.normal(size=200)
        model = ols_fit(x, y)
        beta = normal_equations(x, y)
        assert model.intercept == pytest.approx(beta[0], abs=1e-8)
        np.testing.assert_allclose(model.coefficients, beta[1:], atol=1e-8)

    def test_residual_orthogonality(self, rng):
        x = rng.normal(size=150)
        y = 3 * x + rng.normal(size=150)
        model = ols_fit(x, y)
        residuals = y - model.predict(x[:, None])
        assert abs(residuals @ x) < 1e-8
        assert abs(residuals.sum()) < 1e-8

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            ols_fit(np.array([1.0, 2.0]), np.array([1.0, 2.0]))


class TestOlsInterval:
    def test_zero_sigma_zero_width(self):
        from progsearch.statfit import LinearModel

        x = np.array([0.0, 1, 2, 3])
        fitted = ols_fit(x, 5 * x)
        exact = LinearModel(coefficients=fitted.coefficients, intercept=fitted.intercept,
                            residual_sigma=0.0, training_count=fitted.training_count,
                            xtx_inv=fitted.xtx_inv)
        point, (lo, hi) = ols_predict_interval(exact, 2.0, 0.05)
        assert point == lo == hi
        assert point == pytest.approx(10.0)
        # the fitted line's sigma is numerically tiny, so its width is too
        _, (flo, fhi) = ols_predict_interval(fitted, 2.0, 0.05)
        assert fhi - flo < 1e-9

    def test_lower_only_below_point(self, rng):
        x = rng.normal(size=50)
        model = ols_fit(x, x + rng.normal(size=50))
        for x0 in rng.normal(size=10):
            point, (lo, hi) = ols_predict_interval(model, x0, 0.05, "lower_only")
            assert lo <= point
            assert hi == np.inf

    def test_two_sided_coverage_simulation(self, rng):
        """95% predictive coverage on fresh draws from the generating model."""
        beta, c, sigma = 1.8, -0.5, 0.7
        x = rng.normal(size=400)
        model = ols_fit(x, beta * x + c + rng.normal(size=400) * sigma)
        hits = 0
        trials = 10_000
        x_new = rng.normal(size=trials)
        y_new = beta * x_new + c + rng.normal(size=trials) * sigma
        for xi, yi in zip(x_new, y_new):
            _, (lo, hi) = ols_predict_interval(model, xi, 0.05)
            hits += int(lo <= yi <= hi)
        assert 0.93 <= hits / trials <= 0.97

    def test_theta_validation(self):
        model = ols_fit(np.arange(5.0), np.arange(5.0))
        with pytest.raises(ValueError):
            ols_predict_interval(model, 1.0, 0.0)
        with pytest.raises(ValueError):
            ols_predict_interval(model, 1.0, 1.0)


class TestLogistic:
    def test_symmetric_data_zero_intercept(self):
        x = np.array([-1.0, -1, 1, 1])
        y = np.array([0.0, 0, 1, 1])
        model = logistic_fit(x, y)
        assert abs(model.intercept) < 1e-6

    def test_separable_data_stays_finite_and_monotone(self):
        x = np.linspace(-2, 2, 40)
        y = (x > 0).astype(float)
        model = logistic_fit(x, y)
        assert np.isfinite(model.coefficients).all()
        probs = model.predict_proba(x[:, None])
        assert np.all(np.diff(probs) >= 0)
        assert np.all((probs > 0) & (probs < 1))

    def test_recovers_known_coefficients(self, rng):
        beta, c = 2.0, -1.0
        x = rng.normal(size=500)
        p = 1 / (1 + np.exp(-(beta * x + c)))
        y = (rng.random(500) < p).astype(float)
        model = logistic_fit(x, y)
        assert model.coefficients[0] == pytest.approx(beta, rel=0.10)
        assert model.intercept == pytest.approx(c, rel=0.10)

    def test_gradient_at_optimum_vs_finite_differences(self, rng):
        x = rng.normal(size=(120, 2))
        z = x @ [1.0, -2.0] + 0.3
        y = (rng.random(120) < 1 / (1 + np.exp(-z))).astype(float)
        model = logistic_fit(x, y)
        design = np.column_stack([np.ones(120), x])
        w = np.concatenate([[model.intercept], model.coefficients])
        grad = logistic_gradient(design, y, w, model.ridge_penalty)
        assert np.max(np.abs(grad)) < 1e-6
        # finite-difference check of the same penalized objective
        from progsearch.statfit import logistic_log_likelihood

        eps = 1e-6
        for j in range(3):
            bump = np.zeros(3)
            bump[j] = eps
            fd = (logistic_log_likelihood(design, y, w + bump, model.ridge_penalty)
                  - logistic_log_likelihood(design, y, w - bump, model.ridge_penalty)
                  ) / (2 * eps)
            assert fd == pytest.approx(grad[j], abs=1e-4)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            logistic_fit(np.arange(5.0), np.ones(5))


class TestQuantile:
    def test_intercept_only_median(self):
        model = quantile_fit(None, np.arange(1.0, 6.0), 0.5)
        assert model.intercept == pytest.approx(3.0)

    def test_intercept_only_95th(self):
        model = quantile_fit(None, np.arange(1.0, 101.0), 0.95)
        assert 95.0 - 1e-9 <= model.intercept <= 96.0 + 1e-9

    def test_objective_matches_lp_oracle(self, rng):
        for n in (40, 120, 200):
            x = rng.normal(size=n)
            y = 2 * x + rng.standard_cauchy(n) * 0.3
            for tau in (0.25, 0.5, 0.9):
                model = quantile_fit(x, y, tau)
                mine = check_loss(y - model.predict(x[:, None]), tau)
                oracle = lp_quantile_regression(x, y, tau)
                assert mine <= oracle + 1e-6

    def test_residual_sign_fraction_near_tau(self, rng):
        x = rng.normal(size=300)
        y = x + rng.normal(size=300)
        for tau in (0.3, 0.8):
            model = quantile_fit(x, y, tau)
            frac = np.mean(y - model.predict(x[:, None]) <= 1e-12)
            assert abs(frac - tau) <= 2 / np.sqrt(300)

    def test_monotone_in_tau(self, rng):
        x = rng.normal(size=100)
        y = x + rng.normal(size=100)
        intercepts = [quantile_fit(None, y - x, tau).intercept
                      for tau in (0.1, 0.5, 0.9)]
        assert intercepts == sorted(intercepts)

    def test_validation(self):
        with pytest.raises(ValueError):
            quantile_fit(None, np.array([1.0, 2.0]), 0.5)
        with pytest.raises(ValueError):
            quantile_fit(None, np.arange(5.0), 1.5)


class TestKde:
    def test_single_cluster_argmax(self, rng):
        points = np.array([[2.0, -1.0]]) + rng.normal(size=(100, 2)) * 0.01
        grid = kde_fit(points, grid_shape=(50, 50))
        i, j = np.unravel_index(np.argmax(grid.density), grid.density.shape)
        assert abs(grid.axes[0][i] - 2.0) < 0.05
        assert abs(grid.axes[1][j] + 1.0) < 0.05

    def test_riemann_sum_near_one(self, rng):
        for d, shape in ((2, (200, 200)), (3, (60, 90, 90))):
            points = rng.normal(size=(150, d))
            grid = kde_fit(points, grid_shape=shape)
            assert 0.98 <= grid.riemann_sum() <= 1.02

    def test_two_cluster_mirror_symmetry(self):
        offsets = np.linspace(-0.3, 0.3, 20)
        cluster = np.column_stack([offsets, offsets])
        points = np.vstack([cluster + 2, -(cluster + 2)])
        grid = kde_fit(points, grid_shape=(101, 101))
        np.testing.assert_allclose(grid.density, grid.density[::-1, ::-1], atol=1e-9)

    def test_density_non_negative(self, rng):
        grid = kde_fit(rng.normal(size=(60, 2)), grid_shape=(64, 64))
        assert np.all(grid.density >= 0)

    def test_zero_variance_axis_floor_warns(self, rng):
        points = np.column_stack([rng.normal(size=30), np.full(30, 2.0)])
        with pytest.warns(UserWarning):
            grid = kde_fit(points, grid_shape=(32, 32))
        assert np.all(np.isfinite(grid.density))

    def test_shrinking_bandwidth_concentrates_mass(self, rng):
        points = rng.normal(size=(80, 2))
        wide = kde_fit(points, grid_shape=(128, 128), bandwidth=np.array([1.0, 1.0]))
        narrow = kde_fit(points, grid_shape=(128, 128), bandwidth=np.array([0.2, 0.2]))

        def mass_near_points(grid, h):
            total = 0.0
            for x, y in points:
                ix = np.abs(grid.axes[0] - x) <= h
                iy = np.abs(grid.axes[1] - y) <= h
                total += grid.density[np.ix_(ix, iy)].sum() * grid.cell_volume()
            return total

        assert mass_near_points(narrow, 0.2) > mass_near_points(wide, 0.2)


class TestKdeConditional:
    def test_mode_near_conditioned_training_point(self, rng):
        x = rng.normal(size=200)
        y = x + rng.normal(size=200) * 0.1
        grid = kde_fit(np.column_stack([x, y]), grid_shape=(100, 100))
        cond = kde_conditional(grid, 1.0)
        assert abs(cond.xs[np.argmax(cond.pdf)] - 1.0) < 0.3

    def test_quantile_edges_are_support_bounds(self, rng):
        grid = kde_fit(rng.normal(size=(50, 2)), grid_shape=(64, 64))
        cond = kde_conditional(grid, 0.0)
        support = cond.xs[cond.pdf > 0]
        assert cond.quantile(0) == support.min()
        assert cond.quantile(1) == support.max()

    def test_conditional_mean_vs_nadaraya_watson(self, rng):
        x = rng.normal(size=200)
        y = 2 * x + rng.normal(size=200) * 0.3
        points = np.column_stack([y, x])  # axis 0 is the estimation target
        grid = kde_fit(points, grid_shape=(200, 200))
        cell = grid.axes[0][1] - grid.axes[0][0]
        for x0 in (-1.0, 0.0, 1.0):
            cond = kde_conditional(grid, x0)
            h = grid.bandwidth[1]
            w = np.exp(-0.5 * ((x - x0) / h) ** 2)
            nw = (w @ y) / w.sum()
            assert abs(cond.mean() - nw) < 3 * cell + 0.05

    def test_clamping_flagged(self, rng):
        grid = kde_fit(rng.normal(size=(50, 2)), grid_shape=(64, 64))
        assert kde_conditional(grid, 100.0).clamped
        assert not kde_conditional(grid, 0.0).clamped

    def test_normalized(self, rng):
        grid = kde_fit(rng.normal(size=(50, 2)), grid_shape=(64, 64))
        cond = kde_conditional(grid, 0.5)
        assert cond.pdf.sum() == pytest.approx(1.0)

    def test_wrong_arity(self, rng):
        grid = kde_fit(rng.normal(size=(50, 2)), grid_shape=(64, 64))
        with pytest.raises(ValueError):
            kde_conditional(grid, (0.0, 1.0))

    def test_no_support_error(self):
        from progsearch.statfit import KdeGrid

        grid = kde_fit(np.array([[0.0, 0.0], [0.1, 0.1]]), grid_shape=(16, 16))
        zeroed = grid.density.copy()
        zeroed[:, 3] = 0.0
        broken = KdeGrid(axes=grid.axes, density=zeroed,
                         bandwidth=grid.bandwidth, points=grid.points)
        with pytest.raises(ValueError):
            kde_conditional(broken, grid.axes[1][3])


class TestEmpiricalQuantile:
    def test_median(self):
        assert empirical_quantile([1, 2, 3, 4, 5], 0.5) == 3.0

    def test_extremes(self):
        assert empirical_quantile([3, 1, 2], 0.0) == 1.0
        assert empirical_quantile([3, 1, 2], 1.0) == 3.0

    def test_matches_sort_and_index_oracle(self, rng):
        for _ in range(20):
            x = rng.normal(size=int(rng.integers(2, 40)))
            q = float(rng.random())
            s = np.sort(x)
            pos = q * (len(s) - 1)
            lo, hi = int(np.floor(pos)), int(np.ceil(pos))
            expected = s[lo] + (pos - lo) * (s[hi] - s[lo])
            assert empirical_quantile(x, q) == pytest.approx(expected, rel=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            empirical_quantile([], 0.5)
