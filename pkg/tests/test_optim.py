"""Optimizer tests: LBFGS, strong Wolfe search, descent fallback, curriculum."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hyperelast.errors import (
    LineSearchFailure,
    NonFiniteObjective,
    NotDescentDirection,
)
from hyperelast.optim import (
    CurriculumSchedule,
    GDConfig,
    LBFGSConfig,
    curriculum_train,
    gd_minimize,
    gd_step,
    lbfgs_minimize,
    strong_wolfe_search,
)


def quadratic(center):
    center = np.asarray(center, dtype=np.float64)

    def fn(phi):
        d = phi - center
        return 0.5 * float(d @ d), d

    return fn


def rosenbrock(phi):
    x, y = phi
    f = (1 - x) ** 2 + 100.0 * (y - x * x) ** 2
    g = np.array([
        -2 * (1 - x) - 400.0 * x * (y - x * x),
        200.0 * (y - x * x),
    ])
    return f, g


def spd_quadratic(n, seed, cond=10.0):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lams = np.linspace(1.0, cond, n)
    A = Q @ np.diag(lams) @ Q.T
    b = rng.standard_normal(n)

    def fn(phi):
        g = A @ phi - b
        return 0.5 * float(phi @ A @ phi) - float(b @ phi), g

    return fn, np.linalg.solve(A, b)


class TestLBFGS:
    def test_unit_quadratic_three_iterations(self):
        rng = np.random.default_rng(0)
        center = rng.standard_normal(12)
        phi, hist = lbfgs_minimize(
            quadratic(center), rng.standard_normal(12),
            LBFGSConfig(max_iters=10, grad_tol=1e-12),
        )
        assert np.abs(phi - center).max() <= 1e-10
        assert len(hist) <= 3

    def test_rosenbrock(self):
        phi, hist = lbfgs_minimize(
            rosenbrock, np.array([-1.2, 1.0]),
            LBFGSConfig(max_iters=200, grad_tol=1e-12),
        )
        assert np.abs(phi - 1.0).max() <= 1e-6

    def test_hundred_dim_quadratic(self):
        fn, sol = spd_quadratic(100, seed=1)
        phi, hist = lbfgs_minimize(
            fn, np.zeros(100), LBFGSConfig(max_iters=50, grad_tol=1e-8)
        )
        assert hist.status == "converged"
        assert len(hist) <= 50
        assert np.linalg.norm(fn(phi)[1]) <= 1e-8

    def test_nan_objective_keeps_iterate(self):
        phi0 = np.array([1.0, 2.0])

        def nan_away(phi):
            if np.array_equal(phi, phi0):
                return 1.0, np.array([1.0, 1.0])
            return np.nan, np.zeros(2)

        phi, hist = lbfgs_minimize(nan_away, phi0, LBFGSConfig(max_iters=5))
        assert hist.status == "line_search_failure"
        assert np.array_equal(phi, phi0)

    def test_nonfinite_at_start(self):
        with pytest.raises(NonFiniteObjective):
            lbfgs_minimize(lambda p: (np.inf, p), np.ones(2), LBFGSConfig())

    def test_monotone_totals_on_fixed_objective(self):
        fn, _ = spd_quadratic(30, seed=2, cond=50.0)
        _, hist = lbfgs_minimize(fn, np.ones(30), LBFGSConfig(max_iters=40, grad_tol=1e-10))
        totals = hist.totals()
        assert np.all(np.diff(totals) <= 1e-12 * np.maximum(1.0, np.abs(totals[:-1])))

    def test_wolfe_conditions_at_every_accepted_step(self):
        fn, _ = spd_quadratic(20, seed=3, cond=80.0)
        config = LBFGSConfig(max_iters=40, grad_tol=1e-10)
        _, hist = lbfgs_minimize(fn, np.ones(20), config)
        assert hist.wolfe, "no steps recorded"
        for f0, dg0, alpha, f_new, dg_new in hist.wolfe:
            assert f_new <= f0 + config.c1 * alpha * dg0 + 1e-14 * max(1.0, abs(f0))
            assert abs(dg_new) <= config.c2 * abs(dg0) + 1e-14

    def test_history_one_memory_still_converges(self):
        fn, sol = spd_quadratic(10, seed=4)
        phi, hist = lbfgs_minimize(
            fn, np.zeros(10), LBFGSConfig(history=1, max_iters=200, grad_tol=1e-9)
        )
        assert np.abs(phi - sol).max() <= 1e-7

    def test_zero_memory_rejected(self):
        with pytest.raises(ValueError):
            LBFGSConfig(history=0)

    def test_bad_wolfe_constants_rejected(self):
        with pytest.raises(ValueError):
            LBFGSConfig(c1=0.5, c2=0.1)

    def test_determinism(self):
        fn, _ = spd_quadratic(25, seed=5)
        phi1, h1 = lbfgs_minimize(fn, np.ones(25), LBFGSConfig(max_iters=30))
        phi2, h2 = lbfgs_minimize(fn, np.ones(25), LBFGSConfig(max_iters=30))
        assert np.array_equal(phi1, phi2)
        assert h1.totals().tolist() == h2.totals().tolist()


class TestStrongWolfe:
    def test_quadratic_unit_step(self):
        center = np.zeros(3)
        fn = quadratic(center)
        phi = np.array([1.0, -2.0, 0.5])
        f0, g0 = fn(phi)
        d = -g0
        alpha, f_a, g_a, _ = strong_wolfe_search(fn, phi, d, f0, g0, alpha0=1.0)
        assert 0.9 <= alpha <= 1.1
        dg0 = g0 @ d
        assert f_a <= f0 + 1e-4 * alpha * dg0
        assert abs(g_a @ d) <= 0.9 * abs(dg0)

    def test_random_convex_quadratic_conditions(self):
        fn, _ = spd_quadratic(15, seed=6, cond=30.0)
        rng = np.random.default_rng(7)
        for trial in range(10):
            phi = rng.standard_normal(15)
            f0, g0 = fn(phi)
            d = -g0
            alpha, f_a, g_a, _ = strong_wolfe_search(fn, phi, d, f0, g0, alpha0=1.0)
            dg0 = g0 @ d
            assert f_a <= f0 + 1e-4 * alpha * dg0 + 1e-14
            assert abs(g_a @ d) <= 0.9 * abs(dg0) + 1e-14

    def test_ascent_direction_rejected(self):
        fn = quadratic(np.zeros(2))
        phi = np.array([1.0, 1.0])
        f0, g0 = fn(phi)
        with pytest.raises(NotDescentDirection):
            strong_wolfe_search(fn, phi, +g0, f0, g0)

    def test_probe_budget(self):
        def bad(phi):
            return np.nan, np.zeros(1)

        with pytest.raises(LineSearchFailure):
            strong_wolfe_search(bad, np.zeros(1), np.array([-1.0]), 1.0,
                                np.array([1.0]), max_probes=6)


class TestGD:
    def test_zero_gradient_fixed_point(self):
        phi = np.array([1.0, 2.0])
        assert np.array_equal(gd_step(phi, np.zeros(2), 0.5), phi)

    def test_arithmetic(self):
        out = gd_step(np.array([1.0, 1.0]), np.array([2.0, 4.0]), 0.5)
        assert_allclose(out, [0.0, -1.0], atol=1e-15)

    def test_contraction_on_quadratic(self):
        phi = np.array([1.0])
        for _ in range(5):
            new = gd_step(phi, phi, 0.1)  # gradient of phi^2/2 is phi
            assert_allclose(np.abs(new), 0.9 * np.abs(phi), rtol=1e-15)
            phi = new

    def test_inverse_lipschitz_rate_decreases(self):
        fn, _ = spd_quadratic(12, seed=8, cond=20.0)
        rate = 1.0 / 20.0
        phi = np.ones(12)
        f_prev = fn(phi)[0]
        phi, hist = gd_minimize(fn, phi, GDConfig(rate=rate, max_iters=50))
        totals = hist.totals()
        assert np.all(np.diff(totals) < 0)

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            gd_step(np.ones(2), np.ones(2), 0.0)


class TestCurriculum:
    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            CurriculumSchedule(fractions=(1.0, 0.5))
        with pytest.raises(ValueError):
            CurriculumSchedule(fractions=(0.5, 0.9))
        with pytest.raises(ValueError):
            CurriculumSchedule(fractions=())
        CurriculumSchedule(fractions=(0.25, 0.5, 0.75, 1.0))

    def test_single_stage_identical_to_plain_minimize(self):
        fn, _ = spd_quadratic(8, seed=9)

        class P:
            def scaled(self, f):
                raise AssertionError("must not rescale for fraction 1.0")

        phi_a, hist_a = curriculum_train(
            P(), CurriculumSchedule(fractions=(1.0,)), lambda p: fn,
            np.ones(8), LBFGSConfig(max_iters=30),
        )
        phi_b, hist_b = lbfgs_minimize(fn, np.ones(8), LBFGSConfig(max_iters=30))
        assert np.array_equal(phi_a, phi_b)
        assert hist_a.totals().tolist() == hist_b.totals().tolist()

    def test_warm_start_beats_cold_start(self):
        # train the affine shear patch test at half load, then compare the
        # full-load starting losses with and without the warm start
        from hyperelast.reference import affine_shear_problem
        from hyperelast.solver import TrainingObjective, build_network, train

        problem = affine_shear_problem(gamma=0.3, grid=(5, 5, 5))
        net = build_network(problem, hidden=(12,), fourier_features=4, seed=10)
        phi0 = net.init_params()
        phi_warm, hist = train(
            problem, net,
            schedule=CurriculumSchedule(fractions=(0.5, 1.0), stage_iters=(60, 1)),
            opt_config=LBFGSConfig(max_iters=60, grad_tol=1e-14),
            phi0=phi0,
        )
        stages = {r.stage for r in hist.rows}
        assert stages == {0, 1}
        objective = TrainingObjective(problem, net)
        f_warm = objective(phi_warm)[0]
        f_cold = objective(phi0)[0]
        assert f_warm <= f_cold

    def test_stage_budgets_applied(self):
        fn, _ = spd_quadratic(6, seed=11)
        _, hist = curriculum_train(
            type("P", (), {"scaled": lambda self, f: self})(),
            CurriculumSchedule(fractions=(0.5, 1.0), stage_iters=(2, 3)),
            lambda p: fn, np.ones(6), LBFGSConfig(max_iters=100),
        )
        assert max(r.iter for r in hist.rows if r.stage == 0) <= 2
