import math
import unittest

import numpy as np
from pydantic import ValidationError

from bsde_cert.catalog import get_benchmark, make_driver, make_terminal, problem_from_section
from bsde_cert.core_model import (
    BSDEProblem,
    DriverSpec,
    FixedSampler,
    StoppingTimeSpec,
    TerminalCondition,
    UniformSampler,
    check_assumptions,
    inverse_transform_solution,
    reduce_stopping_time,
    sgn,
    transform_problem,
    transform_solution,
)
from bsde_cert.engine import solve_bsde, solve_on_stopping_horizon
from bsde_cert.ensemble import MarkovState, gen_brownian
from bsde_cert.errors import EXIT_SOLVER, NonFiniteDriverError, ParameterError


def _constant_terminal_problem(driver_kind="linear", value=1.0, **extra):
    return BSDEProblem(
        horizon_T=1.0,
        k_dim=1,
        d_dim=1,
        driver=make_driver(driver_kind, 1),
        terminal=make_terminal("constant", 1, value),
        name="const-terminal",
        **extra,
    )


class TestStoppingTime(unittest.TestCase):

    def setUp(self):
        self.times = np.linspace(0.0, 1.0, 11)
        self.paths = np.zeros((3, 11, 1))

    def test_deterministic_indices_and_mask(self):
        spec = StoppingTimeSpec.deterministic(0.5)
        np.testing.assert_array_equal(spec.indices(self.paths, self.times), [5, 5, 5])
        mask = spec.alive_mask(self.paths, self.times)
        self.assertEqual(mask.shape, (3, 11))
        self.assertTrue(mask[:, :5].all())
        self.assertFalse(mask[:, 5:].any())
        self.assertEqual(spec.label(), "deterministic(0.5)")

    def test_deterministic_beyond_horizon(self):
        with self.assertRaises(ParameterError):
            StoppingTimeSpec.deterministic(1.5).indices(self.paths, self.times)

    def test_first_exit(self):
        paths = self.paths.copy()
        paths[0, :, 0] = np.linspace(0.0, 2.0, 11)
        paths[1, 3, 0] = -1.0
        spec = StoppingTimeSpec.first_exit(1.0)
        np.testing.assert_array_equal(spec.indices(paths, self.times), [5, 3, 10])
        np.testing.assert_allclose(spec.evaluate(paths, self.times), [0.5, 0.3, 1.0])

    def test_kind_needs_its_field(self):
        with self.assertRaises(ValidationError):
            StoppingTimeSpec(kind="first_exit")
        with self.assertRaises(ValidationError):
            StoppingTimeSpec(kind="deterministic")


class TestDriverSpec(unittest.TestCase):

    def test_rejects_bad_constants(self):
        with self.assertRaises(ParameterError):
            DriverSpec(lambda t, y, z, s: y, kappa=1.0)
        with self.assertRaises(ParameterError):
            DriverSpec(lambda t, y, z, s: y, lam=-1.0)
        with self.assertRaises(ParameterError):
            DriverSpec(lambda t, y, z, s: y, gamma=-0.1)

    def test_at_origin(self):
        driver = make_driver("constant", 2, 3.0)
        state = MarkovState.unstopped(np.zeros((4, 1)))
        np.testing.assert_array_equal(driver.at_origin(0.0, state, 2, 1), np.full((4, 2), 3.0))

    def test_sgn_of_zero_is_zero(self):
        out = sgn(np.array([[0.0, 0.0], [3.0, 4.0]]))
        np.testing.assert_allclose(out, [[0.0, 0.0], [0.6, 0.8]])

    def test_terminal_reads_at_stopping_time(self):
        paths = np.arange(6, dtype=float).reshape(1, 6, 1)
        times = np.linspace(0.0, 1.0, 6)
        terminal = TerminalCondition(lambda b: b, read_at=StoppingTimeSpec.deterministic(0.4))
        np.testing.assert_array_equal(terminal.evaluate(paths, times), [[2.0]])
        np.testing.assert_array_equal(terminal.evaluate(paths, times, at=np.array([5])), [[5.0]])


class TestCheckAssumptions(unittest.TestCase):

    def test_catalog_drivers_satisfy_declared_constants(self):
        kinds = (("zero", 1, 1), ("linear", 1, 1), ("cubic", 1, 1), ("sublinear_z", 1, 1), ("shifted_g", 1, 1), ("multi_d", 2, 2))
        for kind, k, d in kinds:
            with self.subTest(kind=kind):
                report = check_assumptions(make_driver(kind, k), UniformSampler(k, d, seed=3), 2000)
                self.assertEqual(report.h1_violation, 0.0)
                self.assertEqual(report.h2_violation, 0.0)
                self.assertEqual(report.z_violation, 0.0)
                self.assertEqual(report.samples_checked, 2000)

    def test_sublinear_driver_constants(self):
        driver = make_driver("sublinear_z", 1)
        self.assertEqual((driver.lam, driver.gamma, driver.kappa), (0.25, 0.5, 0.5))
        report = check_assumptions(driver, UniformSampler(1, 1, seed=5), 2000)
        self.assertEqual(report.h1_violation, 0.0)
        self.assertEqual(report.z_violation, 0.0)

    def test_square_root_in_z_is_not_lipschitz(self):
        driver = DriverSpec(lambda t, y, z, s: 0.5 * np.sqrt(np.abs(z[:, 0, :])), lam=1.0, gamma=0.5, kappa=0.5)
        report = check_assumptions(driver, FixedSampler([(0.0, 0.0, 0.0, 1e-4, 0.0)]), 1)
        self.assertAlmostEqual(report.h1_violation, 0.005 - 1e-4, places=9)
        self.assertEqual(report.z_violation, 0.0)

    def test_detects_monotonicity_violation(self):
        driver = DriverSpec(lambda t, y, z, s: 2.0 * y, kappa=0.5, z_dependent=False, name="2y")
        sampler = FixedSampler([(0.0, 1.0, 0.0, 0.0, 0.0)])
        report = check_assumptions(driver, sampler, 4)
        self.assertAlmostEqual(report.h2_violation, 2.0, places=9)
        self.assertEqual(report.h1_violation, 0.0)

    def test_detects_lipschitz_violation(self):
        driver = DriverSpec(lambda t, y, z, s: 3.0 * z[:, 0, :], lam=1.0, name="3z")
        sampler = FixedSampler([(0.0, 0.0, 0.0, 1.0, 0.0)])
        report = check_assumptions(driver, sampler, 1)
        self.assertAlmostEqual(report.h1_violation, 2.0, places=9)

    def test_non_finite_driver(self):
        def bad(t, y, z, s):
            out = np.zeros_like(y)
            out[0] = np.nan
            return out

        driver = DriverSpec(bad, name="nan")
        with self.assertRaises(NonFiniteDriverError) as ctx:
            check_assumptions(driver, FixedSampler([(0.5, 1.0, 2.0, 0.0, 0.0)]), 3)
        self.assertEqual(ctx.exception.exit_code, EXIT_SOLVER)
        self.assertEqual(ctx.exception.sample["t"], 0.5)
        self.assertIn("y_prime", ctx.exception.sample)


class TestTransforms(unittest.TestCase):

    def test_zero_weight_is_identity(self):
        problem = get_benchmark("LINEAR_Y")
        self.assertIs(transform_problem(problem, 0.0), problem)

    def test_constants_follow_the_weight(self):
        problem = get_benchmark("LINEAR_Y")
        out = transform_problem(problem, 0.5)
        self.assertAlmostEqual(out.driver.mu, -1.5)
        self.assertAlmostEqual(out.driver.y_lipschitz, 1.5)
        self.assertEqual(out.driver.gamma, 0.0)

        shifted = transform_problem(get_benchmark("SHIFTED_G"), -0.5)
        self.assertAlmostEqual(shifted.driver.mu, -0.5)
        self.assertAlmostEqual(shifted.driver.gamma, 0.5)
        state = MarkovState.unstopped(np.zeros((2, 1)))
        np.testing.assert_allclose(shifted.driver.g_process(1.0, state), 2.0 * math.exp(-1.0))

        grown = transform_problem(get_benchmark("SHIFTED_G"), 1.0)
        self.assertAlmostEqual(grown.driver.gamma, 0.5 * math.e)

    def test_negative_weight_needs_kappa(self):
        problem = _constant_terminal_problem()
        flat = BSDEProblem(
            horizon_T=1.0,
            k_dim=1,
            d_dim=1,
            driver=DriverSpec(lambda t, y, z, s: -y, mu=-1.0, kappa=0.0, z_dependent=False),
            terminal=problem.terminal,
        )
        with self.assertRaises(ParameterError):
            transform_problem(flat, -0.5)

    def test_stopping_time_must_be_reduced_first(self):
        with self.assertRaises(ParameterError):
            transform_problem(get_benchmark("HITTING"), 1.0)

    def test_transformed_solve_matches_weighted_solution(self):
        problem = _constant_terminal_problem()
        ens = gen_brownian(11, 200, 100, 1.0, 1)
        a = 0.5
        direct = transform_solution(solve_bsde(problem, ens), a)
        weighted = solve_bsde(transform_problem(problem, a), ens)
        self.assertAlmostEqual(float(direct.y0()[0]), float(weighted.y0()[0]), delta=0.01)
        back = inverse_transform_solution(direct, a)
        self.assertAlmostEqual(float(back.y0()[0]), 1.01 ** -100, places=8)

    def test_weighted_solve_converges_with_the_grid(self):
        problem = get_benchmark("LINEAR_Y")
        for a in (-1.0, 1.0):
            errors = []
            for steps in (100, 200):
                ens = gen_brownian(17, 500, steps, 1.0, 1)
                direct = transform_solution(solve_bsde(problem, ens), a)
                weighted = solve_bsde(transform_problem(problem, a), ens)
                errors.append(float(np.max(np.abs(direct.y_grid - weighted.y_grid))))
            with self.subTest(a=a):
                self.assertLess(errors[1], 5e-2)
                self.assertLess(errors[1], errors[0])


class TestReduceStoppingTime(unittest.TestCase):

    def test_requires_stopping_time(self):
        with self.assertRaises(ParameterError):
            reduce_stopping_time(get_benchmark("ZERO"))

    def test_horizon_stopping_time_drops_out(self):
        problem = _constant_terminal_problem(stopping_time=StoppingTimeSpec.deterministic(1.0))
        reduced = reduce_stopping_time(problem)
        self.assertIsNone(reduced.stopping_time)
        self.assertIsNone(reduced.cutoff)

    def test_reduced_and_native_solves_agree(self):
        problem = _constant_terminal_problem(stopping_time=StoppingTimeSpec.deterministic(0.5))
        reduced = reduce_stopping_time(problem)
        self.assertIsNone(reduced.stopping_time)
        self.assertEqual(reduced.cutoff, StoppingTimeSpec.deterministic(0.5))
        ens = gen_brownian(3, 200, 100, 1.0, 1)
        via_reduction = solve_bsde(reduced, ens)
        native = solve_on_stopping_horizon(problem, ens)
        expected = 1.01 ** -50
        self.assertAlmostEqual(float(via_reduction.y0()[0]), expected, places=8)
        self.assertAlmostEqual(float(native.y0()[0]), expected, places=8)
        # Y is frozen after the stopping time
        np.testing.assert_allclose(via_reduction.y_grid[:, 50:, 0], 1.0, atol=1e-10)

    def test_first_exit_reduction_matches_native_solve(self):
        problem = get_benchmark("HITTING")
        ens = gen_brownian(21, 2000, 50, 1.0, 1)
        via_reduction = solve_bsde(reduce_stopping_time(problem), ens)
        native = solve_on_stopping_horizon(problem, ens)
        np.testing.assert_array_equal(via_reduction.alive, native.alive)
        self.assertTrue((~native.alive[:, -2]).any())
        alive = native.alive
        gap = np.abs(via_reduction.y_grid[:, :, 0] - native.y_grid[:, :, 0])
        # Monte Carlo tolerances: 0.03 at t = 0, 0.05 averaged over the cells before exit
        self.assertLess(float(gap[:, 0].max()), 0.03)
        self.assertLess(float(gap[alive].mean()), 0.05)
        # separate regressions, so the two schemes do not coincide to round-off
        self.assertGreater(float(gap[alive].max()), 1e-8)
        np.testing.assert_allclose(via_reduction.y_grid[:, -1, :], native.y_grid[:, -1, :])

    def test_section_with_first_exit(self):
        problem = problem_from_section(
            "HIT",
            {"driver": {"kind": "cubic"}, "terminal": {"kind": "brownian"}, "stopping": {"kind": "first_exit", "radius": 1.0}},
        )
        reduced = reduce_stopping_time(problem)
        self.assertEqual(reduced.terminal.read_at.kind, "first_exit")
        self.assertTrue(reduced.has_deterministic_horizon)


if __name__ == '__main__':
    unittest.main(verbosity=2)
