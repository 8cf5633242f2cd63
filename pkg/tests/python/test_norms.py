import math
import unittest

import numpy as np

from bsde_cert.catalog import get_benchmark, perturb_problem, problem_from_section
from bsde_cert.engine import solve_bsde
from bsde_cert.ensemble import DiscreteSolution, gen_brownian
from bsde_cert.errors import ParameterError
from bsde_cert.models import NormEstimate
from bsde_cert.norms import (
    combine,
    est_D1,
    est_data_magnitudes,
    est_distance,
    est_driver_l1,
    est_g_l1,
    est_hat_g,
    est_Hq,
    est_Lrq,
    est_prop24_lhs,
    est_Sq,
    mc_estimate,
    standard_error,
)

N_PATHS = 3
N_STEPS = 4


def _solution(y=1.0, z=1.0, alive=None):
    times = np.linspace(0.0, 1.0, N_STEPS + 1)
    if alive is None:
        alive = np.ones((N_PATHS, N_STEPS + 1), dtype=bool)
    return DiscreteSolution(
        times=times,
        y_grid=np.full((N_PATHS, N_STEPS + 1, 1), y),
        z_grid=np.full((N_PATHS, N_STEPS, 1, 1), z),
        brownian=np.zeros((N_PATHS, N_STEPS + 1, 1)),
        alive=alive,
    )


class TestEstimators(unittest.TestCase):

    def test_standard_error(self):
        self.assertEqual(standard_error(np.array([1.0, 1.0, 1.0])), 0.0)
        self.assertEqual(standard_error(np.array([5.0])), 0.0)
        self.assertAlmostEqual(standard_error(np.array([0.0, 2.0])), 1.0)

    def test_combine_adds_in_quadrature(self):
        a = NormEstimate(value=1.0, stderr=3.0, kind="a", n_paths=10)
        b = NormEstimate(value=2.0, stderr=4.0, kind="b", n_paths=8)
        out = combine(a, b)
        self.assertEqual(out.value, 3.0)
        self.assertAlmostEqual(out.stderr, 5.0)
        self.assertEqual(out.kind, "a+b")
        self.assertEqual(out.n_paths, 8)
        with self.assertRaises(ParameterError):
            combine()

    def test_mc_estimate(self):
        est = mc_estimate(np.array([1.0, 2.0, 3.0]), "x", 0.5)
        self.assertEqual(est.value, 2.0)
        self.assertAlmostEqual(est.stderr, 1.0 / math.sqrt(3.0))
        self.assertEqual(est.weight_a, 0.5)

    def test_D1(self):
        self.assertAlmostEqual(est_D1(_solution(y=2.0)).value, 2.0)
        weighted = est_D1(_solution(y=2.0), a=1.0)
        self.assertAlmostEqual(weighted.value, 2.0 * math.e)
        self.assertAlmostEqual(weighted.stderr, 0.0)

    def test_Sq_and_Hq(self):
        self.assertAlmostEqual(est_Sq(_solution(y=4.0), 0.5).value, 2.0)
        self.assertAlmostEqual(est_Hq(_solution(z=1.0), 0.5).value, 1.0)
        self.assertAlmostEqual(est_Hq(_solution(z=2.0), 0.5).value, math.sqrt(2.0))
        with self.assertRaises(ParameterError):
            est_Sq(_solution(), 1.0)

    def test_prop24_lhs(self):
        self.assertAlmostEqual(est_prop24_lhs(_solution(y=1.0, z=1.0), 2.0, 0.0).value, 2.0)
        with self.assertRaises(ParameterError):
            est_prop24_lhs(_solution(), 1.0, 0.0)

    def test_Lrq(self):
        est = est_Lrq(_solution(y=2.0), 2.0, 2.0)
        self.assertAlmostEqual(est.value, 2.0)
        self.assertAlmostEqual(est.stderr, 0.0)
        self.assertAlmostEqual(est_Lrq(_solution(z=3.0), 1.0, 1.0, component="z").value, 3.0)

    def test_distance_to_itself_is_zero(self):
        sol = _solution(y=1.5, z=0.5)
        self.assertEqual(est_distance(sol, sol, 0.75).value, 0.0)

    def test_driver_l1(self):
        problem = problem_from_section("C", {"driver": {"kind": "constant", "value": 3.0}, "terminal": {"kind": "zero"}})
        self.assertAlmostEqual(est_driver_l1(_solution(), problem).value, 3.0)

    def test_g_l1_respects_alive_mask(self):
        g = get_benchmark("SHIFTED_G").driver.g_process
        self.assertAlmostEqual(est_g_l1(_solution(), g, 0.5).value, 1.375)
        alive = np.ones((N_PATHS, N_STEPS + 1), dtype=bool)
        alive[:, 2:] = False
        self.assertAlmostEqual(est_g_l1(_solution(alive=alive), g, 0.5).value, 0.5625)
        self.assertAlmostEqual(est_g_l1(_solution(), g, 0.5, a=-0.5).value, 0.25 * sum((1 + t) * math.exp(-t) for t in (0.0, 0.25, 0.5, 0.75)))

    def test_hat_g_of_zero_solution(self):
        g = get_benchmark("ZERO").driver.g_process
        self.assertAlmostEqual(est_hat_g(_solution(y=0.0, z=0.0), g, 0.5, 0.75).value, 3.0)
        with self.assertRaises(ParameterError):
            est_hat_g(_solution(), g, 0.8, 0.75)

    def test_hat_g_stops_at_beta(self):
        g = get_benchmark("ZERO").driver.g_process
        alive = np.ones((N_PATHS, N_STEPS + 1), dtype=bool)
        alive[:, 2:] = False
        self.assertAlmostEqual(est_hat_g(_solution(y=0.0, z=0.0, alive=alive), g, 0.5, 0.75).value, 1.5)
        alive[0, 1:] = False
        self.assertAlmostEqual(est_hat_g(_solution(y=0.0, z=0.0, alive=alive), g, 0.5, 0.75).value, (0.75 + 1.5 + 1.5) / 3)


class TestDataMagnitudes(unittest.TestCase):

    def setUp(self):
        self.problem = problem_from_section(
            "C", {"driver": {"kind": "constant", "value": 2.0}, "terminal": {"kind": "constant", "value": 3.0}}
        )
        self.ens = gen_brownian(0, 40, 4, 1.0, 1)

    def test_unweighted(self):
        mags = est_data_magnitudes(self.problem, self.ens, p=2.0)
        self.assertAlmostEqual(mags.e_xi, 3.0)
        self.assertAlmostEqual(mags.f_zero_l1, 2.0)
        self.assertEqual(mags.g_l1, 0.0)
        self.assertAlmostEqual(mags.xi_p_moment, 9.0)
        self.assertAlmostEqual(mags.f_zero_p_moment, 4.0)
        self.assertIsNone(mags.delta_xi)

    def test_weighted(self):
        mags = est_data_magnitudes(self.problem, self.ens, a=0.5)
        self.assertAlmostEqual(mags.e_xi, 3.0 * math.exp(0.5))
        expected = 2.0 * 0.25 * sum(math.exp(0.5 * t) for t in (0.0, 0.25, 0.5, 0.75))
        self.assertAlmostEqual(mags.f_zero_l1, expected)

    def test_deltas_along_reference(self):
        sol_bar = solve_bsde(self.problem, self.ens)
        perturbed = perturb_problem(self.problem, 0.25, xi_shift="constant", driver_shift="constant")
        mags = est_data_magnitudes(self.problem, self.ens, perturbed=perturbed, sol_bar=sol_bar, q=0.75)
        self.assertAlmostEqual(mags.delta_xi, 0.25)
        self.assertAlmostEqual(mags.delta_f, 0.25)
        self.assertAlmostEqual(mags.delta_sum, 0.5)
        self.assertGreater(mags.hat_g_l1, 3.0)

    def test_guards(self):
        perturbed = perturb_problem(self.problem, 0.25, xi_shift="constant")
        with self.assertRaises(ParameterError):
            est_data_magnitudes(self.problem, self.ens, perturbed=perturbed)
        with self.assertRaises(ParameterError):
            est_data_magnitudes(get_benchmark("HITTING"), self.ens)


if __name__ == '__main__':
    unittest.main(verbosity=2)
