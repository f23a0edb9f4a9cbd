import math
import unittest
from itertools import combinations

import numpy as np

from noisy_cbo import diagnostics
from noisy_cbo.engine import ShapeError, consensus_point, sample_diffusion, step, transition_matrix
from noisy_cbo.ensemble import Ensemble
from noisy_cbo.models import CboParams, ConfigurationError, InitSpec
from noisy_cbo.objectives import Rastrigin, RotatedRastrigin, rastrigin_values
from noisy_cbo.randomness import SeedSpec


class DiameterTests(unittest.TestCase):
    def test_examples(self) -> None:
        self.assertEqual(2.0, diagnostics.diameter([1.0, 3.0, 2.0]))
        self.assertEqual(0.0, diagnostics.diameter(np.full(7, 4.2)))

    def test_matches_brute_force_over_pairs(self) -> None:
        y = np.random.default_rng(0).normal(size=50)
        brute = max(abs(a - b) for a, b in combinations(y, 2))
        self.assertEqual(brute, diagnostics.diameter(y))

    def test_empty_vector(self) -> None:
        with self.assertRaises(ShapeError):
            diagnostics.diameter([])


class ErgodicityTests(unittest.TestCase):
    def test_identity_has_disjoint_rows(self) -> None:
        self.assertEqual(0.0, diagnostics.ergodicity(np.eye(2)))

    def test_equal_rows(self) -> None:
        rows = np.tile([0.1, 0.6, 0.3], (3, 1))
        self.assertAlmostEqual(1.0, diagnostics.ergodicity(rows), places=15)

    def test_two_by_two_example(self) -> None:
        matrix = np.array([[0.5, 0.5], [0.25, 0.75]])
        self.assertEqual(0.75, diagnostics.ergodicity(matrix))

    def test_rejects_non_square(self) -> None:
        with self.assertRaises(ShapeError):
            diagnostics.ergodicity(np.ones((2, 3)))


class MeanSquaredDistanceTests(unittest.TestCase):
    def test_examples(self) -> None:
        self.assertEqual(0.0, diagnostics.mean_squared_distance(Ensemble(np.ones((3, 2))), [1, 1]))
        self.assertEqual(4.0, diagnostics.mean_squared_distance(Ensemble(np.array([[3.0]])), [1]))

    def test_matches_double_loop(self) -> None:
        rng = np.random.default_rng(1)
        ensemble = Ensemble(rng.normal(size=(15, 4)))
        x_star = rng.normal(size=4)
        naive = 0.0
        for row in ensemble.positions:
            for s in range(4):
                naive += (row[s] - x_star[s]) ** 2
        naive /= 15

        measured = diagnostics.mean_squared_distance(ensemble, x_star)
        self.assertAlmostEqual(naive, measured, delta=1e-14)


class StepBoundMonitorTests(unittest.TestCase):
    def _monitor(
        self, params: CboParams, seed: int, noise: float
    ) -> diagnostics.StepBoundReport:
        rng = np.random.default_rng(seed)
        ensemble = Ensemble(rng.uniform(-3, 3, size=(params.n_particles, params.dim)), 2)
        exact = rastrigin_values(ensemble.positions)
        noisy = exact + rng.normal(0.0, noise, params.n_particles)
        exact_cp = consensus_point(ensemble.positions, exact, params.alpha)
        noisy_cp = consensus_point(ensemble.positions, noisy, params.alpha)
        draw = sample_diffusion(params, SeedSpec(seed))
        after = step(ensemble, noisy_cp, params.gamma, draw)
        matrices = [
            transition_matrix(noisy_cp.weights, params.gamma, draw, s) for s in range(params.dim)
        ]
        return diagnostics.step_bound_monitor(
            ensemble,
            after,
            matrices,
            draw,
            params.gamma,
            exact_cp.point,
            noisy_cp.point,
            params.alpha,
            float(np.abs(noisy - exact).max()),
        )

    def test_exact_oracle_has_no_consensus_gap(self) -> None:
        params = CboParams(gamma=0.5, xi=0.05, alpha=1.0, n_particles=8, dim=3)
        report = self._monitor(params, 3, 0.0)

        np.testing.assert_array_equal(np.zeros(3), report.consensus_gap)
        self.assertTrue(report.gap_bound_ok.all())
        self.assertTrue(report.all_ok)

    def test_noise_free_diffusion_keeps_ergodicity_above_gamma(self) -> None:
        params = CboParams(gamma=0.1, xi=0.0, alpha=10.0, n_particles=6, dim=2)

        report = self._monitor(params, 4, 0.5)

        self.assertTrue(np.all(report.erg >= params.gamma - 1e-12))
        self.assertTrue(report.all_ok)

    def test_random_steps_satisfy_every_bound(self) -> None:
        rng = np.random.default_rng(5)
        for trial in range(300):
            params = CboParams(
                gamma=float(rng.choice([0.1, 0.5])),
                xi=float(rng.choice([0.0, 0.05])),
                alpha=float(rng.choice([1.0, 10.0])),
                n_particles=int(rng.integers(1, 17)),
                dim=int(rng.integers(1, 5)),
            )
            self.assertTrue(self._monitor(params, trial, 0.2).all_ok)

    def test_requires_consecutive_ensembles(self) -> None:
        ensemble = Ensemble(np.zeros((2, 1)), 3)
        draw = sample_diffusion(CboParams(n_particles=2, xi=0.0), SeedSpec(0))
        with self.assertRaises(ShapeError):
            diagnostics.step_bound_monitor(
                ensemble, ensemble, [np.eye(2)], draw, 0.1, [0.0], [0.0], 1.0, 0.0
            )


class MaxMomentTests(unittest.TestCase):
    def test_degenerate_noise(self) -> None:
        report = diagnostics.gaussian_max_moment_check(10, 0.0, 100, SeedSpec(0))

        self.assertEqual((0.0, 0.0), (report.empirical_first, report.empirical_second))
        self.assertEqual((0.0, 0.0), (report.bound_first, report.bound_second))
        self.assertTrue(report.ok)

    def test_hundred_particles_under_the_bound(self) -> None:
        report = diagnostics.gaussian_max_moment_check(100, 1.0, 10**5, SeedSpec(1))

        self.assertAlmostEqual(19.807, report.bound_second, places=3)
        self.assertTrue(report.ok)

    def test_chunking_does_not_change_the_estimate(self) -> None:
        whole = diagnostics.gaussian_max_moment_check(10, 0.5, 1000, SeedSpec(2))
        chunked = diagnostics.gaussian_max_moment_check(10, 0.5, 1000, SeedSpec(2), chunk_size=70)

        self.assertTrue(whole.ok and chunked.ok)
        self.assertEqual(1000, chunked.trials)


class ClosedFormTests(unittest.TestCase):
    def test_mv_bound_examples(self) -> None:
        self.assertEqual(0.0, diagnostics.mv_bound(0.0, 0.0, 5.0, 10, "generic"))
        self.assertEqual(0.0, diagnostics.mv_bound(0.0, 0.0, 5.0, 10, "gaussian"))
        self.assertEqual(2.0, diagnostics.mv_bound(1.0, 0.0, 0.0, 4, "generic"))
        self.assertAlmostEqual(4.4505, diagnostics.mv_bound(1.0, 0.0, 0.0, 100), places=4)

    def test_complexity_schedule(self) -> None:
        schedule = diagnostics.complexity_schedule(1e-2, 0.5, 0.1, 0.0056, 1.0, 100)

        self.assertAlmostEqual(0.18996864, schedule.gap, places=8)
        self.assertAlmostEqual(0.90502, schedule.mu, places=5)
        self.assertGreater(schedule.sigma_hat, 0.0)
        self.assertLess(schedule.theta, 1.0)

    def test_k_star(self) -> None:
        self.assertEqual(44, diagnostics.k_star(0.9, 1.0, 0.01))
        self.assertEqual(0, diagnostics.k_star(0.9, 0.01, 0.01))
        self.assertEqual(0, diagnostics.complexity_schedule(0.5, 0.5, 0.1, 0.0, 0.5, 10).k_star)
        with self.assertRaises(ConfigurationError):
            diagnostics.k_star(1.0, 1.0, 0.01)

    def test_complexity_schedule_needs_a_contraction_gap(self) -> None:
        with self.assertRaises(ConfigurationError):
            diagnostics.complexity_schedule(1e-2, 0.5, 0.1, 1.0, 1.0, 10)

    def test_theory_constants_examples(self) -> None:
        constants = diagnostics.theory_constants(
            1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, None, 0.0, 1
        )
        self.assertAlmostEqual(1.0, constants.gamma_a, places=15)
        self.assertAlmostEqual(1.0, constants.gamma_b, places=15)

        zero = diagnostics.theory_constants(
            0.0, 1.0, 0.5, 0.0, 10.0, 0.0, 2.0, 0.0, 1e-9, 0.1, 50
        )
        self.assertEqual((0.0, 0.0), (zero.gamma_a, zero.gamma_b))
        self.assertEqual(0.0, zero.rhs)
        self.assertTrue(zero.condition_holds)

    def test_theory_constants_without_contraction(self) -> None:
        constants = diagnostics.theory_constants(
            1.0, 1.0, 0.01, 0.1, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 100
        )
        self.assertGreater(constants.theta, 1.0)
        self.assertIsNone(constants.rhs)
        self.assertIsNone(constants.condition_holds)

    def test_noise_tolerance_bound(self) -> None:
        expected = 0.2 * 0.1 * (math.sqrt(3) - 1) / (2 * 10.0 * 0.5**3 * 2.0)
        self.assertAlmostEqual(
            expected, diagnostics.noise_tolerance_bound(0.2, 0.01, 10.0, 0.5, 3, 4.0), places=15
        )
        self.assertEqual(math.inf, diagnostics.noise_tolerance_bound(0.2, 0.01, 10.0, 0.5, 3, 0.0))

    def test_recursion_and_decay_helpers(self) -> None:
        self.assertEqual(1.0, diagnostics.vk_recursion_rhs(0.5, 0.0, 4.0, 0.0))
        self.assertEqual(0.0, diagnostics.vk_recursion_rhs(1.0, 0.0, 1.0, 0.0))
        self.assertEqual(1.0, diagnostics.expected_diameter_bound(0.5, 3, 8.0))


class MonteCarloEstimateTests(unittest.TestCase):
    def test_estimate_d0_for_two_uniform_particles(self) -> None:
        params = CboParams(n_particles=2, dim=1)

        d0 = diagnostics.estimate_d0(InitSpec(lower=-1.0, upper=1.0), params, SeedSpec(3), 20000)

        self.assertAlmostEqual(2 / 3, d0, delta=0.03)

    def test_estimate_v0_for_uniform_box(self) -> None:
        params = CboParams(n_particles=10, dim=2)

        v0 = diagnostics.estimate_v0(
            InitSpec(lower=-1.0, upper=1.0), params, np.zeros(2), SeedSpec(4), 2000
        )

        self.assertAlmostEqual(2 / 3, v0, delta=0.02)


class BallMaxTests(unittest.TestCase):
    def test_one_dimension_hits_the_ball_edge(self) -> None:
        f_r = diagnostics.ball_max(Rastrigin(), [0.0], 0.05)

        self.assertEqual(float(rastrigin_values(np.array([[0.05]]))[0]), f_r)

    def test_disc_stays_inside_the_enclosing_square(self) -> None:
        r = 0.1
        corner = float(rastrigin_values(np.array([[r, r]]))[0])
        edge = float(rastrigin_values(np.array([[r, 0.0]]))[0])

        f_r = diagnostics.ball_max(Rastrigin(), [0.0, 0.0], r)

        self.assertLess(f_r, corner)
        self.assertGreater(f_r, 0.99 * edge)

    def test_shifted_center_of_rotated_objective(self) -> None:
        objective = RotatedRastrigin()
        center = np.array([1.0, -1.0])

        f_r = diagnostics.ball_max(objective, center, 0.2, points_per_dim=200)

        self.assertGreaterEqual(f_r, float(objective(center[None, :])[0]))

    def test_rejects_higher_dimensions_and_empty_balls(self) -> None:
        with self.assertRaises(ConfigurationError):
            diagnostics.ball_max(Rastrigin(), np.zeros(3), 0.1)
        with self.assertRaises(ConfigurationError):
            diagnostics.ball_max(Rastrigin(), [0.0], 0.0)


class LaplaceGapBoundTests(unittest.TestCase):
    def test_single_particle_at_minimizer(self) -> None:
        ensemble = Ensemble(np.zeros((1, 1)))

        report = diagnostics.laplace_gap_bound(
            ensemble, np.zeros(1), [0.0], 10.0, 1.0, 0.5, 0.1, 0.0, 0.1
        )

        self.assertEqual(0.0, report.lhs)
        self.assertEqual("a", report.case)
        self.assertTrue(report.satisfied)

    def test_empty_ball_selects_second_case(self) -> None:
        ensemble = Ensemble(np.array([[1.0], [2.0]]))
        values = rastrigin_values(ensemble.positions)

        report = diagnostics.laplace_gap_bound(
            ensemble, values, [0.0], 1.0, 8.1, 0.5, 0.4, 0.5, 0.05
        )

        self.assertEqual(0, report.in_ball)
        self.assertEqual("b", report.case)
        self.assertTrue(report.satisfied)

    def test_random_rastrigin_ensembles(self) -> None:
        # on [-1/2, 1/2]: |x| <= sqrt(f(x)) / 9; outside, f > 0.98 > q + f_r
        r = 0.05
        beta = 0.9 * 9.0
        f_r = diagnostics.ball_max(Rastrigin(), [0.0], r)
        q = 0.4
        self.assertLess(q + f_r, 0.98)

        rng = np.random.default_rng(6)
        for _ in range(1000):
            n = int(rng.integers(1, 20))
            positions = rng.uniform(-2.0, 2.0, size=(n, 1))
            alpha = float(rng.choice([1.0, 10.0, 100.0]))
            ensemble = Ensemble(positions)

            report = diagnostics.laplace_gap_bound(
                ensemble, rastrigin_values(positions), [0.0], alpha, beta, 0.5, q, f_r, r
            )

            self.assertTrue(report.satisfied, msg=f"{report} for {positions.ravel()}")

    def test_rejects_non_positive_constants(self) -> None:
        with self.assertRaises(ConfigurationError):
            diagnostics.laplace_gap_bound(
                Ensemble(np.zeros((1, 1))), np.zeros(1), [0.0], 1.0, 0.0, 0.5, 0.1, 0.0, 0.1
            )


if __name__ == "__main__":
    unittest.main()
