from __future__ import annotations

import json
import logging
import math
import unittest
import warnings

import numpy as np

from prabhakarcalculus import funcalg
from prabhakarcalculus.exceptions import InvalidParams, ModeDivergence, TruncationWarning
from prabhakarcalculus.mlf import prabhakar_e
from prabhakarcalculus.operators import NthLevelSpec
from prabhakarcalculus.solvers import heat, ivp


class TestIVP(unittest.TestCase):
    log = logging.getLogger(__name__)
    log.setLevel(logging.WARNING)
    logging.basicConfig()

    def setUp(self):
        # D^(1/2) y = -y with (I^(1/2) y)(0+) = 1 has y = x^(-1/2) E_{1/2,1/2}(-x^(1/2))
        self.spec = NthLevelSpec.riemann_liouville(1.0, 0.5, 0.0, 0.0)
        self.problem = ivp.IVPProblem(self.spec, -1.0, None, (1.0,)).assert_valid()

    def test_classical_solution(self):
        solution = ivp.solve_ivp(self.problem, i_max=40)
        for x in (0.25, 0.5, 1.0):
            expected = x**-0.5 * prabhakar_e(0.5, 0.5, 1.0, -math.sqrt(x))
            self.assertAlmostEqual(ivp.evaluate_ivp(solution, x), expected, delta=1e-12)

    def test_residual_and_initial_value(self):
        solution = ivp.solve_ivp(self.problem, i_max=40)
        result = ivp.ivp_residual(solution, self.problem, 0.5)
        self.assertLessEqual(abs(result.residual), 1e-12)
        self.assertEqual(len(result.initial_defects), 1)
        self.assertLessEqual(result.initial_defects[0], 1e-14)

    def test_truncation_warning(self):
        with self.assertWarns(UserWarning):
            ivp.solve_ivp(ivp.IVPProblem(self.spec, -4.0, None, (1.0,)), i_max=2, x_max=1.0)

    def test_picard_matches_series(self):
        solution = ivp.solve_ivp(self.problem, i_max=30)
        picard = ivp.picard_ivp(self.problem, iterations=30)
        self.assertEqual(picard, solution.total)

    def test_forcing(self):
        spec = NthLevelSpec.riemann_liouville(1.0, 0.5, 0.25, -0.25)
        forcing = funcalg.from_power(1.0, 1.0, -0.25)
        problem = ivp.IVPProblem(spec, 0.5, forcing, (0.5,))
        with warnings.catch_warnings():
            warnings.simplefilter("error", TruncationWarning)
            solution = ivp.solve_ivp(problem, i_max=40)
        for x in (0.25, 0.5, 1.0):
            self.assertLessEqual(abs(ivp.ivp_residual(solution, problem, x).residual), 1e-10)

    def test_uniform_initial_data(self):
        spec = NthLevelSpec.riemann_liouville(0.25, 0.5, 0.5, 0.5)
        problem = ivp.IVPProblem(spec, 0.0, None, (1.0,), uniform_initial_data=True)
        # 1 + (-1/2)(1/2) + (-1/2)(1/2)(1/2)^2 / 2
        self.assertAlmostEqual(ivp.initial_constants(problem)[0], 0.71875, delta=1e-15)
        self.assertEqual(ivp.initial_constants(ivp.IVPProblem(spec, 0.0, None, (1.0,))), (1.0,))

    def test_e2_form_matches_series(self):
        spec = NthLevelSpec.riemann_liouville(1.0, 0.5, 0.5, 0.25)
        problem = ivp.IVPProblem(spec, -0.5, None, (1.0,))
        solution = ivp.solve_ivp(problem, i_max=40)
        for x in (0.25, 0.5, 1.0):
            closed = ivp.ivp_e2_form(solution, problem, x)
            self.assertLessEqual(abs(closed - ivp.evaluate_ivp(solution, x)), 1e-9 * max(1.0, abs(closed)))

    def test_e2_form_needs_positive_parameters(self):
        spec = NthLevelSpec.riemann_liouville(1.0, 0.5, -0.5, 0.25)
        problem = ivp.IVPProblem(spec, -0.5, None, (1.0,))
        self.assertIsNone(ivp.ivp_e2_form(ivp.solve_ivp(problem), problem, 0.5))

    def test_problem_validation(self):
        with self.assertRaises(InvalidParams):
            ivp.IVPProblem(NthLevelSpec.riemann_liouville(1.0, 0.0, 0.0, 0.0), 1.0).assert_valid()
        with self.assertRaises(InvalidParams):
            ivp.IVPProblem(self.spec, 1.0, None, (1.0, 2.0)).assert_valid()
        with self.assertRaises(InvalidParams):
            ivp.IVPProblem(self.spec, 1.0, funcalg.from_power(1.0, 0.5)).assert_valid()

    def test_json(self):
        problem = ivp.IVPProblem(self.spec, -1.0, funcalg.from_power(1.0, 1.0), (1.0,))
        self.assertEqual(ivp.IVPProblem.from_json(problem.to_json()), problem)
        with self.assertRaises(InvalidParams):
            ivp.IVPProblem.from_json("[]")
        with self.assertRaises(InvalidParams):
            ivp.IVPProblem.from_json("{")

    def test_flat_json(self):
        problem = ivp.IVPProblem.from_json(
            '{"alpha": 1.0, "beta": 0.5, "gamma": 0.0, "delta": 0.0, "beta_i": [0.0], "theta_i": [0.0],'
            ' "lambda": -1.0, "forcing": null, "a": [1.0]}'
        )
        self.assertEqual(problem, self.problem)
        self.assertEqual(json.loads(problem.to_json())["a"], [1.0])
        nested = ivp.IVPProblem.from_json(
            '{"spec": {"alpha": 1.0, "beta": 0.5, "beta_i": [0.0], "theta_i": [0.0]},'
            ' "lambda": -1.0, "initial_values": [1.0]}'
        )
        self.assertEqual(nested, self.problem)


class TestHeat(unittest.TestCase):
    def test_single_cosine_mode(self):
        beta, k_tilde, t = 0.5, 0.01, 0.5
        spec = NthLevelSpec.riemann_liouville(1.0, beta, 0.0, 0.0)
        grid = heat.spatial_grid(math.pi, 16)
        problem = heat.HeatProblem(spec, k_tilde, math.pi, 16, heat.initial_profile("cosine", {"mode": 1}, grid))
        field = heat.solve_heat(problem, [t])
        phi = t ** (beta - 1) * prabhakar_e(beta, beta, 1.0, -k_tilde * t**beta)
        np.testing.assert_allclose(field.values[:, 0], phi * np.cos(grid), rtol=0, atol=1e-10)
        self.assertEqual(field.cutoffs, (math.inf,))

    def test_rows_layout(self):
        spec = NthLevelSpec.hilfer(1.0, 0.75, 0.25, 0.25, 0.5)
        grid = heat.spatial_grid(4.0, 8)
        problem = heat.HeatProblem(spec, 0.05, 4.0, 8, heat.initial_profile("gaussian", {"sigma": 0.5}, grid))
        field = heat.solve_heat(problem, [0.25, 0.5])
        rows = list(field.rows())
        self.assertEqual(len(rows), 16)
        self.assertEqual(rows[0][:2], (-4.0, 0.25))
        self.assertEqual(rows[8][1], 0.5)

    def test_mode_residual(self):
        spec = NthLevelSpec.hilfer(1.0, 0.75, 0.25, 0.25, 0.5)
        grid = heat.spatial_grid(8.0, 16)
        problem = heat.HeatProblem(spec, 0.25, 8.0, 16, heat.initial_profile("gaussian", {}, grid))
        for t in (0.25, 0.5, 1.0):
            lhs, rhs = heat.heat_mode_residual(problem, 1.0, t)
            self.assertLessEqual(abs(lhs - rhs), 1e-10 * (1 + abs(rhs)))

    def test_mode_divergence(self):
        spec = NthLevelSpec.riemann_liouville(1.0, 0.5, 0.0, 0.0)
        noise = np.random.default_rng(0).standard_normal(64)
        problem = heat.HeatProblem(spec, 100.0, 1.0, 64, noise)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            with self.assertRaises(ModeDivergence) as ctx:
                heat.solve_heat(problem, [0.5], i_max=10)
        self.assertGreater(ctx.exception.cutoff, 0.0)

    def test_problem_validation(self):
        spec = NthLevelSpec.riemann_liouville(1.0, 0.5, 0.0, 0.0)
        grid = heat.spatial_grid(1.0, 12)
        with self.assertRaises(InvalidParams):
            heat.HeatProblem(spec, 1.0, 1.0, 12, np.zeros(12)).assert_valid()
        with self.assertRaises(InvalidParams):
            heat.HeatProblem(spec, -1.0, 1.0, 16, np.zeros(16)).assert_valid()
        with self.assertRaises(InvalidParams):
            heat.initial_profile("square", {}, grid)
        with self.assertRaises(InvalidParams):
            heat.HeatProblem.from_json('{"spec": {"alpha": 1.0}}')

    def test_from_json(self):
        problem = heat.HeatProblem.from_json(
            '{"spec": {"alpha": 1.0, "beta": 0.5, "beta_i": [0.0], "theta_i": [0.0]},'
            ' "k_tilde": 0.5, "grid_points": 32, "profile": {"kind": "gaussian", "sigma": 1.0}}'
        )
        self.assertEqual(problem.half_width, 10.0)
        self.assertEqual(problem.u0.shape, (32,))
        self.assertAlmostEqual(problem.omega[1], 2 * math.pi / 20.0, delta=1e-15)

    def test_flat_json(self):
        problem = heat.HeatProblem.from_json(
            '{"alpha": 1.0, "beta": 0.5, "gamma": 0.0, "delta": 0.0, "beta_i": [0.25], "theta_i": [0.5],'
            ' "k_tilde": 0.05, "L": 4.0, "N": 16, "u0": {"kind": "gaussian", "params": {"sigma": 0.5}},'
            ' "times": [0.25, 1.0]}'
        )
        self.assertEqual((problem.half_width, problem.grid_points), (4.0, 16))
        self.assertEqual(problem.times, (0.25, 1.0))
        np.testing.assert_allclose(problem.u0, np.exp(-(problem.grid**2) / 0.5), rtol=0, atol=1e-15)
        inline = heat.HeatProblem.from_json(
            '{"alpha": 1.0, "beta": 0.5, "beta_i": [0.25], "theta_i": [0.5], "k_tilde": 0.05, "L": 4.0, "N": 16,'
            ' "u0": {"kind": "gaussian", "sigma": 0.5}}'
        )
        np.testing.assert_array_equal(inline.u0, problem.u0)
        self.assertEqual(inline.times, ())
        with self.assertRaises(InvalidParams):
            heat.HeatProblem.from_json(
                '{"alpha": 1.0, "beta": 0.5, "beta_i": [0.25], "theta_i": [0.5], "k_tilde": 0.05, "N": 16,'
                ' "times": [0.0]}'
            )

    def test_grid_refinement(self):
        # A well resolved profile gives the same field on the shared points of N and 2N
        spec = NthLevelSpec.hilfer(1.0, 0.75, 0.25, 0.25, 0.5)
        fields = []
        for n in (64, 128):
            grid = heat.spatial_grid(8.0, n)
            problem = heat.HeatProblem(spec, 0.05, 8.0, n, heat.initial_profile("gaussian", {"sigma": 1.0}, grid))
            fields.append(heat.solve_heat(problem, [0.25, 1.0]).values)
        coarse, fine = fields
        np.testing.assert_allclose(fine[::2, :], coarse, rtol=0, atol=1e-10)


if __name__ == "__main__":
    unittest.main()
