import math

import numpy as np
from django.test import SimpleTestCase

from metrics.functions.connection import build_point_frame, h_star_field
from metrics.functions.metric import AVERAGED, EXPLICIT_RANDERS_ALPHA, FinslerMetricSpec
from metrics.functions.quadrature import sphere_rule
from torsion.functions.exceptions import AdaptedFrameError, NotSolvableError, SolverError
from torsion.functions.extremal_engine import (
    DEFAULT_RESIDUAL_THRESHOLD_ANALYTIC, DEFAULT_RESIDUAL_THRESHOLD_NUMERIC, SOLVE_ORTHOGONALIZED,
    AnalysisOptions, analyze_point
)
from torsion.functions.randers_oracle import (
    GRAM_BASIS_3D, AdaptedFrame, adapt, adapted_to_original, gram_prediction, is_solvable, norm_gradient,
    predicted_gram_f, predicted_rank, solvability_C, to_adapted, torsion_3d
)
from torsion.functions.solver import (
    FRAME_ORIGINAL, FRAME_ORTHONORMAL, INCONCLUSIVE, NOT_SOLVABLE, RIEMANNIAN_DEGENERATE, SOLVABLE, TorsionTensor,
    basis_label, component_label, constraint_null_directions, constraint_residual, contract_sigma,
    dimension_from_pairs, energy_scale, f_values, gram_f, h_inner, isometry_directions, pair_count,
    select_subsystem, solve_2d, solve_extremal, solve_orthogonalized, support_value, torsion_map_basis,
    torsion_map_direct, transform_torsion
)

OMEGA_3D = 4.0 * math.pi / 3.0

ROTATING_BETA = ['cos(x3)', 'sin(x3)', '0']
GROWING_BETA = ['0', '0', '1 + x1']
STRETCHED_ALPHA = [['4', '0', '0'], ['0', '1', '0'], ['0', '0', '1']]
STRETCHED_BETA = ['cos(x3)', '0.5*sin(x3)', '0']


def flat_alpha(n):
    return [['1' if i == j else '0' for j in range(n)] for i in range(n)]


def randers(beta, mode=EXPLICIT_RANDERS_ALPHA, alpha=None):
    return FinslerMetricSpec.randers(alpha or flat_alpha(len(beta)), beta, mode)


def matrix_text(M):
    return [[repr(float(v)) for v in row] for row in M]


class PointSystem:
    """Frame, fields, Gram matrix and basis images at one point"""

    def __init__(self, m, x, level, rtol=1e-8):
        self.m = m
        self.x = np.asarray(x, dtype=float)
        self.rule = sphere_rule(m.dimension, level)
        self.frame = build_point_frame(m, self.x, self.rule)
        self.f_vals = f_values(m, self.x, self.frame, self.rule)
        self.hstar = h_star_field(m, self.x, self.frame, self.rule)
        self.gram = gram_f(self.f_vals, self.rule, rtol=rtol, scale=energy_scale(m, self.x, self.frame, self.rule))
        self.Ts = torsion_map_basis(self.gram.matrix)
        self.b = h_inner(self.f_vals, self.hstar, self.rule)
        self.subsystem = [] if self.gram.degenerate else select_subsystem(self.Ts, rtol)


class TorsionIndexingTest(SimpleTestCase):
    def test_labels_and_counts(self):
        """Test the lexicographic pair order and the sequence numbering of labels"""
        self.assertEqual(pair_count(3), 3)
        self.assertEqual(pair_count(4), 6)
        self.assertEqual(dimension_from_pairs(6), 4)
        self.assertEqual([basis_label(i, 3) for i in (0, 1, 2, 3, 8)],
                         ['mu_12^1', 'mu_13^1', 'mu_23^1', 'mu_12^2', 'mu_23^3'])
        self.assertEqual(component_label(7, 3), 'T_13^3')
        with self.assertRaises(SolverError):
            dimension_from_pairs(4)

    def test_sign_extension(self):
        """Test that T_ba^c = -T_ab^c and T_aa^c = 0"""
        T = TorsionTensor(3, np.arange(1.0, 10.0))
        full = T.full()
        np.testing.assert_allclose(full, -full.transpose(0, 2, 1))
        self.assertEqual(T.component(2, 1, 3), -T.component(1, 2, 3))
        self.assertEqual(T.component(2, 2, 1), 0.0)
        np.testing.assert_allclose(TorsionTensor.from_full(full).components, T.components)
        self.assertAlmostEqual(T.norm(), math.sqrt(sum(v * v for v in range(1, 10))))

    def test_transform_torsion(self):
        """Test identity, scaling and axis-swap frame changes"""
        T = TorsionTensor(3, np.random.default_rng(2).standard_normal(9))
        np.testing.assert_allclose(transform_torsion(T, np.eye(3)).components, T.components)

        scaled = transform_torsion(T, 2.0 * np.eye(3))
        np.testing.assert_allclose(scaled.components, T.components / 2.0)
        self.assertEqual(scaled.frame, FRAME_ORIGINAL)

        only = TorsionTensor.zero(3)
        only.components[2 * 3 + 0] = 1.0  # T_12^3
        swap = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
        swapped = transform_torsion(only, swap)
        self.assertAlmostEqual(swapped.component(2, 3, 1), -1.0)
        self.assertAlmostEqual(swapped.norm(), 1.0)


class GramAndTorsionMapTest(SimpleTestCase):
    def setUp(self):
        """Set up the flat b = 0.3 Randers system with gamma = alpha"""
        self.system = PointSystem(randers(['0', '0', '0.3']), np.zeros(3), 20)

    def test_f_values_randers(self):
        """Test f_12 = 0, f_13 = 0.3 y1 and f_23 = 0.3 y2"""
        nodes = self.system.rule.nodes
        np.testing.assert_allclose(self.system.f_vals[0], 0.0, atol=1e-15)
        np.testing.assert_allclose(self.system.f_vals[1], 0.3 * nodes[0], atol=1e-15)
        np.testing.assert_allclose(self.system.f_vals[2], 0.3 * nodes[1], atol=1e-15)

    def test_gram_randers(self):
        """Test G_f = diag(0, b^2 omega, b^2 omega) with rank n - 1 and d = 1"""
        gram = self.system.gram
        value = 0.09 * OMEGA_3D
        np.testing.assert_allclose(gram.matrix, np.diag([0.0, value, value]), atol=1e-8 * value)
        self.assertEqual(gram.rank, 2)
        self.assertEqual(gram.d, 1)
        self.assertEqual(gram.big_system_rank, 6)
        self.assertFalse(gram.maximal_rank)
        self.assertTrue(gram.wang_bound_satisfied)
        self.assertFalse(gram.degenerate)

    def test_gram_euclidean(self):
        """Test that the Euclidean G_f vanishes and is flagged degenerate"""
        gram = PointSystem(FinslerMetricSpec.euclidean(3), np.zeros(3), 8).gram
        self.assertTrue(gram.degenerate)
        self.assertEqual(gram.rank, 0)
        self.assertEqual(gram.d, 3)

    def test_torsion_map_entries(self):
        """Test T_13^1(mu_13^1) = G[13,13] and T_23^1(mu_12^1) = G[12,23] / 2"""
        G = np.array([[2.0, 0.3, 0.5], [0.3, 1.5, -0.2], [0.5, -0.2, 1.0]])
        Ts = torsion_map_basis(G)
        self.assertAlmostEqual(Ts[1, 1], G[1, 1])
        self.assertAlmostEqual(Ts[0, 2], G[0, 2] / 2.0)

    def test_torsion_map_matches_direct_quadrature(self):
        """Test the Gram assembly against quadrature of f_kl sigma_j"""
        system = PointSystem(FinslerMetricSpec.generic('sqrt(y1^2 + y2^2 + y3^2) + 0.2*y1 + 0.05*y2*y3/'
                                                       'sqrt(y1^2 + y2^2 + y3^2)', 3), np.zeros(3), 10)
        direct = torsion_map_direct(system.f_vals, system.rule)
        scale = float(np.abs(system.Ts).max())
        np.testing.assert_allclose(system.Ts, direct, atol=1e-10 * scale)

    def test_basis_image_gram_pattern(self):
        """Test that the six nonzero basis images have Gram b^4 omega^2 times the fixed pattern"""
        self.assertEqual(self.system.subsystem, list(GRAM_BASIS_3D))
        S = self.system.Ts[self.system.subsystem]
        expected = gram_prediction(0.3)
        self.assertAlmostEqual(expected[0, 0], 0.0081 * OMEGA_3D ** 2)
        np.testing.assert_allclose(S @ S.T, expected, atol=1e-6 * expected[0, 0])

    def test_euclidean_subsystem_is_empty(self):
        """Test that no basis image survives on the Euclidean metric"""
        self.assertEqual(select_subsystem(torsion_map_basis(np.zeros((3, 3)))), [])

    def test_rank_identity_on_random_metrics(self):
        """Test rank(Ts) = n rank(G_f) on randomized Randers and quartic-perturbed metrics"""
        rng = np.random.default_rng(20)
        for case in range(20):
            Q = rng.standard_normal((3, 3))
            alpha = np.eye(3) + 0.05 * (Q + Q.T)
            if case % 2 == 0:
                beta = 0.3 * rng.uniform(-1.0, 1.0, 3)
                slopes = 0.2 * rng.standard_normal(3)
                beta_text = [f"{float(beta[j])!r} + {float(slopes[j])!r}*x{j + 1}" for j in range(3)]
                m = randers(beta_text, alpha=matrix_text(alpha))
                level = 12
            else:
                quadratic = ' + '.join(
                    f"{float(alpha[i, j])!r}*y{i + 1}*y{j + 1}" for i in range(3) for j in range(3)
                )
                eps = float(rng.uniform(0.05, 0.15))
                m = FinslerMetricSpec.generic(
                    f"sqrt({quadratic}) + {eps!r}*(y1^4 + y2^4 + y3^4)^0.25 + 0.05*x1*y2", 3, AVERAGED
                )
                level = 8
            system = PointSystem(m, np.zeros(3), level)
            self.assertEqual(len(system.subsystem), 3 * system.gram.rank, f"case {case}")
            self.assertEqual(system.gram.rank, 2 if case % 2 == 0 else 3, f"case {case}")

    def test_select_subsystem_tie_breaking(self):
        """Test that equal pivots go to the lowest index"""
        Ts = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        self.assertEqual(select_subsystem(Ts), [0, 2])
        with self.assertLogs('torsion.functions.solver', level='WARNING'):
            select_subsystem(Ts, expected_rank=3)


class ExtremalSolveTest(SimpleTestCase):
    def test_zero_right_hand_side(self):
        """Test that h* = 0 gives T = 0"""
        system = PointSystem(randers(['0', '0', '0.3']), np.zeros(3), 12)
        outcome = solve_extremal(system.subsystem, system.Ts, system.b)
        self.assertEqual(outcome.torsion.norm(), 0.0)

    def test_paths_agree_and_are_stationary(self):
        """Test that the Gram and orthogonalized solves agree and satisfy Ts T + b = 0"""
        rng = np.random.default_rng(4)
        Ts = rng.standard_normal((9, 9))
        b = rng.standard_normal(9)
        subsystem = select_subsystem(Ts)
        self.assertEqual(subsystem, list(range(9)))
        gram = solve_extremal(subsystem, Ts, b)
        orthogonal = solve_orthogonalized(subsystem, Ts, b)
        np.testing.assert_allclose(gram.torsion.components, orthogonal.torsion.components, atol=1e-9)
        np.testing.assert_allclose(Ts @ gram.torsion.components + b, 0.0, atol=1e-9)
        self.assertTrue(gram.unique_connection)
        self.assertAlmostEqual(support_value(subsystem, Ts, b), gram.torsion.norm() ** 2,
                               delta=1e-9 * gram.torsion.norm() ** 2)

    def test_minimality_against_constraint_null_directions(self):
        """Test that null directions leave the constraints unchanged and only add norm"""
        system = PointSystem(randers(ROTATING_BETA), np.zeros(3), 16)
        outcome = solve_extremal(system.subsystem, system.Ts, system.b)
        directions = isometry_directions(system.gram.matrix, rank=system.gram.rank)
        null_tensors = constraint_null_directions(directions)
        self.assertEqual(len(null_tensors), 3 * len(directions))
        base = outcome.torsion.norm() ** 2
        for N in null_tensors:
            self.assertLess(float(np.abs(contract_sigma(N, system.f_vals)).max()), 1e-12)
            moved = TorsionTensor(3, outcome.torsion.components + 0.1 * N.components)
            self.assertGreater(moved.norm() ** 2, base)

    def test_isometry_directions(self):
        """Test the Euclidean 2D rotation generator and the empty set at maximal rank"""
        directions = isometry_directions(np.zeros((1, 1)), rank=0)
        self.assertEqual(len(directions), 1)
        half = 1.0 / math.sqrt(2.0)
        np.testing.assert_allclose(directions[0], [[0.0, half], [-half, 0.0]])
        self.assertEqual(isometry_directions(np.eye(3)), [])

        system = PointSystem(randers(['0', '0', '0.3']), np.zeros(3), 12)
        (K,) = isometry_directions(system.gram.matrix, rank=system.gram.rank)
        self.assertAlmostEqual(abs(K[0, 1]), half, delta=1e-12)
        self.assertAlmostEqual(float(np.abs(K[:, 2]).max()), 0.0, delta=1e-12)

    def test_solve_2d(self):
        """Test the closed-form surface solve on Riemannian and x-independent metrics"""
        origin = np.zeros(2)
        rule = sphere_rule(2, 32)
        euclidean = FinslerMetricSpec.euclidean(2)
        outcome = solve_2d(euclidean, origin, build_point_frame(euclidean, origin, rule), rule, 1e-4)
        self.assertEqual(outcome.verdict, RIEMANNIAN_DEGENERATE)
        self.assertEqual(outcome.torsion.norm(), 0.0)

        quartic = FinslerMetricSpec.generic('sqrt(y1^2 + y2^2) + 0.1*(y1^4 + y2^4)^0.25', 2)
        outcome = solve_2d(quartic, origin, build_point_frame(quartic, origin, rule), rule, 1e-4)
        self.assertEqual(outcome.verdict, SOLVABLE)
        self.assertEqual(outcome.torsion.norm(), 0.0)
        self.assertEqual(outcome.residual.residual_l2, 0.0)

        with self.assertRaises(SolverError):
            solve_2d(randers(['0', '0', '0.3']), np.zeros(3), None, sphere_rule(3, 4), 1e-4)


class RandersOracleTest(SimpleTestCase):
    def setUp(self):
        """Set up the origin"""
        self.origin = np.zeros(3)

    def test_adapt(self):
        """Test the adapted frame on the three hand examples, with beta along e1 giving [e2, e3, e1]"""
        frame = adapt(np.eye(3), [0, 0, 0.3])
        np.testing.assert_allclose(frame.R, np.eye(3))
        self.assertAlmostEqual(frame.beta_n, 0.3)

        frame = adapt(np.eye(3), [1.0, 0.0, 0.0])
        self.assertAlmostEqual(frame.beta_n, 1.0)
        np.testing.assert_allclose(frame.R, np.eye(3)[:, [1, 2, 0]])

        alpha = np.diag([4.0, 1.0, 1.0])
        frame = adapt(alpha, [2.0, 0.0, 0.0])
        self.assertAlmostEqual(frame.beta_n, 1.0)
        np.testing.assert_allclose(frame.R.T @ alpha @ frame.R, np.eye(3), atol=1e-15)
        np.testing.assert_allclose(frame.R.T @ np.array([2.0, 0.0, 0.0]), [0.0, 0.0, 1.0], atol=1e-15)

        with self.assertRaises(AdaptedFrameError):
            adapt(np.eye(3), [0.0, 0.0, 0.0])

    def test_solvability_C(self):
        """Test C on constant, growing and rotating beta"""
        np.testing.assert_allclose(solvability_C(randers(['0.1', '0.2', '0.3']), self.origin), 0.0, atol=1e-15)
        self.assertEqual(solvability_C(randers(GROWING_BETA), self.origin).tolist(), [1.0, 0.0, 0.0])
        np.testing.assert_allclose(solvability_C(randers(ROTATING_BETA), self.origin), 0.0, atol=1e-15)
        self.assertTrue(is_solvable(randers(ROTATING_BETA), self.origin))
        self.assertFalse(is_solvable(randers(GROWING_BETA), self.origin))

    def test_norm_gradient(self):
        """Test that the gradient of the beta length is C for growing beta and zero when rotating"""
        np.testing.assert_allclose(norm_gradient(randers(GROWING_BETA), self.origin), [1.0, 0.0, 0.0])
        np.testing.assert_allclose(norm_gradient(randers(ROTATING_BETA), self.origin), 0.0, atol=1e-15)

    def test_torsion_3d(self):
        """Test the closed-form torsion on constant and rotating beta"""
        self.assertEqual(torsion_3d(randers(['0', '0', '0.3']), self.origin).norm(), 0.0)

        T = torsion_3d(randers(ROTATING_BETA), self.origin)
        self.assertAlmostEqual(T.component(2, 3, 1), -0.5, delta=1e-15)
        self.assertAlmostEqual(T.component(1, 3, 2), -0.5, delta=1e-15)
        self.assertAlmostEqual(T.component(1, 2, 3), -1.0, delta=1e-15)
        self.assertAlmostEqual(T.norm() ** 2, 1.5, delta=1e-14)

    def test_torsion_3d_refuses_non_solvable(self):
        """Test that the closed form raises with C when beta changes its length"""
        with self.assertRaises(NotSolvableError) as context:
            torsion_3d(randers(GROWING_BETA), self.origin)
        self.assertEqual(context.exception.C.tolist(), [1.0, 0.0, 0.0])
        with self.assertRaises(SolverError):
            torsion_3d(randers(['0', '0.3']), np.zeros(2))

    def test_predictions(self):
        """Test the predicted G_f, rank and d"""
        np.testing.assert_allclose(predicted_gram_f(0.3, 3), np.diag([0.0, 0.09 * OMEGA_3D, 0.09 * OMEGA_3D]))
        self.assertEqual(predicted_rank(3), {'rank': 2, 'd': 1})
        self.assertEqual(predicted_rank(4), {'rank': 3, 'd': 3})
        self.assertAlmostEqual(float(gram_prediction(0.3)[0, 0]), 0.142122, delta=1e-6)

    def test_closed_form_torsion_satisfies_constraints(self):
        """Test that the closed-form torsion, moved into the alpha frame, leaves a residual ratio below 1e-6"""
        m = randers(STRETCHED_BETA, alpha=STRETCHED_ALPHA)
        x = np.array([0.0, 0.0, 0.7])
        rule = sphere_rule(3, 30)
        frame = build_point_frame(m, x, rule)
        original = adapted_to_original(torsion_3d(m, x), adapt(m.alpha_at(x), m.beta_at(x)))
        self.assertGreater(original.norm(), 0.1)

        stats = constraint_residual(m, x, frame, transform_torsion(original, frame.B, FRAME_ORTHONORMAL), rule,
                                    DEFAULT_RESIDUAL_THRESHOLD_ANALYTIC)
        self.assertLess(stats.ratio, 1e-6)
        self.assertTrue(stats.solvable)

        stats = constraint_residual(m, x, frame, TorsionTensor.zero(3), rule, DEFAULT_RESIDUAL_THRESHOLD_ANALYTIC)
        self.assertAlmostEqual(stats.ratio, 1.0, delta=1e-12)

    def test_closed_form_ignores_adapted_sign_convention(self):
        """Test that flipping adapted axes only flips adapted components and keeps the original torsion"""
        m = randers(STRETCHED_BETA, alpha=STRETCHED_ALPHA)
        x = np.array([0.0, 0.0, 0.7])
        adapted = adapt(m.alpha_at(x), m.beta_at(x))
        original = adapted_to_original(torsion_3d(m, x), adapted)
        for signs in ([-1.0, 1.0, 1.0], [1.0, -1.0, 1.0], [-1.0, -1.0, 1.0]):
            flipped = AdaptedFrame(R=adapted.R * np.array(signs), beta_n=adapted.beta_n)
            T = torsion_3d(m, x, frame=flipped)
            np.testing.assert_allclose(adapted_to_original(T, flipped).components, original.components, atol=1e-12)
            np.testing.assert_allclose(to_adapted(original, np.eye(3), flipped).components, T.components,
                                       atol=1e-12)


class ExtremalTorsionEngineTest(SimpleTestCase):
    def test_options(self):
        """Test default levels, thresholds and finite-difference steps"""
        options = AnalysisOptions()
        self.assertEqual(options.level_for(2), 32)
        self.assertEqual(options.level_for(3), 30)
        self.assertEqual(options.level_for(4), 8)
        self.assertEqual(options.threshold_for(randers(['0', '0', '0.3'])), DEFAULT_RESIDUAL_THRESHOLD_ANALYTIC)
        self.assertEqual(options.threshold_for(FinslerMetricSpec.euclidean(3)), DEFAULT_RESIDUAL_THRESHOLD_NUMERIC)
        euclidean = FinslerMetricSpec.euclidean(3)
        self.assertAlmostEqual(options.step_for(euclidean, [3.0, 4.0, 0.0]), 6e-5)
        self.assertEqual(AnalysisOptions(fd_step=1e-3).step_for(euclidean, [3.0, 4.0, 0.0]), 1e-3)
        generic = FinslerMetricSpec.generic('sqrt(y1^2 + y2^2 + y3^2)', 3)
        self.assertGreater(options.step_for(generic, [0.0, 0.0, 0.0]), 1e-4)
        self.assertLess(options.step_for(generic, [0.0, 0.0, 0.0]), 1e-3)
        self.assertEqual(AnalysisOptions(residual_threshold=0.5).threshold_for(randers(['0', '0.3'])), 0.5)

    def test_euclidean_is_riemannian_degenerate(self):
        """Test rank 0, d = C(n,2), zero torsion and exact isometries on the Euclidean metric"""
        for n in (2, 3):
            report = analyze_point(FinslerMetricSpec.euclidean(n), np.zeros(n))
            self.assertIsNone(report.error)
            self.assertEqual(report.verdict, RIEMANNIAN_DEGENERATE)
            self.assertEqual(report.rank, 0)
            self.assertEqual(report.d, pair_count(n))
            self.assertLessEqual(report.torsion_norm, 1e-10)
            self.assertEqual(report.isometry['d'], pair_count(n))
            self.assertLessEqual(report.isometry['max_defect'], 1e-8)
            self.assertLess(report.checks['riemannian_proportionality']['spread'], 1e-8)
            self.assertTrue(report.oracle['riemannian'])

    def test_randers_rank_law(self):
        """Test rank 2, d = 1, the predicted G_f and zero torsion for constant beta"""
        report = analyze_point(randers(['0', '0', '0.3']), np.zeros(3))
        self.assertEqual(report.verdict, SOLVABLE)
        self.assertEqual((report.rank, report.d), (2, 1))
        value = 0.09 * OMEGA_3D
        np.testing.assert_allclose(report.gram['matrix'], np.diag([0.0, value, value]), atol=1e-8 * value)
        self.assertLessEqual(report.torsion_norm, 1e-8)
        self.assertEqual(report.isometry['d'], 1)
        self.assertLessEqual(report.isometry['max_defect'], 1e-8)
        self.assertTrue(report.checks['rank_identity'])
        self.assertLess(report.oracle['gram_spectrum_difference'], 1e-8)
        self.assertTrue(report.oracle['verdict_agrees'])

    def test_rotating_beta_matches_oracle(self):
        """Test the numeric extremal torsion against the closed form for rotating beta"""
        report = analyze_point(randers(ROTATING_BETA), np.zeros(3))
        self.assertEqual(report.verdict, SOLVABLE)
        self.assertEqual((report.rank, report.d), (2, 1))
        self.assertLess(report.residual_ratio, 1e-6)
        self.assertTrue(report.oracle['torsion_agrees'])
        self.assertLess(report.oracle['torsion_difference'], 1e-6)
        adapted = report.oracle['numeric_torsion_adapted']
        self.assertAlmostEqual(adapted['T_23^1'], -0.5, delta=1e-6)
        self.assertAlmostEqual(adapted['T_13^2'], -0.5, delta=1e-6)
        self.assertAlmostEqual(adapted['T_12^3'], -1.0, delta=1e-6)
        self.assertAlmostEqual(report.torsion_norm, math.sqrt(1.5), delta=1e-6)
        self.assertLess(report.checks['stationarity'], 1e-9)
        self.assertTrue(report.checks['paths_agree'])
        self.assertAlmostEqual(report.checks['support_value'], report.torsion_norm ** 2, delta=1e-9)
        for label, value in report.oracle['torsion_original'].items():
            self.assertAlmostEqual(report.torsion_original[label], value, delta=1e-6)

    def test_growing_beta_is_not_solvable(self):
        """Test NotSolvable with a large residual ratio and exact C for beta = (1 + x1) dx3"""
        report = analyze_point(randers(GROWING_BETA), np.zeros(3))
        self.assertIsNone(report.error)
        self.assertEqual(report.verdict, NOT_SOLVABLE)
        self.assertGreater(report.residual_ratio, 1e-2)
        self.assertEqual(report.oracle['C'], [1.0, 0.0, 0.0])
        self.assertEqual(report.oracle['predicted_verdict'], NOT_SOLVABLE)
        self.assertTrue(report.oracle['verdict_agrees'])
        self.assertFalse(report.validation['passed'])

    def test_generic_rotating_beta_is_solvable(self):
        """Test that rotating beta written as a generic F is solvable and matches its Randers form"""
        for b, point in ((0.3, [0.0, 0.0, 1.3]), (0.5, [3.0, 0.0, 0.4]), (0.7, [0.0, 0.0, 0.4])):
            generic = FinslerMetricSpec.generic(f'sqrt(y1^2 + y2^2 + y3^2) + {b}*cos(x3)*y1 + {b}*sin(x3)*y2', 3)
            report = analyze_point(generic, point, AnalysisOptions(oracle=False))
            self.assertIsNone(report.error, point)
            self.assertFalse(report.environment['cancellation_warning'], point)
            self.assertEqual(report.verdict, SOLVABLE, point)
            self.assertLess(report.residual_ratio, DEFAULT_RESIDUAL_THRESHOLD_NUMERIC, point)

            as_randers = randers([f'{b}*cos(x3)', f'{b}*sin(x3)', '0'], mode=AVERAGED)
            expected = analyze_point(as_randers, point, AnalysisOptions(oracle=False))
            self.assertEqual(expected.verdict, SOLVABLE, point)
            self.assertAlmostEqual(report.torsion_norm, expected.torsion_norm,
                                   delta=1e-4 * max(1.0, expected.torsion_norm), msg=point)

    def test_unstable_differences_make_near_threshold_verdicts_inconclusive(self):
        """Test that a failing ratio near the threshold is inconclusive only when the gamma differences disagree"""
        m = randers(['0.5*cos(x3)', '0.5*sin(x3)', '0'], mode=AVERAGED)
        x = np.zeros(3)
        baseline = analyze_point(m, x, AnalysisOptions(level=6, oracle=False))
        ratio = baseline.residual_ratio
        cancellation = baseline.environment['cancellation']
        self.assertGreater(ratio, 0.0)
        self.assertGreater(cancellation, 0.0)

        def verdict(threshold, tolerance):
            options = AnalysisOptions(level=6, oracle=False, residual_threshold=threshold,
                                      cancellation_tolerance=tolerance)
            return analyze_point(m, x, options).verdict

        self.assertEqual(verdict(ratio / 2.0, cancellation / 2.0), INCONCLUSIVE)
        self.assertEqual(verdict(ratio / 2.0, cancellation * 2.0), NOT_SOLVABLE)
        self.assertEqual(verdict(ratio / 20.0, cancellation / 2.0), NOT_SOLVABLE)
        self.assertEqual(verdict(ratio * 2.0, cancellation / 2.0), SOLVABLE)

    def test_surface_paths_agree(self):
        """Test that the general solver and the closed-form surface solve agree for constant |beta| = 0.3"""
        m = randers(['0.3*cos(x1)', '0.3*sin(x1)'])
        report = analyze_point(m, np.zeros(2))
        self.assertEqual(report.verdict, SOLVABLE)
        self.assertLess(report.checks['closed_form_2d_difference'], 1e-10)
        self.assertEqual(report.checks['closed_form_2d_verdict'], SOLVABLE)
        self.assertLess(report.residual_ratio, 1e-8)

    def test_orthogonalized_path(self):
        """Test that choosing the orthogonalized path gives the same torsion"""
        m = randers(ROTATING_BETA)
        gram = analyze_point(m, np.zeros(3), AnalysisOptions(level=12, oracle=False))
        orthogonal = analyze_point(m, np.zeros(3), AnalysisOptions(level=12, oracle=False,
                                                                   solve_path=SOLVE_ORTHOGONALIZED))
        self.assertEqual(orthogonal.solve['path'], SOLVE_ORTHOGONALIZED)
        self.assertIsNone(orthogonal.oracle)
        for label, value in gram.torsion.items():
            self.assertAlmostEqual(orthogonal.torsion[label], value, delta=1e-9)

    def test_quadrature_convergence(self):
        """Test that doubling the level leaves gamma and the torsion norm unchanged to 1e-8"""
        for m in (randers(['0', '0', '0.3']), randers(ROTATING_BETA)):
            coarse = analyze_point(m, np.zeros(3), AnalysisOptions(level=15))
            fine = analyze_point(m, np.zeros(3), AnalysisOptions(level=30))
            np.testing.assert_allclose(fine.environment['gamma'], coarse.environment['gamma'], rtol=1e-8)
            self.assertAlmostEqual(fine.torsion_norm, coarse.torsion_norm, delta=1e-8 * max(1.0, coarse.torsion_norm))

    def test_stage_failure_is_recorded(self):
        """Test that failures become a labelled error on the report"""
        report = analyze_point(FinslerMetricSpec.euclidean(3), np.zeros(2))
        self.assertEqual(report.error['stage'], 'validate')
        self.assertIsNone(report.verdict)
        self.assertTrue(report.failed)

        report = analyze_point(randers(['0', '0', '1.5'], mode=AVERAGED), np.zeros(3), AnalysisOptions(level=6))
        self.assertEqual(report.error['stage'], 'frame')
        self.assertEqual(report.summary_row()['verdict'], 'error')

    def test_report_serialization(self):
        """Test that timings stay out of the report unless asked for"""
        report = analyze_point(randers(['0', '0', '0.3']), np.zeros(3), AnalysisOptions(level=6))
        self.assertNotIn('timings', report.to_dict())
        self.assertIn('solve', report.to_dict(include_timings=True)['timings'])
        self.assertEqual(set(report.to_dict()['torsion']), {'frame', 'original'})
        self.assertEqual(report.summary_row()['point'], '0.0 0.0 0.0')
