import math

import numpy as np
from django.test import SimpleTestCase

from metrics.functions.connection import (
    averaged_metric, build_point_frame, christoffel_star, h_star_field, orthonormal_frame,
    riemannian_proportionality
)
from metrics.functions.exceptions import (
    ArityError, ExprDomainError, ExprSyntaxError, FrameError, InvalidMetricError, QuadratureError,
    UnknownIdentifierError, ZeroDirectionError
)
from metrics.functions.expressions import diff_expr, eval_expr, max_index, parse_expr, print_expr
from metrics.functions.metric import (
    AVERAGED, EXPLICIT_RANDERS_ALPHA, FinslerMetricSpec, eval_F, fundamental_tensor, partials_F, randers_beta_norm,
    validate_metric
)
from metrics.functions.quadrature import (
    SphereRule, compensated_sum, indicatrix_pullback_weight, indicatrix_volume, integrate_sphere, sphere_area,
    sphere_rule
)

FOUR_PI = 4.0 * math.pi

QUARTIC_3D = 'sqrt(y1^2 + y2^2 + y3^2) + 0.1*(y1^4 + y2^4 + y3^4)^0.25'


def flat_alpha(n):
    return [['1' if i == j else '0' for j in range(n)] for i in range(n)]


def randers(beta, mode=EXPLICIT_RANDERS_ALPHA, alpha=None):
    return FinslerMetricSpec.randers(alpha or flat_alpha(len(beta)), beta, mode)


class ExpressionParsingTest(SimpleTestCase):
    def test_constant_expression(self):
        """Test that '1 + 0*x1' evaluates to 1 everywhere"""
        e = parse_expr('1 + 0*x1')
        for x in ([0.0], [2.5], [-7.0]):
            self.assertEqual(eval_expr(e, x), 1.0)

    def test_hand_evaluations(self):
        """Test that parsed expressions follow the usual mathematical reading"""
        self.assertEqual(eval_expr(parse_expr('cos(x3)'), [0, 0, 0]), 1.0)
        self.assertEqual(eval_expr(parse_expr('x1^2 + sin(x2)*x3'), [2, 0, 5]), 4.0)
        self.assertEqual(eval_expr(parse_expr('3.5'), [9, 9]), 3.5)
        self.assertEqual(eval_expr(parse_expr('sqrt(x1)'), [4]), 2.0)
        self.assertAlmostEqual(eval_expr(parse_expr('exp(log(x1))'), [0.7]), 0.7, delta=1e-15)

    def test_precedence(self):
        """Test that ^ binds tighter than unary minus, which binds tighter than * and /"""
        self.assertEqual(eval_expr(parse_expr('-x1^2'), [3]), -9.0)
        self.assertEqual(eval_expr(parse_expr('2^3^2'), [0]), 512.0)
        self.assertEqual(eval_expr(parse_expr('1 - 2 - 3'), [0]), -4.0)
        self.assertEqual(eval_expr(parse_expr('8 / 4 / 2'), [0]), 1.0)
        self.assertEqual(eval_expr(parse_expr('2*(1 + x1)'), [1]), 4.0)
        self.assertAlmostEqual(eval_expr(parse_expr('cos(pi)'), [0]), -1.0, delta=1e-15)

    def test_syntax_error_reports_byte_offset(self):
        """Test that a malformed expression names the byte offset of the problem"""
        with self.assertRaises(ExprSyntaxError) as context:
            parse_expr('1 + * 2')
        self.assertEqual(context.exception.offset, 4)
        self.assertIn('at byte 4', str(context.exception))

        with self.assertRaises(ExprSyntaxError) as context:
            parse_expr('(x1 + 1')
        self.assertEqual(context.exception.offset, 7)

    def test_unknown_identifier(self):
        """Test that identifiers outside the grammar are rejected"""
        with self.assertRaises(UnknownIdentifierError) as context:
            parse_expr('x1 + tan(x2)')
        self.assertEqual(context.exception.name, 'tan')
        with self.assertRaises(UnknownIdentifierError):
            parse_expr('z1')

    def test_arity_error(self):
        """Test that functions take exactly one argument"""
        with self.assertRaises(ArityError):
            parse_expr('sin(x1, x2)')
        with self.assertRaises(ArityError):
            parse_expr('sqrt + 1')

    def test_domain_errors(self):
        """Test that division by zero, log of non-positive and sqrt of negative raise"""
        with self.assertRaises(ExprDomainError):
            eval_expr(parse_expr('1/x1'), [0.0])
        with self.assertRaises(ExprDomainError):
            eval_expr(parse_expr('log(x1)'), [0.0])
        with self.assertRaises(ExprDomainError):
            eval_expr(parse_expr('sqrt(x1)'), [-1.0])
        with self.assertRaises(ExprDomainError):
            eval_expr(parse_expr('x3'), [1.0, 2.0])

    def test_print_round_trip(self):
        """Test that printing and re-parsing gives the same tree"""
        corpus = [
            '1 + 0*x1', 'x1^2 + sin(x2)*x3', '-x1^-2', '(x1 - x2)/(1 + x3^2)', 'exp(-0.5*x1)*cos(pi*x2)',
            'sqrt(y1^2 + y2^2) + 0.3*y2', 'log(2 + x1) - -x2', '1.5e-3*x1',
        ]
        for text in corpus:
            parsed = parse_expr(text)
            self.assertEqual(parse_expr(print_expr(parsed)), parsed, text)

    def test_max_index(self):
        """Test that the highest variable index is reported per kind"""
        e = parse_expr('x1*y3 + x2')
        self.assertEqual(max_index(e), 2)
        self.assertEqual(max_index(e, 'y'), 3)


class ExpressionDerivativeTest(SimpleTestCase):
    def test_hand_derivatives(self):
        """Test the symbolic derivative on hand-checked cases"""
        self.assertEqual(eval_expr(diff_expr(parse_expr('x1^2'), 1), [3.0]), 6.0)
        self.assertEqual(eval_expr(diff_expr(parse_expr('cos(x3)'), 3), [0, 0, 0]), 0.0)
        value = eval_expr(diff_expr(parse_expr('x1*sin(x2)'), 2), [2.0, 1.5707963267948966])
        self.assertAlmostEqual(value, 0.0, delta=1e-12)

    def test_derivative_of_absent_variable_is_zero(self):
        """Test that differentiating in a variable the expression ignores gives zero"""
        self.assertEqual(eval_expr(diff_expr(parse_expr('x1^3 + cos(x2)'), 3), [1, 2, 3]), 0.0)

    def test_mixed_partials_commute(self):
        """Test that d/dxi d/dxj equals d/dxj d/dxi"""
        e = parse_expr('x1^2*sin(x2) + exp(x1*x3)/(2 + cos(x2)) + sqrt(1 + x3^2)*log(2 + x1)')
        point = [0.3, -0.7, 0.4]
        for i in range(1, 4):
            for j in range(i + 1, 4):
                ij = eval_expr(diff_expr(diff_expr(e, i), j), point)
                ji = eval_expr(diff_expr(diff_expr(e, j), i), point)
                self.assertAlmostEqual(ij, ji, delta=1e-12 * max(1.0, abs(ij)))

    def test_agrees_with_central_differences(self):
        """Test that symbolic derivatives match central differences on a safe box"""
        corpus = [
            'x1^2*sin(x2) + x3', 'exp(0.5*x1)*cos(x2*x3)', 'sqrt(2 + x1^2 + x2^2)', 'log(3 + x1*x2) - x3^3',
            '(1 + x1)/(2 + sin(x3))', '(2 + x1)^(1 + 0.5*x2)',
        ]
        rng = np.random.default_rng(7)
        step = 1e-6
        for text in corpus:
            e = parse_expr(text)
            for _ in range(5):
                x = rng.uniform(-0.8, 0.8, 3)
                for i in range(1, 4):
                    shift = np.zeros(3)
                    shift[i - 1] = step
                    numeric = (eval_expr(e, x + shift) - eval_expr(e, x - shift)) / (2 * step)
                    exact = eval_expr(diff_expr(e, i), x)
                    self.assertAlmostEqual(exact, numeric, delta=1e-6 * max(1.0, abs(exact)), msg=text)

    def test_expression_in_directions(self):
        """Test that y variables evaluate column-wise over a stack of directions"""
        e = parse_expr('sqrt(y1^2 + y2^2)')
        Y = np.array([[3.0, 0.0], [4.0, 2.0]])
        np.testing.assert_allclose(eval_expr(e, [0, 0], Y), [5.0, 2.0])


class FinslerMetricTest(SimpleTestCase):
    def setUp(self):
        """Set up the Euclidean and b = 0.3 Randers metrics"""
        self.euclidean = FinslerMetricSpec.euclidean(3)
        self.randers = randers(['0', '0', '0.3'])
        self.origin = np.zeros(3)

    def test_eval_F(self):
        """Test F on the Euclidean and Randers examples"""
        self.assertEqual(eval_F(FinslerMetricSpec.euclidean(2), [0, 0], [3, 4]), 5.0)
        self.assertAlmostEqual(eval_F(self.randers, self.origin, [0, 0, 1]), 1.3, delta=1e-15)
        self.assertAlmostEqual(eval_F(self.randers, self.origin, [0, 0, -1]), 0.7, delta=1e-15)

    def test_zero_direction_raises(self):
        """Test that F refuses the zero direction"""
        with self.assertRaises(ZeroDirectionError):
            eval_F(self.euclidean, self.origin, [0, 0, 0])
        with self.assertRaises(ZeroDirectionError):
            partials_F(self.randers, self.origin, [0, 0, 0])

    def test_partials(self):
        """Test the analytic Randers partial derivatives"""
        dF_dy, dF_dx = partials_F(self.euclidean, self.origin, [0, 0, 1])
        np.testing.assert_allclose(dF_dy, [0, 0, 1])
        np.testing.assert_allclose(dF_dx, [0, 0, 0])

        dF_dy, _ = partials_F(self.randers, self.origin, [1, 0, 0])
        np.testing.assert_allclose(dF_dy, [1.0, 0.0, 0.3], atol=1e-15)

        _, dF_dx = partials_F(randers(['0', '0', '1 + x1']), self.origin, [0, 0, 1])
        np.testing.assert_allclose(dF_dx, [1.0, 0.0, 0.0], atol=1e-15)

    def test_fundamental_tensor(self):
        """Test g on the Euclidean metric and y.g.y = F^2 on the Randers metric"""
        np.testing.assert_allclose(fundamental_tensor(self.euclidean, self.origin, [0.2, -1, 3]), np.eye(3),
                                   atol=1e-14)
        y = np.array([0.0, 0.0, 1.0])
        g = fundamental_tensor(self.randers, self.origin, y)
        np.testing.assert_allclose(g, g.T)
        self.assertAlmostEqual(y @ g @ y, 1.69, delta=1.69e-8)

    def test_generic_quartic_is_strongly_convex(self):
        """Test that the quartic-perturbed metric has a positive-definite g at sampled directions"""
        m = FinslerMetricSpec.generic(QUARTIC_3D, 3)
        rng = np.random.default_rng(3)
        Y = rng.standard_normal((3, 25))
        g = fundamental_tensor(m, self.origin, Y)
        self.assertEqual(g.shape, (25, 3, 3))
        self.assertTrue(np.all(np.linalg.eigvalsh(g)[:, 0] > 0))

    def test_numeric_hessian_matches_randers(self):
        """Test that the generic finite-difference path reproduces the analytic Randers tensor"""
        generic = FinslerMetricSpec.generic('sqrt(y1^2 + y2^2 + y3^2) + 0.3*y3', 3)
        rng = np.random.default_rng(11)
        Y = rng.standard_normal((3, 10))
        np.testing.assert_allclose(fundamental_tensor(generic, self.origin, Y),
                                   fundamental_tensor(self.randers, self.origin, Y), atol=1e-8)
        np.testing.assert_allclose(partials_F(generic, self.origin, Y)[0],
                                   partials_F(self.randers, self.origin, Y)[0], atol=1e-8)

    def test_homogeneity_and_euler_identity(self):
        """Test F(x, ty) = tF(x, y) and y.dF/dy = F"""
        m = randers(['0.1*x1', 'cos(x2)/5', '0.2'], alpha=[['2', '0.1', '0'], ['0.1', '1', '0'], ['0', '0', '1']])
        x = np.array([0.2, -0.4, 0.1])
        y = np.array([0.3, -1.2, 0.8])
        F = eval_F(m, x, y)
        for t in (0.5, 2.0, 10.0):
            self.assertAlmostEqual(eval_F(m, x, t * y), t * F, delta=1e-9 * t * F)
        dF_dy, _ = partials_F(m, x, y)
        self.assertAlmostEqual(y @ dF_dy, F, delta=1e-9 * F)

    def test_validate_metric(self):
        """Test the validation report on valid and invalid Randers metrics"""
        report = validate_metric(self.euclidean, self.origin, 32)
        self.assertTrue(report.passed)
        self.assertAlmostEqual(report.min_eigenvalue, 1.0, delta=1e-12)

        report = validate_metric(self.randers, self.origin, 32)
        self.assertTrue(report.passed)
        self.assertAlmostEqual(report.beta_norm, 0.3, delta=1e-15)

        report = validate_metric(randers(['0', '0', '1.1']), self.origin, 32)
        self.assertFalse(report.passed)
        self.assertAlmostEqual(report.beta_norm, 1.1, delta=1e-15)
        self.assertTrue(any('beta' in failure for failure in report.failures))

    def test_beta_norm_uses_alpha(self):
        """Test that the beta norm is measured with the inverse of alpha"""
        m = randers(['2', '0', '0'], alpha=[['4', '0', '0'], ['0', '1', '0'], ['0', '0', '1']])
        self.assertAlmostEqual(randers_beta_norm(m, self.origin), 1.0, delta=1e-15)

    def test_invalid_specs(self):
        """Test that malformed metric definitions are refused at construction"""
        with self.assertRaises(InvalidMetricError):
            FinslerMetricSpec.randers(flat_alpha(3), ['0', '0'])
        with self.assertRaises(InvalidMetricError):
            FinslerMetricSpec.randers(flat_alpha(2), ['0', 'x3'])
        with self.assertRaises(InvalidMetricError):
            FinslerMetricSpec.generic('sqrt(y1^2 + y2^2)', 2, EXPLICIT_RANDERS_ALPHA)
        with self.assertRaises(InvalidMetricError):
            FinslerMetricSpec.euclidean(1)


class SphereQuadratureTest(SimpleTestCase):
    def test_circle_rule(self):
        """Test the trapezoid rule on the circle"""
        rule = sphere_rule(2, 8)
        self.assertEqual(rule.size, 16)
        self.assertAlmostEqual(float(rule.weights.sum()), 2 * math.pi, delta=1e-12)

    def test_degree_two_exactness(self):
        """Test that second moments are area/n and mixed moments vanish"""
        rule = sphere_rule(3, 20)
        u = rule.nodes
        self.assertAlmostEqual(integrate_sphere(rule, u[0] ** 2), FOUR_PI / 3, delta=1e-10)
        self.assertAlmostEqual(integrate_sphere(rule, u[0] * u[1]), 0.0, delta=1e-12)
        self.assertAlmostEqual(float(rule.weights.sum()), FOUR_PI, delta=FOUR_PI * 1e-10)

    def test_integrate_sphere(self):
        """Test constant, squared and odd integrands in 3D"""
        rule = sphere_rule(3, 30)
        self.assertAlmostEqual(integrate_sphere(rule, np.ones(rule.size)), FOUR_PI, delta=1e-12)
        self.assertAlmostEqual(integrate_sphere(rule, rule.nodes[2] ** 2), FOUR_PI / 3, delta=1e-12)
        self.assertAlmostEqual(integrate_sphere(rule, rule.nodes[0] * rule.nodes[2]), 0.0, delta=1e-12)

    def test_higher_dimensions(self):
        """Test total area and second moments for n = 4 and n = 5"""
        for n in (4, 5):
            rule = sphere_rule(n, 6)
            self.assertAlmostEqual(float(rule.weights.sum()), sphere_area(n), delta=1e-10 * sphere_area(n))
            np.testing.assert_allclose(np.linalg.norm(rule.nodes, axis=0), 1.0, atol=1e-14)
            moments = integrate_sphere(rule, np.einsum('ik,jk->kij', rule.nodes, rule.nodes))
            np.testing.assert_allclose(moments, sphere_area(n) / n * np.eye(n), atol=1e-10)

    def test_length_mismatch(self):
        """Test that the node count must match"""
        rule = sphere_rule(3, 4)
        with self.assertRaises(QuadratureError):
            integrate_sphere(rule, np.ones(rule.size + 1))

    def test_unsupported_arguments(self):
        """Test dimension and level limits"""
        with self.assertRaises(QuadratureError):
            sphere_rule(7, 4)
        with self.assertRaises(QuadratureError):
            sphere_rule(3, 0)
        self.assertEqual(sphere_rule(7, 2, max_dimension=8).dimension, 7)

    def test_compensated_sum(self):
        """Test that compensated summation recovers small terms lost to cancellation"""
        self.assertEqual(float(compensated_sum([1e16, 1.0, -1e16])), 1.0)
        values = np.random.default_rng(5).standard_normal(1000)
        self.assertEqual(float(compensated_sum(values)), float(compensated_sum(values.copy())))

    def test_indicatrix_pullback(self):
        """Test the pullback map and density on the Euclidean and Randers indicatrices"""
        origin = np.zeros(3)
        point, weight = indicatrix_pullback_weight(FinslerMetricSpec.euclidean(3), origin, [0, 0, 1])
        np.testing.assert_allclose(point, [0, 0, 1])
        self.assertAlmostEqual(weight, 1.0, delta=1e-14)

        point, weight = indicatrix_pullback_weight(randers(['0', '0', '0.3']), origin, [0, 0, 1])
        np.testing.assert_allclose(point, [0, 0, 1 / 1.3])
        # det g = (F/alpha)^(n+1) det(alpha) for Randers
        self.assertAlmostEqual(weight, 1.3 ** 2 / 1.3 ** 3, delta=1e-12)

    def test_indicatrix_volume(self):
        """Test that Riemannian indicatrices have the sphere area as volume"""
        rule = sphere_rule(3, 30)
        origin = np.zeros(3)
        for m in (FinslerMetricSpec.euclidean(3),
                  FinslerMetricSpec.randers([['2', '0', '0'], ['0', '1', '0'], ['0', '0', '1']], ['0', '0', '0'])):
            self.assertAlmostEqual(indicatrix_volume(m, origin, rule), FOUR_PI, delta=FOUR_PI * 1e-10)

    def test_randers_indicatrix_volume(self):
        """Test the flat Randers volume, whose density on the unit sphere is 1/F"""
        b = 0.3
        expected = 2 * math.pi / b * math.log((1 + b) / (1 - b))
        volume = indicatrix_volume(randers(['0', '0', str(b)]), np.zeros(3), sphere_rule(3, 30))
        self.assertAlmostEqual(volume, expected, delta=expected * 1e-10)

    def test_homothety(self):
        """Test that F = 2|y| has unit density, so the volume stays 4 pi"""
        m = FinslerMetricSpec.generic('2*sqrt(y1^2 + y2^2 + y3^2)', 3)
        origin = np.zeros(3)
        point, weight = indicatrix_pullback_weight(m, origin, [0, 0, 1])
        np.testing.assert_allclose(point, [0, 0, 0.5])
        self.assertAlmostEqual(weight, 1.0, delta=1e-6)
        self.assertAlmostEqual(indicatrix_volume(m, origin, sphere_rule(3, 10)), FOUR_PI, delta=1e-5)


class EnvironmentConnectionTest(SimpleTestCase):
    def setUp(self):
        """Set up a 3D rule"""
        self.rule = sphere_rule(3, 12)
        self.origin = np.zeros(3)

    def test_averaged_metric_euclidean(self):
        """Test that the averaged Euclidean metric is area times the identity"""
        np.testing.assert_allclose(averaged_metric(FinslerMetricSpec.euclidean(3), self.origin, self.rule),
                                   FOUR_PI * np.eye(3), atol=1e-12)
        np.testing.assert_allclose(averaged_metric(FinslerMetricSpec.euclidean(2), [0, 0], sphere_rule(2, 16)),
                                   2 * math.pi * np.eye(2), atol=1e-12)
        np.testing.assert_allclose(
            averaged_metric(FinslerMetricSpec.euclidean(3), self.origin, self.rule, normalized=True),
            np.eye(3), atol=1e-13)

    def test_averaged_metric_randers(self):
        """Test that the averaged b = 0.3 Randers metric is diagonal with gamma_11 = gamma_22 != gamma_33"""
        gamma = averaged_metric(randers(['0', '0', '0.3']), self.origin, self.rule)
        np.testing.assert_allclose(gamma - np.diag(np.diag(gamma)), 0.0, atol=1e-12)
        self.assertAlmostEqual(gamma[0, 0], gamma[1, 1], delta=1e-12)
        self.assertGreater(abs(gamma[2, 2] - gamma[0, 0]), 1e-3)
        self.assertTrue(np.all(np.linalg.eigvalsh(gamma) > 0))

    def test_averaged_metric_ignores_node_order(self):
        """Test that shuffling the quadrature nodes leaves gamma unchanged"""
        order = np.random.default_rng(11).permutation(self.rule.size)
        shuffled = SphereRule(self.rule.dimension, self.rule.level, self.rule.nodes[:, order],
                              self.rule.weights[order])
        point = np.array([0.4, -0.3, 0.2])
        for m in (randers(['0.2*x2', '0.1', '0.3*cos(x1)'], mode=AVERAGED), FinslerMetricSpec.generic(QUARTIC_3D, 3)):
            gamma = averaged_metric(m, point, self.rule)
            np.testing.assert_allclose(averaged_metric(m, point, shuffled), gamma,
                                       rtol=0.0, atol=1e-13 * np.abs(gamma).max())

    def test_orthonormal_frame(self):
        """Test the Cholesky frame on the scalar and diagonal examples"""
        np.testing.assert_allclose(orthonormal_frame(np.eye(3)), np.eye(3))
        np.testing.assert_allclose(orthonormal_frame(FOUR_PI * np.eye(3)), np.eye(3) / math.sqrt(FOUR_PI))
        np.testing.assert_allclose(orthonormal_frame(np.diag([2.0, 3.0])), np.diag([2 ** -0.5, 3 ** -0.5]))
        gamma = np.array([[2.0, 0.5, 0.1], [0.5, 1.0, 0.2], [0.1, 0.2, 3.0]])
        A = orthonormal_frame(gamma)
        np.testing.assert_allclose(A.T @ gamma @ A, np.eye(3), atol=1e-14)

    def test_orthonormal_frame_rejects_indefinite(self):
        """Test that a non-SPD environment metric raises"""
        with self.assertRaises(FrameError):
            orthonormal_frame(np.diag([1.0, -1.0]))
        with self.assertRaises(FrameError):
            orthonormal_frame(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_christoffels_vanish_for_flat_environments(self):
        """Test that Euclidean and flat explicit environments have no Christoffels"""
        self.assertEqual(float(np.abs(christoffel_star(FinslerMetricSpec.euclidean(3), self.origin, self.rule)).max()),
                         0.0)
        flat = randers(['0', '0', '0.3*cos(x1)'])
        self.assertEqual(float(np.abs(christoffel_star(flat, self.origin, self.rule)).max()), 0.0)

    def test_explicit_christoffels_are_symbolic(self):
        """Test the explicit-alpha Christoffels against the hand values for alpha = diag(1, exp(2 x1), 1)"""
        m = randers(['0', '0', '0.2'], alpha=[['1', '0', '0'], ['0', 'exp(2*x1)', '0'], ['0', '0', '1']])
        christoffel = christoffel_star(m, self.origin, self.rule)
        expected = np.zeros((3, 3, 3))
        expected[0, 1, 1] = -1.0
        expected[1, 0, 1] = expected[1, 1, 0] = 1.0
        np.testing.assert_allclose(christoffel, expected, atol=1e-12)

    def test_averaged_christoffels_follow_beta(self):
        """Test that an x-dependent beta bends the averaged environment"""
        m = randers(['0', '0', '0.3 + 0.2*x1'], mode='averaged')
        frame = build_point_frame(m, self.origin, self.rule)
        self.assertGreater(float(np.abs(frame.christoffel).max()), 1e-6)
        self.assertLess(frame.cancellation, 1e-4)
        self.assertTrue(frame.uses_finite_differences)

    def test_h_star(self):
        """Test h* on the Euclidean, constant beta and (1 + x1) dx3 examples"""
        for m in (FinslerMetricSpec.euclidean(3), randers(['0', '0', '0.3'])):
            frame = build_point_frame(m, self.origin, self.rule)
            self.assertEqual(float(np.abs(h_star_field(m, self.origin, frame, self.rule).values).max()), 0.0)

        m = randers(['0', '0', '1 + x1'])
        frame = build_point_frame(m, self.origin, self.rule)
        hstar = h_star_field(m, self.origin, frame, self.rule)
        np.testing.assert_allclose(hstar.values[0], self.rule.nodes[2], atol=1e-15)
        np.testing.assert_allclose(hstar.values[1:], 0.0, atol=1e-15)
        self.assertAlmostEqual(hstar.l2_norm(), math.sqrt(FOUR_PI / 3), delta=1e-12)

    def test_riemannian_proportionality(self):
        """Test that F*^2 / F^2 is constant for the Euclidean metric"""
        m = FinslerMetricSpec.euclidean(3)
        frame = build_point_frame(m, self.origin, self.rule)
        check = riemannian_proportionality(m, self.origin, frame, self.rule)
        self.assertAlmostEqual(check['mean_ratio'], FOUR_PI, delta=1e-10)
        self.assertLess(check['spread'], 1e-8)
