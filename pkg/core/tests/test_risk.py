from fractions import Fraction

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase, override_settings
from numpy.testing import assert_allclose

from core.exceptions import (
    CombinatorialLimitError,
    ConeEmptyDualError,
    InvalidSpecError,
    NotAParentError,
    ParseError,
)
from core.risk import (
    DynamicRiskMeasure,
    RiskMeasureSpec,
    RiskVariant,
    acceptability,
    build_one_step,
    check_coherence_axioms,
    check_time_consistency,
    dual_representation,
    extract_dual_set,
    is_A0,
    parse_risk_measure,
    rho_by_lp,
    rho_dynamic,
    rho_from_cone,
    rho_path,
    validate_acceptance_cone,
)
from data.market_tree import NodeFunction
from data.model_loader import load_model
from .factories import one_step_tree, random_claim, random_kernels_spec, random_na_tree, random_spec

TRINOMIAL = [2, 1, 0.5]
THIRDS = [Fraction(1, 3)] * 3


def sorted_rows(matrix):
    return sorted(tuple(float(v) for v in row) for row in matrix)


class OneStepMeasureTests(SimpleTestCase):
    def test_worst_case_is_minus_the_minimum(self):
        tree = one_step_tree(1, [2, 0.5], [0.5, 0.5])
        measure = build_one_step(tree, RiskMeasureSpec.worst_case(), 0)
        self.assertEqual(measure.rho([3, -1]), 1.0)
        self.assertEqual(measure.rho([3, 1]), -1.0)

    def test_cvar_vertices_on_trinomial(self):
        tree = one_step_tree(1, TRINOMIAL, THIRDS, exact=True)
        measure = build_one_step(tree, RiskMeasureSpec.cvar(Fraction(9, 10)), 0)
        expected = {(Fraction(10, 27), Fraction(10, 27), Fraction(7, 27)),
                    (Fraction(10, 27), Fraction(7, 27), Fraction(10, 27)),
                    (Fraction(7, 27), Fraction(10, 27), Fraction(10, 27))}
        self.assertEqual({tuple(v) for v in measure.dual_vertices}, expected)

    def test_cvar_on_binomial(self):
        tree = one_step_tree(1, [2, 0.5], [0.5, 0.5])
        measure = build_one_step(tree, RiskMeasureSpec.cvar(0.75), 0)
        assert_allclose(sorted_rows(measure.dual_vertices), sorted_rows([[2 / 3, 1 / 3], [1 / 3, 2 / 3]]), atol=1e-12)

    def test_cvar_with_alpha_one_is_the_expectation(self):
        tree = one_step_tree(1, TRINOMIAL, [0.2, 0.5, 0.3])
        measure = build_one_step(tree, RiskMeasureSpec.cvar(1.0), 0)
        self.assertEqual(len(measure.dual_vertices), 1)
        self.assertAlmostEqual(measure.rho([1, 2, 3]), -(0.2 + 1.0 + 0.9), places=12)

    def test_kernels_keep_only_hull_vertices(self):
        tree = one_step_tree(1, [2, 0.5], [0.5, 0.5])
        spec = RiskMeasureSpec.kernels({0: [[0.2, 0.8], [0.8, 0.2], [0.5, 0.5]]})
        measure = build_one_step(tree, spec, 0)
        self.assertEqual(sorted_rows(measure.dual_vertices), [(0.2, 0.8), (0.8, 0.2)])

    def test_kernels_must_be_probability_vectors(self):
        tree = one_step_tree(1, [2, 0.5], [0.5, 0.5])
        with self.assertRaises(InvalidSpecError):
            build_one_step(tree, RiskMeasureSpec.kernels({0: [[0.7, 0.7]]}), 0)
        with self.assertRaises(InvalidSpecError):
            build_one_step(tree, RiskMeasureSpec.kernels({0: [[0.5, 0.25, 0.25]]}), 0)

    def test_kernels_missing_node(self):
        tree = one_step_tree(1, [2, 0.5], [0.5, 0.5])
        with self.assertRaises(InvalidSpecError):
            build_one_step(tree, RiskMeasureSpec.kernels({}), 0)

    def test_terminal_node_has_no_measure(self):
        tree = one_step_tree(1, [2, 0.5], [0.5, 0.5])
        with self.assertRaises(NotAParentError):
            build_one_step(tree, RiskMeasureSpec.worst_case(), 1)

    @override_settings(RISKHEDGE_MAX_CHILDREN=2)
    def test_child_limit(self):
        tree = one_step_tree(1, TRINOMIAL)
        with self.assertRaises(CombinatorialLimitError):
            build_one_step(tree, RiskMeasureSpec.cvar(0.5), 0)

    def test_alpha_range(self):
        with self.assertRaises(InvalidSpecError):
            RiskMeasureSpec.cvar(0)
        with self.assertRaises(InvalidSpecError):
            RiskMeasureSpec.cvar(1.5)

    def test_lp_rho_matches_vertex_rho(self):
        rng = np.random.default_rng(3)
        tree = one_step_tree(1, [2, 1, 0.5, 0.2], [0.1, 0.4, 0.3, 0.2])
        for spec in (RiskMeasureSpec.worst_case(), RiskMeasureSpec.cvar(0.35),
                     RiskMeasureSpec.kernels({0: [[0.25, 0.25, 0.25, 0.25], [0.1, 0.6, 0.2, 0.1]]})):
            measure = build_one_step(tree, spec, 0)
            for _ in range(20):
                x = rng.normal(size=4)
                self.assertAlmostEqual(measure.rho(x), rho_by_lp(tree, spec, 0, x), places=9)


class ConeTests(SimpleTestCase):
    GENERATORS = [[1, 0], [0, 1], [1, -0.5]]

    def test_cone_dual_vertices(self):
        tree = one_step_tree(1, [2, 0.5], [0.5, 0.5])
        measure = build_one_step(tree, RiskMeasureSpec.cone({0: self.GENERATORS}), 0)
        assert_allclose(sorted_rows(measure.dual_vertices), sorted_rows([[1, 0], [1 / 3, 2 / 3]]), atol=1e-12)

    def test_rho_from_cone_matches_dual_vertices(self):
        tree = one_step_tree(1, [2, 0.5], [0.5, 0.5])
        measure = build_one_step(tree, RiskMeasureSpec.cone({0: self.GENERATORS}), 0)
        for x in ([-1, 2], [2, -1], [0.3, 0.7], [-2, -3]):
            self.assertAlmostEqual(rho_from_cone(self.GENERATORS, x), measure.rho(x), places=9)
        self.assertAlmostEqual(rho_from_cone(self.GENERATORS, [-1, 2]), 1.0, places=9)
        self.assertAlmostEqual(rho_from_cone(self.GENERATORS, [2, -1]), 0.0, places=9)

    def test_cone_validation(self):
        self.assertTrue(validate_acceptance_cone(self.GENERATORS).valid)
        report = validate_acceptance_cone([[1, 0]])
        self.assertFalse(report.monotone)
        report = validate_acceptance_cone([[1, 0], [0, 1], [0, -1]])
        self.assertTrue(report.monotone)
        self.assertFalse(report.no_free_lunch)

    def test_cone_errors(self):
        tree = one_step_tree(1, [2, 0.5], [0.5, 0.5])
        with self.assertRaises(InvalidSpecError):
            build_one_step(tree, RiskMeasureSpec.cone({0: [[1, 0]]}), 0)
        with self.assertRaises(ConeEmptyDualError):
            build_one_step(tree, RiskMeasureSpec.cone({0: [[1, 0], [0, 1], [-1, -1]]}), 0)
        with self.assertRaises(InvalidSpecError):
            build_one_step(tree, RiskMeasureSpec.cone({0: [[1, 0], [0, 1], [0, -1]]}), 0)


class ParseTests(SimpleTestCase):
    def test_parse_variants(self):
        self.assertEqual(parse_risk_measure({'type': 'worst_case'}).variant, RiskVariant.WORST_CASE)
        spec = parse_risk_measure({'type': 'cvar', 'alpha': 0.5})
        self.assertEqual(spec.alpha, 0.5)
        spec = parse_risk_measure({'type': 'kernels', 'per_node': {'0': [[0.5, 0.5]]}})
        self.assertEqual(list(spec.per_node), [0])

    def test_overrides(self):
        spec = parse_risk_measure({
            'type': 'worst_case',
            'overrides': {'1': {'type': 'cvar', 'alpha': 0.5}, '2': {'type': 'kernels', 'kernels': [[1, 0]]}},
        })
        self.assertEqual(spec.for_node(1).variant, RiskVariant.CVAR)
        self.assertEqual(spec.for_node(2).per_node, {2: ((1.0, 0.0),)})
        self.assertEqual(spec.for_node(0).variant, RiskVariant.WORST_CASE)

    def test_parse_errors(self):
        for payload in ({}, {'type': 'entropic'}, {'type': 'cvar'}, {'type': 'cvar', 'alpha': 'high'},
                        {'type': 'kernels', 'per_node': {'root': [[1]]}}, {'type': 'kernels', 'per_node': {'0': []}}):
            with self.assertRaises(ParseError):
                parse_risk_measure(payload)

    def test_exact_alpha_is_a_fraction(self):
        spec = parse_risk_measure({'type': 'cvar', 'alpha': Fraction(3, 4)}, exact=True)
        self.assertEqual(spec.alpha, Fraction(3, 4))


class DynamicMeasureTests(SimpleTestCase):
    def setUp(self):
        with open(settings.BASE_DIR / 'data' / 'models' / 'two_period_binomial.json') as handle:
            self.tree, self.spec, self.payoff = load_model(handle.read())
        self.drm = DynamicRiskMeasure.build(self.tree, self.spec)

    def test_worst_case_composition(self):
        path = rho_path(self.drm, self.payoff.values)
        self.assertEqual(path[0][0], -0.0)
        self.assertEqual(path[1][1], -0.0)
        self.assertEqual(path[2][3], -3.0)
        losses = NodeFunction(2, {3: -1.0, 4: 2.0, 5: 0.0, 6: 1.0})
        self.assertEqual(rho_dynamic(self.drm, losses, 0)[0], 1.0)

    def test_time_bounds(self):
        with self.assertRaises(ValueError):
            rho_path(self.drm, self.payoff.values, t=3)

    def test_two_sided_acceptability(self):
        zero = NodeFunction.constant(self.tree, 2, 0)
        self.assertTrue(all(v for _, v in is_A0(self.drm, zero, 0).items()))
        self.assertFalse(is_A0(self.drm, self.payoff.values, 0)[0])

    def test_dual_set_reproduces_the_composed_measure(self):
        dual_sets = extract_dual_set(self.drm, 0)
        self.assertEqual(len(dual_sets[0].measures), 4)
        for X in (self.payoff.values, NodeFunction(2, {3: -1.0, 4: 2.0, 5: 0.5, 6: 1.0})):
            self.assertAlmostEqual(dual_representation(self.drm, X, 0, dual_sets)[0],
                                   rho_dynamic(self.drm, X, 0)[0], places=12)

    @override_settings(RISKHEDGE_DUAL_SET_CAP=3)
    def test_dual_set_cap(self):
        with self.assertRaises(CombinatorialLimitError):
            extract_dual_set(self.drm, 0)


class PropertyCorpusTests(SimpleTestCase):
    def test_coherence_axioms(self):
        rng = np.random.default_rng(11)
        variants = {
            RiskVariant.WORST_CASE: lambda tree: RiskMeasureSpec.worst_case(),
            RiskVariant.CVAR: lambda tree: RiskMeasureSpec.cvar(float(np.round(rng.uniform(0.3, 1.0), 3))),
            RiskVariant.KERNELS: lambda tree: random_kernels_spec(rng, tree),
        }
        for variant, make_spec in variants.items():
            for _ in range(20):
                tree = random_na_tree(rng, horizon=2)
                drm = DynamicRiskMeasure.build(tree, make_spec(tree))
                samples = [(random_claim(rng, tree), random_claim(rng, tree)) for _ in range(50)]
                scalars = [(float(rng.normal()), float(rng.uniform(0, 3))) for _ in range(50)]
                report = check_coherence_axioms(drm, samples, scalars, tol=1e-9)
                self.assertTrue(report.ok, (variant, report.violations[:3]))
                self.assertGreater(report.checked, 0)

    def test_time_consistency(self):
        rng = np.random.default_rng(12)
        for _ in range(15):
            tree = random_na_tree(rng)
            drm = DynamicRiskMeasure.build(tree, random_spec(rng, tree))
            report = check_time_consistency(drm, [random_claim(rng, tree) for _ in range(5)], tol=1e-12)
            self.assertTrue(report.ok, report.violations[:3])

    def test_dual_representation_on_corpus(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            tree = random_na_tree(rng, horizon=2, max_children=3)
            drm = DynamicRiskMeasure.build(tree, random_spec(rng, tree))
            X = random_claim(rng, tree)
            for t in range(tree.horizon):
                direct = rho_dynamic(drm, X, t)
                dual = dual_representation(drm, X, t)
                for node_id, value in direct.items():
                    self.assertAlmostEqual(dual[node_id], value, places=9)

    def test_exact_mode_composition(self):
        tree = one_step_tree(1, TRINOMIAL, THIRDS, exact=True)
        drm = DynamicRiskMeasure.build(tree, RiskMeasureSpec.cvar(Fraction(3, 4)))
        X = NodeFunction(1, {1: Fraction(1), 2: Fraction(0), 3: Fraction(-1)})
        risk = rho_dynamic(drm, X, 0)[0]
        self.assertIsInstance(risk, Fraction)
        assert_allclose(float(risk), float(Fraction(4, 9) - Fraction(1, 9)))

    def test_acceptability_is_nonpositive_risk(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            tree = random_na_tree(rng, horizon=2, max_children=3)
            drm = DynamicRiskMeasure.build(tree, random_spec(rng, tree))
            X = random_claim(rng, tree)
            for t in range(tree.horizon + 1):
                risk = rho_dynamic(drm, X, t)
                for node_id, accepted in acceptability(drm, X, t).items():
                    self.assertEqual(accepted, risk[node_id] <= 1e-9)
            self.assertTrue(all(v for _, v in acceptability(drm, NodeFunction.constant(tree, 2, 0.0), 0).items()))
            self.assertFalse(acceptability(drm, NodeFunction.constant(tree, 2, -1.0), 0)[tree.root])

    def test_cvar_risk_grows_as_alpha_shrinks(self):
        rng = np.random.default_rng(15)
        alphas = [0.25, 0.4, 0.6, 0.8, 1.0]
        for _ in range(20):
            tree = random_na_tree(rng, max_children=3)
            X = random_claim(rng, tree)
            worst = rho_dynamic(DynamicRiskMeasure.build(tree, RiskMeasureSpec.worst_case()), X, 0)[tree.root]
            risks = [rho_dynamic(DynamicRiskMeasure.build(tree, RiskMeasureSpec.cvar(a)), X, 0)[tree.root]
                     for a in alphas]
            for smaller, larger in zip(risks, risks[1:]):
                self.assertGreaterEqual(smaller, larger - 1e-9)
            kernels = rho_dynamic(DynamicRiskMeasure.build(tree, random_kernels_spec(rng, tree)), X, 0)[tree.root]
            for risk in risks + [kernels]:
                self.assertLessEqual(risk, worst + 1e-9)

    def test_lipschitz_in_the_sup_norm(self):
        rng = np.random.default_rng(16)
        for _ in range(20):
            tree = random_na_tree(rng, max_children=3)
            drm = DynamicRiskMeasure.build(tree, random_spec(rng, tree))
            for _ in range(10):
                X, Y = random_claim(rng, tree), random_claim(rng, tree)
                bound = max(abs(X[n] - Y[n]) for n in tree.leaves())
                for t in range(tree.horizon):
                    rho_x, rho_y = rho_dynamic(drm, X, t), rho_dynamic(drm, Y, t)
                    for node_id, value in rho_x.items():
                        self.assertLessEqual(abs(value - rho_y[node_id]), bound + 1e-9)
