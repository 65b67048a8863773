from fractions import Fraction

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from core.arbitrage import check_na, na_holds
from core.duality import (
    build_polytope,
    build_polytopes,
    dual_price,
    dual_price_details,
    extract_witness_measure,
    primal_dual_gap,
    verify_ftap,
)
from core.exceptions import MaturityMismatchError, NoArbitrageRequiredError
from core.pricing import backward_price
from core.risk import DynamicRiskMeasure, RiskMeasureSpec
from data.market_tree import NodeFunction, Payoff
from data.model_loader import load_model
from .factories import (
    arbitrage_mutation,
    drift_to_boundary,
    one_step_tree,
    random_na_tree,
    random_payoff,
    random_shifted_kernels_spec,
    random_spec,
    random_tree_shape,
    shift_children,
)


def measure(tree, spec=None):
    return DynamicRiskMeasure.build(tree, spec or RiskMeasureSpec.worst_case())


def load(name, exact=False):
    with open(settings.BASE_DIR / 'data' / 'models' / name, 'rb') as handle:
        return load_model(handle.read(), exact=exact)


class PolytopeTests(SimpleTestCase):
    def test_binomial_worst_case(self):
        tree = one_step_tree(1, [2, 0.5], [0.5, 0.5])
        polytope = build_polytope(tree, measure(tree), 0)
        self.assertFalse(polytope.empty)
        self.assertAlmostEqual(polytope.interior_radius, 1 / 3, places=9)
        self.assertAlmostEqual(polytope.weight_radius, 1 / 3, places=9)
        assert_allclose(polytope.interior_kernel, [1 / 3, 2 / 3], atol=1e-9)
        self.assertTrue(polytope.contains([1 / 3, 2 / 3]))
        self.assertFalse(polytope.contains([0.5, 0.5]))
        self.assertEqual(polytope.to_dict()['empty'], False)

    def test_exact_radii(self):
        tree = one_step_tree(1, [2, Fraction(1, 2)], [Fraction(1, 2)] * 2, exact=True)
        polytope = build_polytope(tree, measure(tree), 0)
        self.assertEqual(polytope.interior_radius, Fraction(1, 3))
        self.assertEqual(list(polytope.interior_kernel), [Fraction(1, 3), Fraction(2, 3)])

    def test_instantaneous_profit_is_empty(self):
        tree = one_step_tree(1, [2, 3], [0.5, 0.5])
        polytope = build_polytope(tree, measure(tree), 0)
        self.assertTrue(polytope.empty)
        self.assertIsNone(polytope.interior_radius)
        with self.assertRaises(NoArbitrageRequiredError):
            polytope.maximize([1, 0])

    def test_kernel_on_the_boundary_of_the_dual_set(self):
        # the only martingale kernel is a vertex of the CVaR set, so no interior weight exists
        tree = one_step_tree(1, [2, Fraction(1, 2)], [Fraction(1, 2)] * 2, exact=True)
        polytope = build_polytope(tree, measure(tree, RiskMeasureSpec.cvar(Fraction(3, 4))), 0)
        self.assertFalse(polytope.empty)
        self.assertEqual(polytope.weight_radius, 0)
        self.assertEqual(polytope.interior_radius, Fraction(1, 3))

    def test_maximize_and_minimize(self):
        tree = one_step_tree(1, [2, 1, 0.5])
        polytope = build_polytope(tree, measure(tree), 0)
        best, kernel = polytope.maximize([1, 0, 0])
        self.assertAlmostEqual(best, 1 / 3, places=9)
        assert_allclose(kernel, [1 / 3, 0, 2 / 3], atol=1e-9)
        worst, kernel = polytope.minimize([1, 0, 0])
        self.assertAlmostEqual(worst, 0.0, places=9)
        assert_allclose(kernel, [0, 1, 0], atol=1e-9)


class DualPriceTests(SimpleTestCase):
    def test_binomial(self):
        tree, spec, payoff = load('binomial_call.json')
        self.assertAlmostEqual(dual_price(tree, measure(tree, spec), payoff)[0], 1 / 3, places=9)

    def test_binomial_exact(self):
        tree, spec, payoff = load('binomial_call.json', exact=True)
        self.assertEqual(dual_price(tree, measure(tree, spec), payoff)[0], Fraction(1, 3))

    def test_trinomial_cvar(self):
        tree = one_step_tree(1, [2, 1, Fraction(1, 2)], [Fraction(1, 3)] * 3, exact=True)
        drm = measure(tree, RiskMeasureSpec.cvar(Fraction(3, 4)))
        self.assertEqual(dual_price(tree, drm, Payoff.vanilla(tree, 'call', 1))[0], Fraction(2, 9))

    def test_constant_payoff(self):
        tree, spec, _ = load('two_period_binomial.json')
        payoff = Payoff(2, NodeFunction.constant(tree, 2, 2.5))
        self.assertAlmostEqual(dual_price(tree, measure(tree, spec), payoff)[0], 2.5, places=9)

    def test_intermediate_time(self):
        tree, spec, payoff = load('two_period_binomial.json')
        values = dual_price(tree, measure(tree, spec), payoff, t=1)
        self.assertAlmostEqual(values[1], 1.0, places=9)
        self.assertAlmostEqual(values[2], 0.0, places=9)

    def test_requires_na(self):
        tree, spec, payoff = load('arbitrage_up.json')
        with self.assertRaises(NoArbitrageRequiredError) as raised:
            dual_price(tree, measure(tree, spec), payoff)
        self.assertEqual(raised.exception.code, 'NO_NA')
        self.assertEqual(raised.exception.node, 0)

    def test_maturity_mismatch(self):
        tree, spec, _ = load('two_period_binomial.json')
        with self.assertRaises(MaturityMismatchError):
            dual_price(tree, measure(tree, spec), Payoff(1, NodeFunction(1, {1: 1.0, 2: 0.0})))

    def test_primal_equals_dual_on_random_models(self):
        rng = np.random.default_rng(41)
        for index in range(200):
            horizon, max_children, assets = random_tree_shape(rng)
            tree = random_na_tree(rng, horizon=horizon, assets=assets, max_children=max_children)
            drm = measure(tree, random_spec(rng, tree))
            payoff = random_payoff(rng, tree)
            self.assertLessEqual(primal_dual_gap(tree, drm, payoff), 1e-7, msg=f'model {index}')

    def test_dual_process_matches_backward_prices(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            tree = random_na_tree(rng, horizon=2, max_children=3)
            drm = measure(tree, random_spec(rng, tree))
            payoff = random_payoff(rng, tree)
            prices = backward_price(tree, drm, payoff).prices
            for node_id, value in dual_price(tree, drm, payoff, t=1).items():
                self.assertAlmostEqual(value, prices[1][node_id], delta=1e-7)


class WitnessMeasureTests(SimpleTestCase):
    def test_two_period_leaf_weights(self):
        tree, spec, _ = load('two_period_binomial.json', exact=True)
        witness = extract_witness_measure(tree, measure(tree, spec))
        self.assertEqual(witness.leaf_weights,
                         {3: Fraction(1, 9), 4: Fraction(2, 9), 5: Fraction(2, 9), 6: Fraction(4, 9)})
        self.assertTrue(witness.equivalent)

    def test_prices_are_martingales(self):
        tree, spec, _ = load('two_period_binomial.json')
        witness = extract_witness_measure(tree, measure(tree, spec))
        prices = NodeFunction.from_callable(tree, 2, lambda n: tree.price(n)[0])
        self.assertAlmostEqual(witness.expectation(tree, prices, 0)[0], 1.0, places=9)
        self.assertAlmostEqual(witness.expectation(tree, prices, 1)[1], 2.0, places=9)
        self.assertEqual(set(witness.to_dict()['leaf_weights']), {'3', '4', '5', '6'})

    def test_random_models_are_equivalent(self):
        rng = np.random.default_rng(43)
        for _ in range(20):
            tree = random_na_tree(rng)
            witness = extract_witness_measure(tree, measure(tree, random_spec(rng, tree)))
            self.assertTrue(witness.equivalent)
            self.assertAlmostEqual(sum(witness.leaf_weights.values()), 1.0, places=9)

    def test_requires_na(self):
        tree, spec, _ = load('arbitrage_up.json')
        with self.assertRaises(NoArbitrageRequiredError):
            extract_witness_measure(tree, measure(tree, spec))


class DualPriceDetailsTests(SimpleTestCase):
    def test_binomial(self):
        tree, spec, payoff = load('binomial_call.json')
        details = dual_price_details(tree, measure(tree, spec), payoff)
        self.assertAlmostEqual(details.values[0], 1 / 3, places=9)
        self.assertTrue(details.strictly_positive)
        self.assertEqual(set(details.mixture_gaps), {'0.5', '0.1', '0.01'})
        for gap in details.mixture_gaps.values():
            self.assertTrue(gap['ok'])
            self.assertAlmostEqual(gap['gap'], 0.0, places=9)

    def test_mixture_gap_within_bound(self):
        tree = one_step_tree(1, [2, 1, Fraction(1, 2)], [Fraction(1, 3)] * 3, exact=True)
        drm = measure(tree, RiskMeasureSpec.cvar(Fraction(3, 4)))
        details = dual_price_details(tree, drm, Payoff.vanilla(tree, 'call', 1))
        self.assertEqual(details.values[0], Fraction(2, 9))
        self.assertTrue(all(gap['ok'] for gap in details.mixture_gaps.values()))
        self.assertIn('witness', details.to_dict())


class FtapTests(SimpleTestCase):
    def test_binomial_is_consistent(self):
        tree, spec, _ = load('binomial_call.json')
        report = verify_ftap(tree, measure(tree, spec), samples=5, seed=1)
        self.assertTrue(report.na)
        self.assertTrue(report.polytopes_nonempty)
        self.assertTrue(report.strictly_positive)
        self.assertEqual(report.ngd, {0: True})
        self.assertTrue(report.consistent)
        self.assertEqual(len(report.legs), 4)
        self.assertFalse(any(leg.skipped for leg in report.legs))
        self.assertTrue(all(leg.checked > 0 for leg in report.legs))

    def test_instantaneous_profit(self):
        tree, spec, _ = load('arbitrage_up.json')
        report = verify_ftap(tree, measure(tree, spec), samples=5)
        self.assertFalse(report.na)
        self.assertFalse(report.aip)
        self.assertFalse(report.polytopes_nonempty)
        self.assertEqual(report.ngd, {0: False})
        self.assertTrue(report.consistent)
        self.assertTrue(all(leg.skipped for leg in report.legs[1:]))

    def test_one_sided_direction_keeps_ngd(self):
        tree = one_step_tree(1, [2, Fraction(1, 2)], [Fraction(1, 2)] * 2, exact=True)
        report = verify_ftap(tree, measure(tree, RiskMeasureSpec.cvar(Fraction(3, 4))), samples=5)
        self.assertFalse(report.na)
        self.assertTrue(report.aip)
        self.assertEqual(report.ngd, {0: True})
        self.assertTrue(report.consistent)
        self.assertEqual(len(report.notes), 1)

    def test_deterministic_tree(self):
        tree, spec, _ = load('deterministic.json')
        self.assertTrue(verify_ftap(tree, measure(tree, spec), samples=3).na)
        drifting = shift_children(tree, 1, 0.5)
        report = verify_ftap(drifting, measure(drifting, spec), samples=3)
        self.assertFalse(report.na)
        self.assertEqual(report.ngd, {0: False, 1: False})
        self.assertTrue(report.consistent)

    def test_random_models(self):
        rng = np.random.default_rng(44)
        for index in range(100):
            tree = random_na_tree(rng, horizon=2, max_children=3)
            if index % 2:
                tree, _ = arbitrage_mutation(rng, tree)
            report = verify_ftap(tree, measure(tree, random_spec(rng, tree)), samples=4, seed=index)
            self.assertEqual(report.na, index % 2 == 0)
            self.assertTrue(report.consistent, [leg.to_dict() for leg in report.legs if not leg.consistent])

    def test_boundary_models_agree(self):
        rng = np.random.default_rng(45)
        for index in range(60):
            tree = random_na_tree(rng, horizon=int(rng.integers(1, 3)), max_children=3)
            tree, _ = drift_to_boundary(rng, tree)
            if index % 3 == 0:
                spec = RiskMeasureSpec.worst_case()
            elif index % 3 == 1:
                spec = random_shifted_kernels_spec(rng, tree)
            else:
                spec = random_spec(rng, tree)
            drm = measure(tree, spec)
            na = na_holds(check_na(tree, drm))
            if index % 3 == 0:
                self.assertFalse(na)
            radii = [p.weight_radius for p in build_polytopes(tree, drm).values()]
            self.assertEqual(all(r is not None and r > 1e-9 for r in radii), na, msg=f'model {index}')
            report = verify_ftap(tree, drm, samples=3, seed=index)
            self.assertEqual(report.na, na)
            self.assertTrue(report.consistent, [leg.to_dict() for leg in report.legs if not leg.consistent])

    def test_report_dict(self):
        tree, spec, _ = load('binomial_call.json')
        payload = verify_ftap(tree, measure(tree, spec), samples=2).to_dict()
        self.assertEqual([leg['name'] for leg in payload['legs']], [
            'na_iff_martingale_kernels',
            'acceptable_attainable_claims_are_two_sided',
            'risk_dominates_martingale_expectation',
            'acceptable_claims_are_separated',
        ])
        self.assertTrue(payload['consistent'])
