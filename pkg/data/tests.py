import json
from fractions import Fraction

from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from core.exceptions import NotAParentError, ParseError, ValidationError
from core.risk import RiskVariant
from data.market_tree import Node, NodeFunction, Payoff, ScenarioTree
from data.model_loader import load_model


def binomial_nodes():
    return [
        Node(0, 0, None, 1, (1.0,)),
        Node(1, 1, 0, 0.5, (2.0,)),
        Node(2, 1, 0, 0.5, (0.5,)),
    ]


def model(**overrides):
    payload = {
        'assets': ['S1'],
        'nodes': [
            {'id': 0, 'time': 0, 'parent': None, 'price': [1.0]},
            {'id': 1, 'time': 1, 'parent': 0, 'prob': 0.5, 'price': [2.0]},
            {'id': 2, 'time': 1, 'parent': 0, 'prob': 0.5, 'price': [0.5]},
        ],
        'risk_measure': {'type': 'worst_case'},
        'payoff': {'type': 'call', 'strike': 1.0},
    }
    payload.update(overrides)
    return json.dumps(payload)


class ScenarioTreeTests(SimpleTestCase):
    def setUp(self):
        self.tree = ScenarioTree(binomial_nodes(), ['S1'])

    def test_structure(self):
        self.assertEqual(self.tree.root, 0)
        self.assertEqual(self.tree.horizon, 1)
        self.assertEqual(len(self.tree), 3)
        self.assertEqual(self.tree.children(0), [1, 2])
        self.assertEqual(self.tree.leaves(), [1, 2])
        self.assertEqual(self.tree.non_terminal_nodes(), [0])
        self.assertEqual(self.tree.path(2), [0, 2])
        self.assertEqual(self.tree.ancestor_at(2, 0), 0)

    def test_increments_and_probabilities(self):
        assert_allclose(self.tree.delta_s(0), [[1.0], [-0.5]])
        assert_allclose(self.tree.cond_probs(0), [0.5, 0.5])
        self.assertEqual(self.tree.unconditional_probability(2), 0.5)

    def test_increments_ignore_a_common_price_shift(self):
        shifted = self.tree.with_prices({n: self.tree.price(n) + 5.0 for n in self.tree.node_ids})
        assert_allclose(shifted.delta_s(0), self.tree.delta_s(0))
        assert_allclose(shifted.price(0), [6.0])

    def test_time_slices_carry_unit_mass(self):
        third, half = Fraction(1, 3), Fraction(1, 2)
        nodes = [
            Node(0, 0, None, 1, (4,)),
            Node(1, 1, 0, third, (6,)),
            Node(2, 1, 0, 1 - third, (3,)),
            Node(3, 2, 1, half, (9,)),
            Node(4, 2, 1, half, (3,)),
            Node(5, 2, 2, Fraction(1, 4), (5,)),
            Node(6, 2, 2, Fraction(1, 4), (3,)),
            Node(7, 2, 2, half, (2,)),
        ]
        tree = ScenarioTree(nodes, ['S1'], exact=True)
        for t in range(tree.horizon + 1):
            self.assertEqual(sum(tree.unconditional_probability(n) for n in tree.nodes_at(t)), 1)
        self.assertEqual(tree.unconditional_probability(7), Fraction(1, 3))

    def test_leaf_is_not_a_parent(self):
        with self.assertRaises(NotAParentError):
            self.tree.delta_s(1)
        with self.assertRaises(NotAParentError):
            self.tree.cond_probs(7)

    def test_probabilities_must_sum_to_one(self):
        nodes = binomial_nodes()
        nodes[2] = Node(2, 1, 0, 0.4, (0.5,))
        with self.assertRaises(ValidationError) as raised:
            ScenarioTree(nodes, ['S1'])
        self.assertIn('node 0: child probabilities sum to', raised.exception.violations[0])

    def test_all_violations_are_listed(self):
        nodes = binomial_nodes() + [
            Node(3, 2, 1, 1.0, (-1.0,)),
            Node(4, 3, 1, 1.0, (1.0, 2.0)),
        ]
        with self.assertRaises(ValidationError) as raised:
            ScenarioTree(nodes, ['S1'])
        violations = raised.exception.violations
        self.assertTrue(any(v.startswith('node 3: prices') for v in violations))
        self.assertTrue(any(v.startswith('node 4: time 3') for v in violations))
        self.assertTrue(any(v.startswith('node 4: price has 2 components') for v in violations))
        self.assertTrue(any(v.startswith('node 2: leaf at time 1') for v in violations))

    def test_root_and_parent_checks(self):
        with self.assertRaises(ValidationError):
            ScenarioTree(binomial_nodes() + [Node(9, 0, None, 1, (1.0,))], ['S1'])
        with self.assertRaises(ValidationError) as raised:
            ScenarioTree(binomial_nodes() + [Node(3, 2, 8, 1.0, (1.0,))], ['S1'])
        self.assertIn('node 3: parent 8 does not exist', raised.exception.violations)

    def test_disconnected_cycle(self):
        nodes = binomial_nodes() + [Node(3, 2, 4, 1.0, (1.0,)), Node(4, 2, 3, 1.0, (1.0,))]
        with self.assertRaises(ValidationError) as raised:
            ScenarioTree(nodes, ['S1'])
        self.assertIn('node 3: not connected to the root', raised.exception.violations)

    def test_horizon_at_least_one(self):
        with self.assertRaises(ValidationError):
            ScenarioTree([Node(0, 0, None, 1, (1.0,))], ['S1'])

    def test_with_prices_revalidates(self):
        shifted = self.tree.with_prices({1: [3.0]})
        assert_allclose(shifted.delta_s(0), [[2.0], [-0.5]])
        with self.assertRaises(ValidationError):
            self.tree.with_prices({1: [-3.0]})

    def test_exact_mode(self):
        nodes = [
            Node(0, 0, None, 1, (1,)),
            Node(1, 1, 0, Fraction(1, 3), (2,)),
            Node(2, 1, 0, Fraction(2, 3), (Fraction(1, 2),)),
        ]
        tree = ScenarioTree(nodes, ['S1'], exact=True)
        self.assertEqual(list(tree.delta_s(0)[:, 0]), [Fraction(1), Fraction(-1, 2)])
        self.assertEqual(tree.unconditional_probability(2), Fraction(2, 3))


class NodeFunctionTests(SimpleTestCase):
    def setUp(self):
        self.tree = ScenarioTree(binomial_nodes(), ['S1'])

    def test_arithmetic(self):
        f = NodeFunction(1, {1: 1.0, 2: -2.0})
        g = NodeFunction(1, {1: 0.5, 2: 0.5})
        self.assertEqual((f + g).values, {1: 1.5, 2: -1.5})
        self.assertEqual((f - 1).values, {1: 0.0, 2: -3.0})
        self.assertEqual((-f).values, {1: -1.0, 2: 2.0})
        self.assertEqual((2 * f).values, {1: 2.0, 2: -4.0})
        with self.assertRaises(ValueError):
            f + NodeFunction(0, {0: 1.0})

    def test_extend_and_domain(self):
        root_value = NodeFunction(0, {0: 3.0})
        self.assertEqual(root_value.extend_to(self.tree, 1).values, {1: 3.0, 2: 3.0})
        with self.assertRaises(ValidationError):
            NodeFunction(1, {1: 1.0}).check_domain(self.tree)

    def test_minus_infinity(self):
        self.assertTrue(NodeFunction(1, {1: float('-inf'), 2: 0.0}).has_minus_infinity())
        self.assertFalse(NodeFunction(1, {1: 1.0, 2: 0.0}).has_minus_infinity())


class PayoffTests(SimpleTestCase):
    def setUp(self):
        self.tree = ScenarioTree(binomial_nodes(), ['S1'])

    def test_vanilla(self):
        self.assertEqual(Payoff.vanilla(self.tree, 'call', 1).values.values, {1: 1.0, 2: 0.0})
        self.assertEqual(Payoff.vanilla(self.tree, 'put', 1).values.values, {1: 0.0, 2: 0.5})
        with self.assertRaises(ValidationError):
            Payoff.vanilla(self.tree, 'straddle', 1)

    def test_values_must_match_maturity(self):
        with self.assertRaises(ValidationError):
            Payoff(1, NodeFunction(0, {0: 1.0}))

    def test_zero(self):
        self.assertEqual(Payoff.zero(self.tree).values.values, {1: 0.0, 2: 0.0})


class ModelLoaderTests(SimpleTestCase):
    def test_binomial(self):
        tree, spec, payoff = load_model(model())
        self.assertEqual(tree.asset_names, ['S1'])
        self.assertEqual(spec.variant, RiskVariant.WORST_CASE)
        self.assertEqual(payoff.values.values, {1: 1.0, 2: 0.0})

    def test_exact(self):
        tree, _, payoff = load_model(model().encode('utf-8'), exact=True)
        self.assertTrue(tree.exact)
        self.assertEqual(tree.cond_probs(0)[0], Fraction(1, 2))
        self.assertEqual(payoff.values[2], Fraction(0))

    def test_without_payoff(self):
        _, _, payoff = load_model(model(payoff=None))
        self.assertIsNone(payoff)

    def test_explicit_payoff_values(self):
        _, _, payoff = load_model(model(payoff={'values': {'1': 0.25, '2': 0.75}}))
        self.assertEqual(payoff.values.values, {1: 0.25, 2: 0.75})
        with self.assertRaises(ValidationError):
            load_model(model(payoff={'values': {'1': 0.25}}))

    def test_payoff_asset_by_name(self):
        with self.assertRaises(ValidationError):
            load_model(model(payoff={'type': 'call', 'strike': 1.0, 'asset': 'S9'}))

    def test_parse_errors(self):
        for text in ('{not json', '[]', json.dumps({'assets': ['S1'], 'nodes': []})):
            with self.assertRaises(ParseError):
                load_model(text)
        with self.assertRaises(ParseError):
            load_model(b'\xff\xfe')
        with self.assertRaises(ParseError):
            load_model(model(nodes=[{'id': 0, 'time': 0, 'price': [1.0]},
                                    {'id': 1, 'time': 1, 'parent': 0, 'price': [1.0]}]))
        with self.assertRaises(ParseError):
            load_model(model(risk_measure={'type': 'entropic'}))

    def test_override_on_leaf(self):
        measure = {'type': 'worst_case', 'overrides': {'1': {'type': 'cvar', 'alpha': 0.5}}}
        with self.assertRaises(ValidationError) as raised:
            load_model(model(risk_measure=measure))
        self.assertIn('node 1', raised.exception.message)

    def test_scalar_price_for_one_asset(self):
        nodes = [
            {'id': 0, 'time': 0, 'parent': None, 'price': 1.0},
            {'id': 1, 'time': 1, 'parent': 0, 'prob': 0.5, 'price': 2.0},
            {'id': 2, 'time': 1, 'parent': 0, 'prob': 0.5, 'price': 0.5},
        ]
        tree, _, _ = load_model(model(nodes=nodes))
        assert_allclose(tree.price(1), [2.0])
