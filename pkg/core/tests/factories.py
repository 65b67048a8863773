"""Random scenario trees and risk measures for the property tests."""

import numpy as np

from core.risk import RiskMeasureSpec
from data.market_tree import Node, NodeFunction, Payoff, ScenarioTree


def one_step_tree(root, children, probs=None, exact=False):
    """Root with one child per entry of children; scalars are promoted to one-asset prices"""
    def price(value):
        return tuple(value) if isinstance(value, (list, tuple)) else (value,)

    probs = probs or [1 / len(children)] * len(children)
    nodes = [Node(0, 0, None, 1, price(root))]
    nodes += [Node(j + 1, 1, 0, probs[j], price(c)) for j, c in enumerate(children)]
    d = len(price(root))
    return ScenarioTree(nodes, [f'S{i + 1}' for i in range(d)], exact=exact)


def _child_probabilities(rng, k):
    p = rng.dirichlet(np.full(k, 2.0))
    p = np.maximum(p, 0.05)
    p = p / p.sum()
    p[-1] = 1.0 - p[:-1].sum()
    return p


def random_na_tree(rng, horizon=None, assets=None, max_children=4):
    """Tree whose increments are centered under P at every node, so P is a strictly positive martingale kernel"""
    horizon = horizon or int(rng.integers(1, 4))
    d = assets or int(rng.integers(1, 3))
    nodes = [Node(0, 0, None, 1.0, tuple(np.full(d, 10.0)))]
    frontier, next_id = [(0, np.full(d, 10.0), 0)], 1
    while frontier:
        parent, price, time = frontier.pop(0)
        if time == horizon:
            continue
        k = int(rng.integers(2, max_children + 1))
        p = _child_probabilities(rng, k)
        z = rng.normal(size=(k, d))
        increments = z - p @ z
        increments = increments / max(1.0, np.abs(increments).max())
        for j in range(k):
            child_price = price + increments[j]
            nodes.append(Node(next_id, time + 1, parent, float(p[j]), tuple(float(v) for v in child_price)))
            frontier.append((next_id, child_price, time + 1))
            next_id += 1
    return ScenarioTree(nodes, [f'S{i + 1}' for i in range(d)])


def shift_children(tree, node_id, amount, asset=0):
    """Shift asset prices on the whole subtree below node_id, creating drift at node_id"""
    prices = {}
    for child in tree.children(node_id):
        for n in tree.subtree(child):
            price = list(tree.price(n))
            price[asset] = price[asset] + amount
            prices[n] = price
    return tree.with_prices(prices)


def arbitrage_mutation(rng, tree):
    """Make asset 0 rise strictly at one random non-terminal node"""
    node_id = int(rng.choice(tree.non_terminal_nodes()))
    delta = tree.delta_s(node_id)[:, 0]
    return shift_children(tree, node_id, float(-delta.min() + 0.5)), node_id


def drift_to_boundary(rng, tree):
    """Shift one random node by its lowest asset-0 increment: that child repeats the parent price and
    asset 0 rises weakly on every other child, so the mean increment sits on the boundary of the hull"""
    node_id = int(rng.choice(tree.non_terminal_nodes()))
    delta = tree.delta_s(node_id)
    lowest = delta[int(np.argmin(delta[:, 0]))]
    for asset in range(tree.asset_count):
        tree = shift_children(tree, node_id, float(-lowest[asset]), asset=asset)
    return tree, node_id


def random_tree_shape(rng):
    """(horizon, max_children, assets) with at most a few hundred nodes"""
    shapes = [(1, 5, 3), (2, 5, 2), (2, 4, 3), (3, 3, 2), (3, 2, 3), (4, 2, 3), (4, 3, 1), (2, 3, 1)]
    return shapes[int(rng.integers(len(shapes)))]


def random_kernels_spec(rng, tree, count=2):
    """Kernels P +- delta*e around the conditional probabilities, so P stays in the relative interior"""
    per_node = {}
    for node_id in tree.non_terminal_nodes():
        p = tree.cond_probs(node_id)
        kernels = []
        for _ in range(count):
            e = rng.normal(size=len(p))
            e = e - e.mean()
            step = 0.5 * p.min() / max(np.abs(e).max(), 1e-12)
            kernels.extend([list(p + step * e), list(p - step * e)])
        per_node[node_id] = kernels
    return RiskMeasureSpec.kernels(per_node)


def random_shifted_kernels_spec(rng, tree, count=2):
    """Kernels all on one side of P: every q - P has a positive component along one centered direction e"""
    per_node = {}
    for node_id in tree.non_terminal_nodes():
        p = tree.cond_probs(node_id)
        e = rng.normal(size=len(p))
        e = e - e.mean()
        e = e / max(np.abs(e).max(), 1e-12)
        g = rng.normal(size=len(p))
        g = g - g.mean()
        g = g - (g @ e) / (e @ e) * e
        g = g / max(np.abs(g).max(), 1.0)
        step = 0.5 * p.min() / 2.0
        kernels = []
        for _ in range(2 * count):
            kernels.append(list(p + step * (rng.uniform(0.2, 1.0) * e + rng.uniform(-1.0, 1.0) * g)))
        per_node[node_id] = kernels
    return RiskMeasureSpec.kernels(per_node)


def random_spec(rng, tree):
    kind = int(rng.integers(0, 3))
    if kind == 0:
        return RiskMeasureSpec.worst_case()
    if kind == 1:
        return RiskMeasureSpec.cvar(float(np.round(rng.uniform(0.3, 1.0), 3)))
    return random_kernels_spec(rng, tree)


def random_claim(rng, tree, time=None):
    time = tree.horizon if time is None else time
    return NodeFunction(time, {n: float(np.round(rng.normal(), 6)) for n in tree.nodes_at(time)})


def random_payoff(rng, tree):
    return Payoff(tree.horizon, random_claim(rng, tree))


def strategy_claim(tree, thetas):
    """Maturity value of sum theta_u.dS_{u+1}, theta being 0 at nodes missing from thetas"""
    values = {}
    for leaf in tree.leaves():
        path = tree.path(leaf)
        total = 0
        for parent, child in zip(path[:-1], path[1:]):
            if parent in thetas:
                total = total + thetas[parent] @ (tree.price(child) - tree.price(parent))
        values[leaf] = total
    return NodeFunction(tree.horizon, values)
