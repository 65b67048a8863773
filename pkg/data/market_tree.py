"""
Finite filtered market as a rooted scenario tree.

The time-t nodes are the atoms of F_t; a node stores the value of the
d-dimensional price process S_t on its atom and the probability of being
reached from its parent.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import NotAParentError, ValidationError
from core.numeric import MINUS_INFINITY, as_vector, is_finite, to_number

logger = logging.getLogger(__name__)

PROBABILITY_TOL = 1e-12


@dataclass(frozen=True)
class Node:
    """Data class for one atom of the filtration"""
    id: int
    time: int
    parent: Optional[int]
    cond_prob: object
    price: Tuple


class ScenarioTree:
    """Immutable scenario tree with an adapted price process.

    Construction validates every structural invariant and raises
    ValidationError listing all violations with node ids.
    """

    def __init__(self, nodes: Iterable[Node], asset_names: Sequence[str], exact: bool = False):
        self.exact = exact
        self.asset_names = list(asset_names)
        self._nodes: Dict[int, Node] = {}
        self._children: Dict[int, List[int]] = {}
        violations = []

        for node in nodes:
            if node.id in self._nodes:
                violations.append(f'node {node.id}: duplicate id')
                continue
            self._nodes[node.id] = node
            self._children[node.id] = []

        roots = [n.id for n in self._nodes.values() if n.parent is None]
        if len(roots) != 1:
            violations.append(f'expected exactly one root, found {len(roots)}')
        for node in self._nodes.values():
            if node.parent is None:
                continue
            if node.parent not in self._nodes:
                violations.append(f'node {node.id}: parent {node.parent} does not exist')
                continue
            self._children[node.parent].append(node.id)
        if violations:
            raise ValidationError(violations)

        self.root = roots[0]
        self._prices: Dict[int, np.ndarray] = {}
        violations.extend(self._validate())
        if violations:
            raise ValidationError(violations)

        self.horizon = max(n.time for n in self._nodes.values())
        self._by_time: Dict[int, List[int]] = {t: [] for t in range(self.horizon + 1)}
        for node_id in sorted(self._nodes, key=lambda i: (self._nodes[i].time, i)):
            self._by_time[self._nodes[node_id].time].append(node_id)
        logger.debug(f"Built tree with {len(self._nodes)} nodes, horizon {self.horizon}, {self.asset_count} assets")

    def _validate(self) -> List[str]:
        violations = []
        d = len(self.asset_names)
        if d < 1:
            violations.append('at least one asset is required')
        root = self._nodes[self.root]
        if root.time != 0:
            violations.append(f'node {root.id}: root must have time 0, has {root.time}')
        if root.cond_prob != 1:
            violations.append(f'node {root.id}: root probability must be 1')

        # walk from the root so cycles and unreachable nodes are caught
        seen = set()
        stack = [self.root]
        while stack:
            node_id = stack.pop()
            if node_id in seen:
                violations.append(f'node {node_id}: reached twice, the parent links contain a cycle')
                continue
            seen.add(node_id)
            stack.extend(self._children[node_id])
        for node_id in sorted(set(self._nodes) - seen):
            violations.append(f'node {node_id}: not connected to the root')
        if violations:
            return violations

        for node in self._nodes.values():
            if node.id < 0:
                violations.append(f'node {node.id}: ids must be non-negative')
            if node.parent is not None and node.time != self._nodes[node.parent].time + 1:
                violations.append(f'node {node.id}: time {node.time} is not parent time + 1')
            if node.parent is not None and not (0 < node.cond_prob <= 1):
                violations.append(f'node {node.id}: probability {node.cond_prob} outside (0, 1]')
            if len(node.price) != d:
                violations.append(f'node {node.id}: price has {len(node.price)} components, expected {d}')
                continue
            if any(not is_finite(v) or v < 0 for v in node.price):
                violations.append(f'node {node.id}: prices must be finite and non-negative')
            self._prices[node.id] = as_vector(node.price, self.exact)

        horizon = max(n.time for n in self._nodes.values())
        if horizon < 1:
            violations.append('horizon must be at least 1')
        for node in self._nodes.values():
            children = self._children[node.id]
            if not children and node.time != horizon:
                violations.append(f'node {node.id}: leaf at time {node.time}, all leaves must sit at time {horizon}')
            if children:
                total = sum(self._nodes[c].cond_prob for c in children)
                if abs(total - 1) > PROBABILITY_TOL:
                    violations.append(f'node {node.id}: child probabilities sum to {float(total)} != 1')
        return violations

    @property
    def asset_count(self) -> int:
        return len(self.asset_names)

    @property
    def node_ids(self) -> List[int]:
        return [i for t in range(self.horizon + 1) for i in self._by_time[t]]

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, node_id) -> bool:
        return node_id in self._nodes

    def node(self, node_id: int) -> Node:
        return self._nodes[node_id]

    def time(self, node_id: int) -> int:
        return self._nodes[node_id].time

    def children(self, node_id: int) -> List[int]:
        return list(self._children[node_id])

    def is_terminal(self, node_id: int) -> bool:
        return not self._children[node_id]

    def nodes_at(self, t: int) -> List[int]:
        return list(self._by_time.get(t, []))

    def non_terminal_nodes(self) -> List[int]:
        return [i for i in self.node_ids if self._children[i]]

    def leaves(self) -> List[int]:
        return self.nodes_at(self.horizon)

    def price(self, node_id: int) -> np.ndarray:
        return self._prices[node_id].copy()

    def child_prices(self, node_id: int) -> np.ndarray:
        """Matrix of S on the children, one row per child"""
        self._require_parent(node_id)
        return np.array([self._prices[c] for c in self._children[node_id]],
                        dtype=object if self.exact else float)

    def cond_probs(self, node_id: int) -> np.ndarray:
        self._require_parent(node_id)
        return as_vector([self._nodes[c].cond_prob for c in self._children[node_id]], self.exact)

    def delta_s(self, node_id: int) -> np.ndarray:
        """Increments S(child) - S(node), one row per child"""
        self._require_parent(node_id)
        return self.child_prices(node_id) - self._prices[node_id]

    def unconditional_probability(self, node_id: int):
        probability = to_number(1, self.exact)
        for ancestor in self.path(node_id):
            probability = probability * self._nodes[ancestor].cond_prob
        return probability

    def path(self, node_id: int) -> List[int]:
        """Node ids from the root down to node_id"""
        path = [node_id]
        while self._nodes[path[-1]].parent is not None:
            path.append(self._nodes[path[-1]].parent)
        return path[::-1]

    def ancestor_at(self, node_id: int, t: int) -> int:
        return self.path(node_id)[t]

    def subtree(self, node_id: int) -> List[int]:
        """Breadth-first list of node_id and its descendants"""
        order, frontier = [], [node_id]
        while frontier:
            order.extend(frontier)
            frontier = [c for n in frontier for c in self._children[n]]
        return order

    def descendants_at(self, node_id: int, t: int) -> List[int]:
        return [n for n in self.subtree(node_id) if self._nodes[n].time == t]

    def with_prices(self, prices: Dict[int, Sequence]) -> 'ScenarioTree':
        """Copy of the tree with some node prices replaced"""
        nodes = [
            Node(n.id, n.time, n.parent, n.cond_prob,
                 tuple(to_number(v, self.exact) for v in prices[n.id]) if n.id in prices else n.price)
            for n in self._nodes.values()
        ]
        return ScenarioTree(nodes, self.asset_names, exact=self.exact)

    def _require_parent(self, node_id: int):
        if node_id not in self._nodes:
            raise NotAParentError(f'unknown node {node_id}', node=node_id)
        if not self._children[node_id]:
            raise NotAParentError(f'node {node_id} is terminal', node=node_id)


def delta_s(tree: ScenarioTree, node_id: int) -> np.ndarray:
    return tree.delta_s(node_id)


def unconditional_probability(tree: ScenarioTree, node_id: int):
    return tree.unconditional_probability(node_id)


@dataclass(frozen=True)
class NodeFunction:
    """Data class for an F_u-measurable value: one number per time-u node"""
    time: int
    values: Dict[int, object] = field(default_factory=dict)

    def __getitem__(self, node_id: int):
        return self.values[node_id]

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self.values))

    def items(self):
        return sorted(self.values.items())

    def on(self, node_ids: Iterable[int], exact: bool = False) -> np.ndarray:
        return as_vector([self.values[i] for i in node_ids], exact)

    def map(self, func: Callable) -> 'NodeFunction':
        return NodeFunction(self.time, {k: func(v) for k, v in self.values.items()})

    def combine(self, other: 'NodeFunction', func: Callable) -> 'NodeFunction':
        if other.time != self.time or set(other.values) != set(self.values):
            raise ValueError(f'node functions live on different times ({self.time}, {other.time})')
        return NodeFunction(self.time, {k: func(v, other.values[k]) for k, v in self.values.items()})

    def __neg__(self) -> 'NodeFunction':
        return self.map(lambda v: -v)

    def __add__(self, other) -> 'NodeFunction':
        if isinstance(other, NodeFunction):
            return self.combine(other, lambda a, b: a + b)
        return self.map(lambda v: v + other)

    def __sub__(self, other) -> 'NodeFunction':
        if isinstance(other, NodeFunction):
            return self.combine(other, lambda a, b: a - b)
        return self.map(lambda v: v - other)

    def __mul__(self, scalar) -> 'NodeFunction':
        return self.map(lambda v: v * scalar)

    __rmul__ = __mul__

    def has_minus_infinity(self) -> bool:
        return any(v == MINUS_INFINITY for v in self.values.values())

    def check_domain(self, tree: ScenarioTree):
        expected = set(tree.nodes_at(self.time))
        if set(self.values) != expected:
            missing = sorted(expected - set(self.values))
            extra = sorted(set(self.values) - expected)
            raise ValidationError([f'values at time {self.time} must cover exactly the time-{self.time} nodes '
                                   f'(missing {missing}, unexpected {extra})'])

    @classmethod
    def constant(cls, tree: ScenarioTree, time: int, value) -> 'NodeFunction':
        return cls(time, {i: to_number(value, tree.exact) for i in tree.nodes_at(time)})

    @classmethod
    def from_callable(cls, tree: ScenarioTree, time: int, func: Callable[[int], object]) -> 'NodeFunction':
        return cls(time, {i: func(i) for i in tree.nodes_at(time)})

    def extend_to(self, tree: ScenarioTree, time: int) -> 'NodeFunction':
        """The same random variable read at a later time (constant on each subtree)"""
        return NodeFunction(time, {leaf: self.values[tree.ancestor_at(leaf, self.time)]
                                   for leaf in tree.nodes_at(time)})


@dataclass(frozen=True)
class Payoff:
    """Data class for a European claim paying values at maturity"""
    maturity: int
    values: NodeFunction

    def __post_init__(self):
        if self.values.time != self.maturity:
            raise ValidationError([f'payoff values live at time {self.values.time}, maturity is {self.maturity}'])

    @classmethod
    def vanilla(cls, tree: ScenarioTree, kind: str, strike, asset: int = 0) -> 'Payoff':
        """Call or put on one asset, paid at the tree horizon"""
        strike = to_number(strike, tree.exact)
        zero = to_number(0, tree.exact)
        if kind == 'call':
            func = lambda i: max(tree.price(i)[asset] - strike, zero)
        elif kind == 'put':
            func = lambda i: max(strike - tree.price(i)[asset], zero)
        else:
            raise ValidationError([f'unknown vanilla payoff type {kind!r}'])
        return cls(tree.horizon, NodeFunction.from_callable(tree, tree.horizon, func))

    @classmethod
    def zero(cls, tree: ScenarioTree) -> 'Payoff':
        return cls(tree.horizon, NodeFunction.constant(tree, tree.horizon, 0))
