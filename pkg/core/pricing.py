"""
Minimal risk-hedging prices.

At a non-terminal node with next-step values V on the children the hedger
pays g(x) = x.S_t + rho(x.S_{t+1} - V) for holding x; the minimal price is
inf g, which is an LP in epigraph form. ``backward_price`` runs this node by
node; ``direct_price`` solves the whole multi-period problem at once.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import MaturityMismatchError, NumericalFailureError
from core.lp import LpProblem, LpStatus, solve
from core.numeric import MINUS_INFINITY, as_vector, is_minus_infinity, resolve_tol, to_number, zeros
from core.parallel import map_nodes
from core.risk import DynamicRiskMeasure
from data.market_tree import NodeFunction, Payoff, ScenarioTree

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GFunction:
    """Data class for g(x) = max over pieces of slope.x + intercept"""
    node: int
    slopes: np.ndarray = field(compare=False)
    intercepts: np.ndarray = field(compare=False)

    @property
    def exact(self) -> bool:
        return self.slopes.dtype == object

    def __call__(self, x):
        values = self.slopes @ as_vector(x, self.exact) + self.intercepts
        best = max(values)
        return best if self.exact else float(best)


@dataclass
class GMinimum:
    """Data class for the outcome of minimizing a GFunction"""
    value: object
    argmin: Optional[np.ndarray]
    attained: bool
    status: LpStatus
    ray: Optional[np.ndarray] = None
    degenerate: bool = False


def build_g(tree: ScenarioTree, drm: DynamicRiskMeasure, node_id: int, next_values) -> GFunction:
    vertices = drm[node_id].dual_vertices
    next_values = as_vector(next_values, tree.exact)
    slopes = tree.price(node_id)[None, :] - vertices @ tree.child_prices(node_id)
    return GFunction(node=node_id, slopes=slopes, intercepts=vertices @ next_values)


def minimize_g(g: GFunction, tol: Optional[float] = None) -> GMinimum:
    """min tau subject to tau >= slope.x + intercept for every piece, x free"""
    pieces, d = g.slopes.shape
    ineq_lhs = np.hstack([g.slopes, -np.ones((pieces, 1))])
    problem = LpProblem(
        objective=[0] * d + [1],
        ineq_lhs=ineq_lhs,
        ineq_rhs=-g.intercepts,
        exact=g.exact,
    )
    outcome = solve(problem, tol=tol)
    if outcome.status == LpStatus.UNBOUNDED:
        return GMinimum(MINUS_INFINITY, None, False, outcome.status, ray=outcome.ray[:d])
    if outcome.status != LpStatus.OPTIMAL:
        # tau large enough is always feasible
        raise NumericalFailureError(f'g minimization returned {outcome.status.value}', node=g.node)
    return GMinimum(outcome.value, outcome.primal_point[:d], True, outcome.status, degenerate=outcome.degenerate)


@dataclass
class PricingResult:
    """Data class for the minimal risk-hedging price process and strategy"""
    prices: Dict[int, NodeFunction]
    strategies: Dict[int, Optional[np.ndarray]] = field(default_factory=dict)
    attained: Dict[int, bool] = field(default_factory=dict)
    statuses: Dict[int, str] = field(default_factory=dict)
    degenerate: Dict[int, bool] = field(default_factory=dict)
    rays: Dict[int, np.ndarray] = field(default_factory=dict)

    def price(self, tree: ScenarioTree, node_id: int):
        return self.prices[tree.time(node_id)][node_id]

    def root_price(self, tree: ScenarioTree):
        return self.prices[0][tree.root]

    @property
    def has_arbitrage_price(self) -> bool:
        return any(p.has_minus_infinity() for p in self.prices.values())


def _require_maturity(tree: ScenarioTree, payoff: Payoff):
    if payoff.maturity != tree.horizon:
        raise MaturityMismatchError(f'payoff matures at {payoff.maturity}, the tree horizon is {tree.horizon}')
    payoff.values.check_domain(tree)


def backward_price(tree: ScenarioTree, drm: DynamicRiskMeasure, payoff: Payoff,
                   tol: Optional[float] = None) -> PricingResult:
    """P*_T = h and P*_t = inf g_t node by node, with minus infinity propagated upwards"""
    _require_maturity(tree, payoff)
    result = PricingResult(prices={tree.horizon: payoff.values})
    later = payoff.values

    for t in range(tree.horizon - 1, -1, -1):
        nodes = tree.nodes_at(t)

        def price_node(node_id, later=later):
            child_values = [later[c] for c in tree.children(node_id)]
            if any(is_minus_infinity(v) for v in child_values):
                return None
            return minimize_g(build_g(tree, drm, node_id, child_values), tol=tol)

        outcomes = map_nodes(price_node, nodes)
        values = {}
        for node_id, outcome in zip(nodes, outcomes):
            if outcome is None:
                values[node_id] = MINUS_INFINITY
                result.strategies[node_id] = None
                result.attained[node_id] = False
                result.statuses[node_id] = 'propagated'
                result.degenerate[node_id] = False
                continue
            values[node_id] = outcome.value
            result.strategies[node_id] = outcome.argmin
            result.attained[node_id] = outcome.attained
            result.statuses[node_id] = outcome.status.value
            result.degenerate[node_id] = outcome.degenerate
            if outcome.ray is not None:
                result.rays[node_id] = outcome.ray
                logger.warning(f"Node {node_id}: risk-hedging price is unbounded below")
        later = NodeFunction(t, values)
        result.prices[t] = later

    logger.info(f"Backward price at root: {result.root_price(tree)}")
    return result


def direct_price(tree: ScenarioTree, drm: DynamicRiskMeasure, payoff: Payoff, t: int,
                 tol: Optional[float] = None) -> NodeFunction:
    """Price at each time-t node from one LP over all strategies of its subtree"""
    return direct_price_with_rays(tree, drm, payoff, t, tol=tol)[0]


def direct_price_with_rays(tree: ScenarioTree, drm: DynamicRiskMeasure, payoff: Payoff, t: int,
                           tol: Optional[float] = None) -> Tuple[NodeFunction, Dict[int, Dict[int, np.ndarray]]]:
    """Direct prices plus, for every time-t node priced at -inf, the strategy direction of the unbounded LP.

    A direction maps each interior node u of the subtree to theta_u; the
    claim sum theta_u.dS_{u+1} has strictly negative risk at the priced node.
    """
    _require_maturity(tree, payoff)
    if not 0 <= t <= tree.horizon:
        raise ValueError(f'time {t} outside [0, {tree.horizon}]')
    if t == tree.horizon:
        return payoff.values, {}
    nodes = tree.nodes_at(t)
    outcomes = map_nodes(lambda n: _direct_node_price(tree, drm, payoff, n, tol), nodes)
    values = {n: value for n, (value, _) in zip(nodes, outcomes)}
    rays = {n: ray for n, (_, ray) in zip(nodes, outcomes) if ray is not None}
    return NodeFunction(t, values), rays


def _direct_node_price(tree: ScenarioTree, drm: DynamicRiskMeasure, payoff: Payoff, node_id: int,
                       tol: Optional[float]) -> Tuple[object, Optional[Dict[int, np.ndarray]]]:
    exact = tree.exact
    d = tree.asset_count
    interior = [n for n in tree.subtree(node_id) if not tree.is_terminal(n)]
    # per interior node: d strategy columns then one epigraph column
    offset = {n: i * (d + 1) for i, n in enumerate(interior)}
    width = len(interior) * (d + 1)

    rows, rhs = [], []
    for n in interior:
        theta, tau = offset[n], offset[n] + d
        children = tree.children(n)
        delta = tree.delta_s(n)
        for q in drm[n].dual_vertices:
            row = zeros(width, exact)
            row[tau] = -1
            row[theta:theta + d] = -(q @ delta)
            constant = to_number(0, exact)
            for j, child in enumerate(children):
                if tree.is_terminal(child):
                    constant = constant + q[j] * payoff.values[child]
                else:
                    row[offset[child] + d] = row[offset[child] + d] + q[j]
            rows.append(row)
            rhs.append(-constant)

    objective = zeros(width, exact)
    objective[offset[node_id] + d] = 1
    problem = LpProblem(objective=objective, ineq_lhs=np.array(rows), ineq_rhs=rhs, exact=exact)
    outcome = solve(problem, tol=tol)
    if outcome.status == LpStatus.UNBOUNDED:
        return MINUS_INFINITY, {n: outcome.ray[offset[n]:offset[n] + d] for n in interior}
    if outcome.status != LpStatus.OPTIMAL:
        raise NumericalFailureError(f'direct pricing LP returned {outcome.status.value}', node=node_id)
    return outcome.value, None


@dataclass
class CheckReport:
    """Data class for a nodewise verification with its failures"""
    name: str
    checked: int = 0
    failures: List[Dict] = field(default_factory=list)
    skipped: List[Dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> Dict:
        return {'name': self.name, 'checked': self.checked, 'ok': self.ok,
                'failures': self.failures, 'skipped': self.skipped}


def verify_price_bounds(tree: ScenarioTree, drm: DynamicRiskMeasure, payoff: Payoff, result: PricingResult,
                        tol: Optional[float] = None) -> CheckReport:
    """rho_t(-P*_{t+1}) >= P*_t >= -rho_t(P*_{t+1}) at every node with a finite price"""
    _require_maturity(tree, payoff)
    tol = resolve_tol(tol, tree.exact)
    report = CheckReport('price_bounds')
    for node_id in tree.non_terminal_nodes():
        price = result.price(tree, node_id)
        if is_minus_infinity(price):
            report.skipped.append({'node': node_id, 'reason': 'price is -inf'})
            continue
        later = result.prices[tree.time(node_id) + 1]
        next_values = drm.child_vector(node_id, later)
        upper = drm[node_id].rho(-next_values)
        lower = -drm[node_id].rho(next_values)
        report.checked += 1
        slack = tol * (1 + abs(float(price)))
        if price > upper + slack or price < lower - slack:
            report.failures.append({'node': node_id, 'price': float(price),
                                    'upper': float(upper), 'lower': float(lower)})
    return report


def verify_line_behavior(tree: ScenarioTree, drm: DynamicRiskMeasure, node_id: int, next_values,
                         directions: Sequence, radii: Sequence = (1, -1, 10, -10, 100, -100),
                         tol: Optional[float] = None) -> CheckReport:
    """g is constant along two-sided risk-neutral directions and grows linearly along two-sided risky ones"""
    exact = tree.exact
    tol = resolve_tol(tol, exact)
    measure = drm[node_id]
    delta = tree.delta_s(node_id)
    g = build_g(tree, drm, node_id, next_values)
    origin = g(zeros(tree.asset_count, exact))
    risk_of_claim = measure.rho(as_vector(next_values, exact))
    report = CheckReport('line_behavior')

    for z in directions:
        z = as_vector(z, exact)
        up, down = measure.rho(delta @ z), measure.rho(-(delta @ z))
        if up <= tol and down <= tol:
            for r in radii:
                value = g(z * to_number(r, exact))
                report.checked += 1
                if abs(value - origin) > tol * (1 + abs(float(origin))):
                    report.failures.append({'node': node_id, 'direction': [float(v) for v in z], 'radius': r,
                                            'rule': 'constant', 'value': float(value), 'expected': float(origin)})
        elif up > tol and down > tol:
            slope = min(up, down)
            for r in radii:
                value = g(z * to_number(r, exact))
                bound = abs(to_number(r, exact)) * slope - risk_of_claim
                report.checked += 1
                if value < bound - tol * (1 + abs(float(bound))):
                    report.failures.append({'node': node_id, 'direction': [float(v) for v in z], 'radius': r,
                                            'rule': 'coercive', 'value': float(value), 'bound': float(bound)})
        else:
            report.skipped.append({'node': node_id, 'direction': [float(v) for v in z],
                                   'reason': 'risk-neutral in one direction only'})
    return report


def verify_portfolio_process(tree: ScenarioTree, drm: DynamicRiskMeasure, result: PricingResult,
                             tol: Optional[float] = None) -> CheckReport:
    """P*_t + theta*_t.dS_{t+1} - P*_{t+1} is acceptable at every node with a finite attained price"""
    tol = resolve_tol(tol, tree.exact)
    report = CheckReport('portfolio_process')
    for node_id in tree.non_terminal_nodes():
        theta = result.strategies.get(node_id)
        price = result.price(tree, node_id)
        if theta is None or is_minus_infinity(price):
            report.skipped.append({'node': node_id, 'reason': 'no finite optimal strategy'})
            continue
        later = drm.child_vector(node_id, result.prices[tree.time(node_id) + 1])
        residual = price + tree.delta_s(node_id) @ theta - later
        risk = drm[node_id].rho(residual)
        report.checked += 1
        if risk > tol * (1 + abs(float(price))):
            report.failures.append({'node': node_id, 'risk': float(risk)})
    return report


def is_risk_hedging_price(tree: ScenarioTree, drm: DynamicRiskMeasure, node_id: int, next_values, price,
                          tol: Optional[float] = None) -> bool:
    """Whether some strategy makes price + theta.dS - next_values acceptable at the node.

    When inf g is -inf every candidate price, however low, is a risk-hedging price.
    """
    tol = resolve_tol(tol, tree.exact)
    minimum = minimize_g(build_g(tree, drm, node_id, next_values), tol=tol)
    if is_minus_infinity(minimum.value):
        return True
    return minimum.value <= to_number(price, tree.exact) + tol
