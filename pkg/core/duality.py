"""
Martingale kernels dominated by the risk measure.

At a node the admissible kernels are q = lambda @ D with lambda in the unit
simplex over the dual vertices D and q.dS = 0. Choosing one kernel per node
gives a martingale measure Q with rho_t(X) >= -E_Q(X | F_t); the dual price is
the largest expected payoff over such choices.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from django.conf import settings

from core.arbitrage import check_na, check_ngd_all, na_holds
from core.exceptions import MaturityMismatchError, NoArbitrageRequiredError, NumericalFailureError
from core.lp import LpProblem, LpStatus, solve
from core.numeric import as_vector, is_minus_infinity, resolve_tol, to_number
from core.parallel import map_nodes
from core.pricing import backward_price
from core.risk import DynamicRiskMeasure, is_A0, rho_dynamic
from data.market_tree import NodeFunction, Payoff, ScenarioTree

logger = logging.getLogger(__name__)

MARTINGALE_TOL = 1e-10


@dataclass
class MartingaleKernelPolytope:
    """Data class for {q in conv D(node) : q.dS = 0} with its two inscribed radii"""
    node: int
    vertices: np.ndarray = field(repr=False)
    delta: np.ndarray = field(repr=False)
    interior_radius: Optional[object] = None
    weight_radius: Optional[object] = None
    interior_kernel: Optional[np.ndarray] = field(default=None, repr=False)
    weight_kernel: Optional[np.ndarray] = field(default=None, repr=False)
    tol: object = 0

    @property
    def exact(self) -> bool:
        return self.vertices.dtype == object

    @property
    def empty(self) -> bool:
        return self.weight_radius is None

    def _problem(self, objective) -> LpProblem:
        count, d = len(self.vertices), self.delta.shape[1]
        moments = self.vertices @ self.delta
        return LpProblem(
            objective=objective,
            eq_lhs=np.vstack([np.ones((1, count)), moments.T.astype(object if self.exact else float)]),
            eq_rhs=[1] + [0] * d,
            lower_bounds=[0] * count,
            exact=self.exact,
        )

    def maximize(self, values):
        """max over kernels q of q.values, with the maximizing kernel"""
        if self.empty:
            raise NoArbitrageRequiredError(f'node {self.node}: no martingale kernel', node=self.node)
        outcome = solve(self._problem(-(self.vertices @ as_vector(values, self.exact))), tol=self.tol)
        if outcome.status != LpStatus.OPTIMAL:
            raise NumericalFailureError(f'node {self.node}: kernel LP is {outcome.status.value}', node=self.node)
        return -outcome.value, outcome.primal_point @ self.vertices

    def minimize(self, values):
        if self.empty:
            raise NoArbitrageRequiredError(f'node {self.node}: no martingale kernel', node=self.node)
        outcome = solve(self._problem(self.vertices @ as_vector(values, self.exact)), tol=self.tol)
        if outcome.status != LpStatus.OPTIMAL:
            raise NumericalFailureError(f'node {self.node}: kernel LP is {outcome.status.value}', node=self.node)
        return outcome.value, outcome.primal_point @ self.vertices

    def contains(self, kernel, tol=None) -> bool:
        """Whether kernel is a martingale kernel in conv D(node)"""
        tol = resolve_tol(tol, self.exact)
        kernel = as_vector(kernel, self.exact)
        if any(abs(v) > tol for v in kernel @ self.delta):
            return False
        count, k = self.vertices.shape
        problem = LpProblem(
            objective=[0] * count,
            eq_lhs=np.vstack([np.ones((1, count)), self.vertices.T.astype(object if self.exact else float)]),
            eq_rhs=np.concatenate([as_vector([1], self.exact), kernel]),
            lower_bounds=[0] * count,
            exact=self.exact,
        )
        return solve(problem, tol=tol).status == LpStatus.OPTIMAL

    def to_dict(self) -> Dict:
        def number(value):
            return None if value is None else float(value)

        payload = {
            'node': self.node,
            'empty': self.empty,
            'interior_radius': number(self.interior_radius),
            'weight_radius': number(self.weight_radius),
        }
        if self.interior_kernel is not None:
            payload['interior_kernel'] = [float(v) for v in self.interior_kernel]
        return payload


def _radius(vertices: np.ndarray, delta: np.ndarray, on_weights: bool, tol):
    """max eps in [0, 1] with q_j >= eps (or lambda_v >= eps); None when the polytope is empty"""
    exact = vertices.dtype == object
    count, k = vertices.shape
    d = delta.shape[1]
    moments = vertices @ delta
    dtype = object if exact else float
    eq_lhs = np.vstack([
        np.hstack([np.ones((1, count)), np.zeros((1, 1))]),
        np.hstack([moments.T.astype(dtype), np.zeros((d, 1))]),
    ])
    if on_weights:
        ineq_lhs = np.hstack([-np.eye(count), np.ones((count, 1))])
        rows = count
    else:
        ineq_lhs = np.hstack([-vertices.T.astype(dtype), np.ones((k, 1))])
        rows = k
    problem = LpProblem(
        objective=[0] * count + [-1],
        ineq_lhs=ineq_lhs,
        ineq_rhs=[0] * rows,
        eq_lhs=eq_lhs,
        eq_rhs=[1] + [0] * d,
        lower_bounds=[0] * (count + 1),
        upper_bounds=[None] * count + [1],
        exact=exact,
    )
    outcome = solve(problem, tol=tol)
    if outcome.status == LpStatus.INFEASIBLE:
        return None, None
    if outcome.status != LpStatus.OPTIMAL:
        raise NumericalFailureError(f'radius LP is {outcome.status.value}')
    return -outcome.value, outcome.primal_point[:count] @ vertices


def build_polytope(tree: ScenarioTree, drm: DynamicRiskMeasure, node_id: int,
                   tol: Optional[float] = None) -> MartingaleKernelPolytope:
    tol = resolve_tol(tol, tree.exact)
    vertices = drm[node_id].dual_vertices
    delta = tree.delta_s(node_id)
    interior, interior_kernel = _radius(vertices, delta, on_weights=False, tol=tol)
    weight, weight_kernel = _radius(vertices, delta, on_weights=True, tol=tol)
    polytope = MartingaleKernelPolytope(
        node=node_id,
        vertices=vertices,
        delta=delta,
        interior_radius=interior,
        weight_radius=weight,
        interior_kernel=interior_kernel,
        weight_kernel=weight_kernel,
        tol=tol,
    )
    logger.debug(f"Node {node_id}: kernel polytope {'empty' if polytope.empty else 'nonempty'}, "
                 f"interior radius {interior}, weight radius {weight}")
    return polytope


def build_polytopes(tree: ScenarioTree, drm: DynamicRiskMeasure,
                    tol: Optional[float] = None) -> Dict[int, MartingaleKernelPolytope]:
    nodes = tree.non_terminal_nodes()
    return dict(zip(nodes, map_nodes(lambda n: build_polytope(tree, drm, n, tol=tol), nodes)))


def _require_na(tree: ScenarioTree, drm: DynamicRiskMeasure, tol):
    failing = [v.node for v in check_na(tree, drm, tol=tol) if not v.na]
    if failing:
        raise NoArbitrageRequiredError(f'NA fails at nodes {failing}', node=failing[0])


@dataclass
class DualPriceResult:
    """Data class for the dual value process and the maximizing kernels"""
    values: Dict[int, NodeFunction]
    kernels: Dict[int, np.ndarray] = field(default_factory=dict)
    strictly_positive: Dict[int, bool] = field(default_factory=dict)

    def at(self, t: int) -> NodeFunction:
        return self.values[t]


def _dual_program(tree: ScenarioTree, drm: DynamicRiskMeasure, payoff: Payoff, t: int, tol,
                  polytopes: Dict[int, MartingaleKernelPolytope]) -> DualPriceResult:
    if payoff.maturity != tree.horizon:
        raise MaturityMismatchError(f'payoff matures at {payoff.maturity}, the tree horizon is {tree.horizon}')
    payoff.values.check_domain(tree)
    if not 0 <= t <= tree.horizon:
        raise ValueError(f'time {t} outside [0, {tree.horizon}]')
    result = DualPriceResult(values={tree.horizon: payoff.values})
    later = payoff.values
    for s in range(tree.horizon - 1, t - 1, -1):
        nodes = tree.nodes_at(s)

        def step(node_id, later=later):
            return polytopes[node_id].maximize(drm.child_vector(node_id, later))

        outcomes = map_nodes(step, nodes)
        values = {}
        for node_id, (value, kernel) in zip(nodes, outcomes):
            values[node_id] = value
            result.kernels[node_id] = kernel
            result.strictly_positive[node_id] = bool(all(q > tol for q in kernel))
        later = NodeFunction(s, values)
        result.values[s] = later
    return result


def dual_price(tree: ScenarioTree, drm: DynamicRiskMeasure, payoff: Payoff, t: int = 0,
               tol: Optional[float] = None) -> NodeFunction:
    """sup over dominated martingale measures of E_Q(h | F_t), as a function on the time-t nodes"""
    tol = resolve_tol(tol, tree.exact)
    _require_na(tree, drm, tol)
    result = _dual_program(tree, drm, payoff, t, tol, build_polytopes(tree, drm, tol=tol))
    logger.info(f"Dual price at time {t}: {[float(v) for _, v in result.at(t).items()]}")
    return result.at(t)


@dataclass
class MartingaleMeasure:
    """Data class for a martingale measure given by one kernel per non-terminal node"""
    kernels: Dict[int, np.ndarray]
    leaf_weights: Dict[int, object]
    equivalent: bool

    def expectation(self, tree: ScenarioTree, X: NodeFunction, t: int) -> NodeFunction:
        """E_Q(X | F_t) on the time-t nodes"""
        later = X
        for s in range(X.time - 1, t - 1, -1):
            later = NodeFunction(s, {
                n: self.kernels[n] @ as_vector([later[c] for c in tree.children(n)], tree.exact)
                for n in tree.nodes_at(s)
            })
        return later

    def to_dict(self) -> Dict:
        return {
            'kernels': {str(n): [float(v) for v in q] for n, q in sorted(self.kernels.items())},
            'leaf_weights': {str(n): float(w) for n, w in sorted(self.leaf_weights.items())},
            'equivalent': self.equivalent,
        }


def _assemble_measure(tree: ScenarioTree, kernels: Dict[int, np.ndarray], tol) -> MartingaleMeasure:
    weights = {tree.root: to_number(1, tree.exact)}
    for node_id in tree.non_terminal_nodes():
        for child, q in zip(tree.children(node_id), kernels[node_id]):
            weights[child] = weights[node_id] * q
    leaf_weights = {leaf: weights[leaf] for leaf in tree.leaves()}
    equivalent = all(q > tol for kernel in kernels.values() for q in kernel)
    return MartingaleMeasure(kernels=kernels, leaf_weights=leaf_weights, equivalent=bool(equivalent))


def _check_martingale(tree: ScenarioTree, measure: MartingaleMeasure):
    for node_id, kernel in measure.kernels.items():
        drift = kernel @ tree.delta_s(node_id)
        if any(abs(float(v)) > MARTINGALE_TOL for v in drift):
            raise NumericalFailureError(f'node {node_id}: witness kernel has drift {[float(v) for v in drift]}',
                                        node=node_id)


def extract_witness_measure(tree: ScenarioTree, drm: DynamicRiskMeasure, tol: Optional[float] = None,
                            polytopes: Optional[Dict[int, MartingaleKernelPolytope]] = None) -> MartingaleMeasure:
    """Dominated martingale measure built from the most interior kernel at every node"""
    tol = resolve_tol(tol, tree.exact)
    _require_na(tree, drm, tol)
    polytopes = polytopes or build_polytopes(tree, drm, tol=tol)
    kernels = {}
    for node_id, polytope in polytopes.items():
        if polytope.interior_radius is not None and polytope.interior_radius > tol:
            kernels[node_id] = polytope.interior_kernel
        else:
            kernels[node_id] = polytope.weight_kernel
    measure = _assemble_measure(tree, kernels, tol)
    _check_martingale(tree, measure)
    if not measure.equivalent:
        logger.warning("Witness measure is not equivalent to P: some kernel has a zero weight")
    return measure


@dataclass
class DualPriceDetails:
    """Data class for the dual price with its maximizing measure and the interior perturbation"""
    values: NodeFunction
    kernels: Dict[int, np.ndarray]
    strictly_positive: bool
    witness: MartingaleMeasure
    mixture_gaps: Dict[str, Dict] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            'values': {str(n): float(v) for n, v in self.values.items()},
            'kernels': {str(n): [float(v) for v in q] for n, q in sorted(self.kernels.items())},
            'strictly_positive': self.strictly_positive,
            'witness': self.witness.to_dict(),
            'mixture_gaps': self.mixture_gaps,
        }


def dual_price_details(tree: ScenarioTree, drm: DynamicRiskMeasure, payoff: Payoff, t: int = 0,
                       tol: Optional[float] = None, epsilons=(0.5, 0.1, 0.01)) -> DualPriceDetails:
    """Dual price with the maximizing kernels and the value of eps*Q_witness + (1 - eps)*Q_max.

    When the maximizer is not strictly positive the mixture is an equivalent
    measure whose value approaches the supremum; the gap must stay within
    eps times the payoff range.
    """
    tol = resolve_tol(tol, tree.exact)
    _require_na(tree, drm, tol)
    polytopes = build_polytopes(tree, drm, tol=tol)
    result = _dual_program(tree, drm, payoff, 0, tol, polytopes)
    witness = extract_witness_measure(tree, drm, tol=tol, polytopes=polytopes)
    maximizer = _assemble_measure(tree, result.kernels, tol)

    h = payoff.values
    spread = max(v for _, v in h.items()) - min(v for _, v in h.items())
    best = sum(maximizer.leaf_weights[n] * h[n] for n in tree.leaves())
    inside = sum(witness.leaf_weights[n] * h[n] for n in tree.leaves())
    gaps = {}
    for eps in epsilons:
        eps = to_number(eps, tree.exact)
        mixed = eps * inside + (1 - eps) * best
        gap = best - mixed
        gaps[str(float(eps))] = {
            'value': float(mixed),
            'gap': float(gap),
            'bound': float(eps * spread),
            'ok': bool(gap <= eps * spread + tol * (1 + abs(float(best)))),
        }
    return DualPriceDetails(
        values=result.at(t),
        kernels=result.kernels,
        strictly_positive=maximizer.equivalent,
        witness=witness,
        mixture_gaps=gaps,
    )


@dataclass
class FtapLeg:
    """Data class for one equivalence leg of the FTAP cross-check"""
    name: str
    checked: int = 0
    consistent: bool = True
    skipped: bool = False
    failures: List[Dict] = field(default_factory=list)

    def fail(self, **details):
        self.consistent = False
        self.failures.append(details)

    def to_dict(self) -> Dict:
        return {'name': self.name, 'checked': self.checked, 'consistent': self.consistent,
                'skipped': self.skipped, 'failures': self.failures}


@dataclass
class FtapReport:
    """Data class for the verdicts and equivalence legs of the FTAP cross-check"""
    na: bool
    aip: bool
    ngd: Dict[int, bool]
    polytopes_nonempty: bool
    strictly_positive: bool
    legs: List[FtapLeg] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    @property
    def consistent(self) -> bool:
        return all(leg.consistent for leg in self.legs)

    def to_dict(self) -> Dict:
        return {
            'na': self.na,
            'aip': self.aip,
            'ngd': {str(t): v for t, v in sorted(self.ngd.items())},
            'polytopes_nonempty': self.polytopes_nonempty,
            'strictly_positive': self.strictly_positive,
            'consistent': self.consistent,
            'legs': [leg.to_dict() for leg in self.legs],
            'notes': self.notes,
        }


def _random_strategy_claim(tree: ScenarioTree, rng, scale: float = 1.0) -> NodeFunction:
    """sum over u of theta_u.dS_{u+1} at maturity for a random predictable theta"""
    d = tree.asset_count
    thetas = {n: as_vector(np.round(rng.uniform(-scale, scale, size=d), 6), tree.exact)
              for n in tree.non_terminal_nodes()}
    values = {}
    for leaf in tree.leaves():
        path = tree.path(leaf)
        total = to_number(0, tree.exact)
        for parent, child in zip(path[:-1], path[1:]):
            total = total + thetas[parent] @ (tree.price(child) - tree.price(parent))
        values[leaf] = total
    return NodeFunction(tree.horizon, values)


def _random_claim(tree: ScenarioTree, rng, time: Optional[int] = None) -> NodeFunction:
    time = tree.horizon if time is None else time
    return NodeFunction(time, {n: to_number(round(float(v), 6), tree.exact)
                               for n, v in zip(tree.nodes_at(time), rng.normal(size=len(tree.nodes_at(time))))})


def verify_ftap(tree: ScenarioTree, drm: DynamicRiskMeasure, samples: int = 20,
                tol: Optional[float] = None, seed: Optional[int] = None) -> FtapReport:
    """Cross-check NA, martingale kernel existence, NGD and measure domination on one model"""
    tol = resolve_tol(tol, tree.exact)
    check_tol = tol if tree.exact else max(float(tol), 1e-9)
    rng = np.random.default_rng(settings.RISKHEDGE_SEED if seed is None else seed)

    verdicts = check_na(tree, drm, tol=tol)
    polytopes = build_polytopes(tree, drm, tol=tol)
    ngd = {t: r.holds for t, r in check_ngd_all(tree, drm, tol=tol).items()}
    na = na_holds(verdicts)
    aip = all(v.aip for v in verdicts)
    nonempty = all(not p.empty for p in polytopes.values())
    report = FtapReport(
        na=na,
        aip=aip,
        ngd=ngd,
        polytopes_nonempty=nonempty,
        strictly_positive=all(p.interior_radius is not None and p.interior_radius > tol
                              for p in polytopes.values()),
    )

    leg = FtapLeg('na_iff_martingale_kernels')
    for verdict in verdicts:
        polytope = polytopes[verdict.node]
        leg.checked += 1
        interior = polytope.weight_radius is not None and polytope.weight_radius > check_tol
        if verdict.na != interior:
            leg.fail(node=verdict.node, rule='na_iff_weight_radius', na=verdict.na,
                     weight_radius=None if polytope.weight_radius is None else float(polytope.weight_radius))
        if verdict.aip == polytope.empty:
            leg.fail(node=verdict.node, rule='aip_iff_nonempty', aip=verdict.aip, empty=polytope.empty)
    all_ngd = all(ngd.values())
    leg.checked += 1
    if all_ngd != aip:
        leg.fail(rule='ngd_iff_aip', ngd=all_ngd, aip=aip)
    if na and not all_ngd:
        leg.fail(rule='na_implies_ngd', ngd=ngd)
    if all_ngd and not na:
        report.notes.append('NGD holds without NA: some node has a one-sided risk-neutral direction')
    report.legs.append(leg)

    attainable = FtapLeg('acceptable_attainable_claims_are_two_sided')
    domination = FtapLeg('risk_dominates_martingale_expectation')
    separation = FtapLeg('acceptable_claims_are_separated')
    if not na:
        for skipped in (attainable, domination, separation):
            skipped.skipped = True
        report.legs.extend([attainable, domination, separation])
        logger.info("FTAP check: NA fails, legs beyond the first skipped")
        return report

    witness = extract_witness_measure(tree, drm, tol=tol, polytopes=polytopes)
    claims = [NodeFunction.constant(tree, tree.horizon, 0)] + [
        _random_strategy_claim(tree, rng) for _ in range(samples)]
    for claim in claims:
        for t in range(tree.horizon):
            risk = rho_dynamic(drm, claim, t)
            two_sided = is_A0(drm, claim, t, tol=check_tol)
            for node_id, value in risk.items():
                if value > check_tol:
                    continue
                attainable.checked += 1
                if not two_sided[node_id]:
                    attainable.fail(time=t, node=node_id, risk=float(value),
                                    opposite=float(rho_dynamic(drm, -claim, t)[node_id]))

    for _ in range(samples):
        claim = _random_claim(tree, rng)
        for t in range(tree.horizon):
            risk = rho_dynamic(drm, claim, t)
            expectation = witness.expectation(tree, claim, t)
            for node_id, value in risk.items():
                domination.checked += 1
                bound = -expectation[node_id]
                if value < bound - check_tol * (1 + abs(float(bound))):
                    domination.fail(time=t, node=node_id, risk=float(value), bound=float(bound))

    for _ in range(samples):
        for node_id in tree.non_terminal_nodes():
            children = tree.children(node_id)
            y = as_vector(np.round(rng.normal(size=len(children)), 6), tree.exact)
            measure = drm[node_id]
            x = y + measure.rho(y)
            if measure.rho(-x) <= check_tol:
                continue
            separation.checked += 1
            best, _ = polytopes[node_id].maximize(x)
            if best <= check_tol:
                separation.fail(node=node_id, claim=[float(v) for v in x], best=float(best))

    report.legs.extend([attainable, domination, separation])
    failed = [leg.name for leg in report.legs if not leg.consistent]
    if failed:
        logger.error(f"FTAP check inconsistent on legs {failed}")
    else:
        logger.info("FTAP check consistent")
    return report


def primal_dual_gap(tree: ScenarioTree, drm: DynamicRiskMeasure, payoff: Payoff,
                    tol: Optional[float] = None):
    """|backward price - dual price| at the root"""
    primal = backward_price(tree, drm, payoff, tol=tol).root_price(tree)
    dual = dual_price(tree, drm, payoff, 0, tol=tol)[tree.root]
    if is_minus_infinity(primal):
        return float('inf')
    return abs(primal - dual)
