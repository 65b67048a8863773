"""
Coherent risk measures on scenario trees.

Each non-terminal node carries a one-step measure described by the vertices
of its determining set D(node): rho(x) = max over vertices q of q.(-x).
The dynamic measure is the backward composition of the one-step measures,
which makes it time consistent.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from django.conf import settings

from core.exceptions import (
    CombinatorialLimitError,
    ConeEmptyDualError,
    InconsistencyError,
    InvalidSpecError,
    NotAParentError,
    ParseError,
)
from core.lp import LpProblem, LpStatus, solve
from core.numeric import as_matrix, as_vector, identity, resolve_tol, solve_square, to_number, zeros
from core.parallel import map_nodes
from data.market_tree import NodeFunction, ScenarioTree

logger = logging.getLogger(__name__)

KERNEL_SUM_TOL = 1e-12


class RiskVariant(str, Enum):
    WORST_CASE = 'worst_case'
    CVAR = 'cvar'
    KERNELS = 'kernels'
    CONE = 'cone'


@dataclass(frozen=True)
class RiskMeasureSpec:
    """Data class for the risk measure of a model: one global description plus per-node overrides"""
    variant: RiskVariant
    alpha: Optional[object] = None
    per_node: Dict[int, Tuple[Tuple]] = field(default_factory=dict)
    overrides: Dict[int, 'RiskMeasureSpec'] = field(default_factory=dict)

    def __post_init__(self):
        if self.variant == RiskVariant.CVAR:
            if self.alpha is None or not (0 < self.alpha <= 1):
                raise InvalidSpecError(f'CVaR level must lie in (0, 1], got {self.alpha}')
        for node_id, override in self.overrides.items():
            if override.overrides:
                raise InvalidSpecError(f'override for node {node_id} cannot carry overrides of its own')

    def for_node(self, node_id: int) -> 'RiskMeasureSpec':
        return self.overrides.get(node_id, self)

    def to_dict(self) -> Dict:
        payload = {'type': self.variant.value}
        if self.alpha is not None:
            payload['alpha'] = float(self.alpha)
        if self.per_node:
            payload['per_node'] = {str(k): [[float(v) for v in row] for row in rows]
                                   for k, rows in sorted(self.per_node.items())}
        if self.overrides:
            payload['overrides'] = {str(k): o.to_dict() for k, o in sorted(self.overrides.items())}
        return payload

    @classmethod
    def worst_case(cls) -> 'RiskMeasureSpec':
        return cls(RiskVariant.WORST_CASE)

    @classmethod
    def cvar(cls, alpha) -> 'RiskMeasureSpec':
        return cls(RiskVariant.CVAR, alpha=alpha)

    @classmethod
    def kernels(cls, per_node: Dict[int, Sequence[Sequence]]) -> 'RiskMeasureSpec':
        return cls(RiskVariant.KERNELS, per_node={k: tuple(tuple(r) for r in v) for k, v in per_node.items()})

    @classmethod
    def cone(cls, per_node: Dict[int, Sequence[Sequence]]) -> 'RiskMeasureSpec':
        return cls(RiskVariant.CONE, per_node={k: tuple(tuple(r) for r in v) for k, v in per_node.items()})


def _parse_vectors(raw, exact: bool, where: str) -> Tuple[Tuple]:
    if not isinstance(raw, list) or not raw or not all(isinstance(r, list) and r for r in raw):
        raise ParseError(f'{where}: expected a non-empty list of non-empty vectors')
    try:
        return tuple(tuple(to_number(v, exact) for v in row) for row in raw)
    except (TypeError, ValueError) as e:
        raise ParseError(f'{where}: {e}')


def _parse_node_map(raw, exact: bool, where: str) -> Dict[int, Tuple[Tuple]]:
    if not isinstance(raw, dict):
        raise ParseError(f'{where}: expected an object keyed by node id')
    parsed = {}
    for key, vectors in raw.items():
        try:
            node_id = int(key)
        except (TypeError, ValueError):
            raise ParseError(f'{where}: node id {key!r} is not an integer')
        parsed[node_id] = _parse_vectors(vectors, exact, f'{where}[{key}]')
    return parsed


def parse_risk_measure(payload, exact: bool = False, node_id: Optional[int] = None) -> RiskMeasureSpec:
    """Build a RiskMeasureSpec from the ``risk_measure`` fragment of a model file"""
    if not isinstance(payload, dict) or 'type' not in payload:
        raise ParseError('risk_measure must be an object with a "type"')
    try:
        variant = RiskVariant(payload['type'])
    except ValueError:
        raise ParseError(f'unknown risk measure type {payload["type"]!r}')

    alpha = None
    per_node = {}
    if variant == RiskVariant.CVAR:
        if 'alpha' not in payload:
            raise ParseError('cvar risk measure needs "alpha"')
        try:
            alpha = to_number(payload['alpha'], exact)
        except (TypeError, ValueError):
            raise ParseError(f'cvar alpha {payload["alpha"]!r} is not a number')
    elif variant in (RiskVariant.KERNELS, RiskVariant.CONE):
        shorthand = 'kernels' if variant == RiskVariant.KERNELS else 'generators'
        if node_id is not None and shorthand in payload:
            per_node = {node_id: _parse_vectors(payload[shorthand], exact, f'overrides[{node_id}].{shorthand}')}
        else:
            per_node = _parse_node_map(payload.get('per_node', {}), exact, 'risk_measure.per_node')

    overrides = {}
    if 'overrides' in payload:
        if node_id is not None:
            raise ParseError(f'override for node {node_id} cannot carry overrides of its own')
        if not isinstance(payload['overrides'], dict):
            raise ParseError('risk_measure.overrides must be an object keyed by node id')
        for key, fragment in payload['overrides'].items():
            try:
                override_node = int(key)
            except (TypeError, ValueError):
                raise ParseError(f'override node id {key!r} is not an integer')
            overrides[override_node] = parse_risk_measure(fragment, exact, node_id=override_node)
    return RiskMeasureSpec(variant, alpha=alpha, per_node=per_node, overrides=overrides)


@dataclass(frozen=True)
class OneStepRiskMeasure:
    """Data class for the conditional risk measure at one node, given by its dual vertices"""
    node: int
    dual_vertices: np.ndarray = field(compare=False)
    variant: RiskVariant = RiskVariant.WORST_CASE

    def rho(self, x):
        return rho_one_step(self, x)

    @property
    def exact(self) -> bool:
        return self.dual_vertices.dtype == object


def rho_one_step(measure: OneStepRiskMeasure, x):
    values = measure.dual_vertices @ (-as_vector(x, measure.exact))
    best = max(values)
    return best if measure.exact else float(best)


def _vector_key(vector, exact: bool) -> Tuple:
    if exact:
        return tuple(vector)
    return tuple(round(float(v), 12) + 0.0 for v in vector)


def _dedupe(vectors: Sequence[np.ndarray], exact: bool) -> List[np.ndarray]:
    seen, unique = set(), []
    for vector in vectors:
        key = _vector_key(vector, exact)
        if key not in seen:
            seen.add(key)
            unique.append(vector)
    return unique


def _cvar_vertices(probs: np.ndarray, alpha, exact: bool, tol) -> List[np.ndarray]:
    """Vertices of {0 <= q_j <= p_j/alpha, sum q = 1}: every coordinate at a bound except one"""
    caps = [p / alpha for p in probs]
    size = len(caps)
    zero = to_number(0, exact)
    found = []

    def extend(start: int, capped: List[int], total):
        rest = 1 - total
        for free in range(size):
            if free in capped or not (-tol <= rest <= caps[free] + tol):
                continue
            vertex = zeros(size, exact)
            for j in capped:
                vertex[j] = caps[j]
            vertex[free] = min(max(rest, zero), caps[free])
            found.append(vertex)
        for j in range(start, size):
            if total + caps[j] <= 1 + tol:
                extend(j + 1, capped + [j], total + caps[j])

    extend(0, [], zero)
    return _dedupe(found, exact)


def _in_convex_hull(point: np.ndarray, others: Sequence[np.ndarray], exact: bool, tol) -> bool:
    if not others:
        return False
    count = len(others)
    eq_lhs = np.vstack([np.array(others, dtype=object if exact else float).T, np.ones((1, count))])
    eq_rhs = np.concatenate([point, [1]])
    problem = LpProblem(
        objective=[0] * count, eq_lhs=eq_lhs, eq_rhs=eq_rhs,
        lower_bounds=[0] * count, exact=exact,
    )
    return solve(problem, tol=tol).status == LpStatus.OPTIMAL


def _hull_vertices(vectors: List[np.ndarray], exact: bool, tol) -> List[np.ndarray]:
    unique = _dedupe(vectors, exact)
    return [v for i, v in enumerate(unique) if not _in_convex_hull(v, unique[:i] + unique[i + 1:], exact, tol)]


def _cone_vertices(generators: np.ndarray, size: int, exact: bool, tol) -> List[np.ndarray]:
    """Vertices of {q >= 0, sum q = 1, g.q >= 0 for each generator g} by active-set enumeration"""
    rows = np.vstack([identity(size, exact), generators])
    combinations = math.comb(len(rows), size - 1)
    if combinations > settings.RISKHEDGE_DUAL_SET_CAP:
        raise CombinatorialLimitError(f'{combinations} active sets exceed the enumeration cap')
    ones = as_vector([1] * size, exact)
    rhs = as_vector([1] + [0] * (size - 1), exact)
    found = []
    for active in itertools.combinations(range(len(rows)), size - 1):
        system = np.vstack([ones[None, :]] + [rows[i][None, :] for i in active])
        q = solve_square(system, rhs, exact=exact, tol=tol)
        if q is None:
            continue
        if any(v < -tol for v in q) or any(v < -tol for v in generators @ q):
            continue
        if not exact:
            q = np.where(np.abs(q) <= tol, 0.0, q)
        found.append(q)
    return _dedupe(found, exact)


def _check_probability_vector(vector, size: int, node_id: int, exact: bool):
    if len(vector) != size:
        raise InvalidSpecError(f'node {node_id}: kernel has {len(vector)} entries for {size} children', node=node_id)
    if any(v < 0 for v in vector) or abs(sum(vector) - 1) > KERNEL_SUM_TOL:
        raise InvalidSpecError(f'node {node_id}: kernel {[float(v) for v in vector]} is not a probability vector',
                               node=node_id)


def build_one_step(tree: ScenarioTree, spec: RiskMeasureSpec, node_id: int,
                   tol: Optional[float] = None) -> OneStepRiskMeasure:
    """Convert the acceptance description at a node into the vertex list of D(node)"""
    if tree.is_terminal(node_id):
        raise NotAParentError(f'node {node_id} is terminal', node=node_id)
    exact = tree.exact
    tol = resolve_tol(tol, exact)
    local = spec.for_node(node_id)
    probs = tree.cond_probs(node_id)
    size = len(probs)

    if local.variant == RiskVariant.WORST_CASE:
        vertices = list(identity(size, exact))
    elif local.variant == RiskVariant.CVAR:
        if size > settings.RISKHEDGE_MAX_CHILDREN:
            raise CombinatorialLimitError(f'node {node_id}: {size} children exceed the vertex enumeration limit',
                                          node=node_id)
        vertices = _cvar_vertices(probs, to_number(local.alpha, exact), exact, tol)
    elif local.variant == RiskVariant.KERNELS:
        if node_id not in local.per_node:
            raise InvalidSpecError(f'node {node_id}: no kernels given', node=node_id)
        kernels = [as_vector(k, exact) for k in local.per_node[node_id]]
        for kernel in kernels:
            _check_probability_vector(kernel, size, node_id, exact)
        vertices = _hull_vertices(kernels, exact, tol)
    else:
        if size > settings.RISKHEDGE_MAX_CHILDREN:
            raise CombinatorialLimitError(f'node {node_id}: {size} children exceed the vertex enumeration limit',
                                          node=node_id)
        if node_id not in local.per_node:
            raise InvalidSpecError(f'node {node_id}: no cone generators given', node=node_id)
        generators = local.per_node[node_id]
        if any(len(g) != size for g in generators):
            raise InvalidSpecError(f'node {node_id}: generators must have {size} entries', node=node_id)
        report = validate_acceptance_cone(generators, node_id=node_id, exact=exact, tol=tol)
        if not report.monotone:
            raise InvalidSpecError(f'node {node_id}: ' + '; '.join(report.failures), node=node_id)
        vertices = _cone_vertices(as_matrix(generators, exact), size, exact, tol)
        if not vertices:
            raise ConeEmptyDualError(f'node {node_id}: no probability vector supports the acceptance cone',
                                     node=node_id)
        if not report.no_free_lunch:
            raise InvalidSpecError(f'node {node_id}: ' + '; '.join(report.failures), node=node_id)

    matrix = np.array(vertices, dtype=object if exact else float).reshape(len(vertices), size)
    logger.debug(f"Node {node_id}: {local.variant.value} measure with {len(vertices)} dual vertices")
    return OneStepRiskMeasure(node=node_id, dual_vertices=matrix, variant=local.variant)


@dataclass
class ConeReport:
    """Data class for the acceptance cone checks"""
    node: Optional[int]
    monotone: bool
    no_free_lunch: bool
    failures: List[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return self.monotone and self.no_free_lunch


def validate_acceptance_cone(generators: Sequence[Sequence], node_id: Optional[int] = None,
                             exact: bool = False, tol: Optional[float] = None) -> ConeReport:
    """Check that the cone holds every unit vector and meets the nonpositive orthant only at 0"""
    tol = resolve_tol(tol, exact)
    g = as_matrix(generators, exact)
    count, size = g.shape
    failures = []

    missing = []
    for j in range(size):
        target = zeros(size, exact)
        target[j] = 1
        problem = LpProblem(objective=[0] * count, eq_lhs=g.T, eq_rhs=target, lower_bounds=[0] * count, exact=exact)
        if solve(problem, tol=tol).status != LpStatus.OPTIMAL:
            missing.append(j)
    if missing:
        failures.append(f'unit vectors {missing} are not in the cone (monotonicity)')

    # a combination with all coordinates <= 0 and negative total is a nonzero free lunch
    problem = LpProblem(
        objective=g.sum(axis=1),
        ineq_lhs=np.vstack([g.T, np.ones((1, count))]),
        ineq_rhs=as_vector([0] * size + [1], exact),
        lower_bounds=[0] * count,
        exact=exact,
    )
    outcome = solve(problem, tol=tol)
    free_lunch = outcome.status == LpStatus.OPTIMAL and outcome.value < -tol
    if free_lunch:
        combination = outcome.primal_point @ g
        failures.append(f'cone contains the nonpositive position {[float(v) for v in combination]}')

    return ConeReport(node=node_id, monotone=not missing, no_free_lunch=not free_lunch, failures=failures)


def rho_from_cone(generators: Sequence[Sequence], x, exact: bool = False, tol: Optional[float] = None):
    """Smallest cash amount c with x + c in the cone spanned by the generators"""
    g = as_matrix(generators, exact)
    count, size = g.shape
    x = as_vector(x, exact)
    eq_lhs = np.hstack([-np.ones((size, 1)), g.T.astype(object if exact else float)])
    problem = LpProblem(
        objective=[1] + [0] * count,
        eq_lhs=eq_lhs,
        eq_rhs=x,
        lower_bounds=[None] + [0] * count,
        exact=exact,
    )
    outcome = solve(problem, tol=tol)
    if outcome.status == LpStatus.UNBOUNDED:
        return float('-inf')
    if outcome.status == LpStatus.INFEASIBLE:
        return float('inf')
    return outcome.value


def rho_by_lp(tree: ScenarioTree, spec: RiskMeasureSpec, node_id: int, x, tol: Optional[float] = None):
    """max q.(-x) over D(node) solved from the acceptance description, without vertex lists"""
    exact = tree.exact
    local = spec.for_node(node_id)
    probs = tree.cond_probs(node_id)
    size = len(probs)
    x = as_vector(x, exact)

    if local.variant == RiskVariant.KERNELS:
        kernels = as_matrix(local.per_node[node_id], exact)
        count = len(kernels)
        problem = LpProblem(objective=kernels @ x, eq_lhs=np.ones((1, count)), eq_rhs=[1],
                            lower_bounds=[0] * count, exact=exact)
    else:
        upper = None
        ineq_lhs = ineq_rhs = None
        if local.variant == RiskVariant.CVAR:
            alpha = to_number(local.alpha, exact)
            upper = [p / alpha for p in probs]
        elif local.variant == RiskVariant.CONE:
            generators = as_matrix(local.per_node[node_id], exact)
            ineq_lhs, ineq_rhs = -generators, zeros(len(generators), exact)
        problem = LpProblem(objective=x, ineq_lhs=ineq_lhs, ineq_rhs=ineq_rhs,
                            eq_lhs=np.ones((1, size)), eq_rhs=[1],
                            lower_bounds=[0] * size, upper_bounds=upper, exact=exact)
    outcome = solve(problem, tol=tol)
    if outcome.status != LpStatus.OPTIMAL:
        raise InconsistencyError(f'node {node_id}: determining set LP is {outcome.status.value}', node=node_id)
    return -outcome.value


class DynamicRiskMeasure:
    """Time-consistent composition of one-step measures over a tree"""

    def __init__(self, tree: ScenarioTree, measures: Dict[int, OneStepRiskMeasure],
                 spec: Optional[RiskMeasureSpec] = None):
        missing = [n for n in tree.non_terminal_nodes() if n not in measures]
        if missing:
            raise InvalidSpecError(f'no one-step measure for nodes {missing}')
        self.tree = tree
        self.measures = measures
        self.spec = spec

    @classmethod
    def build(cls, tree: ScenarioTree, spec: RiskMeasureSpec, tol: Optional[float] = None) -> 'DynamicRiskMeasure':
        nodes = tree.non_terminal_nodes()
        measures = map_nodes(lambda n: build_one_step(tree, spec, n, tol=tol), nodes)
        return cls(tree, dict(zip(nodes, measures)), spec=spec)

    @property
    def exact(self) -> bool:
        return self.tree.exact

    def __getitem__(self, node_id: int) -> OneStepRiskMeasure:
        return self.measures[node_id]

    def child_vector(self, node_id: int, values: Union[NodeFunction, Dict[int, object]]) -> np.ndarray:
        return as_vector([values[c] for c in self.tree.children(node_id)], self.exact)

    def rho(self, X: NodeFunction, t: int) -> NodeFunction:
        return rho_dynamic(self, X, t)


def rho_path(drm: DynamicRiskMeasure, X: NodeFunction, t: int = 0) -> Dict[int, NodeFunction]:
    """rho_s(X) for every s from t up to the time of X, in one backward pass"""
    tree = drm.tree
    if not 0 <= t <= X.time <= tree.horizon:
        raise ValueError(f'need 0 <= t <= u <= T, got t={t}, u={X.time}, T={tree.horizon}')
    X.check_domain(tree)
    risk = {n: -X[n] for n in tree.nodes_at(X.time)}
    path = {X.time: NodeFunction(X.time, dict(risk))}
    for s in range(X.time - 1, t - 1, -1):
        nodes = tree.nodes_at(s)
        later = risk
        values = map_nodes(lambda n: drm[n].rho(-drm.child_vector(n, later)), nodes)
        risk = dict(zip(nodes, values))
        path[s] = NodeFunction(s, dict(risk))
    return path


def rho_dynamic(drm: DynamicRiskMeasure, X: NodeFunction, t: int) -> NodeFunction:
    return rho_path(drm, X, t)[t]


def acceptability(drm: DynamicRiskMeasure, X: NodeFunction, t: int, tol: Optional[float] = None) -> NodeFunction:
    tol = resolve_tol(tol, drm.exact)
    return rho_dynamic(drm, X, t).map(lambda v: bool(v <= tol))


def is_A0(drm: DynamicRiskMeasure, X: NodeFunction, t: int, tol: Optional[float] = None) -> NodeFunction:
    """True where X is acceptable in both signs; both risks must then vanish"""
    tol = resolve_tol(tol, drm.exact)
    plus = rho_dynamic(drm, X, t)
    minus = rho_dynamic(drm, -X, t)
    verdict = {}
    for node_id, value in plus.items():
        both = value <= tol and minus[node_id] <= tol
        if both and (abs(value) > 2 * tol or abs(minus[node_id]) > 2 * tol):
            raise InconsistencyError(
                f'node {node_id}: two-sided acceptable position with risks {value}, {minus[node_id]}', node=node_id)
        verdict[node_id] = bool(both)
    return NodeFunction(t, verdict)


@dataclass
class PropertyReport:
    """Data class for sampled property checks"""
    name: str
    checked: int = 0
    violations: List[Dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def record(self, rule: str, time: int, node_id: int, lhs, rhs, tol, relation: str = '<='):
        self.checked += 1
        scale = tol * (1 + max(abs(float(lhs)), abs(float(rhs)))) if tol else 0
        if relation == '<=':
            holds = lhs <= rhs + scale
        else:
            holds = abs(lhs - rhs) <= scale
        if not holds:
            self.violations.append({
                'rule': rule, 'time': time, 'node': node_id, 'lhs': float(lhs), 'rhs': float(rhs),
            })

    def to_dict(self) -> Dict:
        return {'name': self.name, 'checked': self.checked, 'ok': self.ok, 'violations': self.violations}


def check_coherence_axioms(drm: DynamicRiskMeasure, samples: Sequence[Tuple[NodeFunction, NodeFunction]],
                           scalars: Sequence[Tuple[object, object]], tol: Optional[float] = None) -> PropertyReport:
    """Normalization, monotonicity, cash invariance, subadditivity and positive homogeneity, nodewise"""
    tol = resolve_tol(tol, drm.exact)
    tree = drm.tree
    report = PropertyReport('coherence')
    if not scalars:
        scalars = [(0, 1)]

    for u in sorted({x.time for x, _ in samples}):
        zero = rho_path(drm, NodeFunction.constant(tree, u, 0))
        for s, values in zero.items():
            for node_id, value in values.items():
                report.record('normalization', s, node_id, value, 0, tol, '==')

    for index, (x, y) in enumerate(samples):
        cash, scale = scalars[index % len(scalars)]
        cash, scale = to_number(cash, drm.exact), to_number(scale, drm.exact)
        if scale < 0:
            raise ValueError('positive homogeneity needs a non-negative scalar')
        base = rho_path(drm, x)
        other = rho_path(drm, y)
        upper = rho_path(drm, x.combine(y, max))
        shifted = rho_path(drm, x + cash)
        total = rho_path(drm, x + y)
        scaled = rho_path(drm, x * scale)
        for s in range(x.time):
            for node_id, value in base[s].items():
                report.record('monotonicity', s, node_id, upper[s][node_id], value, tol)
                report.record('cash_invariance', s, node_id, shifted[s][node_id], value - cash, tol, '==')
                report.record('subadditivity', s, node_id, total[s][node_id], value + other[s][node_id], tol)
                report.record('positive_homogeneity', s, node_id, scaled[s][node_id], scale * value, tol, '==')
    if report.violations:
        logger.warning(f"Coherence check found {len(report.violations)} violations")
    return report


def check_time_consistency(drm: DynamicRiskMeasure, samples: Sequence[Union[NodeFunction, Tuple]],
                           tol: Optional[float] = None) -> PropertyReport:
    """rho_t(-rho_{t+1}(X)) = rho_t(X), and equal rho_{t+1} forces equal rho_t.

    A sample is either X alone, in which case Y is built as -rho_{t+1}(X)
    held to the maturity of X, or an explicit pair (X, Y).
    """
    tol = resolve_tol(tol, drm.exact)
    tree = drm.tree
    report = PropertyReport('time_consistency')
    for sample in samples:
        x, y = sample if isinstance(sample, tuple) else (sample, None)
        path = rho_path(drm, x)
        for t in range(x.time):
            recomposed = rho_dynamic(drm, -path[t + 1], t)
            for node_id, value in path[t].items():
                report.record('recomposition', t, node_id, recomposed[node_id], value, tol, '==')

            other = y if y is not None else (-path[t + 1]).extend_to(tree, x.time)
            other_path = rho_path(drm, other, t)
            if all(abs(other_path[t + 1][n] - v) <= tol * (1 + abs(v))
                   for n, v in path[t + 1].items()):
                for node_id, value in path[t].items():
                    report.record('implication', t, node_id, other_path[t][node_id], value, tol, '==')
    if report.violations:
        logger.warning(f"Time consistency check found {len(report.violations)} violations")
    return report


@dataclass
class DualSet:
    """Data class for the vertex measures of the composed determining set at one node"""
    node: int
    leaves: List[int]
    measures: np.ndarray

    def to_dict(self) -> Dict:
        return {'node': self.node, 'leaves': self.leaves, 'measures': [[float(v) for v in m] for m in self.measures]}


def _measure_count(drm: DynamicRiskMeasure, node_id: int, cache: Dict[int, int]) -> int:
    if node_id not in cache:
        tree = drm.tree
        if tree.is_terminal(node_id):
            cache[node_id] = 1
        else:
            count = len(drm[node_id].dual_vertices)
            for child in tree.children(node_id):
                count *= _measure_count(drm, child, cache)
            cache[node_id] = count
    return cache[node_id]


def _leaf_measures(drm: DynamicRiskMeasure, node_id: int) -> List[Dict[int, object]]:
    tree = drm.tree
    if tree.is_terminal(node_id):
        return [{node_id: to_number(1, drm.exact)}]
    children = tree.children(node_id)
    child_sets = [_leaf_measures(drm, c) for c in children]
    measures = []
    for q in drm[node_id].dual_vertices:
        choices = [child_sets[j] if q[j] != 0 else child_sets[j][:1] for j in range(len(children))]
        for combo in itertools.product(*choices):
            measure = {}
            for j, child_measure in enumerate(combo):
                for leaf, weight in child_measure.items():
                    measure[leaf] = q[j] * weight
            measures.append(measure)
    return measures


def extract_dual_set(drm: DynamicRiskMeasure, t: int) -> Dict[int, DualSet]:
    """Rectangular products of one-step dual vertices, as leaf measures below each time-t node"""
    tree = drm.tree
    cap = settings.RISKHEDGE_DUAL_SET_CAP
    cache: Dict[int, int] = {}
    for node_id in tree.nodes_at(t):
        count = _measure_count(drm, node_id, cache)
        if count > cap:
            raise CombinatorialLimitError(f'node {node_id}: {count} product measures exceed the cap of {cap}',
                                          node=node_id)
    result = {}
    for node_id in tree.nodes_at(t):
        leaves = tree.descendants_at(node_id, tree.horizon)
        rows = [as_vector([m[leaf] for leaf in leaves], drm.exact) for m in _leaf_measures(drm, node_id)]
        rows = _dedupe(rows, drm.exact)
        result[node_id] = DualSet(node_id, leaves, np.array(rows, dtype=object if drm.exact else float))
    return result


def dual_representation(drm: DynamicRiskMeasure, X: NodeFunction, t: int,
                        dual_sets: Optional[Dict[int, DualSet]] = None) -> NodeFunction:
    """rho_t(X) recomputed as the max of E_Q(-X) over the extracted dual set"""
    tree = drm.tree
    if X.time < tree.horizon:
        X = X.extend_to(tree, tree.horizon)
    dual_sets = dual_sets or extract_dual_set(drm, t)
    values = {}
    for node_id, dual in dual_sets.items():
        outcome = dual.measures @ (-X.on(dual.leaves, drm.exact))
        best = max(outcome)
        values[node_id] = best if drm.exact else float(best)
    return NodeFunction(t, values)
