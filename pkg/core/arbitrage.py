"""
No-arbitrage diagnostics.

With V the moment vectors E_q(dS) over the dual vertices q of a node,
rho(z.dS) = max_v -z.v, so every condition below is a small LP over V:

* AIP: 0 lies in the convex hull of V.
* SRN: the cone {z : z.v >= 0 for all v} is a linear subspace.
* NA: both of the above.
* NGD: no multi-period strategy has strictly negative risk.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional

import numpy as np

from core.exceptions import DisagreementError
from core.lp import LpProblem, LpStatus, solve
from core.numeric import is_minus_infinity, resolve_tol, zeros
from core.parallel import map_nodes
from core.risk import DynamicRiskMeasure, RiskMeasureSpec
from data.market_tree import Payoff, ScenarioTree

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MomentVectors:
    """Data class for E_q(dS | node), one row per dual vertex q"""
    node: int
    vectors: np.ndarray = field(compare=False)


class CheckResult(NamedTuple):
    holds: bool
    witness: Optional[np.ndarray]


@dataclass
class NodeVerdict:
    """Data class for the AIP/SRN/NA verdict at one node"""
    node: int
    time: int
    aip: bool
    srn: bool
    kernel: Optional[np.ndarray] = None
    direction: Optional[np.ndarray] = None
    notes: List[str] = field(default_factory=list)

    @property
    def na(self) -> bool:
        return self.aip and self.srn

    @property
    def witness(self) -> Optional[np.ndarray]:
        """Arbitrage direction when a condition fails, martingale kernel otherwise"""
        if not self.na and self.direction is not None:
            return self.direction
        return self.kernel

    def to_dict(self) -> Dict:
        payload = {'node': self.node, 'time': self.time, 'aip': self.aip, 'srn': self.srn, 'na': self.na}
        if self.kernel is not None:
            payload['kernel'] = [float(v) for v in self.kernel]
        if self.direction is not None:
            payload['direction'] = [float(v) for v in self.direction]
        if self.notes:
            payload['notes'] = list(self.notes)
        return payload


def moment_vectors(tree: ScenarioTree, drm: DynamicRiskMeasure, node_id: int) -> MomentVectors:
    return MomentVectors(node=node_id, vectors=drm[node_id].dual_vertices @ tree.delta_s(node_id))


def _normalized(z: np.ndarray) -> np.ndarray:
    scale = max(abs(v) for v in z)
    return z / scale if scale else z


def check_aip(tree: ScenarioTree, drm: DynamicRiskMeasure, node_id: int,
              tol: Optional[float] = None) -> CheckResult:
    """0 in conv(V): returns the martingale kernel, or a direction z with rho(z.dS) < 0"""
    exact = tree.exact
    moments = moment_vectors(tree, drm, node_id).vectors
    count, d = moments.shape
    eq_lhs = np.vstack([np.ones((1, count)), moments.T.astype(object if exact else float)])
    problem = LpProblem(
        objective=[0] * count,
        eq_lhs=eq_lhs,
        eq_rhs=[1] + [0] * d,
        lower_bounds=[0] * count,
        exact=exact,
    )
    outcome = solve(problem, tol=tol)
    if outcome.status == LpStatus.OPTIMAL:
        return CheckResult(True, outcome.primal_point @ drm[node_id].dual_vertices)

    # maximize s subject to z.v >= s for every v, z in the unit box
    ineq_lhs = np.hstack([-moments, np.ones((count, 1))])
    separation = LpProblem(
        objective=[0] * d + [-1],
        ineq_lhs=ineq_lhs,
        ineq_rhs=[0] * count,
        lower_bounds=[-1] * d + [None],
        upper_bounds=[1] * d + [None],
        exact=exact,
    )
    outcome = solve(separation, tol=tol)
    z = _normalized(outcome.primal_point[:d])
    logger.warning(f"Node {node_id}: AIP fails, instantaneous profit along {[float(v) for v in z]}")
    return CheckResult(False, z)


def check_srn(tree: ScenarioTree, drm: DynamicRiskMeasure, node_id: int,
              tol: Optional[float] = None) -> CheckResult:
    """The zero-risk cone {z : z.v >= 0} must be a subspace; returns a one-sided direction if not"""
    exact = tree.exact
    tol = resolve_tol(tol, exact)
    moments = moment_vectors(tree, drm, node_id).vectors
    count, d = moments.shape
    problem = LpProblem(
        objective=-moments.sum(axis=0),
        ineq_lhs=-moments,
        ineq_rhs=[0] * count,
        lower_bounds=[-1] * d,
        upper_bounds=[1] * d,
        exact=exact,
    )
    outcome = solve(problem, tol=tol)
    gain = -outcome.value
    if gain <= tol * (1 + max(abs(float(v)) for v in moments.ravel())):
        return CheckResult(True, None)
    return CheckResult(False, _normalized(outcome.primal_point))


def _verdict(tree: ScenarioTree, drm: DynamicRiskMeasure, node_id: int, tol) -> NodeVerdict:
    aip, aip_witness = check_aip(tree, drm, node_id, tol=tol)
    srn, srn_witness = check_srn(tree, drm, node_id, tol=tol)
    verdict = NodeVerdict(node=node_id, time=tree.time(node_id), aip=aip, srn=srn)
    if aip:
        verdict.kernel = aip_witness
        if not srn:
            verdict.direction = srn_witness
            verdict.notes.append('one-sided risk-neutral direction')
    else:
        verdict.direction = aip_witness
        if not srn:
            verdict.notes.append('SRN evaluated although AIP fails')
    return verdict


def check_na(tree: ScenarioTree, drm: DynamicRiskMeasure, tol: Optional[float] = None) -> List[NodeVerdict]:
    verdicts = map_nodes(lambda n: _verdict(tree, drm, n, tol), tree.non_terminal_nodes())
    failing = [v.node for v in verdicts if not v.na]
    if failing:
        logger.info(f"NA fails at nodes {failing}")
    else:
        logger.info("NA holds at every node")
    return verdicts


def na_holds(verdicts: List[NodeVerdict]) -> bool:
    return all(v.na for v in verdicts)


@dataclass
class ClassicalReport:
    """Data class for the comparison with the strictly positive martingale kernel test"""
    nodes: Dict[int, Dict] = field(default_factory=dict)
    disagreements: List[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.disagreements

    def to_dict(self) -> Dict:
        return {'nodes': {str(k): v for k, v in sorted(self.nodes.items())}, 'disagreements': self.disagreements}


def strictly_positive_kernel(tree: ScenarioTree, node_id: int, tol: Optional[float] = None):
    """max eps s.t. q_j >= eps, sum q = 1, sum q_j dS_j = 0; None when no martingale kernel exists"""
    exact = tree.exact
    delta = tree.delta_s(node_id)
    k, d = delta.shape
    ineq_lhs = np.hstack([-np.eye(k), np.ones((k, 1))])
    eq_lhs = np.vstack([
        np.hstack([np.ones((1, k)), np.zeros((1, 1))]),
        np.hstack([delta.T.astype(object if exact else float), np.zeros((d, 1))]),
    ])
    problem = LpProblem(
        objective=[0] * k + [-1],
        ineq_lhs=ineq_lhs,
        ineq_rhs=[0] * k,
        eq_lhs=eq_lhs,
        eq_rhs=[1] + [0] * d,
        lower_bounds=[0] * (k + 1),
        exact=exact,
    )
    outcome = solve(problem, tol=tol)
    if outcome.status != LpStatus.OPTIMAL:
        return None
    return -outcome.value, outcome.primal_point[:k]


def check_classical_equivalence(tree: ScenarioTree, tol: Optional[float] = None,
                                strict: bool = True) -> ClassicalReport:
    """Worst-case NA against the existence of a strictly positive martingale kernel, node by node"""
    tol = resolve_tol(tol, tree.exact)
    drm = DynamicRiskMeasure.build(tree, RiskMeasureSpec.worst_case(), tol=tol)
    report = ClassicalReport()
    for verdict in check_na(tree, drm, tol=tol):
        found = strictly_positive_kernel(tree, verdict.node, tol=tol)
        classical = found is not None and found[0] > tol
        report.nodes[verdict.node] = {'na': verdict.na, 'classical': classical}
        if classical != verdict.na:
            report.disagreements.append(verdict.node)
    if report.disagreements:
        logger.error(f"Classical NA disagrees at nodes {report.disagreements}")
        if strict:
            raise DisagreementError(f'classical NA disagrees at nodes {report.disagreements}',
                                    node=report.disagreements[0])
    return report


@dataclass
class NgdResult:
    """Data class for the good-deal bound min over strategies of rho_t(sum theta dS) at each time-t node

    ``direction`` is the strategy found at the witness node, as theta per
    interior node of its subtree, when the bound there is -inf.
    """
    holds: bool
    values: Dict[int, object]
    witness: Optional[int] = None
    direction: Optional[Dict[int, np.ndarray]] = None

    def to_dict(self) -> Dict:
        payload = {
            'holds': self.holds,
            'values': {str(k): ('-inf' if is_minus_infinity(v) else float(v)) for k, v in sorted(self.values.items())},
            'witness_node': self.witness,
        }
        if self.direction is not None:
            payload['direction'] = {str(k): [float(x) for x in v] for k, v in sorted(self.direction.items())}
        return payload


def check_ngd(tree: ScenarioTree, drm: DynamicRiskMeasure, t: int, tol: Optional[float] = None) -> NgdResult:
    """NGD at t: the zero claim cannot be risk-hedged below 0 at any time-t node"""
    from core.pricing import direct_price_with_rays

    tol = resolve_tol(tol, tree.exact)
    if t >= tree.horizon:
        return NgdResult(True, {n: zeros(1, tree.exact)[0] for n in tree.nodes_at(t)})
    prices, rays = direct_price_with_rays(tree, drm, Payoff.zero(tree), t, tol=tol)
    failing = [n for n, v in prices.items() if is_minus_infinity(v) or v < -tol]
    if not failing:
        return NgdResult(True, dict(prices.items()))
    logger.warning(f"NGD fails at time {t}, nodes {failing}")
    return NgdResult(False, dict(prices.items()), witness=failing[0], direction=rays.get(failing[0]))


def check_ngd_all(tree: ScenarioTree, drm: DynamicRiskMeasure, tol: Optional[float] = None) -> Dict[int, NgdResult]:
    return {t: check_ngd(tree, drm, t, tol=tol) for t in range(tree.horizon)}
