"""
Dense linear programming.

``solve`` minimizes ``c.x`` subject to ``A x <= b``, ``E x = f`` and
``l <= x <= u`` with a two-phase bounded-variable primal simplex using
Bland's smallest-index rule. Variables are free unless bounds are given.
With ``exact=True`` all data is held as ``Fraction`` and every comparison
is exact.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from core.exceptions import MalformedProblemError, NumericalFailureError
from core.numeric import INF, MINUS_INFINITY, as_matrix, as_vector, is_finite, resolve_tol, zeros

logger = logging.getLogger(__name__)


class LpStatus(str, Enum):
    OPTIMAL = 'optimal'
    UNBOUNDED = 'unbounded'
    INFEASIBLE = 'infeasible'


@dataclass(frozen=True)
class LpProblem:
    """Data class for a dense LP: minimize objective.x s.t. ineq_lhs x <= ineq_rhs, eq_lhs x = eq_rhs"""
    objective: Sequence
    ineq_lhs: Optional[Sequence] = None
    ineq_rhs: Optional[Sequence] = None
    eq_lhs: Optional[Sequence] = None
    eq_rhs: Optional[Sequence] = None
    lower_bounds: Optional[Sequence] = None
    upper_bounds: Optional[Sequence] = None
    exact: bool = False

    def __post_init__(self):
        try:
            objective = as_vector(self.objective, self.exact)
        except (TypeError, ValueError) as e:
            raise MalformedProblemError(f'objective is not numeric: {e}')
        n = len(objective)
        if n < 1:
            raise MalformedProblemError('an LP needs at least one variable')
        ineq_lhs, ineq_rhs = self._block(self.ineq_lhs, self.ineq_rhs, n, 'inequality')
        eq_lhs, eq_rhs = self._block(self.eq_lhs, self.eq_rhs, n, 'equality')
        lower = self._bounds(self.lower_bounds, n, MINUS_INFINITY, 'lower')
        upper = self._bounds(self.upper_bounds, n, INF, 'upper')
        for name, values in (('objective', objective), ('inequality rhs', ineq_rhs), ('equality rhs', eq_rhs),
                             ('inequality matrix', ineq_lhs.ravel()), ('equality matrix', eq_lhs.ravel())):
            if not all(is_finite(v) for v in values):
                raise MalformedProblemError(f'{name} has non-finite entries')
        object.__setattr__(self, 'objective', objective)
        object.__setattr__(self, 'ineq_lhs', ineq_lhs)
        object.__setattr__(self, 'ineq_rhs', ineq_rhs)
        object.__setattr__(self, 'eq_lhs', eq_lhs)
        object.__setattr__(self, 'eq_rhs', eq_rhs)
        object.__setattr__(self, 'lower_bounds', lower)
        object.__setattr__(self, 'upper_bounds', upper)

    @property
    def n(self) -> int:
        return len(self.objective)

    def _block(self, lhs, rhs, n: int, name: str) -> Tuple[np.ndarray, np.ndarray]:
        if lhs is None and rhs is None:
            return zeros((0, n), self.exact), zeros(0, self.exact)
        if lhs is None or rhs is None:
            raise MalformedProblemError(f'{name} block needs both a matrix and a right-hand side')
        try:
            matrix = as_matrix(lhs, self.exact, columns=n)
            vector = as_vector(rhs, self.exact)
        except (TypeError, ValueError) as e:
            raise MalformedProblemError(f'{name} block: {e}')
        if matrix.shape[1] != n:
            raise MalformedProblemError(f'{name} matrix has {matrix.shape[1]} columns, expected {n}')
        if matrix.shape[0] != len(vector):
            raise MalformedProblemError(
                f'{name} matrix has {matrix.shape[0]} rows but the rhs has {len(vector)} entries')
        return matrix, vector

    def _bounds(self, values, n: int, default, name: str) -> np.ndarray:
        if values is None:
            return np.array([default] * n, dtype=object if self.exact else float)
        values = list(values)
        if len(values) != n:
            raise MalformedProblemError(f'{name} bounds have {len(values)} entries, expected {n}')
        filled = [default if v is None else v for v in values]
        try:
            return as_vector(filled, self.exact)
        except (TypeError, ValueError) as e:
            raise MalformedProblemError(f'{name} bounds: {e}')


@dataclass
class LpOutcome:
    """Data class for the solution status of an LP"""
    status: LpStatus
    primal_point: Optional[np.ndarray] = None
    value: Optional[object] = None
    ray: Optional[np.ndarray] = None
    ineq_duals: Optional[np.ndarray] = None
    eq_duals: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    dual_value: Optional[object] = None
    degenerate: bool = False
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == LpStatus.OPTIMAL

    @property
    def dual_point(self) -> Optional[np.ndarray]:
        if self.ineq_duals is None:
            return None
        return np.concatenate([self.ineq_duals, self.eq_duals])


@dataclass
class _Variable:
    """How an original variable is laid onto nonnegative tableau columns"""
    kind: str
    columns: List[int]
    offset: object = 0


class SimplexSolver:
    def __init__(self, problem: LpProblem, tol: Optional[float] = None, max_iter: Optional[int] = None):
        self.problem = problem
        self.exact = problem.exact
        self.tol = resolve_tol(tol, self.exact)
        self.max_iter = max_iter or settings.RISKHEDGE_LP_MAX_ITER
        self.iterations = 0

    def solve(self) -> LpOutcome:
        p = self.problem
        if any(l > u for l, u in zip(p.lower_bounds, p.upper_bounds)):
            logger.debug("Crossed variable bounds, LP infeasible")
            return LpOutcome(status=LpStatus.INFEASIBLE)

        self._standardize()
        self._run(self.phase_one_cost, np.ones(self.width, dtype=bool))
        beta = self._basic_values()
        residual = sum((beta[i] for i, col in enumerate(self.basis) if self.artificial[col]), self._zero)
        scale = max([abs(v) for v in np.concatenate([p.ineq_rhs, p.eq_rhs])] + [1])
        if residual > self.tol * scale:
            logger.debug(f"Phase one ended with artificial residual {residual}, LP infeasible")
            return LpOutcome(status=LpStatus.INFEASIBLE, iterations=self.iterations)

        self.upper[self.artificial] = self._zero
        unbounded = self._run(self.cost, ~self.artificial)
        if unbounded is not None:
            return self._unbounded_outcome(*unbounded)
        return self._optimal_outcome()

    @property
    def _zero(self):
        return Fraction(0) if self.exact else 0.0

    @property
    def _one(self):
        return Fraction(1) if self.exact else 1.0

    def _standardize(self):
        p = self.problem
        n = p.n
        m = p.ineq_lhs.shape[0]
        rows = m + p.eq_lhs.shape[0]
        lhs = np.vstack([p.ineq_lhs, p.eq_lhs])
        rhs = np.concatenate([p.ineq_rhs, p.eq_rhs])

        columns, cost, upper = [], [], []
        self.variables: List[_Variable] = []
        shift = zeros(rows, self.exact)
        for i in range(n):
            lo, hi, column, ci = p.lower_bounds[i], p.upper_bounds[i], lhs[:, i], p.objective[i]
            if is_finite(lo):
                shift = shift + column * lo
                self.variables.append(_Variable('shift', [len(columns)], lo))
                columns.append(column)
                cost.append(ci)
                upper.append(hi - lo if is_finite(hi) else INF)
            elif is_finite(hi):
                shift = shift + column * hi
                self.variables.append(_Variable('mirror', [len(columns)], hi))
                columns.append(-column)
                cost.append(-ci)
                upper.append(INF)
            else:
                self.variables.append(_Variable('split', [len(columns), len(columns) + 1]))
                columns.extend([column, -column])
                cost.extend([ci, -ci])
                upper.extend([INF, INF])
        rhs = rhs - shift

        slack_start = len(columns)
        for r in range(m):
            unit = zeros(rows, self.exact)
            unit[r] = self._one
            columns.append(unit)
            cost.append(self._zero)
            upper.append(INF)

        # rows with a negative rhs are negated so the starting basis is feasible
        flipped = [v < 0 for v in rhs]
        self.init_cols: List[int] = []
        artificial = []
        for r in range(rows):
            if r < m and not flipped[r]:
                self.init_cols.append(slack_start + r)
                continue
            unit = zeros(rows, self.exact)
            unit[r] = -self._one if flipped[r] else self._one
            self.init_cols.append(len(columns))
            artificial.append(len(columns))
            columns.append(unit)
            cost.append(self._zero)
            upper.append(INF)

        dtype = object if self.exact else float
        self.width = len(columns)
        self.T = np.column_stack(columns).astype(dtype) if rows else zeros((0, self.width), self.exact)
        for r in range(rows):
            if flipped[r]:
                self.T[r] = -self.T[r]
                rhs[r] = -rhs[r]
        self.sign = np.array([-1 if f else 1 for f in flipped], dtype=dtype)
        self.rhs_bar = np.array(list(rhs), dtype=dtype)
        self.cost = np.array(cost, dtype=dtype)
        self.upper = np.array(upper, dtype=dtype)
        self.artificial = np.zeros(self.width, dtype=bool)
        self.artificial[artificial] = True
        self.phase_one_cost = np.array([self._one if a else self._zero for a in self.artificial], dtype=dtype)
        self.basis = list(self.init_cols)
        self.is_basic = np.zeros(self.width, dtype=bool)
        self.is_basic[self.basis] = True
        self.at_upper = np.zeros(self.width, dtype=bool)
        self.structural = slack_start
        self.rows = rows
        self.ineq_rows = m
        logger.debug(f"Standardized LP: {rows} rows, {self.width} columns, {len(artificial)} artificials")

    def _reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        if not self.rows:
            return cost.copy()
        return cost - cost[self.basis] @ self.T

    def _basic_values(self) -> np.ndarray:
        idx = np.flatnonzero(self.at_upper)
        if idx.size == 0 or not self.rows:
            return self.rhs_bar.copy()
        return self.rhs_bar - self.T[:, idx] @ self.upper[idx]

    def _entering(self, reduced: np.ndarray, allowed: np.ndarray) -> Optional[Tuple[int, int]]:
        for j in range(self.width):
            if self.is_basic[j] or not allowed[j] or self.upper[j] == 0:
                continue
            if not self.at_upper[j] and reduced[j] < -self.tol:
                return j, 1
            if self.at_upper[j] and reduced[j] > self.tol:
                return j, -1
        return None

    def _ratio_test(self, beta: np.ndarray, delta: np.ndarray):
        best_row, best_ratio, to_upper = None, None, False
        for i in range(self.rows):
            var = self.basis[i]
            if delta[i] > self.tol:
                ratio, hits_upper = beta[i] / delta[i], False
            elif delta[i] < -self.tol and is_finite(self.upper[var]):
                ratio, hits_upper = (self.upper[var] - beta[i]) / (-delta[i]), True
            else:
                continue
            if ratio < 0:
                ratio = self._zero
            if best_row is None or ratio < best_ratio - self.tol:
                best_row, best_ratio, to_upper = i, ratio, hits_upper
            elif ratio <= best_ratio + self.tol and var < self.basis[best_row]:
                best_row, best_ratio, to_upper = i, min(ratio, best_ratio), hits_upper
        return best_row, best_ratio, to_upper

    def _pivot(self, row: int, col: int, leaving_to_upper: bool):
        leaving = self.basis[row]
        pivot = self.T[row, col]
        self.T[row] = self.T[row] / pivot
        self.rhs_bar[row] = self.rhs_bar[row] / pivot
        factors = self.T[:, col].copy()
        factors[row] = self._zero
        self.T = self.T - np.outer(factors, self.T[row])
        self.rhs_bar = self.rhs_bar - factors * self.rhs_bar[row]
        self.is_basic[leaving] = False
        self.at_upper[leaving] = leaving_to_upper
        self.is_basic[col] = True
        self.at_upper[col] = False
        self.basis[row] = col

    def _run(self, cost: np.ndarray, allowed: np.ndarray):
        """Iterate to optimality; returns (column, direction) of an unbounded edge, else None"""
        while True:
            self.iterations += 1
            if self.iterations > self.max_iter:
                raise NumericalFailureError(f'simplex did not terminate within {self.max_iter} iterations')
            reduced = self._reduced_costs(cost)
            entering = self._entering(reduced, allowed)
            if entering is None:
                return None
            col, direction = entering
            delta = self.T[:, col] * direction
            beta = self._basic_values()
            row, step, to_upper = self._ratio_test(beta, delta)
            flip = self.upper[col]
            if is_finite(flip) and (row is None or flip <= step):
                self.at_upper[col] = not self.at_upper[col]
                continue
            if row is None:
                logger.debug(f"Unbounded edge along column {col}")
                return col, direction
            self._pivot(row, col, to_upper)

    def _standard_point(self) -> np.ndarray:
        point = zeros(self.width, self.exact)
        point[self.at_upper] = self.upper[self.at_upper]
        for i, v in enumerate(self._basic_values()):
            point[self.basis[i]] = v
        return point

    def _to_original(self, standard: np.ndarray, offsets: bool = True) -> np.ndarray:
        x = zeros(self.problem.n, self.exact)
        for i, var in enumerate(self.variables):
            if var.kind == 'shift':
                x[i] = (var.offset if offsets else 0) + standard[var.columns[0]]
            elif var.kind == 'mirror':
                x[i] = (var.offset if offsets else 0) - standard[var.columns[0]]
            else:
                x[i] = standard[var.columns[0]] - standard[var.columns[1]]
        return x

    def _unbounded_outcome(self, col: int, direction: int) -> LpOutcome:
        standard = zeros(self.width, self.exact)
        standard[col] = direction
        delta = self.T[:, col] * direction
        for i in range(self.rows):
            standard[self.basis[i]] = -delta[i]
        ray = self._to_original(standard, offsets=False)
        return LpOutcome(status=LpStatus.UNBOUNDED, ray=ray, iterations=self.iterations)

    def _optimal_outcome(self) -> LpOutcome:
        p = self.problem
        x = self._to_original(self._standard_point())
        value = p.objective @ x

        if self.rows:
            duals = (self.cost[self.basis] @ self.T[:, self.init_cols]) * self.sign
        else:
            duals = zeros(0, self.exact)
        ineq_duals, eq_duals = duals[:self.ineq_rows], duals[self.ineq_rows:]
        reduced = p.objective - p.ineq_lhs.T @ ineq_duals - p.eq_lhs.T @ eq_duals
        dual_value = p.ineq_rhs @ ineq_duals + p.eq_rhs @ eq_duals
        for rc, lo, hi in zip(reduced, p.lower_bounds, p.upper_bounds):
            if rc > 0 and is_finite(lo):
                dual_value = dual_value + rc * lo
            elif rc < 0 and is_finite(hi):
                dual_value = dual_value + rc * hi

        final = self._reduced_costs(self.cost)
        degenerate = any(
            abs(final[j]) <= self.tol
            for j in range(self.width)
            if not self.is_basic[j] and not self.artificial[j] and self.upper[j] != 0
        )
        logger.debug(f"LP optimal after {self.iterations} iterations, value {value}")
        return LpOutcome(
            status=LpStatus.OPTIMAL,
            primal_point=x,
            value=value,
            ineq_duals=ineq_duals,
            eq_duals=eq_duals,
            reduced_costs=reduced,
            dual_value=dual_value,
            degenerate=degenerate,
            iterations=self.iterations,
        )


def solve(problem: LpProblem, tol: Optional[float] = None) -> LpOutcome:
    """Solve a dense LP; see the module docstring for the problem form"""
    return SimplexSolver(problem, tol=tol).solve()
