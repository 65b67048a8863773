"""
Command layer shared by the CLI and the HTTP API.

``CommandRouter.route`` loads a model, runs one command and returns a
``Report`` with the exit code the CLI uses:
0 ok, 2 invalid input, 3 NA fails, 4 arbitrage price, 5 internal inconsistency.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd
from django.conf import settings

from core.arbitrage import check_classical_equivalence, check_na, check_ngd_all, na_holds
from core.duality import dual_price_details, verify_ftap
from core.exceptions import InconsistencyError, RiskHedgeError, ValidationError
from core.numeric import is_minus_infinity, resolve_tol
from core.pricing import backward_price, direct_price, verify_price_bounds
from core.risk import DynamicRiskMeasure
from data.model_loader import load_model

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NO_NA = 3
EXIT_ARBITRAGE = 4
EXIT_INCONSISTENT = 5

DIRECT_TOL = 1e-8
DUAL_GAP_TOL = 1e-7

ERROR_EXIT_CODES = {
    'PARSE_ERROR': EXIT_INVALID,
    'VALIDATION_ERROR': EXIT_INVALID,
    'INVALID_SPEC': EXIT_INVALID,
    'CONE_EMPTY_DUAL': EXIT_INVALID,
    'MATURITY_MISMATCH': EXIT_INVALID,
    'NOT_A_PARENT': EXIT_INVALID,
    'COMBINATORIAL_LIMIT': EXIT_INVALID,
    'NO_NA': EXIT_NO_NA,
}

COMMANDS = ('validate', 'check-na', 'price', 'dual-price', 'ftap')


def _plain(value):
    """JSON-ready copy with floats fixed to 12 significant digits and infinities as strings"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)) or value is None or isinstance(value, str):
        return bool(value) if isinstance(value, np.bool_) else value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, Fraction, np.floating)):
        number = float(value)
        if math.isnan(number):
            return 'nan'
        if math.isinf(number):
            return '-inf' if number < 0 else 'inf'
        number = float(f'{number:.12g}')
        return 0.0 if number == 0 else number
    return value


@dataclass
class Report:
    """Data class for the machine-readable result of one command"""
    command: str
    model_digest: str
    payload: Dict[str, Any] = field(default_factory=dict)
    tolerances: Dict[str, Any] = field(default_factory=dict)
    version: str = ''

    def to_dict(self) -> Dict[str, Any]:
        return _plain({
            'command': self.command,
            'model_digest': self.model_digest,
            'tolerances': self.tolerances,
            'version': self.version,
            **self.payload,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _prices_dict(prices) -> Dict[str, Dict[str, Any]]:
    return {str(t): {str(n): v for n, v in function.items()} for t, function in sorted(prices.items())}


class CommandRouter:
    def __init__(self):
        self._handlers = None

    @property
    def handlers(self) -> Dict[str, Callable]:
        if self._handlers is None:
            self._handlers = {
                'validate': self.validate,
                'check-na': self.check_na,
                'price': self.price,
                'dual-price': self.dual_price,
                'ftap': self.ftap,
            }
        return self._handlers

    def route(self, command: str, model_text: Union[bytes, str], **options) -> Tuple[Report, int]:
        """Run one command on the raw model text; never raises for library errors"""
        if isinstance(model_text, str):
            model_text = model_text.encode('utf-8')
        exact = bool(options.get('exact', False))
        tol = resolve_tol(options.get('tol'), exact)
        report = Report(
            command=command,
            model_digest=hashlib.sha256(model_text).hexdigest(),
            tolerances={
                'tol': tol,
                'exact': exact,
                'threads': settings.RISKHEDGE_THREADS,
                'dual_set_cap': settings.RISKHEDGE_DUAL_SET_CAP,
                'max_children': settings.RISKHEDGE_MAX_CHILDREN,
                'lp_max_iter': settings.RISKHEDGE_LP_MAX_ITER,
            },
            version=settings.RISKHEDGE_VERSION,
        )
        if command not in self.handlers:
            report.payload = {'status': 'error', 'error': {'code': 'UNKNOWN_COMMAND',
                                                           'message': f'unknown command {command!r}'}}
            return report, EXIT_INVALID

        logger.info(f"Running {command} on model {report.model_digest[:12]}")
        try:
            tree, spec, payoff = load_model(model_text, exact=exact)
            drm = DynamicRiskMeasure.build(tree, spec, tol=tol)
            extra = {k: v for k, v in options.items() if k not in ('tol', 'exact')}
            code = self.handlers[command](report, tree, drm, payoff, tol, **extra)
        except RiskHedgeError as e:
            code = ERROR_EXIT_CODES.get(e.code, EXIT_INCONSISTENT)
            log = logger.warning if code == EXIT_INVALID else logger.error
            log(f"{command} failed with {e.code}: {e.message}")
            report.payload.update({'status': 'error', 'error': e.to_dict()})
        logger.info(f"{command} finished with exit code {code}")
        return report, code

    def validate(self, report: Report, tree, drm, payoff, tol, **options) -> int:
        report.payload.update({
            'status': 'ok' if payoff is not None else 'ok, no payoff',
            'nodes': len(tree),
            'horizon': tree.horizon,
            'assets': tree.asset_names,
            'risk_measure': drm.spec.to_dict(),
            'payoff': payoff is not None,
        })
        return EXIT_OK

    def check_na(self, report: Report, tree, drm, payoff, tol, time: Optional[int] = None, **options) -> int:
        if time is not None and not 0 <= time < tree.horizon:
            raise ValidationError([f'--time {time} outside [0, {tree.horizon - 1}]'])
        verdicts = check_na(tree, drm, tol=tol)
        if time is not None:
            verdicts = [v for v in verdicts if v.time == time]
        ngd = check_ngd_all(tree, drm, tol=tol)
        if time is not None:
            ngd = {time: ngd[time]}
        holds = na_holds(verdicts)
        report.payload.update({
            'status': 'ok',
            'na': holds,
            'verdicts': [v.to_dict() for v in verdicts],
            'ngd': {str(t): r.to_dict() for t, r in sorted(ngd.items())},
        })
        return EXIT_OK if holds else EXIT_NO_NA

    def _require_payoff(self, payoff):
        if payoff is None:
            raise ValidationError(['model has no payoff'])

    def price(self, report: Report, tree, drm, payoff, tol, direct: bool = False,
              csv_path: Optional[str] = None, **options) -> int:
        self._require_payoff(payoff)
        result = backward_price(tree, drm, payoff, tol=tol)
        report.payload.update({
            'status': 'ok',
            'root_price': result.root_price(tree),
            'prices': _prices_dict(result.prices),
            'strategies': {str(n): theta for n, theta in sorted(result.strategies.items())},
            'attained': {str(n): v for n, v in sorted(result.attained.items())},
            'statuses': {str(n): v for n, v in sorted(result.statuses.items())},
            'degenerate': {str(n): v for n, v in sorted(result.degenerate.items())},
            'rays': {str(n): ray for n, ray in sorted(result.rays.items())},
        })
        if na_holds(check_na(tree, drm, tol=tol)):
            report.payload['price_bounds'] = verify_price_bounds(tree, drm, payoff, result, tol=tol).to_dict()

        if csv_path:
            self._write_csv(csv_path, tree, result)

        if direct:
            direct_prices = {t: direct_price(tree, drm, payoff, t, tol=tol) for t in range(tree.horizon + 1)}
            mismatches = []
            for t, function in direct_prices.items():
                for node_id, value in function.items():
                    backward = result.prices[t][node_id]
                    if is_minus_infinity(value) and is_minus_infinity(backward):
                        continue
                    if is_minus_infinity(value) or is_minus_infinity(backward) \
                            or abs(float(value) - float(backward)) > DIRECT_TOL:
                        mismatches.append({'node': node_id, 'direct': value, 'backward': backward})
            report.payload['direct'] = {'prices': _prices_dict(direct_prices), 'mismatches': mismatches,
                                        'agree': not mismatches}
            if mismatches:
                raise InconsistencyError(f'direct and backward prices differ at {len(mismatches)} nodes',
                                         node=mismatches[0]['node'])

        if result.has_arbitrage_price:
            report.payload['status'] = 'arbitrage'
            return EXIT_ARBITRAGE
        return EXIT_OK

    def _write_csv(self, path: str, tree, result):
        d = tree.asset_count
        rows = []
        for node_id in tree.node_ids:
            theta = result.strategies.get(node_id)
            row = {
                'node_id': node_id,
                'time': tree.time(node_id),
                'price': float(result.price(tree, node_id)),
                'attained': result.attained.get(node_id, True),
            }
            for i in range(d):
                row[f'theta_{i + 1}'] = float(theta[i]) if theta is not None else np.nan
            rows.append(row)
        columns = ['node_id', 'time', 'price', 'attained'] + [f'theta_{i + 1}' for i in range(d)]
        pd.DataFrame(rows, columns=columns).to_csv(path, index=False, float_format='%.12g')
        logger.info(f"Wrote {len(rows)} price rows to {path}")

    def dual_price(self, report: Report, tree, drm, payoff, tol, **options) -> int:
        self._require_payoff(payoff)
        verdicts = check_na(tree, drm, tol=tol)
        if not na_holds(verdicts):
            report.payload.update({
                'status': 'no_na',
                'na': False,
                'verdicts': [v.to_dict() for v in verdicts if not v.na],
            })
            return EXIT_NO_NA
        details = dual_price_details(tree, drm, payoff, 0, tol=tol)
        primal = backward_price(tree, drm, payoff, tol=tol).root_price(tree)
        dual = details.values[tree.root]
        gap = abs(float(primal) - float(dual))
        report.payload.update({
            'status': 'ok',
            'na': True,
            'dual_price': dual,
            'primal_price': primal,
            'gap': gap,
            'details': details.to_dict(),
        })
        if gap > DUAL_GAP_TOL:
            logger.error(f"Primal-dual gap {gap} exceeds {DUAL_GAP_TOL}")
            report.payload['status'] = 'inconsistent'
            return EXIT_INCONSISTENT
        return EXIT_OK

    def ftap(self, report: Report, tree, drm, payoff, tol, samples: Optional[int] = None, **options) -> int:
        samples = 20 if samples is None else samples
        if samples < 0:
            raise ValidationError(['--samples must be non-negative'])
        result = verify_ftap(tree, drm, samples=samples, tol=tol)
        classical = check_classical_equivalence(tree, tol=tol, strict=False)
        consistent = result.consistent and classical.ok
        report.payload.update({
            'status': 'ok' if consistent else 'inconsistent',
            'ftap': result.to_dict(),
            'classical': classical.to_dict(),
            'consistent': consistent,
        })
        return EXIT_OK if consistent else EXIT_INCONSISTENT
