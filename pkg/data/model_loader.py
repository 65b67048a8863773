import json
import logging
from fractions import Fraction
from typing import Optional, Tuple, Union

from core.exceptions import ParseError, ValidationError
from core.numeric import to_number
from core.risk import RiskMeasureSpec, RiskVariant, parse_risk_measure
from data.market_tree import Node, NodeFunction, Payoff, ScenarioTree

logger = logging.getLogger(__name__)


def _decode(text: Union[bytes, str], exact: bool) -> dict:
    if isinstance(text, bytes):
        try:
            text = text.decode('utf-8')
        except UnicodeDecodeError as e:
            raise ParseError(f'model is not UTF-8: {e}')
    try:
        payload = json.loads(text, parse_float=Fraction if exact else float)
    except json.JSONDecodeError as e:
        raise ParseError(f'invalid JSON at line {e.lineno} column {e.colno}: {e.msg}')
    if not isinstance(payload, dict):
        raise ParseError('model must be a JSON object')
    for key in ('assets', 'nodes', 'risk_measure'):
        if key not in payload:
            raise ParseError(f'model is missing "{key}"')
    return payload


def _parse_nodes(raw, asset_count: int, exact: bool):
    if not isinstance(raw, list) or not raw:
        raise ParseError('"nodes" must be a non-empty list')
    nodes = []
    for index, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ParseError(f'nodes[{index}] must be an object')
        missing = [k for k in ('id', 'time', 'price') if k not in item]
        if missing:
            raise ParseError(f'nodes[{index}] is missing {missing}')
        node_id, time, parent = item['id'], item['time'], item.get('parent')
        if not isinstance(node_id, int) or isinstance(node_id, bool):
            raise ParseError(f'nodes[{index}].id must be an integer')
        if not isinstance(time, int) or isinstance(time, bool):
            raise ParseError(f'node {node_id}: time must be an integer')
        if parent is not None and (not isinstance(parent, int) or isinstance(parent, bool)):
            raise ParseError(f'node {node_id}: parent must be an integer or null')
        price = item['price']
        if not isinstance(price, list):
            price = [price] if asset_count == 1 else price
        if not isinstance(price, list):
            raise ParseError(f'node {node_id}: price must be a list of {asset_count} numbers')
        prob = item.get('prob', 1 if parent is None else None)
        if prob is None:
            raise ParseError(f'node {node_id}: "prob" is required for non-root nodes')
        try:
            price = tuple(to_number(v, exact) for v in price)
            prob = to_number(prob, exact)
        except (TypeError, ValueError):
            raise ParseError(f'node {node_id}: price and prob must be numbers')
        nodes.append(Node(id=node_id, time=time, parent=parent, cond_prob=prob, price=price))
    return nodes


def _parse_payoff(raw, tree: ScenarioTree) -> Payoff:
    if not isinstance(raw, dict):
        raise ParseError('"payoff" must be an object')
    if 'type' in raw:
        kind = raw['type']
        asset = raw.get('asset', 0)
        if isinstance(asset, str):
            if asset not in tree.asset_names:
                raise ValidationError([f'payoff refers to unknown asset {asset!r}'])
            asset = tree.asset_names.index(asset)
        if not isinstance(asset, int) or not 0 <= asset < tree.asset_count:
            raise ValidationError([f'payoff asset index {asset!r} out of range'])
        if 'strike' not in raw:
            raise ParseError('vanilla payoff needs a "strike"')
        return Payoff.vanilla(tree, kind, raw['strike'], asset)

    if 'values' not in raw or not isinstance(raw['values'], dict):
        raise ParseError('payoff needs "values" keyed by node id')
    time = raw.get('time', tree.horizon)
    if not isinstance(time, int) or not 1 <= time <= tree.horizon:
        raise ValidationError([f'payoff time {time!r} outside [1, {tree.horizon}]'])
    values = {}
    for key, value in raw['values'].items():
        try:
            values[int(key)] = to_number(value, tree.exact)
        except (TypeError, ValueError):
            raise ParseError(f'payoff value for node {key!r} is not a number')
    function = NodeFunction(time, values)
    function.check_domain(tree)
    return Payoff(time, function)


def _check_spec_nodes(spec: RiskMeasureSpec, tree: ScenarioTree):
    violations = []
    for node_id in sorted(spec.overrides):
        if node_id not in tree or tree.is_terminal(node_id):
            violations.append(f'risk_measure override refers to node {node_id}, which is not a non-terminal node')
    for local in [spec] + list(spec.overrides.values()):
        if local.variant not in (RiskVariant.KERNELS, RiskVariant.CONE):
            continue
        for node_id in sorted(local.per_node):
            if node_id not in tree or tree.is_terminal(node_id):
                violations.append(f'risk_measure.per_node refers to node {node_id}, which is not a non-terminal node')
    if violations:
        raise ValidationError(violations)


def load_model(text: Union[bytes, str], exact: bool = False) -> Tuple[ScenarioTree, RiskMeasureSpec, Optional[Payoff]]:
    """Parse and validate a model file into (tree, risk measure spec, payoff or None)"""
    payload = _decode(text, exact)
    assets = payload['assets']
    if not isinstance(assets, list) or not all(isinstance(a, str) for a in assets):
        raise ParseError('"assets" must be a list of names')
    nodes = _parse_nodes(payload['nodes'], len(assets), exact)
    tree = ScenarioTree(nodes, assets, exact=exact)
    spec = parse_risk_measure(payload['risk_measure'], exact)
    _check_spec_nodes(spec, tree)
    payoff = _parse_payoff(payload['payoff'], tree) if payload.get('payoff') is not None else None
    logger.info(f"Loaded model: {len(tree)} nodes, T={tree.horizon}, d={tree.asset_count}, "
                f"risk measure {spec.variant.value}, payoff {'present' if payoff else 'absent'}")
    return tree, spec, payoff
