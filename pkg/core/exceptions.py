from typing import List, Optional


class RiskHedgeError(Exception):
    """Base class for every error raised by the pricing library"""
    code = 'RISKHEDGE_ERROR'

    def __init__(self, message: str = '', node: Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.node = node

    def to_dict(self):
        payload = {'code': self.code, 'message': self.message}
        if self.node is not None:
            payload['node'] = self.node
        return payload


class ParseError(RiskHedgeError):
    code = 'PARSE_ERROR'


class ValidationError(RiskHedgeError):
    code = 'VALIDATION_ERROR'

    def __init__(self, violations: List[str]):
        super().__init__('; '.join(violations))
        self.violations = list(violations)

    def to_dict(self):
        return {'code': self.code, 'message': self.message, 'violations': self.violations}


class MalformedProblemError(RiskHedgeError):
    code = 'MALFORMED_PROBLEM'


class NumericalFailureError(RiskHedgeError):
    code = 'NUMERICAL_FAILURE'


class NotAParentError(RiskHedgeError):
    code = 'NOT_A_PARENT'


class InvalidSpecError(RiskHedgeError):
    code = 'INVALID_SPEC'


class ConeEmptyDualError(RiskHedgeError):
    code = 'CONE_EMPTY_DUAL'


class CombinatorialLimitError(RiskHedgeError):
    code = 'COMBINATORIAL_LIMIT'


class MaturityMismatchError(RiskHedgeError):
    code = 'MATURITY_MISMATCH'


class NoArbitrageRequiredError(RiskHedgeError):
    """Raised when a dual formula is requested on a model violating NA"""
    code = 'NO_NA'


class InconsistencyError(RiskHedgeError):
    """Two independent computations that must agree did not"""
    code = 'INTERNAL_INCONSISTENCY'


class DisagreementError(InconsistencyError):
    code = 'DISAGREEMENT'
