"""
Number handling shared by the solver and the market layer.

Every numerical routine works in one of two modes: double precision with a
tolerance, or exact rational arithmetic where numpy arrays hold
``fractions.Fraction`` objects (``dtype=object``) and the tolerance is zero.
"""

from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np
from django.conf import settings

INF = float('inf')
MINUS_INFINITY = float('-inf')


def is_finite(value) -> bool:
    return value == value and value != INF and value != MINUS_INFINITY


def is_minus_infinity(value) -> bool:
    return isinstance(value, float) and value == MINUS_INFINITY


def to_number(value, exact: bool = False):
    """Coerce a scalar to float, or to Fraction in exact mode (infinities stay floats)"""
    if isinstance(value, bool):
        raise TypeError('booleans are not numbers here')
    if not exact:
        return float(value)
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not is_finite(value):
            return value
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value)
    return Fraction(value)


def resolve_tol(tol: Optional[float], exact: bool = False):
    if exact:
        return Fraction(0)
    if tol is None:
        return float(settings.RISKHEDGE_TOL)
    return float(tol)


def zeros(shape, exact: bool = False) -> np.ndarray:
    if exact:
        return np.full(shape, Fraction(0), dtype=object)
    return np.zeros(shape)


def ones(shape, exact: bool = False) -> np.ndarray:
    if exact:
        return np.full(shape, Fraction(1), dtype=object)
    return np.ones(shape)


def identity(size: int, exact: bool = False) -> np.ndarray:
    matrix = zeros((size, size), exact)
    for i in range(size):
        matrix[i, i] = Fraction(1) if exact else 1.0
    return matrix


def as_vector(values: Iterable, exact: bool = False) -> np.ndarray:
    if exact:
        flat = np.ravel(np.array(list(values) if not isinstance(values, np.ndarray) else values, dtype=object))
        return np.array([to_number(v, True) for v in flat], dtype=object)
    return np.asarray(values, dtype=float).ravel()


def as_matrix(values: Sequence, exact: bool = False, columns: Optional[int] = None) -> np.ndarray:
    """2-D array from nested sequences; an empty input becomes a (0, columns) matrix"""
    try:
        matrix = np.array(values, dtype=float)
    except (TypeError, ValueError) as e:
        raise ValueError(f'not a rectangular numeric matrix: {e}') from e
    if matrix.size == 0:
        return zeros((0, columns or 0), exact)
    if matrix.ndim != 2:
        raise ValueError(f'expected a 2-D matrix, got {matrix.ndim} dimensions')
    if not exact:
        return matrix
    rows = values.tolist() if isinstance(values, np.ndarray) else values
    return np.array([[to_number(v, True) for v in row] for row in rows], dtype=object)


def solve_square(matrix: np.ndarray, rhs: np.ndarray, exact: bool = False, tol: Optional[float] = None):
    """Gaussian elimination with partial pivoting; None when the system is singular"""
    tol = resolve_tol(tol, exact)
    size = len(rhs)
    a = np.array(matrix, dtype=object if exact else float).copy()
    b = np.array(rhs, dtype=object if exact else float).copy()
    for col in range(size):
        pivot = max(range(col, size), key=lambda r: abs(a[r, col]))
        if abs(a[pivot, col]) <= tol:
            return None
        if pivot != col:
            a[[col, pivot]] = a[[pivot, col]]
            b[[col, pivot]] = b[[pivot, col]]
        for r in range(col + 1, size):
            factor = a[r, col] / a[col, col]
            if factor != 0:
                a[r, col:] = a[r, col:] - factor * a[col, col:]
                b[r] = b[r] - factor * b[col]
    x = zeros(size, exact)
    for r in range(size - 1, -1, -1):
        x[r] = (b[r] - a[r, r + 1:] @ x[r + 1:]) / a[r, r]
    return x
