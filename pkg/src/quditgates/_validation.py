"""Input validation helpers shared across the package.

These mirror the ``check_*`` helpers of scikit-learn: each one either
returns a normalized value or raises :class:`DomainError`.
"""
from fractions import Fraction
from numbers import Real

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class DegeneracyError(DomainError):
    """Two candidate branches cannot be told apart numerically."""

    def __init__(self, message, candidates=()):
        super().__init__(message)
        self.candidates = tuple(candidates)


def check_half_integer(value, name="j", nonnegative=True):
    """Return ``2 * value`` as an int, checking that it is integral."""
    if isinstance(value, Fraction):
        twice = 2 * value
        ok = twice.denominator == 1
        twice = int(twice)
    elif isinstance(value, Real):
        twice_f = 2.0 * float(value)
        twice = int(round(twice_f))
        ok = abs(twice_f - twice) < 1e-9
    else:
        raise DomainError(f"{name} must be a real number, got {value!r}")
    if not ok:
        raise DomainError(f"{name}={value!r} is not a half-integer")
    if nonnegative and twice < 0:
        raise DomainError(f"{name}={value!r} must be nonnegative")
    return twice


def check_square(matrix, name="matrix"):
    a = np.asarray(matrix)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"{name} must be a square matrix, got shape {a.shape}")
    return a


def check_dimension(matrix, dim, name="matrix"):
    a = check_square(matrix, name)
    if a.shape[0] != dim:
        raise DomainError(f"{name} has dimension {a.shape[0]}, expected {dim}")
    return a


def check_level_map(level_map, k, d):
    levels = [int(i) for i in level_map]
    if len(levels) != k:
        raise DomainError(f"level_map needs {k} entries, got {len(levels)}")
    if len(set(levels)) != k:
        raise DomainError(f"level_map has duplicate indices: {levels}")
    if any(i < 0 or i >= d for i in levels):
        raise DomainError(f"level_map indices must lie in [0, {d}), got {levels}")
    return levels


def is_hermitian(matrix, atol=1e-12):
    a = np.asarray(matrix)
    return a.shape[0] == a.shape[1] and np.allclose(a, a.conj().T, rtol=0, atol=atol)


def is_unitary(matrix, atol=1e-10):
    a = np.asarray(matrix)
    eye = np.eye(a.shape[1])
    return np.max(np.abs(a.conj().T @ a - eye)) <= atol


def check_random_state(seed):
    """Turn ``seed`` into a :class:`numpy.random.Generator`."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
