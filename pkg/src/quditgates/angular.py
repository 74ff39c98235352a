"""Angular-momentum primitives: spin matrices, Clebsch-Gordan coefficients
and irreducible spherical tensor operators.

Magnetic sublevels are ordered ``m = +j, j-1, ..., -j`` everywhere, so row
``a`` of every matrix built here corresponds to ``m = j - a``.
"""
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial, lgamma, exp, log, sqrt

import numpy as np

from ._validation import DomainError, check_half_integer


@dataclass(frozen=True)
class SpinOps:
    """Cartesian spin operators for a single spin ``j`` (hbar = 1)."""

    j: float
    fx: np.ndarray
    fy: np.ndarray
    fz: np.ndarray

    @property
    def dim(self):
        return self.fz.shape[0]

    @property
    def fplus(self):
        return self.fx + 1j * self.fy

    @property
    def fminus(self):
        return self.fx - 1j * self.fy

    @property
    def m_values(self):
        return np.real(np.diag(self.fz)).copy()


def m_values(j):
    """Magnetic quantum numbers ``j, j-1, ..., -j``."""
    tj = check_half_integer(j)
    return (tj - 2 * np.arange(tj + 1)) / 2.0


def angular_momentum_ops(j):
    """Spin-``j`` matrices of dimension ``2j + 1``.

    Raises
    ------
    DomainError
        If ``2j`` is not a nonnegative integer.
    """
    tj = check_half_integer(j)
    jf = tj / 2.0
    m = m_values(jf)
    # <m+1| J+ |m> lives on the superdiagonal because m decreases with index
    raise_elems = np.sqrt(jf * (jf + 1) - m[1:] * (m[1:] + 1))
    jp = np.diag(raise_elems, 1).astype(complex)
    jm = jp.conj().T
    fx = (jp + jm) / 2
    fy = (jp - jm) / 2j
    fz = np.diag(m).astype(complex)
    return SpinOps(jf, fx, fy, fz)


def _racah_args(tj1, tm1, tj2, tm2, tJ, tM):
    """Integer arguments of the Racah sum, or None if the coefficient vanishes."""
    if tM != tm1 + tm2:
        return None
    if abs(tm1) > tj1 or abs(tm2) > tj2 or abs(tM) > tJ:
        return None
    if (tj1 + tm1) % 2 or (tj2 + tm2) % 2 or (tJ + tM) % 2:
        return None
    if tJ < abs(tj1 - tj2) or tJ > tj1 + tj2 or (tj1 + tj2 + tJ) % 2:
        return None
    a = (tj1 + tj2 - tJ) // 2
    b = (tj1 - tm1) // 2
    c = (tj2 + tm2) // 2
    e = (tJ - tj2 + tm1) // 2
    f = (tJ - tj1 - tm2) // 2
    pre = (
        tJ + 1,
        ((tJ + tj1 - tj2) // 2, (tJ - tj1 + tj2) // 2, a),
        ((tj1 + tj2 + tJ) // 2 + 1,),
        (
            (tJ + tM) // 2,
            (tJ - tM) // 2,
            b,
            (tj1 + tm1) // 2,
            (tj2 - tm2) // 2,
            c,
        ),
    )
    tmin = max(0, -e, -f)
    tmax = min(a, b, c)
    return pre, (a, b, c, e, f), range(tmin, tmax + 1)


def _lfact(n):
    return lgamma(n + 1)


def clebsch_gordan(j1, m1, j2, m2, J, M):
    """Clebsch-Gordan coefficient ``<j1 m1; j2 m2 | J M>``.

    Condon-Shortley phase convention. Evaluated with the Racah sum in log
    space with explicit sign tracking. Returns 0.0 when selection rules fail.
    """
    twos = [check_half_integer(x, name, nonnegative=name[0] in "jJ")
            for x, name in ((j1, "j1"), (m1, "m1"), (j2, "j2"),
                            (m2, "m2"), (J, "J"), (M, "M"))]
    args = _racah_args(*twos)
    if args is None:
        return 0.0
    (two_j_plus_1, num1, den1, num2), (a, b, c, e, f), trange = args
    log_pre = 0.5 * (
        log(two_j_plus_1)
        + sum(_lfact(n) for n in num1)
        - sum(_lfact(n) for n in den1)
        + sum(_lfact(n) for n in num2)
    )
    logs, signs = [], []
    for t in trange:
        logs.append(-(_lfact(t) + _lfact(a - t) + _lfact(b - t) + _lfact(c - t)
                      + _lfact(e + t) + _lfact(f + t)))
        signs.append(-1.0 if t % 2 else 1.0)
    if not logs:
        return 0.0
    top = max(logs)
    total = sum(s * exp(lg - top) for s, lg in zip(signs, logs))
    return total * exp(log_pre + top)


@lru_cache(maxsize=None)
def _clebsch_gordan_exact_twos(tj1, tm1, tj2, tm2, tJ, tM):
    args = _racah_args(tj1, tm1, tj2, tm2, tJ, tM)
    if args is None:
        return 0.0
    (two_j_plus_1, num1, den1, num2), (a, b, c, e, f), trange = args
    pre_sq = Fraction(two_j_plus_1)
    for n in num1 + num2:
        pre_sq *= factorial(n)
    for n in den1:
        pre_sq /= factorial(n)
    total = Fraction(0)
    for t in trange:
        den = (factorial(t) * factorial(a - t) * factorial(b - t) * factorial(c - t)
               * factorial(e + t) * factorial(f + t))
        total += Fraction(-1 if t % 2 else 1, den)
    if total == 0:
        return 0.0
    sign = 1.0 if total > 0 else -1.0
    return sign * sqrt(pre_sq * total * total)


def clebsch_gordan_exact(j1, m1, j2, m2, J, M):
    """Same coefficient as :func:`clebsch_gordan`, summed in exact rationals.

    Slower, but free of cancellation error for large spins (``j`` ~ 50).
    """
    twos = [check_half_integer(x, name, nonnegative=name[0] in "jJ")
            for x, name in ((j1, "j1"), (m1, "m1"), (j2, "j2"),
                            (m2, "m2"), (J, "J"), (M, "M"))]
    return _clebsch_gordan_exact_twos(*twos)


@lru_cache(maxsize=None)
def _tensor_diagonal(tj, k, q):
    """Entries of T^(k)_q on its (only) nonzero diagonal, ordered by column."""
    dim = tj + 1
    norm = sqrt((2 * k + 1) / dim)
    cols = range(max(0, q), dim + min(0, q))
    # column a holds m = j - a; the entry sits in row a - q
    vals = np.array([
        norm * _clebsch_gordan_exact_twos(tj, tj - 2 * a, 2 * k, 2 * q, tj, tj - 2 * a + 2 * q)
        for a in cols
    ])
    vals.setflags(write=False)
    return vals


def _check_tensor_rank(tj, k, q):
    if int(k) != k or int(q) != q:
        raise DomainError(f"tensor rank and component must be integers, got k={k}, q={q}")
    k, q = int(k), int(q)
    if not 0 <= k <= tj:
        raise DomainError(f"rank k={k} outside [0, 2j={tj}]")
    if abs(q) > k:
        raise DomainError(f"component q={q} outside [-{k}, {k}]")
    return k, q


def spherical_tensor(j, k, q):
    """Irreducible spherical tensor operator ``T^(k)_q`` on spin ``j``.

    ``<j, m+q| T^(k)_q |j, m> = sqrt((2k+1)/(2j+1)) <j m; k q | j m+q>``,
    which makes the full set orthonormal under ``Tr(A^dagger B)``.
    """
    tj = check_half_integer(j)
    k, q = _check_tensor_rank(tj, k, q)
    # m + q sits q rows above m, i.e. on diagonal offset +q
    return np.diag(_tensor_diagonal(tj, k, q), q).astype(complex)


def tensor_components(j):
    """All ``(k, q)`` pairs for spin ``j`` in order of ``g = (k+1)^2 - 1 + q``."""
    tj = check_half_integer(j)
    return [(k, q) for k in range(tj + 1) for q in range(-k, k + 1)]
