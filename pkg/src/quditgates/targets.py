"""Target gates, their embedding as partial isometries, and fidelities."""
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import DomainError, check_level_map
from .angular import m_values
from .linalg import swap_operator, symmetric_subspace_isometry


@dataclass(frozen=True, eq=False)
class GateTarget:
    """A two-qudit gate on ``k`` logical levels embedded in ``d`` physical ones.

    ``embedded`` is the ``d^2 x k^2`` partial isometry holding the gate's
    action on the mapped computational pairs; ``inputs`` holds those pair
    states themselves. Rows outside the logical block of ``embedded`` are
    zero, so population leaking out of it costs fidelity.
    """

    name: str
    k: int
    d: int
    matrix: np.ndarray
    level_map: tuple
    embedded: np.ndarray = field(repr=False)
    inputs: np.ndarray = field(repr=False)

    @property
    def is_symmetric(self):
        P = swap_operator(self.k)
        return np.allclose(P @ self.matrix @ P, self.matrix, rtol=0, atol=1e-12)

    def embed(self, d, level_map=None):
        """Same gate placed on ``level_map`` (default ``0..k-1``) of a ``d``-level atom."""
        return _make_target(self.name, self.matrix, self.k, d, level_map)

    def symmetric_reduction(self):
        """Target and input isometries restricted to the exchange-symmetric sector.

        Returns
        -------
        V_sym, E_sym : ndarray of shape ``(d(d+1)/2, k(k+1)/2)``
        """
        if not self.is_symmetric:
            raise DomainError(f"target {self.name!r} is not exchange symmetric")
        Sd = symmetric_subspace_isometry(self.d)
        Sk = symmetric_subspace_isometry(self.k)
        return Sd.T @ self.embedded @ Sk, Sd.T @ self.inputs @ Sk


def _make_target(name, matrix, k, d=None, level_map=None):
    d = k if d is None else int(d)
    if d < k:
        raise DomainError(f"physical dimension d={d} is smaller than k={k}")
    levels = tuple(check_level_map(range(k) if level_map is None else level_map, k, d))
    matrix = np.asarray(matrix, dtype=complex)
    return GateTarget(name, k, d, matrix, levels,
                      embed_isometry(matrix, d, levels), _input_isometry(k, d, levels))


def _pair_states(k, d, levels):
    cols = np.zeros((d * d, k * k), dtype=complex)
    for a in range(k):
        for b in range(k):
            cols[levels[a] * d + levels[b], a * k + b] = 1.0
    return cols


def _input_isometry(k, d, levels):
    return _pair_states(k, d, levels)


def embed_isometry(target, d, level_map):
    """``d^2 x k^2`` matrix whose columns are the gate applied to mapped pair states.

    ``target`` may be a :class:`GateTarget` or a bare ``k^2 x k^2`` matrix.
    """
    matrix = target.matrix if isinstance(target, GateTarget) else np.asarray(target)
    kk = matrix.shape[0]
    k = int(round(np.sqrt(kk)))
    if k * k != kk or matrix.shape != (kk, kk):
        raise DomainError(f"two-qudit gate must be square with k^2 rows, got {matrix.shape}")
    levels = check_level_map(level_map, k, d)
    return _pair_states(k, d, levels) @ matrix


def from_matrix(matrix, name="custom", d=None, level_map=None):
    """Wrap a user-supplied ``k^2 x k^2`` unitary; warns if it is not exchange symmetric."""
    matrix = np.asarray(matrix, dtype=complex)
    k = int(round(np.sqrt(matrix.shape[0])))
    if k * k != matrix.shape[0] or matrix.shape[0] != matrix.shape[1]:
        raise DomainError(f"gate must be k^2 x k^2, got shape {matrix.shape}")
    if not np.allclose(matrix.conj().T @ matrix, np.eye(k * k), atol=1e-10):
        raise DomainError("gate matrix is not unitary")
    target = _make_target(name, matrix, k, d, level_map)
    if not target.is_symmetric:
        warnings.warn(f"target {name!r} is not symmetric under qudit exchange; "
                      "the global-control engine cannot reach it", stacklevel=2)
    return target


def _root_of_unity(k):
    return np.exp(2j * np.pi / k)


def cphase(k, d=None, level_map=None):
    """``|i>|j> -> w^{ij} |i>|j>`` with ``w = exp(2 pi i / k)``."""
    if k < 2:
        raise DomainError(f"k must be at least 2, got {k}")
    idx = np.arange(k)
    phases = _root_of_unity(k) ** np.outer(idx, idx)
    return _make_target("cphase", np.diag(phases.ravel()), k, d, level_map)


def csum(k, d=None, level_map=None):
    """``|i>|j> -> |i>|i + j mod k>``."""
    if k < 2:
        raise DomainError(f"k must be at least 2, got {k}")
    U = np.zeros((k * k, k * k), dtype=complex)
    for i in range(k):
        for j in range(k):
            U[i * k + (i + j) % k, i * k + j] = 1.0
    return _make_target("csum", U, k, d, level_map)


def qudit_hadamard(k):
    """Single-qudit Fourier matrix ``H|j> = k^{-1/2} sum_i w^{ij} |i>``."""
    if k < 2:
        raise DomainError(f"k must be at least 2, got {k}")
    idx = np.arange(k)
    return _root_of_unity(k) ** np.outer(idx, idx) / np.sqrt(k)


def hadamard_pair(k, d=None, level_map=None):
    """The symmetric two-qudit gate ``H_k x H_k``."""
    H = qudit_hadamard(k)
    return _make_target("hadamard", np.kron(H, H), k, d, level_map)


def molmer_sorensen(k, theta, d=None, level_map=None):
    """``exp(-i theta J_z^2 / 2)`` with ``J_z = 1 x j_z + j_z x 1`` on spin ``(k-1)/2``."""
    if k < 2:
        raise DomainError(f"k must be at least 2, got {k}")
    m = m_values((k - 1) / 2)
    jz_tot = (m[:, None] + m[None, :]).ravel()
    U = np.diag(np.exp(-1j * theta * jz_tot ** 2 / 2))
    return _make_target(f"ms({theta!r})", U, k, d, level_map)


def isometry_fidelity(V_tar, V):
    """``|Tr(V_tar^dagger V)|^2 / K^2`` with ``K`` the column count of ``V_tar``."""
    V_tar = np.asarray(V_tar)
    V = np.asarray(V)
    if V_tar.shape != V.shape:
        raise DomainError(f"isometry shapes differ: {V_tar.shape} vs {V.shape}")
    K = V_tar.shape[1]
    return float(np.abs(np.vdot(V_tar, V)) ** 2 / K ** 2)


_MS_PATTERN = re.compile(r"^ms\(\s*([^)]+)\s*\)$")


def _parse_angle(text):
    expr = text.strip().replace("pi", str(np.pi))
    if not re.fullmatch(r"[0-9eE.+\-*/() ]+", expr):
        raise DomainError(f"cannot parse angle {text!r}")
    return float(eval(expr, {"__builtins__": {}}, {}))  # noqa: S307 -- digits and operators only


def gate_from_name(name, k, d=None, level_map=None):
    """Look up a target by the identifiers accepted in run configs."""
    key = name.strip().lower()
    if key == "cphase":
        return cphase(k, d, level_map)
    if key == "csum":
        return csum(k, d, level_map)
    if key == "hadamard":
        return hadamard_pair(k, d, level_map)
    match = _MS_PATTERN.match(key)
    if match:
        return molmer_sorensen(k, _parse_angle(match.group(1)), d, level_map)
    raise DomainError(f"unknown gate {name!r}; expected cphase, csum, hadamard or ms(theta)")
