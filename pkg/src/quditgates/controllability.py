"""Controllability evidence from spherical-tensor content and Lie closure.

A drive built only from rank-1 and rank-2 spin tensors cannot reach all of
``SU(2j+1)``; support on some rank ``k > 2`` is the signature that it can.
:func:`controllability_report` looks for that support, and
:func:`lie_closure_rank` settles small cases outright by computing the
dimension of the generated Lie algebra.
"""
from dataclasses import dataclass, field

import numpy as np

from ._validation import DomainError, check_dimension, check_half_integer
from .angular import _tensor_diagonal


def tensor_index(k, q):
    """Scatter-plot ordering ``g = (k + 1)^2 - 1 + q``."""
    return (k + 1) ** 2 - 1 + q


@dataclass
class TensorSpectrum:
    """Weights ``|Tr(H T^(k)_q^dagger)|^2`` of an operator on spin ``j``."""

    j: float
    coefficients: dict

    def items(self):
        """``(g, k, q, C)`` rows sorted by ``g``."""
        rows = [(tensor_index(k, q), k, q, c) for (k, q), c in self.coefficients.items()]
        return sorted(rows)

    def total(self):
        return float(sum(self.coefficients.values()))

    def rank_weights(self):
        """Summed weight per rank ``k``."""
        out = {}
        for (k, _), c in self.coefficients.items():
            out[k] = out.get(k, 0.0) + c
        return out

    def support(self, threshold=0.0, min_rank=0):
        """``(k, q)`` with ``|Tr(H T^dagger)| > threshold`` and ``k >= min_rank``."""
        return sorted((k, q) for (k, q), c in self.coefficients.items()
                      if k >= min_rank and np.sqrt(c) > threshold)


def _projections(H, tj):
    """``Tr(H T^(k)_q^dagger)`` for every ``(k, q)``, as a dict.

    Each ``T^(k)_q`` lives on the single diagonal at offset ``q``, so the
    overlap only needs that diagonal of ``H``; diagonals where ``H`` vanishes
    are skipped outright.
    """
    out = {}
    for q in range(-tj, tj + 1):
        diag = np.diagonal(H, q)
        nonzero = np.any(diag != 0)
        for k in range(abs(q), tj + 1):
            # Tr(H T^dagger) = sum_a H[a - q, a] conj(T[a - q, a])
            out[(k, q)] = complex(diag @ _tensor_diagonal(tj, k, q)) if nonzero else 0j
    return out


def tensor_decompose(H, j):
    """Spherical-tensor weights ``C^(k)_q = |Tr(H T^(k)_q^dagger)|^2`` of ``H``.

    Parameters
    ----------
    H : array_like, shape ``(2j+1, 2j+1)``
    j : half-integer spin

    Returns
    -------
    TensorSpectrum
    """
    tj = check_half_integer(j)
    H = check_dimension(np.asarray(H, dtype=complex), tj + 1, "H")
    proj = _projections(H, tj)
    coeffs = {kq: float(abs(v) ** 2) for kq, v in proj.items()}
    return TensorSpectrum(tj / 2.0, coeffs)


def tensor_reconstruct(H, j):
    """``sum_{k,q} Tr(H T^(k)_q^dagger) T^(k)_q``, which returns ``H`` itself."""
    tj = check_half_integer(j)
    H = check_dimension(np.asarray(H, dtype=complex), tj + 1, "H")
    out = np.zeros_like(H)
    for (k, q), c in _projections(H, tj).items():
        if c != 0:
            out += c * np.diag(_tensor_diagonal(tj, k, q), q)
    return out


@dataclass
class ControllabilityReport:
    """Per-generator rank ``> 2`` tensor support and the overall verdict.

    ``verdict`` is ``"controllable-evidence"`` when some generator has such
    support. This is necessary evidence, not a proof; use
    :func:`lie_closure_rank` for that on small systems.
    """

    j: float
    threshold: float
    support: list = field(default_factory=list)
    verdict: str = "no-evidence"

    @property
    def passed(self):
        return self.verdict == "controllable-evidence"

    def to_dict(self):
        return {
            "j": self.j,
            "threshold": self.threshold,
            "verdict": self.verdict,
            "note": "necessary-evidence check, not a Lie-algebra rank proof",
            "support": [[list(kq) for kq in s] for s in self.support],
        }


def controllability_report(generators, j, threshold=1e-8, min_rank=3):
    """Look for spherical-tensor support at rank ``>= min_rank`` in each generator.

    ``threshold`` is relative to each generator's Frobenius norm.
    """
    if not generators:
        raise DomainError("at least one generator is required")
    tj = check_half_integer(j)
    support = []
    for h in generators:
        h = check_dimension(np.asarray(h, dtype=complex), tj + 1, "generator")
        scale = np.linalg.norm(h)
        spec = tensor_decompose(h, j)
        support.append(spec.support(threshold * scale, min_rank) if scale > 0 else [])
    verdict = "controllable-evidence" if any(support) else "no-evidence"
    return ControllabilityReport(tj / 2.0, threshold, support, verdict)


@dataclass
class ClosureResult:
    rank: int
    partial: bool
    full_rank: int

    @property
    def controllable(self):
        return not self.partial and self.rank >= self.full_rank

    def __int__(self):
        return self.rank


def _real_vec(A):
    return np.concatenate([A.real.ravel(), A.imag.ravel()])


def lie_closure_rank(generators, max_dim=36, cap=None, tol=1e-9):
    """Real dimension of the Lie algebra generated by ``{-i h}``.

    Generators are made traceless first, so the ceiling is ``n^2 - 1``
    (``su(n)``) rather than ``n^2`` (``u(n)``). New commutators are kept
    when they are linearly independent, to relative tolerance ``tol``, of
    the current span. ``cap`` limits the number of commutator sweeps; if
    it stops the closure early the result is flagged ``partial``.

    Returns
    -------
    ClosureResult
        ``int(result)`` is the rank.
    """
    mats = [np.asarray(h, dtype=complex) for h in generators]
    if not mats:
        raise DomainError("at least one generator is required")
    n = mats[0].shape[0]
    for h in mats:
        check_dimension(h, n, "generator")
    if n > max_dim:
        raise DomainError(f"closure is limited to dimension {max_dim}, got {n}")
    full = n * n - 1
    cap = full if cap is None else int(cap)

    basis = []           # anti-Hermitian traceless elements
    Q = np.zeros((2 * n * n, 0))  # orthonormal real coordinates of the span

    def add(A):
        nonlocal Q
        A = A - np.trace(A) / n * np.eye(n)
        norm = np.linalg.norm(A)
        if norm < tol:
            return False
        v = _real_vec(A) / norm
        r = v - Q @ (Q.T @ v)
        r = r - Q @ (Q.T @ r)
        if np.linalg.norm(r) < tol:
            return False
        Q = np.column_stack([Q, r / np.linalg.norm(r)])
        basis.append(A / norm)
        return True

    for h in mats:
        add(-1j * h)
    frontier = list(range(len(basis)))
    sweeps = 0
    while frontier and len(basis) < full:
        if sweeps >= cap:
            return ClosureResult(len(basis), True, full)
        sweeps += 1
        new = []
        for a in frontier:
            for b in range(len(basis)):
                if b == a:
                    continue
                A, B = basis[a], basis[b]
                if add(A @ B - B @ A):
                    new.append(len(basis) - 1)
                if len(basis) >= full:
                    break
            if len(basis) >= full:
                break
        frontier = new
    return ClosureResult(len(basis), False, full)


__all__ = [
    "ClosureResult", "ControllabilityReport", "TensorSpectrum", "controllability_report",
    "lie_closure_rank", "tensor_decompose", "tensor_index", "tensor_reconstruct",
]
