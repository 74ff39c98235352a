"""Dense complex linear algebra used by the propagators and optimizers."""
import numpy as np
import scipy.linalg

from ._validation import DomainError, check_square

HERMITIAN_ATOL = 1e-12


def matrix_exp(A, scale=1.0):
    """Return ``exp(scale * A)``.

    Hermitian and anti-Hermitian arguments go through an eigendecomposition,
    which keeps the result unitary to machine precision; anything else
    (e.g. the non-normal decay generators) uses scaling-and-squaring Pade.
    """
    A = check_square(np.asarray(A, dtype=complex), "A")
    M = scale * A
    if np.allclose(A, A.conj().T, rtol=0, atol=HERMITIAN_ATOL):
        w, v = np.linalg.eigh(A)
        return (v * np.exp(scale * w)) @ v.conj().T
    if np.allclose(A, -A.conj().T, rtol=0, atol=HERMITIAN_ATOL):
        w, v = np.linalg.eigh(1j * A)
        return (v * np.exp(-1j * scale * w)) @ v.conj().T
    return scipy.linalg.expm(M)


def kron(*ops):
    """Kronecker product of any number of matrices (row-major block order)."""
    if not ops:
        raise DomainError("kron needs at least one operand")
    out = np.asarray(ops[0])
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op))
    return out


def swap_operator(d):
    """Permutation ``|ij> -> |ji>`` on two d-level systems."""
    P = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            P[j * d + i, i * d + j] = 1.0
    return P


def symmetric_pairs(d):
    """Pair labels ``(i, j)``, ``i <= j``, in the column order of the symmetric isometry."""
    return [(i, j) for i in range(d) for j in range(i, d)]


def symmetric_subspace_isometry(d):
    """Isometry ``S`` of shape ``(d*d, d(d+1)/2)`` onto the exchange-symmetric subspace.

    Columns are ``|ii>`` and ``(|ij> + |ji>)/sqrt(2)`` for ``i < j``, ordered
    as :func:`symmetric_pairs`.
    """
    if d < 1:
        raise DomainError(f"dimension must be positive, got {d}")
    pairs = symmetric_pairs(d)
    S = np.zeros((d * d, len(pairs)))
    r = 1 / np.sqrt(2)
    for col, (i, j) in enumerate(pairs):
        if i == j:
            S[i * d + i, col] = 1.0
        else:
            S[i * d + j, col] = r
            S[j * d + i, col] = r
    return S


def divided_differences(eigvals, dt=1.0):
    """Loewner matrix of ``x -> exp(-i x dt)`` at the given eigenvalues.

    ``Phi[..., a, b] = (e_a - e_b) / (x_a - x_b)``, written through ``sinc``
    so coincident eigenvalues need no special casing. Accepts stacked
    (and complex) eigenvalue arrays of shape ``(..., n)``.
    """
    lam = np.asarray(eigvals)
    mid = 0.5 * (lam[..., :, None] + lam[..., None, :])
    half_gap = 0.5 * dt * (lam[..., :, None] - lam[..., None, :])
    return -1j * dt * np.exp(-1j * dt * mid) * np.sinc(half_gap / np.pi)


def max_abs(A):
    return float(np.max(np.abs(A))) if np.size(A) else 0.0
