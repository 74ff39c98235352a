"""Two-atom Rydberg-dressed Hamiltonian model.

Frequencies are measured in units of the rf Larmor rate ``omega_rf`` (which
defaults to 1) and times in units of ``1 / omega_rf``. Use
:meth:`PlatformParams.from_physical` to convert laboratory values.

Each pair of clock-state sublevels ``|ij>`` is dressed, under a perfect
blockade, with the two singly-excited states ``|r_i j>`` and ``|i r_j>``.
The resulting dressed pair states ``|~ij>`` carry the entangling light
shifts ``E^{ij}`` and are the working basis for everything downstream.
"""
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from ._validation import DegeneracyError, DomainError, check_half_integer
from .angular import angular_momentum_ops, clebsch_gordan, m_values
from .linalg import symmetric_subspace_isometry

#: Rydberg lifetime 140 us with omega_rf / 2pi = 10 MHz, in units of omega_rf.
DEFAULT_LIFETIME_US = 140.0
DEFAULT_RF_MHZ = 10.0


def decay_rate_in_rf_units(lifetime_us, omega_rf_over_2pi_mhz):
    return (1.0 / lifetime_us) / (2 * np.pi * omega_rf_over_2pi_mhz)


DEFAULT_GAMMA_R = decay_rate_in_rf_units(DEFAULT_LIFETIME_US, DEFAULT_RF_MHZ)


@dataclass(frozen=True)
class PlatformParams:
    """Physical configuration of the two-atom platform.

    Attributes
    ----------
    F_a, F_r : float
        Spins of the clock (auxiliary) and Rydberg hyperfine manifolds.
    omega_rf : float
        rf Larmor rate; the frequency unit of the model.
    omega_0 : float
        Zeeman splitting of the clock manifold (rf is driven on resonance).
    Omega_L, Delta_L : float
        Dressing-laser Rabi frequency on the reference transition and detuning.
    g_ratio : float
        ``g_F(r) / g_F(a)``.
    gamma_r : float
        Decay rate of every Rydberg sublevel.
    detuning_model : callable, optional
        ``f(m, params) -> Delta`` replacing the default linear Zeeman model.
    """

    F_a: float = 4.5
    F_r: float = 5.5
    omega_rf: float = 1.0
    omega_0: float = 1.0
    Omega_L: float = 6.0
    Delta_L: float = -6.0
    g_ratio: float = 2.0
    gamma_r: float = DEFAULT_GAMMA_R
    detuning_model: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        ta = check_half_integer(self.F_a, "F_a")
        tr = check_half_integer(self.F_r, "F_r")
        if abs(tr - ta) > 2 or tr + ta < 2:
            raise DomainError(
                f"F_r={self.F_r} cannot be reached from F_a={self.F_a} by a dipole transition")
        if not self.Omega_L > 0:
            raise DomainError(f"Omega_L must be positive, got {self.Omega_L}")
        if self.gamma_r < 0:
            raise DomainError(f"gamma_r must be nonnegative, got {self.gamma_r}")

    @property
    def d_phys(self):
        return int(round(2 * self.F_a)) + 1

    @classmethod
    def from_physical(cls, omega_rf_over_2pi_mhz=DEFAULT_RF_MHZ,
                      lifetime_us=DEFAULT_LIFETIME_US, **kwargs):
        """Build parameters with the decay rate given as a Rydberg lifetime."""
        if lifetime_us is None or np.isinf(lifetime_us):
            gamma = 0.0
        else:
            gamma = decay_rate_in_rf_units(lifetime_us, omega_rf_over_2pi_mhz)
        return cls(gamma_r=gamma, **kwargs)

    @classmethod
    def toy(cls, d_phys, **kwargs):
        """Smaller platform with the same dressing construction, ``F_r = F_a + 1``."""
        F_a = (d_phys - 1) / 2
        return cls(F_a=F_a, F_r=F_a + 1, **kwargs)

    def to_dict(self):
        out = asdict(self)
        out.pop("detuning_model")
        return out


def rydberg_rabi_ratios(F_a, F_r, polarization="pi"):
    """Relative Rydberg Rabi frequencies ``Omega_{r_i} / Omega_L`` for each sublevel.

    The reference is the ``m = -F_a`` transition. Entries are ordered by
    sublevel index, i.e. ``m = F_a, F_a - 1, ..., -F_a``.
    """
    if polarization != "pi":
        raise DomainError(f"only pi polarization is modelled, got {polarization!r}")
    ta = check_half_integer(F_a, "F_a")
    tr = check_half_integer(F_r, "F_r")
    if abs(tr - ta) > 2 or tr + ta < 2 or (tr - ta) % 2:
        raise DomainError(f"F_a={F_a} -> F_r={F_r} violates the triangle rule with a photon")
    ref = clebsch_gordan(F_a, -F_a, 1, 0, F_r, -F_a)
    if ref == 0.0:
        raise DomainError(f"reference transition m=-{F_a} is forbidden for F_r={F_r}")
    return np.array([clebsch_gordan(F_a, m, 1, 0, F_r, m) / ref for m in m_values(F_a)])


def detunings(i, params):
    """Laser detuning of sublevel ``i`` from its Rydberg partner.

    ``Delta_L - (g_ratio - 1) * m_i * omega_0`` unless the parameters carry
    a custom ``detuning_model``.
    """
    d = params.d_phys
    if not 0 <= i < d:
        raise DomainError(f"level index {i} outside [0, {d})")
    m = params.F_a - i
    if params.detuning_model is not None:
        return float(params.detuning_model(m, params))
    return params.Delta_L - (params.g_ratio - 1.0) * m * params.omega_0


def _check_pair(i, j, params):
    d = params.d_phys
    for idx in (i, j):
        if not 0 <= idx < d:
            raise DomainError(f"level index {idx} outside [0, {d})")


def pair_hamiltonian(i, j, params, _ratios=None):
    """Three-level pair Hamiltonian on ``(|ij>, |r_i j>, |i r_j>)``."""
    _check_pair(i, j, params)
    ratios = rydberg_rabi_ratios(params.F_a, params.F_r) if _ratios is None else _ratios
    wi = ratios[i] * params.Omega_L
    wj = ratios[j] * params.Omega_L
    di, dj = detunings(i, params), detunings(j, params)
    return np.array([
        [0.0, wi / 2, wj / 2],
        [wi / 2, -di, 0.0],
        [wj / 2, 0.0, -dj],
    ], dtype=complex)


def _select_branch(H, label):
    if not np.any(H.imag):
        H = H.real
    w, v = np.linalg.eigh(H)
    overlap = np.abs(v[0]) ** 2
    order = np.argsort(overlap)[::-1]
    if len(order) > 1 and overlap[order[0]] - overlap[order[1]] < 1e-12:
        raise DegeneracyError(
            f"dressed branch for {label} is ambiguous: overlaps "
            f"{overlap[order[0]]:.3g} at E={w[order[0]]:.6g} and "
            f"{overlap[order[1]]:.3g} at E={w[order[1]]:.6g}",
            candidates=[(w[order[0]], v[:, order[0]]), (w[order[1]], v[:, order[1]])],
        )
    b = order[0]
    vec = v[:, b]
    if np.iscomplexobj(vec):
        vec = vec * np.exp(-1j * np.angle(vec[0]))
        vec = vec.real
    if vec[0] < 0:
        vec = -vec
    return float(w[b]), vec


def dress_pair(i, j, params, _ratios=None):
    """Dressed energy and amplitudes of the branch connected to ``|ij>``.

    Returns
    -------
    energy : float
    amplitudes : ndarray of shape (3,)
        ``(C_ij, C_{r_i j}, C_{i r_j})`` with ``C_ij > 0``.
    """
    H = pair_hamiltonian(i, j, params, _ratios)
    return _select_branch(H, f"pair ({i}, {j})")


def single_atom_light_shift(i, params, _ratios=None):
    """Dressed energy of one atom in sublevel ``i`` (no blockade involved)."""
    if not 0 <= i < params.d_phys:
        raise DomainError(f"level index {i} outside [0, {params.d_phys})")
    ratios = rydberg_rabi_ratios(params.F_a, params.F_r) if _ratios is None else _ratios
    w = ratios[i] * params.Omega_L
    H = np.array([[0.0, w / 2], [w / 2, -detunings(i, params)]], dtype=complex)
    return _select_branch(H, f"level {i}")[0]


def _restricted_spin_ops(F_from, F_to, d):
    """Spin ops of manifold ``F_to`` on the sublevels that share ``m`` with ``F_from``."""
    ops = angular_momentum_ops(F_to)
    out_x = np.zeros((d, d), dtype=complex)
    out_y = np.zeros((d, d), dtype=complex)
    m = m_values(F_from)
    idx = [int(round(F_to - mi)) if abs(mi) <= F_to else None for mi in m]
    for a, ia in enumerate(idx):
        for b, ib in enumerate(idx):
            if ia is not None and ib is not None:
                out_x[a, b] = ops.fx[ia, ib]
                out_y[a, b] = ops.fy[ia, ib]
    return out_x, out_y


@dataclass(frozen=True, eq=False)
class DressedModel:
    """Precomputed dressed-basis quantities for one :class:`PlatformParams`.

    Pair ``(i, j)`` maps to row ``i * d + j`` of every two-atom operator.
    """

    params: PlatformParams
    rabi_ratios: np.ndarray
    detuning: np.ndarray
    single_shifts: np.ndarray
    energies: np.ndarray
    amplitudes: np.ndarray
    decay: np.ndarray
    rf_x: np.ndarray
    rf_y: np.ndarray

    @property
    def d_phys(self):
        return self.params.d_phys

    @property
    def dim(self):
        return self.d_phys ** 2

    def entangling_energies(self):
        """Blockade deficit ``E^{ij} - E_i - E_j``."""
        s = self.single_shifts
        return self.energies - s[:, None] - s[None, :]

    def magnetic_charge(self):
        """Total magnetic quantum number ``m_i + m_j`` of each dressed pair."""
        m = self.params.F_a - np.arange(self.d_phys)
        return (m[:, None] + m[None, :]).ravel()

    def entangling_diagonal(self, open_system=False):
        diag = self.energies.ravel().astype(complex)
        if open_system:
            diag = diag - 0.5j * self.decay.ravel()
        return diag

    def entangling_hamiltonian(self, open_system=False):
        return np.diag(self.entangling_diagonal(open_system))

    def rf_generator(self, phi):
        return np.cos(phi) * self.rf_x + np.sin(phi) * self.rf_y

    def total_hamiltonian(self, phi, open_system=False, symmetric=False):
        H = self.rf_generator(phi) + self.entangling_hamiltonian(open_system)
        if symmetric:
            S = symmetric_subspace_isometry(self.d_phys)
            H = S.T @ H @ S
        return H


def _dressed_rf_term(amps, a_op, r_op, d):
    """Matrix of ``H_mag x 1 + 1 x H_mag`` between dressed pair states."""
    eye = np.eye(d)
    c0, c1, c2 = (amps[:, :, n].ravel() for n in range(3))
    ground = np.kron(a_op, eye) + np.kron(eye, a_op)
    first_excited = np.kron(r_op, eye) + np.kron(eye, a_op)
    second_excited = np.kron(a_op, eye) + np.kron(eye, r_op)
    return (c0[:, None] * ground * c0[None, :]
            + c1[:, None] * first_excited * c1[None, :]
            + c2[:, None] * second_excited * c2[None, :])


@lru_cache(maxsize=32)
def build_model(params):
    """Dress every pair and assemble the dressed-basis generators."""
    d = params.d_phys
    ratios = rydberg_rabi_ratios(params.F_a, params.F_r)
    det = np.array([detunings(i, params) for i in range(d)])
    singles = np.array([single_atom_light_shift(i, params, ratios) for i in range(d)])
    energies = np.zeros((d, d))
    amps = np.zeros((d, d, 3))
    for i in range(d):
        for j in range(i, d):
            E, c = dress_pair(i, j, params, ratios)
            energies[i, j] = energies[j, i] = E
            amps[i, j] = c
            # exchange maps |r_i j> onto |j r_i>
            amps[j, i] = (c[0], c[2], c[1])
    decay = params.gamma_r * (amps[:, :, 1] ** 2 + amps[:, :, 2] ** 2)

    spin_a = angular_momentum_ops(params.F_a)
    rx, ry = _restricted_spin_ops(params.F_a, params.F_r, d)
    scale_r = params.g_ratio * params.omega_rf
    # Zeeman term of the Rydberg manifold is already inside the detunings
    rf_x = _dressed_rf_term(amps, params.omega_rf * spin_a.fx, scale_r * rx, d)
    rf_y = _dressed_rf_term(amps, params.omega_rf * spin_a.fy, scale_r * ry, d)
    model = DressedModel(params, ratios, det, singles, energies, amps, decay, rf_x, rf_y)
    for arr in (ratios, det, singles, energies, amps, decay, rf_x, rf_y):
        arr.setflags(write=False)
    return model


def as_model(params_or_model):
    if isinstance(params_or_model, DressedModel):
        return params_or_model
    return build_model(params_or_model)


def entangling_hamiltonian(params, open_system=False):
    """Diagonal dressed entangling Hamiltonian, ``E - i gamma / 2`` when open."""
    return as_model(params).entangling_hamiltonian(open_system)


def rf_generator(phi, params):
    """Phase-modulated rf drive expressed in the dressed pair basis."""
    return as_model(params).rf_generator(phi)


def total_hamiltonian(phi, params, open_system=False, symmetric=False):
    """rf drive plus entangling term, optionally on the symmetric subspace."""
    return as_model(params).total_hamiltonian(phi, open_system, symmetric)


def pair_index(i, j, d):
    """Map pair labels to the linear index ``f(i, j) = d * i + j``."""
    return d * i + j
