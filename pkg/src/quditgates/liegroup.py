"""Layered (digital) gate synthesis: local SU(k) rotations interleaved with
timed evolutions under the diagonal dressed entangler.

A layer applies ``U_1(alpha) x U_2(beta)`` and then ``exp(-i H_ent t)``;
the circuit is the time-ordered product of its layers. Because the
entangler is diagonal in the pair basis and the local rotations act as the
identity outside the logical levels, the logical ``k^2`` block evolves on
its own, and all optimization happens there.
"""
import logging
import time
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import DomainError, check_level_map, check_random_state
from .grape import (GrapeOptions, OptimizationReport, _pick_best, _run_ascent,
                    _run_lbfgs, _Tracker, run_multistart)
from .linalg import divided_differences
from .platform import DressedModel, PlatformParams, as_model
from .targets import GateTarget

logger = logging.getLogger(__name__)

MODES = ("local", "global_sign_flip")


def gell_mann_basis(d):
    """Generalized Gell-Mann matrices of ``su(d)``.

    Order: all symmetric ``|j><k| + |k><j|`` (``j < k``, row-major), then
    the antisymmetric ``-i|j><k| + i|k><j|`` in the same order, then the
    diagonal ``sum_{j<=l} |j><j| - l |l+1><l+1|`` for ``l = 1 .. d-1``.
    The diagonal elements are left unnormalized.

    Returns
    -------
    ndarray of shape ``(d^2 - 1, d, d)``
    """
    d = int(d)
    if d < 2:
        raise DomainError(f"Gell-Mann basis needs d >= 2, got {d}")
    pairs = [(j, k) for j in range(d) for k in range(j + 1, d)]
    out = np.zeros((d * d - 1, d, d), dtype=complex)
    n = 0
    for j, k in pairs:
        out[n, j, k] = out[n, k, j] = 1.0
        n += 1
    for j, k in pairs:
        out[n, j, k] = -1j
        out[n, k, j] = 1j
        n += 1
    for l in range(1, d):
        out[n, np.arange(l), np.arange(l)] = 1.0
        out[n, l, l] = -l
        n += 1
    return out


def local_unitary(alpha, basis):
    """``exp(-i sum_m alpha_m Lambda_m)``, an element of ``SU(d)``."""
    basis = np.asarray(basis)
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (basis.shape[0],):
        raise DomainError(f"expected {basis.shape[0]} coefficients, got shape {alpha.shape}")
    lam, W = np.linalg.eigh(np.tensordot(alpha, basis, axes=1))
    return (W * np.exp(-1j * lam)) @ W.conj().T


def min_layers(d):
    """Fewest layers whose parameter count covers a symmetric gate on two ``d``-level qudits."""
    d = int(d)
    if d < 2:
        raise DomainError(f"d must be at least 2, got {d}")
    dd = d * d
    # ceil(dd (dd + 1) / (2 (2 dd - 1))) in integer arithmetic
    num, den = dd * (dd + 1), 2 * (2 * dd - 1)
    return -(-num // den)


@dataclass
class LayeredCircuit:
    """Layers of local rotations followed by a timed entangler.

    ``times`` has shape ``(n,)`` in units of ``1 / omega_rf``; ``alphas``
    and ``betas`` have shape ``(n, k^2 - 1)`` and hold Gell-Mann
    coefficients for the first and second qudit. In ``global_sign_flip``
    mode ``betas`` equals ``alphas`` and the entangling energy changes sign
    on every second layer.
    """

    times: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray = None
    mode: str = "local"
    k: int = None
    d: int = None
    level_map: tuple = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        self.alphas = np.atleast_2d(np.asarray(self.alphas, dtype=float))
        if self.betas is None:
            if self.mode != "global_sign_flip":
                raise DomainError("local mode needs beta coefficients")
            self.betas = self.alphas.copy()
        self.betas = np.atleast_2d(np.asarray(self.betas, dtype=float))
        n = self.times.size
        if self.alphas.shape != self.betas.shape or self.alphas.shape[0] != n:
            raise DomainError(
                f"inconsistent layer shapes: times {self.times.shape}, "
                f"alphas {self.alphas.shape}, betas {self.betas.shape}")
        if np.any(self.times < 0):
            raise DomainError("entangling times must be nonnegative")
        if self.mode == "global_sign_flip" and not np.array_equal(self.alphas, self.betas):
            raise DomainError("global_sign_flip mode requires beta == alpha in every layer")
        k = int(round(np.sqrt(self.alphas.shape[1] + 1)))
        if k * k - 1 != self.alphas.shape[1]:
            raise DomainError(f"{self.alphas.shape[1]} coefficients is not k^2 - 1 for any k")
        if self.k is None:
            self.k = k
        elif self.k != k:
            raise DomainError(f"k={self.k} does not match {self.alphas.shape[1]} coefficients")
        if self.d is None:
            self.d = self.k
        if self.level_map is None:
            self.level_map = tuple(range(self.k))
        self.level_map = tuple(int(i) for i in self.level_map)

    @property
    def n_layers(self):
        return self.times.size

    @property
    def signs(self):
        return entangler_signs(self.n_layers, self.mode)

    def append_identity_layer(self):
        """Copy of the circuit with one extra do-nothing layer."""
        zeros = np.zeros((1, self.alphas.shape[1]))
        return LayeredCircuit(np.append(self.times, 0.0), np.vstack([self.alphas, zeros]),
                              np.vstack([self.betas, zeros]), self.mode, self.k, self.d,
                              self.level_map)

    def to_dict(self):
        return {
            "mode": self.mode,
            "k": self.k,
            "d": self.d,
            "level_map": list(self.level_map),
            "layers": [{"t": float(t), "alpha": a.tolist(), "beta": b.tolist()}
                       for t, a, b in zip(self.times, self.alphas, self.betas)],
        }

    @classmethod
    def from_dict(cls, data):
        layers = data["layers"]
        if not layers:
            raise DomainError("a circuit needs at least one layer")
        return cls(times=[layer["t"] for layer in layers],
                   alphas=[layer["alpha"] for layer in layers],
                   betas=[layer.get("beta", layer["alpha"]) for layer in layers],
                   mode=data.get("mode", "local"), k=data.get("k"), d=data.get("d"),
                   level_map=data.get("level_map"))


def entangler_signs(n_layers, mode):
    """``+1`` for every layer, or alternating ``+1, -1, ...`` in sign-flip mode."""
    if mode == "global_sign_flip":
        return np.where(np.arange(n_layers) % 2 == 0, 1.0, -1.0)
    return np.ones(n_layers)


def layer_diagonals(entangler, signs):
    """Per-layer entangler diagonals ``s * Re(E) + i Im(E)``.

    Flipping the sign reverses the light shifts but not the decay, so the
    reversed entangler still loses population.
    """
    E = np.asarray(entangler)
    return signs[:, None] * E.real[None, :] + 1j * E.imag[None, :]


def _logical_entangler(source, level_map, open_system):
    """Entangler diagonal on the ``k^2`` logical pairs."""
    if isinstance(source, (DressedModel, PlatformParams)):
        model = as_model(source)
        full = model.entangling_diagonal(open_system)
        d = model.d_phys
        level_map = check_level_map(level_map, len(level_map), d)
        idx = np.array([a * d + b for a in level_map for b in level_map])
        return full[idx]
    E = np.asarray(source, dtype=complex).ravel()
    k = len(level_map)
    if E.size != k * k:
        raise DomainError(f"entangler diagonal has {E.size} entries, expected {k * k}")
    return E


def assemble_circuit(circuit, model, open_system=False, full_space=True):
    """Ordered product of the circuit's layers (first layer rightmost).

    With ``full_space`` the result acts on all ``d_phys^2`` pair states,
    the local rotations being the identity outside the logical levels;
    otherwise only the ``k^2`` logical block is returned. ``model`` may also
    be a bare ``k^2`` entangler diagonal, in which case only the logical
    block is available.
    """
    k = circuit.k
    basis = gell_mann_basis(k)
    D = layer_diagonals(_logical_entangler(model, circuit.level_map, open_system), circuit.signs)
    if full_space and isinstance(model, (DressedModel, PlatformParams)):
        model = as_model(model)
        d = model.d_phys
        levels = list(circuit.level_map)
        if len(levels) != k or max(levels) >= d:
            raise DomainError(f"level map {levels} does not fit a {d}-level atom")
        full = model.entangling_diagonal(open_system)
        D_full = layer_diagonals(full, circuit.signs)
        U = np.eye(d * d, dtype=complex)
        for j in range(circuit.n_layers):
            A = np.eye(d, dtype=complex)
            B = np.eye(d, dtype=complex)
            A[np.ix_(levels, levels)] = local_unitary(circuit.alphas[j], basis)
            B[np.ix_(levels, levels)] = local_unitary(circuit.betas[j], basis)
            U = np.exp(-1j * circuit.times[j] * D_full[j])[:, None] * (np.kron(A, B) @ U)
        return U
    U = np.eye(k * k, dtype=complex)
    for j in range(circuit.n_layers):
        A = local_unitary(circuit.alphas[j], basis)
        B = local_unitary(circuit.betas[j], basis)
        U = np.exp(-1j * circuit.times[j] * D[j])[:, None] * (np.kron(A, B) @ U)
    return U


class LayeredProblem:
    """Fidelity of a layered circuit on the logical block, with its exact gradient.

    The flat parameter vector is ``[tau, alpha.ravel(), beta.ravel()]``
    (``beta`` omitted in sign-flip mode), where ``tau = t / time_scale``.
    Rescaling the times puts them on the same footing as the rotation
    angles for the optimizer.
    """

    def __init__(self, target, entangler, n_layers, mode="local", open_system=False,
                 time_scale=None):
        if mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
        if n_layers < 1:
            raise DomainError(f"n_layers must be positive, got {n_layers}")
        self.target = target
        self.k = target.k
        self.mode = mode
        self.n_layers = int(n_layers)
        self.open_system = bool(open_system)
        self.basis = gell_mann_basis(self.k)
        self.n_gen = self.basis.shape[0]
        E = _logical_entangler(entangler, target.level_map, open_system)
        self.signs = entangler_signs(self.n_layers, mode)
        self.diagonals = layer_diagonals(E, self.signs)
        if time_scale is None:
            spread = float(np.ptp(E.real))
            time_scale = np.pi / spread if spread > 0 else 1.0
        self.time_scale = float(time_scale)
        self.v_tar_h = target.matrix.conj().T
        self.K = self.k * self.k

    @property
    def n_params(self):
        per_layer = 1 + self.n_gen * (1 if self.mode == "global_sign_flip" else 2)
        return self.n_layers * per_layer

    def unpack(self, x):
        x = np.asarray(x, dtype=float)
        if x.size != self.n_params:
            raise DomainError(f"expected {self.n_params} parameters, got {x.size}")
        n, g = self.n_layers, self.n_gen
        times = x[:n] * self.time_scale
        alphas = x[n:n + n * g].reshape(n, g)
        betas = alphas if self.mode == "global_sign_flip" else x[n + n * g:].reshape(n, g)
        return times, alphas, betas

    def pack(self, circuit):
        parts = [circuit.times / self.time_scale, circuit.alphas.ravel()]
        if self.mode != "global_sign_flip":
            parts.append(circuit.betas.ravel())
        return np.concatenate(parts)

    def circuit(self, x, d=None):
        times, alphas, betas = self.unpack(x)
        return LayeredCircuit(times, alphas.copy(), betas.copy(), self.mode, self.k,
                              d if d is not None else self.target.d, self.target.level_map)

    def _local(self, coeffs):
        lam, W = np.linalg.eigh(np.tensordot(coeffs, self.basis, axes=1))
        return (W * np.exp(-1j * lam)) @ W.conj().T, lam, W

    def propagator(self, x):
        times, alphas, betas = self.unpack(x)
        U = np.eye(self.K, dtype=complex)
        for j in range(self.n_layers):
            A = self._local(alphas[j])[0]
            B = self._local(betas[j])[0]
            U = np.exp(-1j * times[j] * self.diagonals[j])[:, None] * (np.kron(A, B) @ U)
        return U

    def fidelity(self, x):
        g = np.vdot(self.target.matrix, self.propagator(x))
        return float(np.abs(g) ** 2 / self.K ** 2)

    def _local_gradient(self, lam, W, Z):
        """``d Tr(U(a) Z) / d a_m`` for all generators, ``U(a) = exp(-i a.Lambda)``."""
        Phi = divided_differences(lam, 1.0)
        Kall = np.einsum("ip,mij,jq->mpq", W.conj(), self.basis, W)
        G = W.conj().T @ Z @ W
        return np.einsum("pq,mpq,qp->m", Phi, Kall, G)

    def fidelity_and_gradient(self, x):
        times, alphas, betas = self.unpack(x)
        n, k = self.n_layers, self.k
        locals_a = [self._local(a) for a in alphas]
        locals_b = [self._local(b) for b in betas]
        phases = np.exp(-1j * times[:, None] * self.diagonals)
        layers = [phases[j][:, None] * np.kron(locals_a[j][0], locals_b[j][0])
                  for j in range(n)]
        # prefix[j] = L_j ... L_1 acting first; prefix[0] = 1
        prefix = [np.eye(self.K, dtype=complex)]
        for L in layers:
            prefix.append(L @ prefix[-1])
        # suffix[j] = V^dagger L_n ... L_{j+1}
        suffix = [None] * (n + 1)
        suffix[n] = self.v_tar_h
        for j in range(n - 1, -1, -1):
            suffix[j] = suffix[j + 1] @ layers[j]
        g = np.trace(suffix[n] @ prefix[n])

        dg_t = np.empty(n, dtype=complex)
        dg_a = np.empty((n, self.n_gen), dtype=complex)
        dg_b = np.empty((n, self.n_gen), dtype=complex)
        for j in range(n):
            # d g / d t_j: the entangler diagonal sits leftmost in layer j
            M = prefix[j + 1] @ suffix[j + 1]
            dg_t[j] = -1j * np.sum(self.diagonals[j] * np.diag(M))
            # Y = P_{j-1} Q_j E_j so that d g = Tr((dA x B) Y)
            Y = (prefix[j] @ suffix[j + 1]) * phases[j][None, :]
            Y4 = Y.reshape(k, k, k, k)
            A, lam_a, W_a = locals_a[j]
            B, lam_b, W_b = locals_b[j]
            Za = np.einsum("be,ceab->ca", B, Y4)
            Zb = np.einsum("ac,ceab->eb", A, Y4)
            dg_a[j] = self._local_gradient(lam_a, W_a, Za)
            dg_b[j] = self._local_gradient(lam_b, W_b, Zb)

        dg_t = dg_t * self.time_scale
        if self.mode == "global_sign_flip":
            dg = np.concatenate([dg_t, (dg_a + dg_b).ravel()])
        else:
            dg = np.concatenate([dg_t, dg_a.ravel(), dg_b.ravel()])
        K2 = self.K ** 2
        F = float(np.abs(g) ** 2 / K2)
        return F, 2.0 * np.real(np.conj(g) * dg) / K2

    def initial_guess(self, rng):
        tau = rng.uniform(0.0, 1.0, self.n_layers)
        rest = rng.uniform(-np.pi / 2, np.pi / 2, self.n_params - self.n_layers)
        return np.concatenate([tau, rest])

    def bounds(self):
        return [(0.0, None)] * self.n_layers + [(None, None)] * (self.n_params - self.n_layers)


@dataclass
class LayerOptions(GrapeOptions):
    """Knobs of :func:`optimize_layers`; same meaning as for GRAPE."""

    seeds: tuple = tuple(range(5))
    time_scale: float = None
    init_params: object = None


def _single_start(problem, seed, opts):
    rng = check_random_state(seed)
    if opts.init_params is not None:
        x0 = np.asarray(opts.init_params, dtype=float).copy()
        if x0.size != problem.n_params:
            raise DomainError(f"init_params has {x0.size} entries, expected {problem.n_params}")
    else:
        x0 = problem.initial_guess(rng)
    tracker = _Tracker(opts)
    start = time.perf_counter()
    if opts.method == "lbfgs":
        _run_lbfgs(problem.fidelity_and_gradient, x0, opts, tracker, bounds=problem.bounds())
    elif opts.method == "ascent":
        # plain ascent ignores the bounds; clip the times afterwards
        _run_ascent(problem.fidelity_and_gradient, x0, opts, tracker)
        tracker.best_x[:problem.n_layers] = np.abs(tracker.best_x[:problem.n_layers])
    else:
        raise DomainError(f"unknown method {opts.method!r}; use 'lbfgs' or 'ascent'")
    x_best = tracker.best_x
    F_best = problem.fidelity(x_best)
    logger.info("seed %s: F=%.8f after %d iterations", seed, F_best, len(tracker.history) - 1)
    return {"seed": seed, "x": x_best, "fidelity": F_best, "history": tracker.history,
            "iterations": len(tracker.history) - 1,
            "wall_time": time.perf_counter() - start}


def optimize_layers(target, model, n_layers, mode="local", opts=None, **overrides):
    """Multi-start search for layer parameters realizing ``target``.

    ``model`` is a platform (its entangler restricted to ``target.level_map``)
    or a bare ``k^2`` entangler diagonal. Returns an
    :class:`~quditgates.grape.OptimizationReport` whose ``solution`` is a
    :class:`LayeredCircuit`.
    """
    opts = replace(LayerOptions() if opts is None else opts, **overrides)
    if not isinstance(target, GateTarget):
        raise DomainError("target must be a GateTarget")
    problem = LayeredProblem(target, model, n_layers, mode, opts.open_system, opts.time_scale)
    start = time.perf_counter()
    results = run_multistart(lambda s: _single_start(problem, s, opts), opts.seeds, opts)
    best, converged, runs = _pick_best(results, opts.target_infidelity)
    return OptimizationReport(
        solution=problem.circuit(best["x"]),
        fidelity_history=best["history"],
        final_fidelity=best["fidelity"],
        seed=best["seed"],
        iterations=best["iterations"],
        wall_time=time.perf_counter() - start,
        converged=converged,
        runs=runs,
    )


def search_layers(target, model, mode="local", start=None, max_layers=None, opts=None,
                  **overrides):
    """Increase the layer count from ``start`` until the target fidelity is met.

    Returns ``(n_layers, report, history)`` where ``history`` maps each
    tried layer count to its best fidelity; ``n_layers`` is None if
    ``max_layers`` was reached without success.
    """
    start = min_layers(target.k) if start is None else int(start)
    max_layers = start + 10 if max_layers is None else int(max_layers)
    history = {}
    report = None
    for n in range(start, max_layers + 1):
        report = optimize_layers(target, model, n, mode, opts, **overrides)
        history[n] = report.final_fidelity
        if report.converged:
            return n, report, history
    return None, report, history


class LayeredOptimizer(BaseEstimator):
    """Estimator front end for :func:`optimize_layers`.

    After ``fit(target)``, ``circuit_``, ``report_`` and ``fidelity_`` hold
    the best circuit found.
    """

    def __init__(self, platform=None, n_layers=3, mode="local", open_system=False,
                 method="lbfgs", seeds=(0, 1, 2, 3, 4), target_infidelity=1e-3,
                 max_iter=5000, stall_iterations=20, stall_tol=1e-10,
                 stop_on_success=True, n_jobs=1):
        self.platform = platform
        self.n_layers = n_layers
        self.mode = mode
        self.open_system = open_system
        self.method = method
        self.seeds = seeds
        self.target_infidelity = target_infidelity
        self.max_iter = max_iter
        self.stall_iterations = stall_iterations
        self.stall_tol = stall_tol
        self.stop_on_success = stop_on_success
        self.n_jobs = n_jobs

    def _entangler(self):
        if self.platform is None:
            return as_model(PlatformParams())
        if isinstance(self.platform, (PlatformParams, DressedModel)):
            return as_model(self.platform)
        return np.asarray(self.platform)

    def fit(self, target, init_params=None):
        opts = LayerOptions(
            method=self.method, seeds=tuple(self.seeds),
            target_infidelity=self.target_infidelity, max_iter=self.max_iter,
            stall_iterations=self.stall_iterations, stall_tol=self.stall_tol,
            stop_on_success=self.stop_on_success, open_system=self.open_system,
            n_jobs=self.n_jobs, init_params=init_params)
        self.report_ = optimize_layers(target, self._entangler(), self.n_layers, self.mode, opts)
        self.circuit_ = self.report_.solution
        self.fidelity_ = self.report_.final_fidelity
        self.target_ = target
        return self

    def score(self, target=None, open_system=None):
        if not hasattr(self, "circuit_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("LayeredOptimizer is not fitted yet; call fit first")
        target = self.target_ if target is None else target
        open_system = self.open_system if open_system is None else open_system
        U = assemble_circuit(self.circuit_, self._entangler(), open_system, full_space=False)
        g = np.vdot(target.matrix, U)
        return float(np.abs(g) ** 2 / target.matrix.shape[0] ** 2)


__all__ = [
    "LayeredCircuit", "LayeredOptimizer", "LayeredProblem", "LayerOptions",
    "assemble_circuit", "entangler_signs", "gell_mann_basis", "local_unitary",
    "min_layers", "optimize_layers", "search_layers",
]
