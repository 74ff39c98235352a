"""Piecewise-constant phase control (GRAPE) of the dressed two-atom system.

The control is the rf phase ``phi(t) = pi * c(t)``; the waveform stores
``c`` (phases in units of pi). Gradients are exact derivatives of the
step exponentials, so there is no first-order small-``dt`` bias; see
:class:`GrapeProblem` for the two ways they are computed.
"""
import logging
import os
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.optimize
from sklearn.base import BaseEstimator

from ._validation import DomainError, check_random_state
from .linalg import divided_differences, symmetric_subspace_isometry
from .platform import PlatformParams, as_model
from .targets import GateTarget, isometry_fidelity

logger = logging.getLogger(__name__)

#: eigenvector condition number above which a step falls back to expm_frechet
COND_LIMIT = 1e8


@dataclass
class ControlWaveform:
    """Piecewise-constant rf phase sequence.

    ``phases`` are in units of pi; ``dt`` is in units of ``1 / omega_rf``.
    """

    phases: np.ndarray
    dt: float

    def __post_init__(self):
        self.phases = np.atleast_1d(np.asarray(self.phases, dtype=float))
        if self.phases.ndim != 1 or self.phases.size < 1:
            raise DomainError("a waveform needs at least one step")
        if not self.dt > 0:
            raise DomainError(f"step duration must be positive, got {self.dt}")

    @classmethod
    def from_total_time(cls, phases, total_time):
        phases = np.atleast_1d(np.asarray(phases, dtype=float))
        return cls(phases, total_time / phases.size)

    @property
    def n_steps(self):
        return self.phases.size

    @property
    def total_time(self):
        return self.n_steps * self.dt


@dataclass
class OptimizationReport:
    """Outcome of a multi-start optimization.

    ``solution`` is the engine's result (a :class:`ControlWaveform` or a
    layered circuit); ``runs`` summarizes every seed that was tried.
    """

    solution: object
    fidelity_history: list
    final_fidelity: float
    seed: int
    iterations: int
    wall_time: float
    converged: bool
    runs: list = field(default_factory=list)

    @property
    def best_waveform(self):
        return self.solution

    @property
    def infidelity(self):
        return 1.0 - self.final_fidelity


def n_min(K, D):
    """Parameters needed to fix a ``K``-column isometry in ``D`` dimensions, ``2KD - K^2 - 1``."""
    K, D = int(K), int(D)
    if K < 1 or D < 1:
        raise DomainError(f"K and D must be positive, got K={K}, D={D}")
    if K > D:
        raise DomainError(f"isometry rank K={K} exceeds dimension D={D}")
    return 2 * K * D - K * K - 1


class GrapeProblem:
    """Fidelity of a phase waveform against one target, with exact gradients.

    Two exact gradient routes are available. ``"covariant"`` uses that the
    rf drive at phase ``phi`` is the drive at zero rotated by
    ``exp(-i phi M)``, with ``M`` the total magnetic quantum number, and that
    the dressed entangling term commutes with ``M``; then every step shares
    one exponential and the phase derivative is a commutator with ``M``.
    ``"eig"`` diagonalizes each step generator and differentiates the
    exponential through its divided differences (``expm_frechet`` when the
    non-normal open-system eigenbasis is ill conditioned).

    Parameters
    ----------
    model : DressedModel or PlatformParams
    target : GateTarget
        Must be embedded in ``model.d_phys`` levels.
    open_system : bool
        Use the non-Hermitian entangling term ``E - i gamma / 2``.
    symmetric : bool
        Work in the exchange-symmetric subspace (requires a symmetric target).
    method : {"auto", "covariant", "eig"}
    """

    def __init__(self, model, target, open_system=False, symmetric=True, method="auto"):
        model = as_model(model)
        if target.d != model.d_phys:
            raise DomainError(
                f"target is embedded in d={target.d} levels but the platform has {model.d_phys}")
        if method not in ("auto", "covariant", "eig"):
            raise DomainError(f"unknown gradient method {method!r}")
        self.model = model
        self.target = target
        # without decay the open-system objective is the closed one
        self.open_system = bool(open_system) and bool(np.any(model.decay > 0))
        self.symmetric = bool(symmetric)
        h0 = model.entangling_diagonal(self.open_system)
        charge = model.magnetic_charge()
        if self.symmetric:
            S = symmetric_subspace_isometry(model.d_phys)
            self.h0 = np.einsum("pa,p,pa->a", S, h0, S)
            self.charge = np.einsum("pa,p,pa->a", S, charge, S)
            self.gen_x = S.T @ model.rf_x @ S
            self.gen_y = S.T @ model.rf_y @ S
            self.v_tar, self.inputs = target.symmetric_reduction()
        else:
            self.h0 = h0
            self.charge = charge
            self.gen_x = np.asarray(model.rf_x)
            self.gen_y = np.asarray(model.rf_y)
            self.v_tar, self.inputs = target.embedded, target.inputs
        self.v_tar_h = self.v_tar.conj().T
        covariant = self._is_covariant()
        if method == "covariant" and not covariant:
            raise DomainError("drive is not rotation covariant; use method='eig'")
        self.method = "covariant" if method == "auto" and covariant else (
            "eig" if method == "auto" else method)
        self._u0_cache = (None, None)

    def _is_covariant(self):
        M = self.charge
        commutes = np.allclose(M[:, None] * self.gen_x - self.gen_x * M[None, :],
                               1j * self.gen_y, rtol=0, atol=1e-10)
        return bool(commutes)

    @property
    def dim(self):
        return self.h0.size

    @property
    def rank(self):
        return self.v_tar.shape[1]

    def min_steps(self):
        return n_min(self.rank, self.dim)

    def generators(self, phases):
        phi = np.pi * np.asarray(phases, dtype=float)
        c, s = np.cos(phi), np.sin(phi)
        H = c[:, None, None] * self.gen_x + s[:, None, None] * self.gen_y
        idx = np.arange(self.dim)
        H[:, idx, idx] += self.h0
        return H, c, s

    # -- covariant route -------------------------------------------------
    def _base_step(self, dt):
        cached_dt, U0 = self._u0_cache
        if cached_dt != dt:
            H0 = self.gen_x + np.diag(self.h0)
            if self.open_system:
                U0 = scipy.linalg.expm(-1j * dt * H0)
            else:
                lam, W = np.linalg.eigh(H0)
                U0 = (W * np.exp(-1j * dt * lam)) @ W.conj().T
            self._u0_cache = (dt, U0)
        return U0

    def _covariant_steps(self, phases, dt):
        rot = np.exp(-1j * np.pi * np.outer(phases, self.charge))
        U0 = self._base_step(dt)
        return rot[:, :, None] * U0[None] * rot.conj()[:, None, :]

    # -- eigendecomposition route ------------------------------------------
    def _decompose(self, H):
        if not self.open_system:
            lam, W = np.linalg.eigh(H)
            return lam, W, np.conj(np.swapaxes(W, -1, -2)), np.zeros(len(H), bool)
        lam, W = np.linalg.eig(H)
        Winv = np.linalg.inv(W)
        cond = np.linalg.norm(W, 2, axis=(1, 2)) * np.linalg.norm(Winv, 2, axis=(1, 2))
        return lam, W, Winv, ~(cond < COND_LIMIT)

    def step_propagators(self, phases, dt):
        phases = np.atleast_1d(np.asarray(phases, dtype=float))
        if self.method == "covariant":
            return self._covariant_steps(phases, dt)
        H, _, _ = self.generators(phases)
        lam, W, Winv, bad = self._decompose(H)
        U = (W * np.exp(-1j * dt * lam)[:, None, :]) @ Winv
        for j in np.flatnonzero(bad):
            U[j] = scipy.linalg.expm(-1j * dt * H[j])
        return U

    def propagator(self, phases, dt):
        """Ordered product of the step propagators (first step rightmost)."""
        U = np.eye(self.dim, dtype=complex)
        for step in self.step_propagators(phases, dt):
            U = step @ U
        return U

    def overlap(self, phases, dt):
        X = self.inputs.astype(complex)
        for step in self.step_propagators(phases, dt):
            X = step @ X
        return np.vdot(self.v_tar, X)

    def fidelity(self, phases, dt):
        return float(np.abs(self.overlap(phases, dt)) ** 2 / self.rank ** 2)

    def _sweeps(self, U):
        n = len(U)
        fwd = np.empty((n + 1, self.dim, self.rank), dtype=complex)
        fwd[0] = self.inputs
        for j in range(n):
            fwd[j + 1] = U[j] @ fwd[j]
        bwd = np.empty((n + 1, self.rank, self.dim), dtype=complex)
        bwd[n] = self.v_tar_h
        for j in range(n - 1, -1, -1):
            bwd[j] = bwd[j + 1] @ U[j]
        return fwd, bwd

    def fidelity_and_gradient(self, phases, dt):
        """Fidelity and its gradient with respect to the phases (units of pi)."""
        phases = np.atleast_1d(np.asarray(phases, dtype=float))
        if self.method == "covariant":
            U = self._covariant_steps(phases, dt)
            fwd, bwd = self._sweeps(U)
            g = np.trace(bwd[-1] @ fwd[-1])
            # d U_j / d phi_j = -i [M, U_j]
            tr = np.einsum("jka,a,jak->j", bwd, self.charge, fwd)
            dg = -1j * np.pi * (tr[1:] - tr[:-1])
        else:
            g, dg = self._eig_overlap_gradient(phases, dt)
        K2 = self.rank ** 2
        F = float(np.abs(g) ** 2 / K2)
        grad = 2.0 * np.real(np.conj(g) * dg) / K2
        return F, grad

    def _eig_overlap_gradient(self, phases, dt):
        H, c, s = self.generators(phases)
        lam, W, Winv, bad = self._decompose(H)
        U = (W * np.exp(-1j * dt * lam)[:, None, :]) @ Winv
        for j in np.flatnonzero(bad):
            U[j] = scipy.linalg.expm(-1j * dt * H[j])
        fwd, bwd = self._sweeps(U)
        g = np.trace(bwd[-1] @ fwd[-1])
        # dH/dc for c in units of pi
        dH = np.pi * (-s[:, None, None] * self.gen_x + c[:, None, None] * self.gen_y)
        Kp = Winv @ dH @ W
        Phi = divided_differences(lam, dt)
        M = (Winv @ fwd[:-1]) @ (bwd[1:] @ W)
        dg = np.einsum("nab,nba->n", Phi * Kp, M)
        for j in np.flatnonzero(bad):
            _, dU = scipy.linalg.expm_frechet(-1j * dt * H[j], -1j * dt * dH[j])
            dg[j] = np.trace(bwd[j + 1] @ dU @ fwd[j])
        return g, dg


def propagate(waveform, model, open_system=False, symmetric=False):
    """Propagator of a waveform on the full (or symmetric) two-atom space."""
    model = as_model(model)
    H0 = model.entangling_diagonal(open_system)
    X, Y = model.rf_x, model.rf_y
    if symmetric:
        S = symmetric_subspace_isometry(model.d_phys)
        H0 = np.einsum("pa,p,pa->a", S, H0, S)
        X, Y = S.T @ X @ S, S.T @ Y @ S
    dim = H0.size
    U = np.eye(dim, dtype=complex)
    for c in waveform.phases:
        phi = np.pi * c
        H = np.cos(phi) * X + np.sin(phi) * Y + np.diag(H0)
        if open_system:
            step = scipy.linalg.expm(-1j * waveform.dt * H)
        else:
            lam, V = np.linalg.eigh(H)
            step = (V * np.exp(-1j * waveform.dt * lam)) @ V.conj().T
        U = step @ U
    return U


def waveform_fidelity(waveform, model, target, open_system=False, symmetric=True):
    problem = GrapeProblem(model, target, open_system, symmetric)
    return problem.fidelity(waveform.phases, waveform.dt)


def grape_gradient(waveform, model, target, open_system=False, symmetric=True):
    """Exact gradient of the isometry fidelity with respect to each phase."""
    problem = GrapeProblem(model, target, open_system, symmetric)
    return problem.fidelity_and_gradient(waveform.phases, waveform.dt)[1]


@dataclass
class GrapeOptions:
    """Knobs of :func:`optimize`; defaults follow the reference operating point."""

    method: str = "lbfgs"
    seeds: tuple = (0, 1, 2, 3, 4)
    target_infidelity: float = 1e-3
    max_iter: int = 5000
    stall_iterations: int = 20
    stall_tol: float = 1e-10
    stop_on_success: bool = True
    open_system: bool = False
    symmetric: bool = True
    init_phases: object = None
    n_jobs: int = 1
    lbfgs_memory: int = 20


class _Stop(Exception):
    pass


class _Tracker:
    """Records the fidelity per iteration and decides when to stop."""

    def __init__(self, opts):
        self.opts = opts
        self.history = []
        self.best_x = None
        self.best_f = -np.inf

    def update(self, x, F):
        self.history.append(float(F))
        if F > self.best_f:
            self.best_f, self.best_x = float(F), np.array(x, copy=True)
        if 1.0 - F <= self.opts.target_infidelity:
            raise _Stop
        k = self.opts.stall_iterations
        if len(self.history) > k:
            old = self.history[-k - 1]
            if abs(self.history[-1] - old) <= self.opts.stall_tol * max(abs(old), 1e-300):
                raise _Stop
        if len(self.history) >= self.opts.max_iter:
            raise _Stop


def _run_lbfgs(objective, x0, opts, tracker, bounds=None):
    def fun(x):
        F, grad = objective(x)
        return 1.0 - F, -grad

    def callback(intermediate_result):
        try:
            tracker.update(intermediate_result.x, 1.0 - intermediate_result.fun)
        except _Stop:
            raise StopIteration

    F0, _ = objective(x0)
    tracker.history.append(float(F0))
    tracker.best_x, tracker.best_f = np.array(x0, copy=True), float(F0)
    if 1.0 - F0 <= opts.target_infidelity:
        return
    scipy.optimize.minimize(
        fun, x0, jac=True, method="L-BFGS-B", callback=callback, bounds=bounds,
        options={"maxiter": opts.max_iter, "maxcor": opts.lbfgs_memory,
                 "ftol": 0.0, "gtol": 1e-12, "maxfun": 10 * opts.max_iter},
    )


def _run_ascent(objective, x0, opts, tracker, step=1.0, shrink=0.5, grow=1.5, armijo=1e-4):
    x = np.array(x0, dtype=float)
    F, grad = objective(x)
    tracker.history.append(float(F))
    tracker.best_x, tracker.best_f = x.copy(), float(F)
    if 1.0 - F <= opts.target_infidelity:
        return
    try:
        while True:
            g2 = float(grad @ grad)
            if g2 == 0.0:
                return
            while True:
                trial = x + step * grad
                F_new, grad_new = objective(trial)
                if F_new >= F + armijo * step * g2 or step < 1e-14:
                    break
                step *= shrink
            if F_new < F:
                return
            x, F, grad = trial, F_new, grad_new
            step *= grow
            tracker.update(x, F)
    except _Stop:
        return


def _single_start(problem, n_steps, dt, seed, opts):
    if opts.init_phases is not None:
        x0 = np.asarray(opts.init_phases, dtype=float).copy()
        if x0.size != n_steps:
            raise DomainError(f"init_phases has {x0.size} entries, expected {n_steps}")
    else:
        x0 = check_random_state(seed).uniform(-1.0, 1.0, n_steps)
    tracker = _Tracker(opts)

    def objective(x):
        return problem.fidelity_and_gradient(x, dt)

    start = time.perf_counter()
    if opts.method == "lbfgs":
        _run_lbfgs(objective, x0, opts, tracker)
    elif opts.method == "ascent":
        _run_ascent(objective, x0, opts, tracker)
    else:
        raise DomainError(f"unknown method {opts.method!r}; use 'lbfgs' or 'ascent'")
    elapsed = time.perf_counter() - start
    x_best = tracker.best_x
    F_best = problem.fidelity(x_best, dt)
    logger.info("seed %s: F=%.8f after %d iterations", seed, F_best, len(tracker.history) - 1)
    return {
        "seed": seed,
        "x": x_best,
        "fidelity": F_best,
        "history": tracker.history,
        "iterations": len(tracker.history) - 1,
        "wall_time": elapsed,
    }


def _pick_best(results, target_infidelity):
    best = results[0]
    for res in results[1:]:
        if res["fidelity"] > best["fidelity"]:
            best = res
    converged = 1.0 - best["fidelity"] <= target_infidelity
    runs = [{"seed": r["seed"], "final_fidelity": r["fidelity"], "iterations": r["iterations"]}
            for r in results]
    return best, converged, runs


def run_multistart(run_one, seeds, opts):
    """Run ``run_one(seed)`` per seed, optionally in parallel, stopping on success."""
    seeds = list(seeds)
    if not seeds:
        raise DomainError("at least one seed is required")
    n_jobs = int(opts.n_jobs or 1)
    results = []
    if n_jobs > 1 and len(seeds) > 1:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=n_jobs)(delayed(run_one)(s) for s in seeds)
        if opts.stop_on_success:
            # report exactly what a sequential run would have seen
            for i, res in enumerate(results):
                if 1.0 - res["fidelity"] <= opts.target_infidelity:
                    results = results[:i + 1]
                    break
    else:
        for s in seeds:
            res = run_one(s)
            results.append(res)
            if opts.stop_on_success and 1.0 - res["fidelity"] <= opts.target_infidelity:
                break
    return results


def optimize(target, model, n_steps, total_time, opts=None, **overrides):
    """Multi-start GRAPE for one target at fixed step count and duration.

    ``total_time`` is in units of ``1 / omega_rf``. Returns an
    :class:`OptimizationReport` for the best seed.
    """
    opts = replace(GrapeOptions() if opts is None else opts, **overrides)
    if n_steps < 1:
        raise DomainError(f"n_steps must be positive, got {n_steps}")
    if not total_time > 0:
        raise DomainError(f"total_time must be positive, got {total_time}")
    problem = GrapeProblem(model, target, opts.open_system, opts.symmetric)
    needed = problem.min_steps()
    if n_steps < needed:
        warnings.warn(f"{n_steps} steps is below the {needed} parameters needed for a "
                      f"rank-{problem.rank} isometry in {problem.dim} dimensions", stacklevel=2)
    dt = total_time / n_steps

    start = time.perf_counter()
    results = run_multistart(lambda s: _single_start(problem, n_steps, dt, s, opts),
                             opts.seeds, opts)
    best, converged, runs = _pick_best(results, opts.target_infidelity)
    return OptimizationReport(
        solution=ControlWaveform(best["x"], dt),
        fidelity_history=best["history"],
        final_fidelity=best["fidelity"],
        seed=best["seed"],
        iterations=best["iterations"],
        wall_time=time.perf_counter() - start,
        converged=converged,
        runs=runs,
    )


def default_workers():
    """Worker count from ``QUDITGATES_WORKERS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("QUDITGATES_WORKERS", "1")))
    except ValueError:
        return 1


class GrapeOptimizer(BaseEstimator):
    """Estimator front end for :func:`optimize`.

    ``fit(target)`` searches for a phase waveform realizing ``target`` on
    the platform; afterwards ``waveform_``, ``report_`` and ``fidelity_``
    are available, and :meth:`score` evaluates the fitted waveform.

    Examples
    --------
    >>> from quditgates import GrapeOptimizer, PlatformParams, cphase
    >>> params = PlatformParams.toy(4)
    >>> est = GrapeOptimizer(params, n_steps=60, total_time=40.0, seeds=(0,))
    >>> est = est.fit(cphase(2, d=4))            # doctest: +SKIP
    """

    def __init__(self, platform=None, n_steps=100, total_time=10.0, open_system=False,
                 symmetric=True, method="lbfgs", seeds=(0, 1, 2, 3, 4),
                 target_infidelity=1e-3, max_iter=5000, stall_iterations=20,
                 stall_tol=1e-10, stop_on_success=True, n_jobs=1):
        self.platform = platform
        self.n_steps = n_steps
        self.total_time = total_time
        self.open_system = open_system
        self.symmetric = symmetric
        self.method = method
        self.seeds = seeds
        self.target_infidelity = target_infidelity
        self.max_iter = max_iter
        self.stall_iterations = stall_iterations
        self.stall_tol = stall_tol
        self.stop_on_success = stop_on_success
        self.n_jobs = n_jobs

    def _options(self, init_phases=None):
        return GrapeOptions(
            method=self.method, seeds=tuple(self.seeds),
            target_infidelity=self.target_infidelity, max_iter=self.max_iter,
            stall_iterations=self.stall_iterations, stall_tol=self.stall_tol,
            stop_on_success=self.stop_on_success, open_system=self.open_system,
            symmetric=self.symmetric, init_phases=init_phases, n_jobs=self.n_jobs)

    def _model(self):
        return as_model(self.platform if self.platform is not None else PlatformParams())

    def fit(self, target, init_phases=None):
        if not isinstance(target, GateTarget):
            raise DomainError("fit expects a GateTarget")
        model = self._model()
        if target.d != model.d_phys:
            target = target.embed(model.d_phys, target.level_map)
        self.report_ = optimize(target, model, self.n_steps, self.total_time,
                                self._options(init_phases))
        self.waveform_ = self.report_.solution
        self.fidelity_ = self.report_.final_fidelity
        self.target_ = target
        return self

    def _check_fitted(self):
        if not hasattr(self, "waveform_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("GrapeOptimizer is not fitted yet; call fit first")

    def score(self, target=None, open_system=None):
        """Fidelity of the fitted waveform on ``target`` (default: the fitted one)."""
        self._check_fitted()
        target = self.target_ if target is None else target
        open_system = self.open_system if open_system is None else open_system
        return waveform_fidelity(self.waveform_, self._model(), target,
                                 open_system, self.symmetric)

    def propagator(self, symmetric=None):
        self._check_fitted()
        symmetric = self.symmetric if symmetric is None else symmetric
        return propagate(self.waveform_, self._model(), self.open_system, symmetric)


__all__ = [
    "ControlWaveform", "OptimizationReport", "GrapeProblem", "GrapeOptions",
    "GrapeOptimizer", "n_min", "optimize", "propagate", "grape_gradient",
    "waveform_fidelity", "isometry_fidelity",
]
