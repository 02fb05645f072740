"""Direct RK4 integration of the density-matrix master equation.

This is the independent reference for every Bloch-space path: it never
touches structure constants, only matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import GeneratorBasis, bloch_encode_many, hermitian_residual
from .errors import (
    DimensionMismatchError,
    IntegrationDivergedError,
    InvalidStateError,
    NotHermitianError,
)
from .propagator import GammaProfile, check_grid, default_step

TRACE_ABORT = 1e-8
POSITIVITY_ABORT = -1e-6


def _comm(a, b):
    return a @ b - b @ a


def _spread(m) -> float:
    """Largest Bohr frequency of ``[m, .]`` (2 * spectral norm for non-Hermitian m)."""
    if hermitian_residual(m) <= 1e-12:
        ev = np.linalg.eigvalsh(m)
        return float(ev[-1] - ev[0])
    return 2.0 * float(np.linalg.norm(m, 2))


@dataclass(frozen=True, eq=False)
class MatrixProblem:
    hamiltonian: np.ndarray
    lindblads: tuple = ()
    gammas: tuple = ()
    rho0: np.ndarray | None = None

    def __post_init__(self):
        H = np.asarray(self.hamiltonian, dtype=complex)
        n = H.shape[0]
        if H.shape != (n, n):
            raise DimensionMismatchError(f"Hamiltonian must be square, got {H.shape}")
        res = hermitian_residual(H)
        if res > 1e-10:
            raise NotHermitianError(f"Hamiltonian is not Hermitian (residual {res:.3e})", res)
        Ls = tuple(np.asarray(L, dtype=complex) for L in self.lindblads)
        for k, L in enumerate(Ls):
            if L.shape != (n, n):
                raise DimensionMismatchError(f"lindblad {k} has shape {L.shape}, expected {(n, n)}")
        gammas = tuple(self.gammas) or tuple(GammaProfile.constant() for _ in Ls)
        if len(gammas) != len(Ls):
            raise DimensionMismatchError("one gamma profile per lindblad operator is required")
        rho0 = np.asarray(self.rho0, dtype=complex)
        if rho0.shape != (n, n):
            raise DimensionMismatchError(f"rho0 has shape {rho0.shape}, expected {(n, n)}")
        if abs(np.trace(rho0) - 1) > 1e-10:
            raise InvalidStateError(f"rho0 has trace {np.trace(rho0).real:.12g}")
        if hermitian_residual(rho0) > 1e-10:
            raise InvalidStateError("rho0 is not Hermitian")
        if np.linalg.eigvalsh(rho0)[0] < -1e-10:
            raise InvalidStateError("rho0 is not positive semidefinite")
        object.__setattr__(self, "hamiltonian", H)
        object.__setattr__(self, "lindblads", Ls)
        object.__setattr__(self, "gammas", gammas)
        object.__setattr__(self, "rho0", rho0)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def hermitian(self) -> bool:
        return all(hermitian_residual(L) <= 1e-10 for L in self.lindblads)

    def step_size(self, t_final: float) -> float:
        diss = sum(0.5 * g.sup(0.0, t_final) ** 2 * _spread(L) ** 2
                   for L, g in zip(self.lindblads, self.gammas))
        return default_step(_spread(self.hamiltonian), diss, t_final)


def rhs_general(rho, problem: MatrixProblem, t: float) -> np.ndarray:
    """``-i[H, rho] + 1/2 sum_k g_k(t)^2 ([L rho, L^dag] + [L, rho L^dag])``."""
    out = -1j * _comm(problem.hamiltonian, rho)
    for L, g in zip(problem.lindblads, problem.gammas):
        Ld = L.conj().T
        out = out + 0.5 * g(t) ** 2 * (_comm(L @ rho, Ld) + _comm(L, rho @ Ld))
    return out


def rhs_hermitian(rho, problem: MatrixProblem, t: float) -> np.ndarray:
    """``-i[H, rho] - 1/2 sum_k g_k(t)^2 [L, [L, rho]]`` for Hermitian ``L_k``."""
    if not problem.hermitian:
        bad = max(hermitian_residual(L) for L in problem.lindblads)
        raise NotHermitianError(f"double-commutator form needs Hermitian lindblads (residual {bad:.3e})", bad)
    out = -1j * _comm(problem.hamiltonian, rho)
    for L, g in zip(problem.lindblads, problem.gammas):
        out = out - 0.5 * g(t) ** 2 * _comm(L, _comm(L, rho))
    return out


@dataclass
class MatrixTrajectory:
    times: np.ndarray
    rho: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def bloch(self, basis: GeneratorBasis) -> np.ndarray:
        return bloch_encode_many(self.rho, basis)

    @property
    def purity(self) -> np.ndarray:
        return np.einsum("nab,nba->n", self.rho, self.rho).real


def _monitor(rho):
    return (abs(np.trace(rho) - 1.0), hermitian_residual(rho),
            float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]))


def integrate(problem: MatrixProblem, grid, dt: float | None = None,
              rhs: str = "auto") -> MatrixTrajectory:
    """RK4 from ``t = 0`` through ``grid``, checking physicality at every grid point.

    ``rhs`` is ``"hermitian"``, ``"general"`` or ``"auto"`` (double-commutator
    form whenever every lindblad is Hermitian).
    """
    grid = check_grid(grid)
    if rhs == "auto":
        rhs = "hermitian" if problem.hermitian else "general"
    f = {"hermitian": rhs_hermitian, "general": rhs_general}[rhs]
    if dt is None:
        dt = problem.step_size(grid[-1])
    rho = problem.rho0.copy()
    out = np.empty((len(grid),) + rho.shape, dtype=complex)
    out[0] = rho
    worst = dict(zip(("max_trace_error", "max_hermiticity_residual", "min_eigenvalue"), _monitor(rho)))
    for i, (a, b) in enumerate(zip(grid[:-1], grid[1:])):
        n = max(1, math.ceil((b - a) / dt - 1e-9))
        h = (b - a) / n
        for s in range(n):
            t = a + s * h
            k1 = f(rho, problem, t)
            k2 = f(rho + 0.5 * h * k1, problem, t + 0.5 * h)
            k3 = f(rho + 0.5 * h * k2, problem, t + 0.5 * h)
            k4 = f(rho + h * k3, problem, t + h)
            rho = rho + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        tr, herm, mineig = _monitor(rho)
        worst["max_trace_error"] = max(worst["max_trace_error"], tr)
        worst["max_hermiticity_residual"] = max(worst["max_hermiticity_residual"], herm)
        worst["min_eigenvalue"] = min(worst["min_eigenvalue"], mineig)
        if tr > TRACE_ABORT or mineig < POSITIVITY_ABORT or not np.all(np.isfinite(rho)):
            raise IntegrationDivergedError(
                f"integration diverged at t = {b:.6g}: |Tr rho - 1| = {tr:.3e}, "
                f"min eigenvalue = {mineig:.3e}", time=float(b), diagnostics=dict(worst))
        out[i + 1] = rho
    purity = np.einsum("nab,nba->n", out, out).real
    diagnostics = dict(worst, dt=dt, rhs=rhs,
                       max_purity_increase=float(np.max(np.diff(purity), initial=0.0)))
    return MatrixTrajectory(grid, out, diagnostics)


def heisenberg_rotation(hamiltonian, times) -> np.ndarray:
    """``exp(i H t)`` for every ``t`` in ``times``."""
    ev, v = np.linalg.eigh(np.asarray(hamiltonian, dtype=complex))
    phase = np.exp(1j * np.multiply.outer(np.asarray(times, dtype=float), ev))
    return np.einsum("ij,...j,kj->...ik", v, phase, v.conj())


def to_heisenberg(traj: MatrixTrajectory, hamiltonian) -> MatrixTrajectory:
    """``rho_H(t) = exp(iHt) rho_S(t) exp(-iHt)`` along a trajectory."""
    u = heisenberg_rotation(hamiltonian, traj.times)
    rho_h = u @ traj.rho @ u.conj().transpose(0, 2, 1)
    return MatrixTrajectory(traj.times, rho_h, dict(traj.diagnostics, picture="heisenberg"))


def unitary_reference(hamiltonian, rho0, times) -> np.ndarray:
    """Exact ``exp(-iHt) rho0 exp(iHt)``, used to check the L = 0 limit."""
    u = heisenberg_rotation(hamiltonian, times).conj().transpose(0, 2, 1)
    return u @ np.asarray(rho0) @ u.conj().transpose(0, 2, 1)


def random_hermitian(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a + a.conj().T) / 2


def random_density_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    """Full-rank random state from a Ginibre matrix."""
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = g @ g.conj().T
    return rho / np.trace(rho)

