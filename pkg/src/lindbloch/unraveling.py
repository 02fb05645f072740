"""Monte Carlo unraveling of the Hermitian-Lindblad equation into random unitaries.

Each trajectory applies, per step, the exact unitary
``exp(-i H dt - i sum_k gamma_k L_k dB_k)`` with real Gaussian increments
``dB_k ~ N(0, dt)``.  Averaging ``U rho U^dag`` over trajectories reproduces the
double-commutator dissipator.  The matrix-free variant applies the orthogonal
map ``expm(-A(gamma l^H(t)) dB)`` directly to Bloch vectors.

Seed contract: trajectory ``i`` draws from
``Generator(PCG64(SeedSequence(master_seed, spawn_key=(i,))))`` i.e. exactly
the child stream ``SeedSequence(master_seed).spawn(...)[i]`` would produce.
Its increments are drawn in one call, shape ``(steps, channels)``, scaled by
``sqrt(dt)``.  Results therefore do not depend on chunking or worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algebra import GeneratorBasis, SkewExp, adjoint_matrix, bloch_encode_many, hermitian_residual
from .errors import DimensionMismatchError, InvalidStateError
from .oracle import MatrixProblem, heisenberg_rotation
from .propagator import PICTURES, EvolutionProblem, Trajectory, check_grid

NORM_TOL = 1e-10
REDUCE_BLOCK = 256  # fixed reduction tree: blocks of this many trajectories, merged in order


@dataclass(frozen=True)
class NoiseConfig:
    master_seed: int
    trajectories: int
    dt: float
    channels: int
    chunk: int = 4096

    def __post_init__(self):
        if self.trajectories < 1:
            raise ValueError("need at least one trajectory")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")


@dataclass
class EnsembleResult:
    trajectory: Trajectory
    trajectories: int
    samples: np.ndarray | None = None  # (M, n_out, d) per-trajectory Bloch vectors


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(index,))))


def fine_grid(grid, dt: float):
    """Uniform simulation grid of step ``dt`` through every output time.

    Returns ``(times, output_indices)``; every output interval must be an
    integer multiple of ``dt``.
    """
    grid = check_grid(grid)
    counts = []
    for a, b in zip(grid[:-1], grid[1:]):
        n = round((b - a) / dt)
        if n < 1 or abs(n * dt - (b - a)) > 1e-9 * max(1.0, b - a):
            raise ValueError(f"output interval [{a}, {b}] is not a multiple of dt = {dt}")
        counts.append(n)
    idx = np.concatenate([[0], np.cumsum(counts)]).astype(int)
    return dt * np.arange(idx[-1] + 1), idx


def sample_increments(config: NoiseConfig, grid, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Brownian increments for trajectories ``start..stop-1`` on a uniform grid.

    Shape ``(stop - start, len(grid) - 1, channels)``.
    """
    grid = np.asarray(grid, dtype=float)
    steps = len(grid) - 1
    if steps > 0 and np.abs(np.diff(grid) - config.dt).max() > 1e-9 * max(1.0, config.dt):
        raise ValueError("increment grid must be uniform with step config.dt")
    stop = config.trajectories if stop is None else stop
    scale = math.sqrt(config.dt)
    out = np.empty((stop - start, steps, config.channels))
    for row, i in enumerate(range(start, stop)):
        out[row] = scale * trajectory_rng(config.master_seed, i).standard_normal((steps, config.channels))
    return out


def _expm_hermitian(gen) -> np.ndarray:
    """Batched ``exp(-i gen)`` for Hermitian ``gen`` via eigendecomposition."""
    ev, v = np.linalg.eigh(gen)
    return (v * np.exp(-1j * ev)[:, None, :]) @ v.conj().transpose(0, 2, 1)


def _expm_hermitian_2x2(gen) -> np.ndarray:
    """Closed form ``exp(-i(a0 + a.sigma)) = e^{-i a0}(cos|a| - i sin|a| a.sigma/|a|)``."""
    a0 = 0.5 * (gen[:, 0, 0] + gen[:, 1, 1]).real
    az = 0.5 * (gen[:, 0, 0] - gen[:, 1, 1]).real
    ax = gen[:, 0, 1].real
    ay = -gen[:, 0, 1].imag
    norm = np.sqrt(ax * ax + ay * ay + az * az)
    c = np.cos(norm)
    s = np.sinc(norm / np.pi)  # sin|a| / |a|
    ph = np.exp(-1j * a0)
    u = np.empty(gen.shape, dtype=complex)
    u[:, 0, 0] = ph * (c - 1j * s * az)
    u[:, 1, 1] = ph * (c + 1j * s * az)
    u[:, 0, 1] = ph * (-1j * s * (ax - 1j * ay))
    u[:, 1, 0] = ph * (-1j * s * (ax + 1j * ay))
    return u


def _step_unitaries(hamiltonian, lindblads, weights, dt) -> np.ndarray:
    """``exp(-i (H dt + sum_k w_mk L_k))`` for each row ``m`` of ``weights``."""
    gen = hamiltonian * dt + np.einsum("mk,kab->mab", weights, lindblads)
    if gen.shape[1] == 2:
        return _expm_hermitian_2x2(gen)
    return _expm_hermitian(gen)


def trajectory_step(state, hamiltonian, lindblads, increments, dt: float, gammas=None) -> np.ndarray:
    """Advance one pure state (vector) or density matrix by one exact unitary step."""
    state = np.asarray(state, dtype=complex)
    H = np.asarray(hamiltonian, dtype=complex)
    Ls = np.asarray(lindblads, dtype=complex).reshape(-1, *H.shape)
    dB = np.asarray(increments, dtype=float).reshape(-1)
    if len(dB) != len(Ls):
        raise DimensionMismatchError(f"{len(dB)} increments for {len(Ls)} lindblad operators")
    if gammas is not None:
        dB = dB * np.asarray(gammas, dtype=float)
    if state.ndim == 1:
        if abs(np.linalg.norm(state) - 1) > NORM_TOL:
            raise InvalidStateError(f"state vector norm is {np.linalg.norm(state):.12g}")
    elif abs(np.trace(state) - 1) > NORM_TOL or hermitian_residual(state) > NORM_TOL:
        raise InvalidStateError("density matrix must be Hermitian with unit trace")
    u = _step_unitaries(H, Ls, dB[None, :], dt)[0]
    return u @ state if state.ndim == 1 else u @ state @ u.conj().T


class _Accumulator:
    """Deterministic mean/variance (Chan et al. pairwise update) over fixed blocks.

    Chunks are whole multiples of ``REDUCE_BLOCK``, so the result does not
    depend on the chunk size either.
    """

    def __init__(self):
        self.n = 0
        self.mean = None
        self.m2 = None

    def add(self, batch):
        for start in range(0, batch.shape[0], REDUCE_BLOCK):
            self._merge(batch[start:start + REDUCE_BLOCK])

    def _merge(self, batch):
        nb = batch.shape[0]
        mb = batch.mean(axis=0)
        m2b = ((batch - mb) ** 2).sum(axis=0)
        if self.n == 0:
            self.n, self.mean, self.m2 = nb, mb, m2b
            return
        n = self.n + nb
        delta = mb - self.mean
        self.mean = self.mean + delta * nb / n
        self.m2 = self.m2 + m2b + delta ** 2 * self.n * nb / n
        self.n = n

    def stderr(self):
        if self.n < 2:
            return np.full_like(self.mean, np.inf)
        return np.sqrt(self.m2 / (self.n - 1) / self.n)


def _chunks(config: NoiseConfig):
    size = REDUCE_BLOCK * max(1, -(-config.chunk // REDUCE_BLOCK))
    for start in range(0, config.trajectories, size):
        yield start, min(start + size, config.trajectories)


def _finish(acc, grid, samples, meta):
    traj = Trajectory(grid, acc.mean, acc.stderr(), meta)
    return EnsembleResult(traj, acc.n, np.concatenate(samples) if samples else None)


def ensemble_bloch(problem: MatrixProblem, basis: GeneratorBasis, config: NoiseConfig, grid,
                   picture: str = "heisenberg", keep_samples: bool = False) -> EnsembleResult:
    """Mean Bloch trajectory of ``U_t rho0 U_t^dag`` over ``config.trajectories`` samples."""
    if basis.dim != problem.dim:
        raise DimensionMismatchError("basis and problem dimensions differ")
    if picture not in PICTURES:
        raise ValueError(f"picture must be one of {PICTURES}, got {picture!r}")
    if config.channels != len(problem.lindblads):
        raise DimensionMismatchError("noise channel count must match the number of lindblad operators")
    times, out_idx = fine_grid(grid, config.dt)
    grid = times[out_idx]
    H = problem.hamiltonian
    Ls = np.array(problem.lindblads).reshape(-1, problem.dim, problem.dim)
    mids = times[:-1] + 0.5 * config.dt
    gam = np.array([g(mids) for g in problem.gammas]).reshape(len(problem.gammas), len(mids)).T
    to_h = heisenberg_rotation(H, grid) if picture == "heisenberg" else None
    # propagate a square-root factor rho = W W^dag: one matmul per step instead of two
    p, v = np.linalg.eigh(problem.rho0)
    root = v * np.sqrt(np.clip(p, 0.0, None))[None, :]
    acc, kept = _Accumulator(), []
    for start, stop in _chunks(config):
        dB = sample_increments(config, times, start, stop)
        w = np.broadcast_to(root, (stop - start,) + root.shape).copy()
        snaps = np.empty((stop - start, len(out_idx), basis.size))

        def snap(w, j):
            if to_h is not None:
                w = to_h[j] @ w
            snaps[:, j] = bloch_encode_many(w @ w.conj().transpose(0, 2, 1), basis)

        snap(w, 0)
        out_pos = 1
        for step in range(len(times) - 1):
            w = _step_unitaries(H, Ls, dB[:, step, :] * gam[step], config.dt) @ w
            if out_pos < len(out_idx) and step + 1 == out_idx[out_pos]:
                snap(w, out_pos)
                out_pos += 1
        acc.add(snaps)
        if keep_samples:
            kept.append(snaps)
    meta = {"method": "mc", "estimator": "matrix", "dt": config.dt, "seed": config.master_seed,
            "trajectories": config.trajectories, "picture": picture}
    return _finish(acc, grid, kept, meta)


def bloch_space_unraveling(problem: EvolutionProblem, config: NoiseConfig, grid,
                           keep_samples: bool = False) -> EnsembleResult:
    """Matrix-free estimator: random orthogonal rotations of the Heisenberg Bloch vector."""
    if config.channels != len(problem.channels):
        raise DimensionMismatchError("noise channel count must match the number of lindblad channels")
    times, out_idx = fine_grid(grid, config.dt)
    grid = times[out_idx]
    mids = times[:-1] + 0.5 * config.dt
    lh = problem.heisenberg_lindblads(mids)  # (steps, K, d), gamma folded in
    rotations = [[SkewExp(adjoint_matrix(lh[s, k], problem.f)) for k in range(lh.shape[1])]
                 for s in range(len(mids))]
    acc, kept = _Accumulator(), []
    for start, stop in _chunks(config):
        dB = sample_increments(config, times, start, stop)
        r = np.broadcast_to(problem.r0, (stop - start, problem.dim)).copy()
        snaps = np.empty((stop - start, len(out_idx), problem.dim))
        snaps[:, 0] = r
        out_pos = 1
        for step, rots in enumerate(rotations):
            for k, rot in enumerate(rots):
                r = rot.apply(-dB[:, step, k], r)
            if out_pos < len(out_idx) and step + 1 == out_idx[out_pos]:
                snaps[:, out_pos] = r
                out_pos += 1
        snaps = np.stack([problem.to_picture(grid, s) for s in snaps]) if problem.picture != "heisenberg" else snaps
        acc.add(snaps)
        if keep_samples:
            kept.append(snaps)
    meta = {"method": "mc", "estimator": "bloch", "dt": config.dt, "seed": config.master_seed,
            "trajectories": config.trajectories, "picture": problem.picture}
    return _finish(acc, grid, kept, meta)
