"""Bloch-vector propagation for Lindblad equations with Hermitian jump operators.

Everything here works on the Heisenberg-picture Bloch vector r^H(t), which obeys
the linear ODE

    dr/dt = G(t) r,   G(t) = 1/2 sum_k gamma_k(t)**2 * A(l_k^H(t)) @ A(l_k^H(t)),

where ``A(v)`` is the adjoint matrix of ``v`` (``A(v) @ b == v . b``) and
``l^H(t) = expm(t A(h)) l`` is the Heisenberg transform.  The solution is the
time-ordered exponential of the boxdot product applied to r(0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg
from numpy.polynomial import legendre
from scipy.special import gammainc

from .algebra import (
    GeneratorBasis,
    SkewExp,
    StructureTensor,
    adjoint_matrix,
    adjoint_stack,
    bloch_encode,
    decompose_hermitian,
    odot,
    structure_constants,
)
from .errors import DimensionMismatchError, PreconditionError

PICTURES = ("heisenberg", "schroedinger")
STEP_FACTOR = 0.01
RICHARDSON_TOL = 1e-6


@dataclass(frozen=True)
class GammaProfile:
    """Time-dependent channel strength gamma(t); the dissipator carries gamma(t)**2."""

    kind: str
    params: tuple

    @classmethod
    def constant(cls, value: float = 1.0) -> "GammaProfile":
        if value < 0:
            raise ValueError("gamma must be non-negative")
        return cls("constant", (float(value),))

    @classmethod
    def exponential(cls, gamma0: float, tau: float) -> "GammaProfile":
        """``gamma0 * exp(-t / tau)``."""
        if gamma0 < 0 or tau <= 0:
            raise ValueError("exponential profile needs gamma0 >= 0 and tau > 0")
        return cls("exponential", (float(gamma0), float(tau)))

    @classmethod
    def tabulated(cls, times, values) -> "GammaProfile":
        times = tuple(float(x) for x in times)
        values = tuple(float(x) for x in values)
        if len(times) != len(values) or len(times) < 1:
            raise ValueError("tabulated profile needs matching, non-empty time and value lists")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("tabulated profile times must be strictly increasing")
        if any(v < 0 for v in values):
            raise ValueError("tabulated gamma values must be non-negative")
        return cls("tabulated", (times, values))

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full(t.shape, self.params[0]) if t.ndim else self.params[0]
        if self.kind == "exponential":
            g0, tau = self.params
            return g0 * np.exp(-t / tau)
        if self.kind == "tabulated":
            return np.interp(t, *self.params)
        raise ValueError(f"unknown gamma profile kind {self.kind!r}")

    def sup(self, t0: float, t1: float) -> float:
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "exponential":
            return float(self(t0))
        times, values = self.params
        inside = [v for x, v in zip(times, values) if t0 <= x <= t1]
        return float(max([self(t0), self(t1), *inside]))


class Channel(NamedTuple):
    l: np.ndarray
    gamma: GammaProfile


@dataclass(frozen=True, eq=False)
class EvolutionProblem:
    """Bloch-space description of a Hermitian-Lindblad problem."""

    f: StructureTensor
    h: np.ndarray
    channels: tuple[Channel, ...]
    r0: np.ndarray
    picture: str = "heisenberg"
    basis: GeneratorBasis | None = None

    def __post_init__(self):
        d = self.f.dim
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float))
        object.__setattr__(self, "r0", np.asarray(self.r0, dtype=float))
        chans = tuple(Channel(np.asarray(c[0], dtype=float),
                              c[1] if len(c) > 1 and c[1] is not None else GammaProfile.constant())
                      for c in self.channels)
        object.__setattr__(self, "channels", chans)
        if self.h.shape != (d,) or self.r0.shape != (d,):
            raise DimensionMismatchError(
                f"h {self.h.shape} and r0 {self.r0.shape} must both have shape ({d},)")
        for k, c in enumerate(chans):
            if c.l.shape != (d,):
                raise DimensionMismatchError(f"lindblad channel {k} has shape {c.l.shape}, expected ({d},)")
        if self.picture not in PICTURES:
            raise ValueError(f"picture must be one of {PICTURES}, got {self.picture!r}")
        if not chans and not np.any(self.h):
            raise PreconditionError("problem has neither a Hamiltonian nor a dissipator")
        if self.basis is not None and self.basis.size != d:
            raise DimensionMismatchError("basis and structure tensor dimensions differ")

    @classmethod
    def from_operators(cls, basis: GeneratorBasis, hamiltonian, lindblads: Sequence = (),
                       gammas: Sequence[GammaProfile] | None = None, *, rho0=None, r0=None,
                       picture: str = "heisenberg", f: StructureTensor | None = None):
        """Decompose matrix operators over ``basis`` (identity parts drop out)."""
        if (rho0 is None) == (r0 is None):
            raise ValueError("give exactly one of rho0 and r0")
        f = f if f is not None else structure_constants(basis)
        h = decompose_hermitian(hamiltonian, basis).vector
        gammas = list(gammas) if gammas is not None else [GammaProfile.constant()] * len(lindblads)
        chans = tuple(Channel(decompose_hermitian(L, basis).vector, g)
                      for L, g in zip(lindblads, gammas, strict=True))
        if r0 is None:
            r0 = bloch_encode(rho0, basis)
        return cls(f, h, chans, r0, picture, basis)

    def replace(self, **changes) -> "EvolutionProblem":
        kw = dict(f=self.f, h=self.h, channels=self.channels, r0=self.r0,
                  picture=self.picture, basis=self.basis)
        kw.update(changes)
        return EvolutionProblem(**kw)

    @property
    def dim(self) -> int:
        return self.f.dim

    @cached_property
    def rotation(self) -> SkewExp:
        """``t -> expm(t A(h))``; maps Schroedinger-picture vectors to Heisenberg picture."""
        return SkewExp(adjoint_matrix(self.h, self.f))

    def heisenberg_lindblads(self, t) -> np.ndarray:
        """``gamma_k(t) l_k^H(t)`` with shape ``t.shape + (K, d)``."""
        t = np.asarray(t, dtype=float)
        if not self.channels:
            return np.zeros(t.shape + (0, self.dim))
        rot = self.rotation(t)
        ls = np.stack([c.l for c in self.channels])
        gam = np.stack([np.broadcast_to(c.gamma(t), t.shape) for c in self.channels], axis=-1)
        return np.einsum("...ij,kj->...ki", rot, ls) * gam[..., None]

    def generator(self, t) -> np.ndarray:
        """Bloch-space generator ``G(t)``, shape ``t.shape + (d, d)``."""
        t = np.asarray(t, dtype=float)
        if not self.channels:
            return np.zeros(t.shape + (self.dim, self.dim))
        a = adjoint_stack(self.heisenberg_lindblads(t), self.f)
        return 0.5 * np.einsum("...kij,...kjl->...il", a, a)

    def rates(self, t_final: float) -> tuple[float, float]:
        """(fastest unitary frequency, largest dissipative rate) on ``[0, t_final]``."""
        omega = float(np.linalg.norm(adjoint_matrix(self.h, self.f), 2))
        diss = 0.0
        for c in self.channels:
            a = adjoint_matrix(c.l, self.f)
            diss += 0.5 * c.gamma.sup(0.0, t_final) ** 2 * float(np.linalg.norm(a, 2)) ** 2
        return omega, diss

    def to_picture(self, times, r_heisenberg) -> np.ndarray:
        """Map Heisenberg-picture vectors at ``times`` into the problem's picture."""
        if self.picture == "heisenberg":
            return np.asarray(r_heisenberg)
        return self.rotation.apply(-np.asarray(times, dtype=float), r_heisenberg)


def default_step(omega: float, dissipative_rate: float, span: float) -> float:
    """Fixed RK4 step ``0.01 / fastest rate``, shared with the density-matrix oracle."""
    rate = max(omega, dissipative_rate)
    if rate <= 0:
        return span if span > 0 else 1.0
    return STEP_FACTOR / rate


@dataclass
class Trajectory:
    times: np.ndarray
    bloch: np.ndarray
    stderr: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.bloch = np.asarray(self.bloch, dtype=float)
        if self.times.ndim != 1 or self.bloch.shape[0] != len(self.times):
            raise DimensionMismatchError("bloch array must have one row per time")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")


def check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise ValueError("time grid must be a non-empty 1-D sequence")
    if grid[0] != 0.0:
        raise ValueError("time grid must start at t = 0")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return grid


def _substeps(grid, dt):
    return [max(1, math.ceil((b - a) / dt - 1e-9)) for a, b in zip(grid[:-1], grid[1:])]


def _rk4_linear(problem: EvolutionProblem, grid, dt) -> np.ndarray:
    """Classic RK4 for dr/dt = G(t) r, landing exactly on every grid point."""
    counts = _substeps(grid, dt)
    starts, hs = [], []
    for (a, b), n in zip(zip(grid[:-1], grid[1:]), counts):
        h = (b - a) / n
        starts.append(a + h * np.arange(n))
        hs.append(np.full(n, h))
    out = np.empty((len(grid), problem.dim))
    out[0] = problem.r0
    if len(grid) == 1:
        return out
    t0 = np.concatenate(starts)
    h = np.concatenate(hs)
    g0 = problem.generator(t0)
    gm = problem.generator(t0 + 0.5 * h)
    g1 = problem.generator(t0 + h)
    r = problem.r0.copy()
    step = 0
    for i, n in enumerate(counts):
        for _ in range(n):
            hh = h[step]
            k1 = g0[step] @ r
            k2 = gm[step] @ (r + 0.5 * hh * k1)
            k3 = gm[step] @ (r + 0.5 * hh * k2)
            k4 = g1[step] @ (r + hh * k3)
            r = r + hh / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            step += 1
        out[i + 1] = r
    return out


def evolve_formula(problem: EvolutionProblem, grid, dt: float | None = None,
                   check_step: bool = True) -> Trajectory:
    """Evaluate the time-ordered boxdot exponential on ``grid`` via its linear ODE.

    With ``check_step`` the run is repeated at half the step; if any component
    moves by more than 1e-6 the metadata carries ``accuracy_warning``.
    """
    grid = check_grid(grid)
    if dt is None:
        dt = default_step(*problem.rates(grid[-1]), span=grid[-1])
    if dt <= 0:
        raise ValueError("dt must be positive")
    r_h = _rk4_linear(problem, grid, dt)
    meta = {"method": "formula", "dt": dt, "integrator": "rk4", "picture": problem.picture}
    if check_step:
        delta = float(np.abs(_rk4_linear(problem, grid, dt / 2) - r_h).max())
        meta["richardson_delta"] = delta
        if delta > RICHARDSON_TOL:
            meta["accuracy_warning"] = (
                f"halving dt changed the solution by {delta:.3e} > {RICHARDSON_TOL:g}")
    return Trajectory(grid, problem.to_picture(grid, r_h), None, meta)


def heisenberg_transform(l, h, t, f: StructureTensor) -> np.ndarray:
    """``expm(t A(h)) l``; ``t`` may be an array, giving one row per time."""
    l = np.asarray(l, dtype=float)
    if l.shape != (f.dim,):
        raise DimensionMismatchError(f"l has shape {l.shape}, expected ({f.dim},)")
    rot = SkewExp(adjoint_matrix(h, f))
    t = np.asarray(t, dtype=float)
    return rot.apply(t, np.broadcast_to(l, t.shape + l.shape))


@lru_cache(maxsize=32)
def _legendre_collocation(n: int):
    """Gauss-Legendre nodes/weights on [-1, 1] and the matrix S with
    ``(S @ g)[j] = int_{-1}^{x_j} p(s) ds`` for the interpolant p of g."""
    x, w = legendre.leggauss(n)
    vander = legendre.legvander(x, n - 1)
    to_coeff = ((2 * np.arange(n) + 1) / 2.0)[:, None] * vander.T * w[None, :]
    antider = legendre.legval(x, legendre.legint(np.eye(n), lbnd=-1)).T
    return x, w, antider @ to_coeff


class SeriesResult(NamedTuple):
    value: np.ndarray
    tail_bound: float
    order: int


def _tail_bound(rate_t: float, order: int) -> float:
    """``sum_{m > order} x**m / m!``."""
    if rate_t <= 0:
        return 0.0
    return float(math.exp(rate_t) * gammainc(order + 1, rate_t))


def dyson_series(problem: EvolutionProblem, t: float, order: int, nodes: int = 32) -> SeriesResult:
    """Dyson series of the time-ordered exponential truncated after ``order`` terms.

    Term n is ``int_0^t G(s) term_{n-1}(s) ds``.  Each term is carried on the
    same ``nodes`` Gauss-Legendre points of ``[0, t]``; the nested integrals
    use the exact antiderivative of the Legendre interpolant, so the cost is
    linear in ``order``.  The tail bound uses ``|G(s)| <= x / t`` on the nodes.
    """
    if order < 0:
        raise ValueError("series order must be >= 0")
    t = float(t)
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0 or order == 0:
        value = problem.to_picture(np.array([t]), problem.r0[None, :])[0]
        bound = 0.0
        if t > 0:
            x = _series_rate(problem, t, nodes) * t
            bound = _tail_bound(x, 0) * float(np.linalg.norm(problem.r0))
        return SeriesResult(value, bound, order)
    xi, w, s_ref = _legendre_collocation(nodes)
    s_nodes = 0.5 * t * (xi + 1.0)
    w_t = 0.5 * t * w
    s_t = 0.5 * t * s_ref
    gen = problem.generator(s_nodes)
    term = np.broadcast_to(problem.r0, (nodes, problem.dim))
    total = problem.r0.copy()
    for _ in range(order):
        integrand = np.einsum("jab,jb->ja", gen, term)
        total = total + w_t @ integrand
        term = s_t @ integrand
    x = t * float(max(np.linalg.norm(g, 2) for g in gen))
    bound = _tail_bound(x, order) * float(np.linalg.norm(problem.r0))
    value = problem.to_picture(np.array([t]), total[None, :])[0]
    return SeriesResult(value, bound, order)


def _series_rate(problem, t, nodes):
    s = 0.5 * t * (legendre.leggauss(nodes)[0] + 1.0)
    return float(max(np.linalg.norm(g, 2) for g in problem.generator(s)))


def perturbation_series(problem: EvolutionProblem, t: float, order: int, gamma: float,
                        nodes: int = 32) -> np.ndarray:
    """Expansion of r^H(t) to ``order`` <= 2 in an explicit strength ``gamma``.

    The single channel's ``l`` (times its constant profile value) is taken as
    unit strength; the generator is ``gamma/2 * B(t)`` with ``B(t) b = l^H(t) boxdot b``.
    The nested double integral is evaluated by tensor-product Gauss-Legendre.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    if order > 2:
        raise PreconditionError("perturbation series is only available up to second order")
    if len(problem.channels) != 1:
        raise PreconditionError("perturbation series needs exactly one lindblad channel")
    chan = problem.channels[0]
    if not chan.gamma.is_constant:
        raise PreconditionError("perturbation series needs a constant channel strength")
    l = chan.l * chan.gamma.params[0]
    t = float(t)

    def boxdot_matrix(s):
        a = adjoint_stack(problem.rotation.apply(s, np.broadcast_to(l, np.shape(s) + l.shape)), problem.f)
        return a @ a

    r0 = problem.r0
    result = r0.copy()
    if order >= 1 and t > 0:
        xi, w = legendre.leggauss(nodes)
        t1 = 0.5 * t * (xi + 1.0)
        w1 = 0.5 * t * w
        b1 = boxdot_matrix(t1)
        first = np.einsum("a,aij,j->i", w1, b1, r0)
        result = result + 0.5 * gamma * first
        if order >= 2:
            t2 = 0.5 * t1[:, None] * (xi[None, :] + 1.0)
            w2 = 0.5 * t1[:, None] * w[None, :]
            inner = np.einsum("ab,abij,j->ai", w2, boxdot_matrix(t2), r0)
            second = np.einsum("a,aij,aj->i", w1, b1, inner)
            result = result + 0.25 * gamma ** 2 * second
    return problem.to_picture(np.array([t]), result[None, :])[0]


def commuting_closed_form(problem: EvolutionProblem, t: float, tol: float = 1e-12) -> np.ndarray:
    """Single matrix exponential, valid when every ``h . l_k`` vanishes and gamma is constant."""
    gen = np.zeros((problem.dim, problem.dim))
    for k, c in enumerate(problem.channels):
        comm = float(np.abs(odot(problem.h, c.l, problem.f)).max())
        if comm > tol:
            raise PreconditionError(f"channel {k} does not commute with the Hamiltonian: |h.l| = {comm:.3e}")
        if not c.gamma.is_constant:
            raise PreconditionError(f"channel {k} has a time-dependent strength")
        a = adjoint_matrix(c.l, problem.f)
        gen += 0.5 * c.gamma.params[0] ** 2 * (a @ a)
    r_h = scipy.linalg.expm(float(t) * gen) @ problem.r0
    return problem.to_picture(np.array([float(t)]), r_h[None, :])[0]


def sinc(x):
    """``sin(x) / x`` with ``sinc(0) = 1``."""
    return np.sinc(np.asarray(x, dtype=float) / np.pi)


def qubit_second_order(r0, omega0: float, gamma: float, t, as_printed: bool = False) -> np.ndarray:
    """Second-order (in gamma/omega0) Bloch vector for H = omega0 sz, L = sqrt(gamma) sx.

    Uses the f = eps/2 convention.  ``as_printed=True`` keeps the sign of the
    y <- x second-order coefficient as originally typeset, which disagrees with
    the exact double integral; the default uses the corrected sign.
    """
    r0 = np.asarray(r0, dtype=float)
    t = np.asarray(t, dtype=float)
    x0, y0, z0 = r0
    wt = omega0 * t
    if omega0 == 0:
        gt = gamma * t
        xx, xy, yx = np.ones_like(t), np.zeros_like(t), np.zeros_like(t)
        yy = 1 - gt / 2 + gt ** 2 / 8
    else:
        e = gamma / (2 * omega0)
        e2 = e * e / 16
        c2, s2 = np.cos(2 * wt), np.sin(2 * wt)
        off1 = -e * wt ** 2 / 2 * sinc(wt) ** 2
        xx = 1 - e * wt / 2 * (1 - sinc(2 * wt)) + e2 * (1 + 2 * wt ** 2 - c2 - 2 * wt * s2)
        xy = off1 + e2 * (4 * wt - 2 * wt * c2 - s2)
        yy = 1 - e * wt / 2 * (1 + sinc(2 * wt)) + e2 * (1 + 2 * wt ** 2 - c2 + 2 * wt * s2)
        yx = off1 + e2 * (2 * wt * c2 - s2) * (1 if as_printed else -1)
    x = xx * x0 + xy * y0
    y = yy * y0 + yx * x0
    z = np.exp(-gamma * t / 2) * z0
    return np.stack([x, y, z], axis=-1)


def purity_first_order(omega0: float, gamma: float, t):
    """``1 - (gamma t / 2)(1 - sinc 2 omega0 t)``; meaningful only while gamma t << 1."""
    t = np.asarray(t, dtype=float)
    return 1 - gamma * t / 2 * (1 - sinc(2 * omega0 * t))
