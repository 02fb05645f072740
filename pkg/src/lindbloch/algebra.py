"""su(N) generators, structure constants and the Bloch-space Lie products.

Conventions
-----------
A :class:`GeneratorBasis` holds ``N**2 - 1`` Hermitian, traceless matrices with
``Tr(lam_k lam_n) = scale * delta_kn``.  Structure constants are defined by
``[lam_i, lam_j] = 2i sum_k f_ijk lam_k`` and the odot product by
``(a . b)_k = -2 sum_ij f_ijk a_i b_j``.  All indices are 0-based in the API.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, NamedTuple

import numpy as np

from .errors import (
    DimensionMismatchError,
    InconsistentBasisError,
    InvalidDimensionError,
    InvalidStateError,
    NotHermitianError,
)

CONSTRUCTION_TOL = 1e-12
IDENTITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GeneratorBasis:
    """Ordered traceless orthogonal generators of su(N)."""

    dim: int
    matrices: np.ndarray  # (N**2 - 1, N, N) complex
    scale: float = 2.0

    @property
    def size(self) -> int:
        return self.dim * self.dim - 1

    def gram(self) -> np.ndarray:
        return np.einsum("iab,jba->ij", self.matrices, self.matrices)

    def residuals(self) -> dict[str, float]:
        """Largest violation of each basis invariant."""
        m = self.matrices
        herm = np.abs(m - m.conj().transpose(0, 2, 1)).max()
        trace = np.abs(np.einsum("iaa->i", m)).max()
        ortho = np.abs(self.gram() - self.scale * np.eye(len(m))).max()
        return {"hermitian": float(herm), "traceless": float(trace),
                "orthogonal": float(ortho)}

    def check(self, tol: float = CONSTRUCTION_TOL) -> None:
        if self.matrices.shape != (self.size, self.dim, self.dim):
            raise DimensionMismatchError(
                f"expected {self.size} matrices of shape {self.dim}x{self.dim}, "
                f"got array of shape {self.matrices.shape}")
        bad = {k: v for k, v in self.residuals().items() if v > tol}
        if bad:
            raise InconsistentBasisError(f"basis invariants violated: {bad}")

    def combine(self, coeffs) -> np.ndarray:
        """Return ``sum_k c_k lam_k``."""
        coeffs = np.asarray(coeffs)
        if coeffs.shape != (self.size,):
            raise DimensionMismatchError(
                f"coefficient vector has shape {coeffs.shape}, basis needs ({self.size},)")
        return np.tensordot(coeffs, self.matrices, axes=1)


def build_generators(n: int, ordering: str = "grouped") -> GeneratorBasis:
    """Generalized Gell-Mann basis with ``Tr(lam_k lam_n) = 2 delta_kn``.

    ``ordering="grouped"`` lists all symmetric off-diagonal pairs in
    lexicographic ``(j, k)`` order, then the antisymmetric pairs, then the
    diagonal ladder; for ``N=2`` this is (sigma_x, sigma_y, sigma_z).
    ``ordering="gell-mann"`` interleaves them the conventional way, so that
    ``N=3`` reproduces lambda_1..lambda_8 of the physics literature.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise InvalidDimensionError(f"Hilbert-space dimension must be an integer >= 2, got {n!r}")
    n = int(n)

    def sym(j, k):
        m = np.zeros((n, n), dtype=complex)
        m[j, k] = m[k, j] = 1.0
        return m

    def anti(j, k):
        m = np.zeros((n, n), dtype=complex)
        m[j, k] = -1j
        m[k, j] = 1j
        return m

    def diag(level):
        d = np.zeros(n)
        d[:level] = 1.0
        d[level] = -level
        return np.diag(d * np.sqrt(2.0 / (level * (level + 1)))).astype(complex)

    pairs = list(itertools.combinations(range(n), 2))
    if ordering == "grouped":
        mats = [sym(j, k) for j, k in pairs] + [anti(j, k) for j, k in pairs]
        mats += [diag(level) for level in range(1, n)]
    elif ordering == "gell-mann":
        mats = []
        for k in range(1, n):
            for j in range(k):
                mats += [sym(j, k), anti(j, k)]
            mats.append(diag(k))
    else:
        raise ValueError(f"unknown ordering {ordering!r}")

    basis = GeneratorBasis(n, np.array(mats), 2.0)
    basis.check()
    return basis


def _perm_sign(idx):
    """Sort a triple; return (sorted, sign) or (None, 0) on a repeated index."""
    i, j, k = idx
    if i == j or j == k or i == k:
        return None, 0
    sign = 1
    a = [i, j, k]
    for p in range(3):
        for q in range(2 - p):
            if a[q] > a[q + 1]:
                a[q], a[q + 1] = a[q + 1], a[q]
                sign = -sign
    return tuple(a), sign


@dataclass(frozen=True, eq=False)
class StructureTensor:
    """Totally antisymmetric f_ijk, stored sparsely by sorted index triple."""

    dim: int
    entries: Mapping[tuple[int, int, int], float]
    derived_scale: float | None = None

    @classmethod
    def from_entries(cls, dim: int, entries, derived_scale=None,
                     tol: float = IDENTITY_TOL) -> "StructureTensor":
        """Build from ``{(i, j, k): value}`` where any permutation may be given.

        Duplicate specifications of the same triple must agree up to the
        permutation sign.
        """
        store: dict[tuple[int, int, int], float] = {}
        for idx, value in dict(entries).items():
            if any(not 0 <= i < dim for i in idx):
                raise DimensionMismatchError(f"index {idx} out of range for dimension {dim}")
            key, sign = _perm_sign(idx)
            if key is None:
                if abs(value) > tol:
                    raise InconsistentBasisError(
                        f"f{idx} = {value} but repeated indices force zero")
                continue
            v = sign * float(value)
            if key in store and abs(store[key] - v) > tol:
                raise InconsistentBasisError(
                    f"entries for {key} disagree under permutation: {store[key]} vs {v}")
            store[key] = v
        store = {k: v for k, v in sorted(store.items()) if abs(v) >= CONSTRUCTION_TOL}
        return cls(dim, store, derived_scale)

    @classmethod
    def levi_civita(cls, value: float = 0.5) -> "StructureTensor":
        """su(2) constants ``f_ijk = value * eps_ijk`` (no matrix basis behind them)."""
        return cls.from_entries(3, {(0, 1, 2): value})

    def __getitem__(self, idx) -> float:
        key, sign = _perm_sign(idx)
        if key is None:
            return 0.0
        return sign * self.entries.get(key, 0.0)

    @cached_property
    def dense(self) -> np.ndarray:
        f = np.zeros((self.dim,) * 3)
        for (i, j, k), v in self.entries.items():
            for p, s in (((i, j, k), 1), ((j, k, i), 1), ((k, i, j), 1),
                         ((j, i, k), -1), ((i, k, j), -1), ((k, j, i), -1)):
                f[p] = s * v
        f.flags.writeable = False
        return f

    @cached_property
    def _adjoint_stack(self) -> np.ndarray:
        # F[i] is the matrix of b -> e_i . b, i.e. F[i]_kj = -2 f_ijk
        F = -2.0 * self.dense.transpose(0, 2, 1)
        F.flags.writeable = False
        return F

    @property
    def sup_abs(self) -> float:
        return max((abs(v) for v in self.entries.values()), default=0.0)

    @property
    def c_sup(self) -> float:
        """``C = sup |c_ijk|`` with ``c_ijk = 2i f_ijk``."""
        return 2.0 * self.sup_abs


def structure_constants(basis: GeneratorBasis) -> StructureTensor:
    """Extract f_ijk = Tr([lam_i, lam_j] lam_k) / (2i s) from a basis."""
    s = basis.scale
    gram_err = np.abs(basis.gram() - s * np.eye(basis.size)).max()
    if gram_err > IDENTITY_TOL:
        raise InconsistentBasisError(
            f"basis is not orthogonal with scale {s}: max Gram residual {gram_err:.3e}")
    m = basis.matrices
    t = np.einsum("iab,jbc,kca->ijk", m, m, m, optimize=True)
    f = (t - t.transpose(1, 0, 2)) / (2j * s)
    if np.abs(f.imag).max() > IDENTITY_TOL:
        raise InconsistentBasisError("structure constants came out complex; basis not Hermitian")
    f = f.real
    cyc = np.abs(f - f.transpose(1, 2, 0)).max()
    if cyc > IDENTITY_TOL:
        raise InconsistentBasisError(
            f"f_ijk and f_jki disagree by {cyc:.3e}; basis is not a consistent su(N) basis")
    d = basis.size
    entries = {(i, j, k): float(f[i, j, k])
               for i in range(d) for j in range(i + 1, d) for k in range(j + 1, d)
               if abs(f[i, j, k]) >= CONSTRUCTION_TOL}
    return StructureTensor(d, entries, s)


def _check_vec(v, f: StructureTensor, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (f.dim,):
        raise DimensionMismatchError(f"{name} has shape {v.shape}, structure tensor needs ({f.dim},)")
    return v


def odot(a, b, f: StructureTensor) -> np.ndarray:
    """``(a . b)_k = -2 sum_ij f_ijk a_i b_j``."""
    a = _check_vec(a, f, "a")
    b = _check_vec(b, f, "b")
    return -2.0 * np.einsum("ijk,i,j->k", f.dense, a, b)


def boxdot(a, b, f: StructureTensor) -> np.ndarray:
    return odot(a, odot(a, b, f), f)


def adjoint_matrix(a, f: StructureTensor) -> np.ndarray:
    """Antisymmetric matrix ``A`` with ``A @ b == odot(a, b, f)``."""
    a = _check_vec(a, f, "a")
    return np.tensordot(a, f._adjoint_stack, axes=1)


def adjoint_stack(vectors, f: StructureTensor) -> np.ndarray:
    """Batched :func:`adjoint_matrix` over the leading axis of ``vectors``."""
    vectors = np.asarray(vectors, dtype=float)
    return np.tensordot(vectors, f._adjoint_stack, axes=1)


def jacobi_residual(f: StructureTensor) -> float:
    """Max |sum_m f_ijm f_mkl + f_jkm f_mil + f_kim f_mjl| over all i, j, k, l."""
    F = f.dense
    t1 = np.einsum("ijm,mkl->ijkl", F, F)
    total = t1 + t1.transpose(1, 2, 0, 3) + t1.transpose(2, 0, 1, 3)
    return float(np.abs(total).max()) if total.size else 0.0


class CoeffVector(NamedTuple):
    """Decomposition ``M = scalar * I + vector . lam`` of a Hermitian operator."""

    scalar: float
    vector: np.ndarray


def hermitian_residual(m) -> float:
    m = np.asarray(m)
    return float(np.abs(m - m.conj().T).max()) if m.size else 0.0


def decompose_hermitian(m, basis: GeneratorBasis, tol: float = IDENTITY_TOL) -> CoeffVector:
    m = np.asarray(m, dtype=complex)
    if m.shape != (basis.dim, basis.dim):
        raise DimensionMismatchError(f"operator has shape {m.shape}, basis is {basis.dim}-dimensional")
    res = hermitian_residual(m)
    if res > tol:
        raise NotHermitianError(f"operator is not Hermitian: max |M - M^dag| = {res:.3e}", res)
    c0 = np.trace(m).real / basis.dim
    c = np.einsum("ab,kba->k", m, basis.matrices).real / basis.scale
    return CoeffVector(float(c0), c)


def reconstruct(coeffs: CoeffVector, basis: GeneratorBasis) -> np.ndarray:
    return coeffs.scalar * np.eye(basis.dim) + basis.combine(coeffs.vector)


def bloch_encode(rho, basis: GeneratorBasis, tol: float = IDENTITY_TOL) -> np.ndarray:
    """Bloch vector ``r_k = (N / s) Tr(rho lam_k)`` of a unit-trace Hermitian matrix."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (basis.dim, basis.dim):
        raise DimensionMismatchError(f"density matrix has shape {rho.shape}, basis is {basis.dim}-dimensional")
    res = hermitian_residual(rho)
    if res > tol:
        raise NotHermitianError(f"density matrix is not Hermitian: residual {res:.3e}", res)
    tr = np.trace(rho)
    if abs(tr - 1.0) > tol:
        raise InvalidStateError(f"density matrix trace is {tr.real:.12g}, expected 1")
    return basis.dim / basis.scale * np.einsum("ab,kba->k", rho, basis.matrices).real


def bloch_encode_many(rhos, basis: GeneratorBasis) -> np.ndarray:
    """Unchecked batched encode for trajectories of density matrices."""
    rhos = np.asarray(rhos)
    return basis.dim / basis.scale * np.einsum("...ab,kba->...k", rhos, basis.matrices).real


def bloch_decode(r, basis: GeneratorBasis) -> np.ndarray:
    """``(1/N)(I + r . lam)``.  Positivity is not checked."""
    r = np.asarray(r, dtype=float)
    return (np.eye(basis.dim) + basis.combine(r)) / basis.dim


def normalized_purity(r, n: int) -> np.ndarray:
    """``|r|^2`` rescaled so that pure states give 1 (trace-2 generator convention)."""
    r = np.asarray(r, dtype=float)
    return 2.0 * np.sum(r * r, axis=-1) / (n * (n - 1))


class SkewExp:
    """``t -> expm(t A)`` for a real antisymmetric ``A`` via one Hermitian eigensolve."""

    def __init__(self, a):
        a = np.asarray(a, dtype=float)
        # i A is Hermitian: i A = V diag(mu) V^dag  =>  exp(tA) = V diag(e^{-i mu t}) V^dag
        self.mu, self.v = np.linalg.eigh(1j * a)
        self.shape = a.shape

    def __call__(self, t) -> np.ndarray:
        phase = np.exp(-1j * np.multiply.outer(np.asarray(t, dtype=float), self.mu))
        out = np.einsum("ij,...j,kj->...ik", self.v, phase, self.v.conj())
        return out.real

    def apply(self, t, vectors) -> np.ndarray:
        """``expm(t_m A) @ vectors[m]`` for a batch of scalars ``t_m``."""
        coeff = np.asarray(vectors) @ self.v.conj()
        coeff = coeff * np.exp(-1j * np.multiply.outer(np.asarray(t, dtype=float), self.mu))
        return (coeff @ self.v.T).real
