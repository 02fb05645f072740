"""Closed-form Bloch-vector dynamics for Lindblad equations with Hermitian jump operators."""

from .algebra import (
    CoeffVector,
    GeneratorBasis,
    StructureTensor,
    adjoint_matrix,
    bloch_decode,
    bloch_encode,
    boxdot,
    build_generators,
    decompose_hermitian,
    odot,
    structure_constants,
)

__version__ = "0.1.0"
