"""Dense linear-algebra substrate: block geometry, reductions, generators.

Matrices are plain 2-D float64 numpy arrays, row-major. All computation is
done in 64-bit floating point; -inf is permitted only as a mask sentinel in
score positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import Xoshiro256pp

Matrix = np.ndarray


@dataclass(frozen=True)
class BlockSpec:
    """Tile geometry for one attention invocation.

    Sequence lengths must divide evenly by their block sizes; padding is
    deliberately unsupported so block indexing and op counts stay exact.
    """

    seq_len_q: int
    seq_len_k: int
    head_dim: int
    q_block: int
    k_block: int

    def __post_init__(self):
        for name in ("seq_len_q", "seq_len_k", "head_dim", "q_block", "k_block"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.seq_len_q % self.q_block != 0:
            raise ValueError(
                f"seq_len_q={self.seq_len_q} not divisible by q_block={self.q_block}"
            )
        if self.seq_len_k % self.k_block != 0:
            raise ValueError(
                f"seq_len_k={self.seq_len_k} not divisible by k_block={self.k_block}"
            )

    @property
    def t_r(self) -> int:
        return self.seq_len_q // self.q_block

    @property
    def t_c(self) -> int:
        return self.seq_len_k // self.k_block


def as_matrix(x) -> Matrix:
    """Validate and return a 2-D float64 row-major array."""
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={a.ndim}")
    return a


def matmul_nt(a: Matrix, b: Matrix) -> Matrix:
    """a @ b.T for a[m x d], b[n x d]."""
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul_nt requires 2-D operands")
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"inner dimension mismatch: {a.shape} vs {b.shape} (shared last axis required)"
        )
    return a @ b.T


def rowmax(x: Matrix) -> np.ndarray:
    """Per-row maximum; -inf entries participate normally."""
    if x.shape[1] < 1:
        raise ValueError("rowmax of a zero-column matrix is undefined")
    return x.max(axis=1)


def rowsum(x: Matrix) -> np.ndarray:
    """Per-row sum accumulated strictly left-to-right in float64.

    cumsum is used instead of np.sum to pin the sequential accumulation
    order (np.sum reassociates pairwise).
    """
    if x.shape[1] < 1:
        raise ValueError("rowsum of a zero-column matrix is undefined")
    return np.cumsum(x, axis=1)[:, -1]


def gen_gaussian(spec: BlockSpec, seed: int, std: float = 1.0):
    """Deterministic Gaussian Q, K, V for the given geometry.

    Identical (seed, spec, std) always yields bit-identical matrices.
    """
    if std <= 0:
        raise ValueError("std must be > 0")
    gen = Xoshiro256pp(seed)
    d = spec.head_dim
    q = gen.gaussian(spec.seq_len_q * d).reshape(spec.seq_len_q, d) * std
    k = gen.gaussian(spec.seq_len_k * d).reshape(spec.seq_len_k, d) * std
    v = gen.gaussian(spec.seq_len_k * d).reshape(spec.seq_len_k, d) * std
    return q, k, v


PATTERNS = ("sink_local", "middle_peak")


@dataclass
class StructuredData:
    """Generated tensors plus the metadata tests and manifests need."""

    q: Matrix
    k: Matrix
    v: Matrix
    pattern: str
    boost: float
    # 1-based key-block index holding the planted per-row maximum
    # (middle_peak only)
    planted_block: int | None = None


def gen_structured(
    spec: BlockSpec, seed: int, pattern: str, boost: float
) -> StructuredData:
    """Gaussian base with a deterministic score structure planted on top.

    boost is the bump added to the scaled score (under the default 1/sqrt(d)
    scaling), so boost values compare directly against score magnitudes.

    sink_local: every query row gets a +boost score bump against key block 1
    and against the key block aligned with its own block index. Realized by
    reserving coordinates 0..T_c: coordinate 0 carries the sink alignment,
    coordinate j the block-j local alignment, so the bump is exactly +boost
    with no cross-term noise. Requires head_dim >= T_c + 1.

    middle_peak: the per-row score maximum is planted in a fixed interior
    block (recorded in the metadata) via the same reserved-coordinate trick
    on coordinate 0 alone. Requires T_c >= 3.

    boost == 0 degenerates to plain gen_gaussian output.
    """
    if pattern not in PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; expected one of {PATTERNS}")
    if boost < 0:
        raise ValueError("boost must be >= 0")
    q, k, v = gen_gaussian(spec, seed, std=1.0)
    if boost == 0.0:
        return StructuredData(q, k, v, pattern, boost, planted_block=None)

    t_c = spec.t_c
    # amp * amp undoes the default 1/sqrt(d) scaling so the planted
    # alignment lands as +boost in scaled-score units
    amp = np.sqrt(boost * np.sqrt(spec.head_dim))
    if pattern == "middle_peak":
        if t_c < 3:
            raise ValueError("middle_peak requires T_c >= 3")
        planted = t_c // 2 + 1  # interior, 1-based
        lo = (planted - 1) * spec.k_block
        hi = planted * spec.k_block
        q[:, 0] = amp
        k[:, 0] = 0.0
        k[lo:hi, 0] = amp
        return StructuredData(q, k, v, pattern, boost, planted_block=planted)

    # sink_local
    if spec.head_dim < t_c + 1:
        raise ValueError(
            f"sink_local needs head_dim >= T_c + 1 ({t_c + 1}), got {spec.head_dim}"
        )
    q[:, : t_c + 1] = 0.0
    k[:, : t_c + 1] = 0.0
    q[:, 0] = amp  # sink alignment, all rows
    k[: spec.k_block, 0] = amp  # key block 1
    for i in range(1, spec.t_r + 1):
        local = min(i, t_c)
        q[(i - 1) * spec.q_block : i * spec.q_block, local] = amp
    for j in range(1, t_c + 1):
        k[(j - 1) * spec.k_block : j * spec.k_block, j] = amp
    return StructuredData(q, k, v, pattern, boost, planted_block=None)
