"""Shared streaming-softmax update primitives.

Every forward variant routes its tile updates through these helpers, so
variants that are supposed to agree bit-for-bit (e.g. the sparse composite
at a no-skip threshold versus the frozen-max pass) execute the exact same
floating-point expressions in the same order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FullyMaskedRowError, NormalizerUnderflowError
from .tensor import rowsum

NEG_INF = float("-inf")


@dataclass
class SoftmaxState:
    """Per-query-block running statistics: max m, normalizer l, accumulator O."""

    m: np.ndarray
    l: np.ndarray
    o: np.ndarray

    @classmethod
    def fresh(cls, q_rows: int, d: int, m0: np.ndarray | None = None) -> "SoftmaxState":
        m = np.full(q_rows, NEG_INF) if m0 is None else m0.copy()
        return cls(m=m, l=np.zeros(q_rows), o=np.zeros((q_rows, d)))


@dataclass
class TraceRecord:
    position: int  # visit order within the query block, 0-based
    block: int  # key-block index, 1-based
    m: np.ndarray  # running-max snapshot after the visit


@dataclass
class StateTrace:
    """Visit-ordered running-max snapshots, one record list per query block."""

    q_block: int
    records: list = field(default_factory=list)  # list[list[TraceRecord]]
    local_blocks: list = field(default_factory=list)  # local key block per query block

    def start_block(self, local_block: int) -> list:
        rows: list = []
        self.records.append(rows)
        self.local_blocks.append(local_block)
        return rows


def exp_tile(s: np.ndarray, m: np.ndarray) -> np.ndarray:
    """exp(S - m) with masked (-inf) score entries contributing exactly 0."""
    arg = s - m[:, None]
    masked = np.isneginf(s)
    if masked.any():
        arg[masked] = NEG_INF  # kills -inf - -inf = nan
    with np.errstate(over="ignore"):  # frozen m may leave args > 0 by design
        return np.exp(arg)


def exp_args(s: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Exponent arguments of exp_tile, with masked entries as -inf."""
    arg = s - m[:, None]
    masked = np.isneginf(s)
    if masked.any():
        arg[masked] = NEG_INF
    return arg


def rescale_factor(m_old: np.ndarray, m_new: np.ndarray) -> np.ndarray:
    """exp(m_old - m_new) per row; rows still at -inf get factor 1."""
    both_dead = np.isneginf(m_new)
    with np.errstate(invalid="ignore"):
        f = np.exp(m_old - m_new)
    if both_dead.any():
        f[both_dead] = 1.0
    return f


def apply_rescaled_update(state: SoftmaxState, m_new: np.ndarray,
                          p_tilde: np.ndarray, v_j: np.ndarray) -> None:
    """Baseline-style update: rescale l and O to the new max, then accumulate."""
    f = rescale_factor(state.m, m_new)
    state.l = f * state.l + rowsum(p_tilde)
    state.o = f[:, None] * state.o + p_tilde @ v_j
    state.m = m_new


def apply_frozen_update(state: SoftmaxState, p_tilde: np.ndarray, v_j: np.ndarray) -> None:
    """Frozen-max update: accumulate with no rescale factor."""
    state.l = state.l + rowsum(p_tilde)
    state.o = state.o + p_tilde @ v_j


def finalize(state: SoftmaxState, row_base: int) -> np.ndarray:
    """O / l, raising on fully masked rows and on normalizer underflow."""
    zero = state.l == 0.0
    if zero.any():
        row = int(np.argmax(zero))
        if np.isneginf(state.m[row]):
            raise FullyMaskedRowError(row_base + row)
        raise NormalizerUnderflowError(row_base + row)
    return state.o / state.l[:, None]


def visible_key_blocks(i: int, q_block: int, k_block: int, t_c: int, causal: bool) -> int:
    """Highest key-block index with any unmasked entry for query block i."""
    if not causal:
        return t_c
    last_query = i * q_block - 1
    return min(last_query // k_block + 1, t_c)


def local_key_block(i: int, q_block: int, k_block: int, t_c: int) -> int:
    """Key block aligned with query block i (the diagonal tile when grids match)."""
    return min((i * q_block - 1) // k_block + 1, t_c)
