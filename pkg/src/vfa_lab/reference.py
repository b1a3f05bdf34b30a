"""Exact-softmax oracle and exact per-block score statistics.

This module deliberately materializes the full score matrix: it is the
ground truth every streaming variant is checked against, so it trades
memory for obviousness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FullyMaskedRowError
from .tensor import BlockSpec, Matrix, matmul_nt

NEG_INF = float("-inf")


@dataclass
class AttentionProblem:
    """One attention invocation: Q/K/V, scaling, masking, tile geometry."""

    q: Matrix
    k: Matrix
    v: Matrix
    blocks: BlockSpec
    scale: float | None = None
    causal: bool = False

    def __post_init__(self):
        n_q, d = self.q.shape
        if self.k.shape[1] != d or self.v.shape[1] != d:
            raise ValueError("Q, K, V must share the head dimension")
        if self.k.shape[0] != self.v.shape[0]:
            raise ValueError("K and V must have the same number of rows")
        if (n_q, self.k.shape[0], d) != (
            self.blocks.seq_len_q,
            self.blocks.seq_len_k,
            self.blocks.head_dim,
        ):
            raise ValueError("tensor shapes do not match the block spec")
        if self.causal and n_q != self.k.shape[0]:
            raise ValueError("causal masking requires N_q == N_k")
        if self.scale is None:
            self.scale = 1.0 / np.sqrt(d)

    @property
    def t_r(self) -> int:
        return self.blocks.t_r

    @property
    def t_c(self) -> int:
        return self.blocks.t_c


def masked_scores(p: AttentionProblem) -> Matrix:
    """Full scaled score matrix with the causal mask applied entrywise."""
    s = matmul_nt(p.q, p.k) * p.scale
    if p.causal:
        n = s.shape[0]
        cols = np.arange(s.shape[1])
        s[cols[None, :] > np.arange(n)[:, None]] = NEG_INF
    return s


def naive_attention(p: AttentionProblem) -> Matrix:
    """softmax(scale * Q K^T + mask) @ V with full materialization."""
    s = masked_scores(p)
    m = s.max(axis=1)
    dead = np.isneginf(m)
    if dead.any():
        raise FullyMaskedRowError(int(np.argmax(dead)))
    p_tilde = np.exp(s - m[:, None])
    p_tilde[np.isneginf(s)] = 0.0
    l = p_tilde.sum(axis=1)
    weights = p_tilde / l[:, None]
    # internal sanity: softmax rows are probability vectors
    assert np.all(np.abs(weights.sum(axis=1) - 1.0) <= 1e-14)
    return weights @ p.v


def tile_scores(p: AttentionProblem, i: int, j: int) -> Matrix:
    """Scaled, masked score tile (i, j); indices are 1-based."""
    if not (1 <= i <= p.t_r):
        raise IndexError(f"query block {i} out of range 1..{p.t_r}")
    if not (1 <= j <= p.t_c):
        raise IndexError(f"key block {j} out of range 1..{p.t_c}")
    qb, kb = p.blocks.q_block, p.blocks.k_block
    qi = p.q[(i - 1) * qb : i * qb]
    kj = p.k[(j - 1) * kb : j * kb]
    s = matmul_nt(qi, kj) * p.scale
    if p.causal:
        rows = (i - 1) * qb + np.arange(qb)
        cols = (j - 1) * kb + np.arange(kb)
        s[cols[None, :] > rows[:, None]] = NEG_INF
    return s


def exact_blockmax(p: AttentionProblem, i: int, j: int) -> np.ndarray:
    """Per-row maximum of the scaled, masked score tile (i, j)."""
    return tile_scores(p, i, j).max(axis=1)


def exact_rowmax_global(p: AttentionProblem) -> np.ndarray:
    """Per-row maximum over all unmasked scores."""
    m = masked_scores(p).max(axis=1)
    dead = np.isneginf(m)
    if dead.any():
        raise FullyMaskedRowError(int(np.argmax(dead)))
    return m
