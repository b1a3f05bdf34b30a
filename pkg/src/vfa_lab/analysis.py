"""Statistics over attention runs: max stabilization, similarity, norms.

These analyses quantify why freezing the running maximum after a couple of
blocks is usually safe: the running max of real attention rows stabilizes
very early in the scan, typically at the sink block or the local block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import StateTrace, visible_key_blocks
from .reference import AttentionProblem, exact_blockmax, tile_scores
from .tensor import Matrix


@dataclass
class StabilizationReport:
    """Where each row's running max reached its final value.

    positions holds, per row, the 1-based key-block index (in visit order
    the block's original index, not its scan position) at which the running
    max first equals its final value. Classification buckets count rows
    whose stabilizing block is the sink (j=1), the local block (j=i), or
    anything else.
    """

    positions: np.ndarray  # [seq_len_q] int
    frac_sink: float
    frac_local: float
    frac_other: float

    def frac_sink_or_local(self) -> float:
        return self.frac_sink + self.frac_local


def stabilization_positions(
    trace: StateTrace, final_m: np.ndarray | None = None
) -> StabilizationReport:
    """Earliest block index where each row's running max hits its final value.

    Uses exact float equality: the running max is a max of observed values,
    so once it equals the final value it is the final value. final_m defaults
    to the last snapshot of each query block; pass it explicitly to check a
    trace against maxima obtained elsewhere.
    """
    all_positions = []
    sink = local = other = 0
    for bi, (rows, local_block) in enumerate(zip(trace.records, trace.local_blocks)):
        if not rows:
            raise ValueError("trace contains an empty query block")
        if final_m is None:
            fm = rows[-1].m
        else:
            fm = final_m[bi * trace.q_block : (bi + 1) * trace.q_block]
        q_rows = fm.shape[0]
        stab = np.full(q_rows, rows[-1].block, dtype=int)
        settled = np.zeros(q_rows, dtype=bool)
        for rec in rows:
            hit = ~settled & (rec.m == fm)
            stab[hit] = rec.block
            settled |= hit
        if not settled.all():
            raise ValueError("running max never reached its final value")
        all_positions.append(stab)
        sink += int((stab == 1).sum())
        local += int(((stab == local_block) & (local_block != 1)).sum())
        other += int(((stab != 1) & (stab != local_block)).sum())
    positions = np.concatenate(all_positions)
    n = positions.size
    return StabilizationReport(
        positions=positions,
        frac_sink=sink / n,
        frac_local=local / n,
        frac_other=other / n,
    )


def cos_sim(x: Matrix) -> float:
    """Mean pairwise cosine similarity of the rows of x.

    Defined as mean(G / max|G|) over all entries of the Gram matrix
    G = X_n X_n^T of the row-normalized matrix, diagonal included. Equals 1
    when all rows are parallel with equal sign, 1/n for n mutually
    orthogonal rows, and 0 for a sign-balanced {v, -v} population.
    """
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if (norms == 0).any():
        raise ValueError("cos_sim requires nonzero rows")
    xn = x / norms
    g = xn @ xn.T
    denom = np.abs(g).max()
    return float((g / denom).mean())


def l2_norm_profile(x: Matrix) -> dict:
    """Per-row l2 norms plus summary statistics."""
    norms = np.linalg.norm(np.asarray(x, dtype=np.float64), axis=1)
    mean = float(norms.mean())
    std = float(norms.std())
    return {
        "per_row_norms": norms,
        "min": float(norms.min()),
        "max": float(norms.max()),
        "mean": mean,
        "stddev": std,
        "coeff_of_variation": std / mean if mean != 0 else float("nan"),
    }


def blockmax_curve(p: AttentionProblem, i: int, per_row: bool = False) -> np.ndarray:
    """Per-key-block score maxima for query block i.

    Default: a [visible] vector, entry j-1 = max over rows of the exact
    tile rowmax of key block j. With per_row=True: the full
    [q_block, visible] rowmax matrix. Fully masked blocks are excluded.
    """
    qb, kb = p.blocks.q_block, p.blocks.k_block
    vmax = visible_key_blocks(i, qb, kb, p.t_c, p.causal)
    rows = np.stack([exact_blockmax(p, i, j) for j in range(1, vmax + 1)], axis=1)
    return rows if per_row else rows.max(axis=0)


def running_max_curve(p: AttentionProblem, i: int) -> np.ndarray:
    """Cumulative-scan per-row running max for query block i, ascending order."""
    return np.maximum.accumulate(blockmax_curve(p, i, per_row=True), axis=1)


def score_range_by_block(p: AttentionProblem, i: int) -> list:
    """(min, max) of finite scores per visible key block of query block i."""
    qb, kb = p.blocks.q_block, p.blocks.k_block
    vmax = visible_key_blocks(i, qb, kb, p.t_c, p.causal)
    out = []
    for j in range(1, vmax + 1):
        s = tile_scores(p, i, j)
        finite = s[np.isfinite(s)]
        out.append((float(finite.min()), float(finite.max())))
    return out
