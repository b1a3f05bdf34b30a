"""Threshold-skipped streaming attention and its compositions.

Variants share one skip rule: a visited tile whose per-row local maximum
sits more than ln(lambda) below the running maximum is dropped without
exponentiation or V-tile work. With lambda <= 1 a dropped tile can never
have raised the running maximum, which keeps the streaming state exact;
that proof obligation is asserted inline on every skip event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    NEG_INF,
    SoftmaxState,
    apply_frozen_update,
    apply_rescaled_update,
    exp_args,
    exp_tile,
    finalize,
    local_key_block,
    rescale_factor,
    visible_key_blocks,
)
from .counters import OpCounters
from .reference import AttentionProblem, tile_scores
from .tensor import rowmax, rowsum
from .vfa import (
    KEY_REPRS,
    OverflowMonitor,
    build_schedule,
    m_init,
    precompute_kreprs,
)


@dataclass(frozen=True)
class SkipConfig:
    """Skip thresholds. lam=None disables skipping (ln lambda = -inf)."""

    lam: float | None
    tau: float = 0.0
    granularity: str = "block"

    def __post_init__(self):
        if self.lam is not None and not (0.0 < self.lam <= 1.0):
            raise ValueError(f"lambda must be in (0, 1], got {self.lam}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.granularity not in ("block", "row"):
            raise ValueError(f"granularity must be 'block' or 'row', got {self.granularity!r}")

    @property
    def ln_lambda(self) -> float:
        return NEG_INF if self.lam is None else math.log(self.lam)


@dataclass
class SkipStats:
    blocks_visited: int = 0
    blocks_skipped: int = 0
    rows_masked: int = 0
    row_slots: int = 0
    rescales_elided: int = 0
    blocks_processed: int = 0
    processed_special: int = 0
    processed_frozen: int = 0

    @property
    def block_sparsity(self) -> float:
        return self.blocks_skipped / self.blocks_visited if self.blocks_visited else 0.0

    @property
    def row_sparsity(self) -> float:
        return self.rows_masked / self.row_slots if self.row_slots else 0.0

    @property
    def rescale_skip_rate(self) -> float:
        return self.rescales_elided / self.blocks_processed if self.blocks_processed else 0.0

    def as_dict(self) -> dict:
        return {
            "blocks_visited": self.blocks_visited,
            "blocks_skipped": self.blocks_skipped,
            "rows_masked": self.rows_masked,
            "row_slots": self.row_slots,
            "rescales_elided": self.rescales_elided,
            "blocks_processed": self.blocks_processed,
            "block_sparsity": self.block_sparsity,
            "row_sparsity": self.row_sparsity,
            "rescale_skip_rate": self.rescale_skip_rate,
        }


def _tile_skippable(m_tilde: np.ndarray, m_merged: np.ndarray, ln_lambda: float) -> bool:
    """Whole-tile skip test: every row strictly below threshold.

    Fully masked rows (m_tilde = -inf) satisfy the test against any finite
    threshold; the -inf sentinel disables skipping entirely.
    """
    with np.errstate(invalid="ignore"):
        below = (m_tilde - m_merged) < ln_lambda
    dead = np.isneginf(m_tilde) & np.isneginf(m_merged)
    below |= dead if ln_lambda != NEG_INF else False
    return bool(np.all(below))


def blasst_forward(p: AttentionProblem, cfg: SkipConfig, order: str = "sequential"):
    """Thresholded block skipping on the baseline recurrence.

    order='sink_local' gives the reordered-scan variant; the skip rule is
    unchanged, but an earlier-rising running maximum changes what skips.
    """
    if cfg.granularity != "block":
        raise ValueError("blasst_forward requires block granularity")
    if order not in ("sequential", "sink_local"):
        raise ValueError(f"unknown order {order!r}")
    qb, kb, d = p.blocks.q_block, p.blocks.k_block, p.blocks.head_dim
    ln_lam = cfg.ln_lambda
    counters = OpCounters()
    stats = SkipStats()
    out = np.empty((p.blocks.seq_len_q, d))

    for i in range(1, p.t_r + 1):
        vmax = visible_key_blocks(i, qb, kb, p.t_c, p.causal)
        local = local_key_block(i, qb, kb, p.t_c)
        sched = build_schedule(i, vmax, local, reorder=(order == "sink_local"))
        state = SoftmaxState.fresh(qb, d)

        for j in sched.order:
            s = tile_scores(p, i, j)
            m_tilde = rowmax(s)
            m_new = np.maximum(state.m, m_tilde)
            stats.blocks_visited += 1
            if _tile_skippable(m_tilde, m_new, ln_lam):
                # lambda <= 1 guarantees a skipped tile never raised m
                assert np.array_equal(m_new, state.m)
                counters.charge_skipped_block(qb, kb, d)
                stats.blocks_skipped += 1
                continue
            p_tilde = exp_tile(s, m_new)
            apply_rescaled_update(state, m_new, p_tilde, p.v[(j - 1) * kb : j * kb])
            counters.charge_full_block(qb, kb, d)
            stats.blocks_processed += 1

        out[(i - 1) * qb : i * qb] = finalize(state, (i - 1) * qb)

    return out, counters, stats


def blasst_fa4_forward(p: AttentionProblem, cfg: SkipConfig):
    """Block skipping plus rescale elision on small running-max increases.

    A processed tile whose max increase is at most tau * ln 2 (every row)
    keeps the previous maximum: the scale factor is exactly 1 and the
    rescale chain is skipped. tau=inf freezes the maximum after its first
    finite value.
    """
    if cfg.granularity != "block":
        raise ValueError("blasst_fa4_forward requires block granularity")
    qb, kb, d = p.blocks.q_block, p.blocks.k_block, p.blocks.head_dim
    ln_lam = cfg.ln_lambda
    tau_ln2 = cfg.tau * math.log(2.0)
    counters = OpCounters()
    stats = SkipStats()
    out = np.empty((p.blocks.seq_len_q, d))

    for i in range(1, p.t_r + 1):
        vmax = visible_key_blocks(i, qb, kb, p.t_c, p.causal)
        state = SoftmaxState.fresh(qb, d)

        for j in range(1, vmax + 1):
            s = tile_scores(p, i, j)
            m_tilde = rowmax(s)
            m_new = np.maximum(state.m, m_tilde)
            stats.blocks_visited += 1
            if _tile_skippable(m_tilde, m_new, ln_lam):
                assert np.array_equal(m_new, state.m)
                counters.charge_skipped_block(qb, kb, d)
                stats.blocks_skipped += 1
                continue
            stats.blocks_processed += 1
            v_j = p.v[(j - 1) * kb : j * kb]
            # elision needs a finite previous max in every row: there is no
            # meaningful "small increase" from -inf
            prev_finite = not np.isneginf(state.m).any()
            if prev_finite and float(np.max(m_new - state.m)) <= tau_ln2:
                args = exp_args(s, state.m)
                with np.errstate(over="ignore"):
                    apply_frozen_update(state, np.exp(args), v_j)
                counters.charge_elided_block(qb, kb, d)
                stats.rescales_elided += 1
            else:
                apply_rescaled_update(state, m_new, exp_tile(s, m_new), v_j)
                counters.charge_full_block(qb, kb, d)

        out[(i - 1) * qb : i * qb] = finalize(state, (i - 1) * qb)

    return out, counters, stats


def blasst_rowskip_forward(p: AttentionProblem, cfg: SkipConfig):
    """Row-granular thresholding: suppressed rows contribute zero mass."""
    if cfg.granularity != "row":
        raise ValueError("blasst_rowskip_forward requires row granularity")
    qb, kb, d = p.blocks.q_block, p.blocks.k_block, p.blocks.head_dim
    ln_lam = cfg.ln_lambda
    counters = OpCounters()
    stats = SkipStats()
    out = np.empty((p.blocks.seq_len_q, d))

    for i in range(1, p.t_r + 1):
        vmax = visible_key_blocks(i, qb, kb, p.t_c, p.causal)
        state = SoftmaxState.fresh(qb, d)

        for j in range(1, vmax + 1):
            s = tile_scores(p, i, j)
            m_tilde = rowmax(s)
            m_new = np.maximum(state.m, m_tilde)
            stats.blocks_visited += 1
            stats.row_slots += qb
            with np.errstate(invalid="ignore"):
                row_keep = (m_tilde - m_new) >= ln_lam
            if ln_lam == NEG_INF:
                row_keep = np.ones(qb, dtype=bool)
            if not row_keep.any():
                assert np.array_equal(m_new, state.m)
                counters.charge_skipped_block(qb, kb, d)
                # rows of a fully suppressed block count as masked too
                counters.rows_masked += qb
                stats.blocks_skipped += 1
                stats.rows_masked += qb
                continue
            # suppressed rows: zero contribution and scale factor 1; with
            # lambda <= 1 their m_new equals the old m anyway
            f = np.where(row_keep, rescale_factor(state.m, m_new), 1.0)
            s_kept = np.where(row_keep[:, None], s, NEG_INF)
            p_tilde = exp_tile(s_kept, m_new)
            state.l = f * state.l + rowsum(p_tilde)
            state.o = f[:, None] * state.o + p_tilde @ p.v[(j - 1) * kb : j * kb]
            state.m = np.where(row_keep, m_new, state.m)
            kept = int(row_keep.sum())
            counters.charge_rowskip_block(qb, kb, d, kept)
            stats.blocks_processed += 1
            stats.rows_masked += qb - kept

        out[(i - 1) * qb : i * qb] = finalize(state, (i - 1) * qb)

    return out, counters, stats


def vsa_forward(
    p: AttentionProblem,
    cfg: SkipConfig,
    kind: str = "sabsmax",
    qkind: str = "row_wise",
    tc1: int | None = None,
    monitor: bool = False,
):
    """Frozen-max pass composed with thresholded block skipping.

    The seeded maximum and the sink+local schedule come from the frozen-max
    pass; the per-tile rowmax is recomputed on every visited block because
    the skip test needs it, and the counters expose that cost. Non-special
    processed blocks revert the maximum to its pre-merge value (freeze).
    """
    if cfg.granularity != "block":
        raise ValueError("vsa_forward requires block granularity")
    if kind not in KEY_REPRS:
        raise ValueError(f"unknown key representation {kind!r}")
    qb, kb, d = p.blocks.q_block, p.blocks.k_block, p.blocks.head_dim
    ln_lam = cfg.ln_lambda
    counters = OpCounters()
    stats = SkipStats()
    mon = OverflowMonitor()
    out = np.empty((p.blocks.seq_len_q, d))

    kreprs = precompute_kreprs(p, kind, tc1)
    seeds = np.empty(p.blocks.seq_len_q) if monitor else None

    for i in range(1, p.t_r + 1):
        vmax = visible_key_blocks(i, qb, kb, p.t_c, p.causal)
        local = local_key_block(i, qb, kb, p.t_c)
        sched = build_schedule(i, vmax, local, reorder=True)
        qi = p.q[(i - 1) * qb : i * qb]
        m0 = m_init(qi, kreprs[: min(vmax, len(kreprs))], p.scale, qkind)
        state = SoftmaxState.fresh(qb, d, m0)
        if monitor:
            seeds[(i - 1) * qb : i * qb] = state.m

        for j in sched.order:
            s = tile_scores(p, i, j)
            m_tilde = rowmax(s)
            m_new = np.maximum(state.m, m_tilde)
            stats.blocks_visited += 1
            if _tile_skippable(m_tilde, m_new, ln_lam):
                assert np.array_equal(m_new, state.m)
                counters.charge_skipped_block(qb, kb, d)
                stats.blocks_skipped += 1
                continue
            v_j = p.v[(j - 1) * kb : j * kb]
            if j in sched.special:
                args = exp_args(s, m_new)
                mon.record(args)
                apply_rescaled_update(state, m_new, np.exp(args), v_j)
                counters.charge_full_block(qb, kb, d)
                stats.processed_special += 1
            else:
                # freeze: the merged maximum is discarded, not applied
                args = exp_args(s, state.m)
                mon.record(args)
                with np.errstate(over="ignore"):
                    apply_frozen_update(state, np.exp(args), v_j)
                counters.charge_frozen_block(qb, kb, d, with_rowmax=True)
                stats.processed_frozen += 1
            stats.blocks_processed += 1

        out[(i - 1) * qb : i * qb] = finalize(state, (i - 1) * qb)

    if monitor:
        from .reference import exact_rowmax_global

        mon.record_gap(seeds, exact_rowmax_global(p))

    return out, counters, stats, mon
