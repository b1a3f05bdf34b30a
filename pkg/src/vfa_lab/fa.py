"""Streaming online-softmax baseline (FlashAttention-2-style recurrence).

Per key block: per-tile rowmax, running-max merge, exp, and the rescale
chain on the normalizer and accumulator. The rescale is applied (and
counted) even when the running max did not change, so the op accounting
reflects the unconditional baseline update.
"""

from __future__ import annotations

import numpy as np

from .core import (
    SoftmaxState,
    StateTrace,
    TraceRecord,
    apply_rescaled_update,
    exp_tile,
    finalize,
    local_key_block,
    visible_key_blocks,
)
from .counters import OpCounters
from .reference import AttentionProblem, tile_scores
from .tensor import rowmax


def fa_forward(p: AttentionProblem, order_hook=None):
    """Run the baseline streaming pass.

    order_hook(i, blocks) may return a permutation of the visible key-block
    indices for query block i; it exists for order-invariance testing only.

    Returns (output, counters, trace).
    """
    qb, kb, d = p.blocks.q_block, p.blocks.k_block, p.blocks.head_dim
    counters = OpCounters()
    trace = StateTrace(q_block=qb)
    out = np.empty((p.blocks.seq_len_q, d))

    for i in range(1, p.t_r + 1):
        vmax = visible_key_blocks(i, qb, kb, p.t_c, p.causal)
        blocks = list(range(1, vmax + 1))
        if order_hook is not None:
            blocks = list(order_hook(i, blocks))
        state = SoftmaxState.fresh(qb, d)
        records = trace.start_block(local_key_block(i, qb, kb, p.t_c))

        for pos, j in enumerate(blocks):
            s = tile_scores(p, i, j)
            m_tilde = rowmax(s)
            m_new = np.maximum(state.m, m_tilde)
            p_tilde = exp_tile(s, m_new)
            v_j = p.v[(j - 1) * kb : j * kb]
            apply_rescaled_update(state, m_new, p_tilde, v_j)
            counters.charge_full_block(qb, kb, d)
            records.append(TraceRecord(pos, j, state.m.copy()))

        out[(i - 1) * qb : i * qb] = finalize(state, (i - 1) * qb)

    return out, counters, trace
