import mpmath
import numpy as np
import pytest

from vfa_lab import AttentionProblem, BlockSpec, FullyMaskedRowError, naive_attention
from vfa_lab.reference import exact_rowmax_global, masked_scores, tile_scores

from conftest import make_problem, max_rel_err


def mp_attention(q, k, v, scale, causal):
    """Extended-precision softmax attention, entirely in mpmath."""
    mpmath.mp.dps = 60
    n, d = q.shape
    nk = k.shape[0]
    out = np.empty((n, d))
    for r in range(n):
        scores = []
        for c in range(nk):
            if causal and c > r:
                scores.append(None)
                continue
            s = mpmath.mpf(0)
            for t in range(d):
                s += mpmath.mpf(q[r, t]) * mpmath.mpf(k[c, t])
            scores.append(s * mpmath.mpf(scale))
        live = [s for s in scores if s is not None]
        m = max(live)
        ws = [mpmath.e ** (s - m) if s is not None else mpmath.mpf(0) for s in scores]
        z = sum(ws)
        for t in range(d):
            acc = mpmath.mpf(0)
            for c in range(nk):
                acc += ws[c] * mpmath.mpf(v[c, t])
            out[r, t] = float(acc / z)
    return out


@pytest.mark.parametrize("causal", [False, True])
def test_naive_matches_extended_precision(causal):
    p = make_problem(seed=13, n=8, d=4, q_block=4, k_block=4, causal=causal)
    ref = mp_attention(p.q, p.k, p.v, p.scale, causal)
    assert max_rel_err(naive_attention(p), ref) < 1e-13


def test_default_scale_is_inverse_sqrt_d():
    p = make_problem(n=64, d=16, q_block=32, k_block=32)
    assert p.scale == 1.0 / np.sqrt(16)


def test_causal_requires_square():
    spec = BlockSpec(seq_len_q=32, seq_len_k=64, head_dim=8, q_block=32, k_block=32)
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        AttentionProblem(
            q=rng.normal(size=(32, 8)),
            k=rng.normal(size=(64, 8)),
            v=rng.normal(size=(64, 8)),
            blocks=spec,
            causal=True,
        )


def test_tile_scores_agree_with_masked_scores():
    p = make_problem(seed=4, n=128, d=16, q_block=32, k_block=64, causal=True)
    full = masked_scores(p)
    for i in range(1, p.t_r + 1):
        for j in range(1, p.t_c + 1):
            tile = tile_scores(p, i, j)
            assert np.array_equal(tile, full[(i - 1) * 32 : i * 32, (j - 1) * 64 : j * 64])


def test_tile_scores_index_bounds():
    p = make_problem(n=64, d=8, q_block=32, k_block=32)
    with pytest.raises(IndexError):
        tile_scores(p, 0, 1)
    with pytest.raises(IndexError):
        tile_scores(p, 1, 3)


def test_causal_rows_sum_to_one():
    p = make_problem(seed=2, n=64, d=8, q_block=32, k_block=32, causal=True)
    out = naive_attention(p)
    # row 0 attends only to key 0: output equals v[0]
    assert np.allclose(out[0], p.v[0], rtol=0, atol=0)


def test_exact_rowmax_global_causal():
    p = make_problem(seed=6, n=64, d=8, q_block=32, k_block=32, causal=True)
    m = exact_rowmax_global(p)
    full = masked_scores(p)
    assert np.array_equal(m, full.max(axis=1))


def test_naive_uniform_weights_average_values():
    # equal scores weight both values 1/2: output is exactly their mean
    spec = BlockSpec(seq_len_q=1, seq_len_k=2, head_dim=1, q_block=1, k_block=1)
    p = AttentionProblem(
        q=np.array([[0.0]]),
        k=np.array([[0.0], [0.0]]),
        v=np.array([[1.0], [3.0]]),
        blocks=spec,
    )
    assert naive_attention(p)[0, 0] == 2.0


def test_naive_single_key_returns_value_row():
    spec = BlockSpec(seq_len_q=4, seq_len_k=1, head_dim=8, q_block=4, k_block=1)
    rng = np.random.default_rng(21)
    p = AttentionProblem(
        q=rng.normal(size=(4, 8)),
        k=rng.normal(size=(1, 8)),
        v=rng.normal(size=(1, 8)),
        blocks=spec,
    )
    out = naive_attention(p)
    for r in range(4):
        assert np.array_equal(out[r], p.v[0])


def test_naive_shift_invariance():
    # adding a constant to every score (via a rank-one K update against a
    # constant query coordinate) leaves the softmax output unchanged
    spec = BlockSpec(seq_len_q=8, seq_len_k=8, head_dim=4, q_block=4, k_block=4)
    rng = np.random.default_rng(22)
    q = rng.normal(size=(8, 4))
    q[:, 0] = 1.0
    k = rng.normal(size=(8, 4))
    v = rng.normal(size=(8, 4))
    base = naive_attention(AttentionProblem(q=q, k=k, v=v, blocks=spec))
    k_shift = k.copy()
    k_shift[:, 0] += 7.5
    shifted = naive_attention(AttentionProblem(q=q, k=k_shift, v=v, blocks=spec))
    assert max_rel_err(shifted, base) <= 1e-12


def test_exact_blockmax_fully_masked_tile_is_neg_inf():
    from vfa_lab.reference import exact_blockmax

    p = make_problem(seed=7, n=128, d=8, q_block=32, k_block=32, causal=True)
    # key block 4 sits entirely above the causal diagonal for query block 1
    bm = exact_blockmax(p, 1, 4)
    assert bm.shape == (32,)
    assert np.all(np.isneginf(bm))


def test_fully_masked_row_raises_in_finalize():
    from vfa_lab.core import SoftmaxState, finalize

    state = SoftmaxState.fresh(q_rows=2, d=4)
    state.l[0] = 1.0
    state.m[0] = 0.0
    with pytest.raises(FullyMaskedRowError) as exc:
        finalize(state, row_base=10)
    assert exc.value.row == 11
