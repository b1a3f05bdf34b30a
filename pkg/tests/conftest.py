import numpy as np
import pytest

from vfa_lab import AttentionProblem, BlockSpec, gen_gaussian, gen_structured


def make_problem(
    seed: int = 0,
    n: int = 256,
    d: int = 64,
    q_block: int = 64,
    k_block: int = 64,
    causal: bool = False,
    std: float = 1.0,
) -> AttentionProblem:
    spec = BlockSpec(seq_len_q=n, seq_len_k=n, head_dim=d, q_block=q_block, k_block=k_block)
    q, k, v = gen_gaussian(spec, seed, std=std)
    return AttentionProblem(q=q, k=k, v=v, blocks=spec, causal=causal)


def make_structured_problem(
    seed: int = 0,
    n: int = 256,
    d: int = 32,
    pattern: str = "sink_local",
    boost: float = 10.0,
    q_block: int = 64,
    k_block: int = 64,
    causal: bool = False,
):
    spec = BlockSpec(seq_len_q=n, seq_len_k=n, head_dim=d, q_block=q_block, k_block=k_block)
    data = gen_structured(spec, seed, pattern, boost)
    p = AttentionProblem(q=data.q, k=data.k, v=data.v, blocks=spec, causal=causal)
    return p, data


@pytest.fixture
def small_problem():
    return make_problem(seed=7, n=128, d=32, q_block=32, k_block=32)


def max_rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max over rows of ||a_r - b_r||_inf / ||b_r||_inf."""
    diff = np.abs(a - b).max(axis=1)
    denom = np.maximum(np.abs(b).max(axis=1), np.finfo(np.float64).tiny)
    return float((diff / denom).max())
