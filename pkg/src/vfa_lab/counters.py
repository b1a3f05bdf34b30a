"""Element-level operation accounting.

Counts are elements, not instructions (SIMD width belongs to the pipeline
rates in the cost model). Every forward pass charges blocks through the
same helpers the closed-form model uses, so instrumented and analytic
counts agree as integers by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass
class OpCounters:
    # element-level, per op class
    mul_scale: int = 0  # score-tile scaling multiplies
    max_rowreduce: int = 0  # elements reduced by per-tile rowmax
    max_running: int = 0  # running-max merge elements
    sub_broadcast: int = 0  # score minus running-max broadcasts
    exp_evals: int = 0  # exponential evaluations (tile + rescale)
    sum_rowreduce: int = 0  # elements reduced by rowsum
    mad_l: int = 0  # normalizer multiply-add / add elements
    rescale_mul_l: int = 0  # normalizer rescale multiplies
    rescale_mul_O: int = 0  # accumulator rescale multiplies
    tensor_macs: int = 0  # QK + PV multiply-accumulates
    # event-level bookkeeping
    rowmax_reductions: int = 0  # per-tile rowmax events
    rescale_events: int = 0  # rescale-chain applications
    blocks_processed: int = 0
    blocks_skipped: int = 0
    rescales_elided: int = 0
    rows_masked: int = 0

    def __add__(self, other: "OpCounters") -> "OpCounters":
        return OpCounters(
            **{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)}
        )

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def vector_elems(self) -> int:
        """Elements charged to the vector pipeline in the latency model."""
        return (
            self.mul_scale
            + self.max_rowreduce
            + self.max_running
            + self.sub_broadcast
            + self.sum_rowreduce
            + self.mad_l
            + self.rescale_mul_l
            + self.rescale_mul_O
        )

    # Block-class charges. q = query rows, k = key columns, d = head dim.

    def charge_full_block(self, q: int, k: int, d: int) -> None:
        """Baseline update: rowmax, running max, rescale chain, accumulate."""
        self.mul_scale += q * k
        self.max_rowreduce += q * k
        self.max_running += q
        self.sub_broadcast += q * k
        self.exp_evals += q * k + q  # tile exps + per-row rescale exp
        self.sum_rowreduce += q * k
        self.mad_l += q
        self.rescale_mul_l += q
        self.rescale_mul_O += q * d
        self.tensor_macs += 2 * q * k * d
        self.rowmax_reductions += 1
        self.rescale_events += 1
        self.blocks_processed += 1

    def charge_frozen_block(self, q: int, k: int, d: int, with_rowmax: bool = False) -> None:
        """Frozen-max accumulate: no running-max update, no rescale.

        with_rowmax charges the per-tile rowmax that a skip test still
        performs on a visited block.
        """
        self.mul_scale += q * k
        self.sub_broadcast += q * k
        self.exp_evals += q * k
        self.sum_rowreduce += q * k
        self.mad_l += q
        self.tensor_macs += 2 * q * k * d
        if with_rowmax:
            self.max_rowreduce += q * k
            self.max_running += q
            self.rowmax_reductions += 1
        self.blocks_processed += 1

    def charge_skipped_block(self, q: int, k: int, d: int) -> None:
        """Block rejected by a skip test: scores and rowmax only, no V work."""
        self.mul_scale += q * k
        self.max_rowreduce += q * k
        self.max_running += q
        self.tensor_macs += q * k * d  # QK only
        self.rowmax_reductions += 1
        self.blocks_skipped += 1

    def charge_elided_block(self, q: int, k: int, d: int) -> None:
        """Processed block whose rescale chain was elided (factor kept at 1)."""
        self.mul_scale += q * k
        self.max_rowreduce += q * k
        self.max_running += q
        self.sub_broadcast += q * k
        self.exp_evals += q * k
        self.sum_rowreduce += q * k
        self.mad_l += q
        self.tensor_macs += 2 * q * k * d
        self.rowmax_reductions += 1
        self.rescales_elided += 1
        self.blocks_processed += 1

    def charge_rowskip_block(self, q: int, k: int, d: int, kept: int) -> None:
        """Row-masked update: only kept rows pay exp/rescale work."""
        self.mul_scale += q * k
        self.max_rowreduce += q * k
        self.max_running += q
        self.sub_broadcast += kept * k
        self.exp_evals += kept * k + kept
        self.sum_rowreduce += kept * k
        self.mad_l += q
        self.rescale_mul_l += kept
        self.rescale_mul_O += kept * d
        self.tensor_macs += 2 * q * k * d
        self.rowmax_reductions += 1
        self.rescale_events += 1
        self.rows_masked += q - kept
        self.blocks_processed += 1
