"""Attention-kernel laboratory.

Streaming-softmax attention variants (baseline, frozen-max, threshold-
skipped compositions), an exact oracle, element-level op counting, an
analytic multi-pipeline latency model, and attention statistics, all in
deterministic float64 numpy.
"""

from .analysis import (
    StabilizationReport,
    blockmax_curve,
    cos_sim,
    l2_norm_profile,
    running_max_curve,
    stabilization_positions,
)
from .cost import (
    PRESET_NAMES,
    CalibrationError,
    PipelinePreset,
    analytic_counts,
    analytic_counts_sparse,
    latency_breakdown,
    load_preset,
    parse_calibration,
    preset_table,
)
from .counters import OpCounters
from .errors import FullyMaskedRowError, NormalizerUnderflowError
from .fa import fa_forward
from .reference import (
    AttentionProblem,
    exact_blockmax,
    exact_rowmax_global,
    naive_attention,
)
from .sparse import (
    SkipConfig,
    SkipStats,
    blasst_forward,
    blasst_fa4_forward,
    blasst_rowskip_forward,
    vsa_forward,
)
from .tensor import (
    BlockSpec,
    StructuredData,
    gen_gaussian,
    gen_structured,
)
from .tensor_io import TensorIOError, read_matrix, write_matrix
from .vfa import (
    KEY_REPRS,
    QUERY_REPRS,
    OverflowMonitor,
    block_repr,
    m_init,
    precompute_kreprs,
    query_repr,
    sabsmax,
    vfa_forward,
)

__version__ = "0.1.0"

__all__ = [
    "AttentionProblem",
    "BlockSpec",
    "CalibrationError",
    "FullyMaskedRowError",
    "KEY_REPRS",
    "NormalizerUnderflowError",
    "OpCounters",
    "OverflowMonitor",
    "PRESET_NAMES",
    "PipelinePreset",
    "QUERY_REPRS",
    "SkipConfig",
    "SkipStats",
    "StabilizationReport",
    "StructuredData",
    "TensorIOError",
    "analytic_counts",
    "analytic_counts_sparse",
    "blasst_fa4_forward",
    "blasst_forward",
    "blasst_rowskip_forward",
    "block_repr",
    "blockmax_curve",
    "cos_sim",
    "exact_blockmax",
    "exact_rowmax_global",
    "fa_forward",
    "gen_gaussian",
    "gen_structured",
    "l2_norm_profile",
    "latency_breakdown",
    "load_preset",
    "m_init",
    "naive_attention",
    "parse_calibration",
    "precompute_kreprs",
    "preset_table",
    "query_repr",
    "read_matrix",
    "running_max_curve",
    "sabsmax",
    "stabilization_positions",
    "vfa_forward",
    "vsa_forward",
    "write_matrix",
]
