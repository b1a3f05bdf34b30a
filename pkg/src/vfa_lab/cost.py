"""Closed-form op counts and the analytic multi-pipeline latency model.

Latency of one pipeline = (element count charged to it) / (its throughput
rate), with score-tile elements optionally carrying an additive per-element
vector surcharge (dequantization work in the low-precision presets). All
percentages are normalized so the C16V32 tensor latency of the same
workload equals 100.

The shipped per-preset calibration files contain fitted rates/surcharges,
not hardware ground truth; see tools/fit_calibration.py for the one-shot
fit procedure. The FA/VFA vector ratio, by contrast, falls directly out of
the op counts and is not a fitted quantity.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .core import local_key_block, visible_key_blocks
from .counters import OpCounters
from .tensor import BlockSpec

PRESET_NAMES = ("C16V32", "C8V32", "C4V32", "C4V16", "C4V16_2xExp")

# (t_r, t_c, q_block, k_block, head_dim), non-causal: the reference
# workload behind the shipped preset breakdowns
REFERENCE_WORKLOAD = (4, 256, 64, 64, 64)

_CALIBRATION_KEYS = ("tensor_rate", "exp_rate", "vector_rate", "vector_surcharge")


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class PipelinePreset:
    """Throughput parameters for one hardware configuration.

    Rates are relative (elements per cycle in units where the C16V32
    tensor rate is 1). vector_surcharge is an additive cost per score-tile
    element, charged to the vector pipeline.
    """

    name: str
    tensor_rate: float
    exp_rate: float
    vector_rate: float
    vector_surcharge: float = 0.0
    workload_shape: tuple = REFERENCE_WORKLOAD

    def __post_init__(self):
        if min(self.tensor_rate, self.exp_rate, self.vector_rate) <= 0:
            raise CalibrationError(f"preset {self.name}: all rates must be > 0")


def parse_calibration(text: str, name: str = "<calibration>") -> dict:
    """Parse `key = number` lines; comments (#) and blanks allowed."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CalibrationError(f"{name}:{lineno}: expected 'key = number'")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _CALIBRATION_KEYS:
            raise CalibrationError(f"{name}:{lineno}: unknown key {key!r}")
        if key in values:
            raise CalibrationError(f"{name}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = float(val.strip())
        except ValueError:
            raise CalibrationError(f"{name}:{lineno}: bad number {val.strip()!r}") from None
    missing = [k for k in _CALIBRATION_KEYS if k != "vector_surcharge" and k not in values]
    if missing:
        raise CalibrationError(f"{name}: missing keys {missing}")
    return values


def load_preset(name: str) -> PipelinePreset:
    """Load a shipped preset by name (calibration/<name>.txt)."""
    if name not in PRESET_NAMES:
        raise CalibrationError(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}"
        )
    text = (
        resources.files("vfa_lab").joinpath(f"calibration/{name.lower()}.txt").read_text()
    )
    vals = parse_calibration(text, name)
    return PipelinePreset(name=name, **vals)


def load_all_presets() -> dict:
    return {name: load_preset(name) for name in PRESET_NAMES}


# ---------------------------------------------------------------------------
# closed-form counts


def block_mix(spec: BlockSpec, variant: str, causal: bool = False) -> dict:
    """Per-class visited-block totals for a dense (no-skip) schedule."""
    qb, kb = spec.q_block, spec.k_block
    full = frozen = 0
    for i in range(1, spec.t_r + 1):
        vmax = visible_key_blocks(i, qb, kb, spec.t_c, causal)
        if variant == "fa":
            full += vmax
        elif variant == "vfa":
            local = local_key_block(i, qb, kb, spec.t_c)
            special = len({1, local} & set(range(1, vmax + 1)))
            full += special
            frozen += vmax - special
        else:
            raise ValueError(f"block_mix supports 'fa' and 'vfa', got {variant!r}")
    return {"full": full, "frozen": frozen, "frozen_rowmax": 0, "skipped": 0}


def counts_from_mix(spec: BlockSpec, mix: dict) -> OpCounters:
    """Build counters from per-class block totals via the same charge paths
    the instrumented passes use."""
    c = OpCounters()
    qb, kb, d = spec.q_block, spec.k_block, spec.head_dim
    for _ in range(mix.get("full", 0)):
        c.charge_full_block(qb, kb, d)
    for _ in range(mix.get("frozen", 0)):
        c.charge_frozen_block(qb, kb, d)
    for _ in range(mix.get("frozen_rowmax", 0)):
        c.charge_frozen_block(qb, kb, d, with_rowmax=True)
    for _ in range(mix.get("skipped", 0)):
        c.charge_skipped_block(qb, kb, d)
    for _ in range(mix.get("elided", 0)):
        c.charge_elided_block(qb, kb, d)
    return c


def analytic_counts(spec: BlockSpec, variant: str, causal: bool = False) -> OpCounters:
    """Closed-form counters for a dense run of the given variant."""
    return counts_from_mix(spec, block_mix(spec, variant, causal))


def analytic_counts_sparse(spec: BlockSpec, stats) -> OpCounters:
    """Counters implied by observed skip statistics (threshold variants)."""
    mix = {
        "full": stats.blocks_processed - stats.rescales_elided - stats.processed_frozen,
        "frozen_rowmax": stats.processed_frozen,
        "skipped": stats.blocks_skipped,
        "elided": stats.rescales_elided,
    }
    return counts_from_mix(spec, mix)


# ---------------------------------------------------------------------------
# latency model


def latency_breakdown(
    counters: OpCounters, preset: PipelinePreset, reference: PipelinePreset | None = None
) -> dict:
    """Per-pipeline latency percentages for one workload's counters."""
    if reference is None:
        reference = load_preset("C16V32")
    denom = counters.tensor_macs / reference.tensor_rate
    if denom == 0:
        raise ValueError("workload has no tensor work to normalize against")
    tensor = counters.tensor_macs / preset.tensor_rate
    exp = counters.exp_evals / preset.exp_rate
    vector = (
        counters.vector_elems / preset.vector_rate
        + counters.mul_scale * preset.vector_surcharge
    )
    return {
        "tensor_pct": 100.0 * tensor / denom,
        "exp_pct": 100.0 * exp / denom,
        "vector_pct": 100.0 * vector / denom,
    }


def reference_spec(shape: tuple = REFERENCE_WORKLOAD) -> BlockSpec:
    t_r, t_c, qb, kb, d = shape
    return BlockSpec(
        seq_len_q=t_r * qb, seq_len_k=t_c * kb, head_dim=d, q_block=qb, k_block=kb
    )


def preset_table(presets=None, variants=("fa", "vfa")) -> list:
    """The full preset x series latency matrix on the reference workload.

    Tensor and exponential columns use the dense baseline counts (both
    variants share those pipelines on this workload).
    """
    if presets is None:
        presets = [load_preset(n) for n in PRESET_NAMES]
    reference = next((p for p in presets if p.name == "C16V32"), None) or load_preset(
        "C16V32"
    )
    rows = []
    for preset in presets:
        spec = reference_spec(preset.workload_shape)
        fa_counts = analytic_counts(spec, "fa")
        base = latency_breakdown(fa_counts, preset, reference)
        row = {
            "preset": preset.name,
            "tensor_pct": base["tensor_pct"],
            "exp_pct": base["exp_pct"],
        }
        for variant in variants:
            counts = fa_counts if variant == "fa" else analytic_counts(spec, variant)
            row[f"vector_{variant}_pct"] = latency_breakdown(counts, preset, reference)[
                "vector_pct"
            ]
        rows.append(row)
    return rows
