import pytest

from vfa_lab import (
    PRESET_NAMES,
    CalibrationError,
    PipelinePreset,
    SkipConfig,
    analytic_counts,
    analytic_counts_sparse,
    blasst_forward,
    fa_forward,
    latency_breakdown,
    load_preset,
    parse_calibration,
    preset_table,
    vfa_forward,
    vsa_forward,
)
from vfa_lab.cost import reference_spec

from conftest import make_problem

FIGURE1 = {
    "C16V32": (100.0, 46.0, 77.0, 46.2),
    "C8V32": (50.0, 46.0, 77.0, 46.2),
    "C4V32": (17.0, 46.0, 85.0, 54.4),
    "C4V16": (17.0, 46.0, 43.0, 27.3),
    "C4V16_2xExp": (17.0, 14.0, 24.0, 15.2),
}


def test_parse_calibration_rejects_unknown_keys():
    with pytest.raises(CalibrationError):
        parse_calibration("tensor_rate = 1\nwarp_size = 32\n")


def test_parse_calibration_rejects_bad_lines():
    with pytest.raises(CalibrationError):
        parse_calibration("tensor_rate 1\n")
    with pytest.raises(CalibrationError):
        parse_calibration("tensor_rate = fast\n")
    with pytest.raises(CalibrationError):
        parse_calibration("tensor_rate = 1\ntensor_rate = 2\n")
    with pytest.raises(CalibrationError):
        parse_calibration("tensor_rate = 1\n")  # missing exp/vector rates


def test_parse_calibration_comments_and_blanks():
    vals = parse_calibration(
        "# preset\n\ntensor_rate = 1.0  # base\nexp_rate = 2\nvector_rate = 3\n"
    )
    assert vals == {"tensor_rate": 1.0, "exp_rate": 2.0, "vector_rate": 3.0}


def test_unknown_preset_lists_available():
    with pytest.raises(CalibrationError) as exc:
        load_preset("H100")
    assert "C16V32" in str(exc.value)


def test_nonpositive_rates_rejected():
    with pytest.raises(CalibrationError):
        PipelinePreset(name="x", tensor_rate=0.0, exp_rate=1.0, vector_rate=1.0)


def test_preset_table_matches_published_values():
    rows = {row["preset"]: row for row in preset_table()}
    for name, (tensor, exp, vec_fa, vec_vfa) in FIGURE1.items():
        row = rows[name]
        assert abs(row["tensor_pct"] - tensor) / tensor < 0.01
        assert abs(row["exp_pct"] - exp) / exp < 0.01
        assert abs(row["vector_fa_pct"] - vec_fa) / vec_fa < 0.01
        assert abs(row["vector_vfa_pct"] - vec_vfa) / vec_vfa < 0.01


def test_vector_ratio_near_0_6():
    rows = {row["preset"]: row for row in preset_table()}
    ratio = rows["C16V32"]["vector_vfa_pct"] / rows["C16V32"]["vector_fa_pct"]
    assert abs(ratio - 0.600) / 0.600 < 0.02


def test_scale_invariance_of_percentages():
    preset = load_preset("C4V16")
    scaled = PipelinePreset(
        name="scaled",
        tensor_rate=preset.tensor_rate * 3.0,
        exp_rate=preset.exp_rate * 3.0,
        vector_rate=preset.vector_rate * 3.0,
        vector_surcharge=preset.vector_surcharge / 3.0,
    )
    ref = load_preset("C16V32")
    scaled_ref = PipelinePreset(
        name="ref_scaled",
        tensor_rate=ref.tensor_rate * 3.0,
        exp_rate=ref.exp_rate * 3.0,
        vector_rate=ref.vector_rate * 3.0,
    )
    counts = analytic_counts(reference_spec(), "fa")
    a = latency_breakdown(counts, preset, ref)
    b = latency_breakdown(counts, scaled, scaled_ref)
    for key in a:
        assert b[key] == pytest.approx(a[key], rel=1e-12)


def test_vfa_vector_latency_strictly_below_fa():
    counts_fa = analytic_counts(reference_spec(), "fa")
    counts_vfa = analytic_counts(reference_spec(), "vfa")
    ref = load_preset("C16V32")
    for name in PRESET_NAMES:
        preset = load_preset(name)
        fa_v = latency_breakdown(counts_fa, preset, ref)["vector_pct"]
        vfa_v = latency_breakdown(counts_vfa, preset, ref)["vector_pct"]
        assert vfa_v < fa_v


def test_instrumented_counts_equal_analytic():
    for causal in (False, True):
        p = make_problem(seed=1, n=256, d=32, q_block=64, k_block=64, causal=causal)
        _, fa_counters, _ = fa_forward(p)
        assert fa_counters.as_dict() == analytic_counts(p.blocks, "fa", causal).as_dict()
        _, vfa_counters, _, _ = vfa_forward(p)
        assert vfa_counters.as_dict() == analytic_counts(p.blocks, "vfa", causal).as_dict()


def test_sparse_counts_reconstructed_from_stats():
    p = make_problem(seed=2, n=256, d=32, q_block=64, k_block=64)
    _, counters, stats = blasst_forward(p, SkipConfig(lam=1e-2))
    assert counters.as_dict() == analytic_counts_sparse(p.blocks, stats).as_dict()
    _, counters, stats, _ = vsa_forward(p, SkipConfig(lam=1e-2))
    assert counters.as_dict() == analytic_counts_sparse(p.blocks, stats).as_dict()


def test_fa_rows_independent_of_vfa_request():
    both = {r["preset"]: r for r in preset_table(variants=("fa", "vfa"))}
    fa_only = {r["preset"]: r for r in preset_table(variants=("fa",))}
    for name in PRESET_NAMES:
        assert both[name]["vector_fa_pct"] == fa_only[name]["vector_fa_pct"]
        assert both[name]["tensor_pct"] == fa_only[name]["tensor_pct"]


def test_all_percentages_nonnegative():
    for row in preset_table():
        for key, val in row.items():
            if key != "preset":
                assert val >= 0.0
