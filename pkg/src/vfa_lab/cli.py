"""Command-line front end.

Subcommands:
  gen      write deterministic Q/K/V tensor files plus a manifest
  run      execute one attention variant, emit a JSON report
  compare  run two variants on identical tensors, emit a diff report
  cost     latency-model tables from shipped calibration presets
  analyze  attention statistics (stabilization, similarity, norms, blockmax)

Config precedence: command-line flags > JSON config file (--config) >
defaults. Reports are JSON with top-level {meta, values, counters, stats,
monitor}; analyses additionally write one CSV per analysis. Repeat runs
with identical inputs differ only in meta.timestamp and meta.wall_time_s.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import (
    blockmax_curve,
    cos_sim,
    l2_norm_profile,
    stabilization_positions,
)
from .cost import (
    PRESET_NAMES,
    CalibrationError,
    load_preset,
    preset_table,
)
from .errors import FullyMaskedRowError, NormalizerUnderflowError
from .fa import fa_forward
from .reference import AttentionProblem, naive_attention
from .sparse import (
    SkipConfig,
    blasst_forward,
    blasst_fa4_forward,
    blasst_rowskip_forward,
    vsa_forward,
)
from .tensor import PATTERNS, BlockSpec, gen_gaussian, gen_structured
from .tensor_io import TensorIOError, read_matrix, write_matrix
from .vfa import KEY_REPRS, QUERY_REPRS, vfa_forward

VARIANTS = (
    "naive",
    "fa",
    "vfa",
    "blasst",
    "blasst_swa",
    "blasst_fa4",
    "blasst_rowskip",
    "vsa",
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


_DEFAULTS = {
    "seq_len": 512,
    "head_dim": 64,
    "q_block": 64,
    "k_block": 64,
    "causal": False,
    "variant": "fa",
    "repr": "sabsmax",
    "q_repr": "row_wise",
    "lambda": None,
    "tau": 0.0,
    "reorder": True,
    "m_init": True,
    "monitor": False,
    "seed": 0,
    "pattern": "gaussian",
    "boost": 10.0,
    "std": 1.0,
    "preset": "C16V32",
    "tc1": None,
    "threads": 1,
    "oracle": False,
}

# fields a variant is allowed to override beyond the common geometry/flags
_VARIANT_FIELDS = {
    "naive": set(),
    "fa": set(),
    "vfa": {"repr", "q_repr", "reorder", "m_init", "tc1"},
    "blasst": {"lambda"},
    "blasst_swa": {"lambda"},
    "blasst_fa4": {"lambda", "tau"},
    "blasst_rowskip": {"lambda"},
    "vsa": {"lambda", "repr", "q_repr", "tc1"},
}
_COMMON_FIELDS = set(_DEFAULTS) - {"repr", "q_repr", "lambda", "tau", "reorder",
                                   "m_init", "tc1"}


@dataclass
class RunConfig:
    """Validated, fully merged configuration for one command."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]


def _parse_lambda(raw) -> float | None:
    if raw is None or raw == "none" or raw == "None":
        return None
    try:
        lam = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"lambda: expected a real in (0, 1] or 'none', got {raw!r}")
    if not (0.0 < lam <= 1.0):
        raise ConfigError(f"lambda: must be in (0, 1], got {lam}")
    return lam


def build_config(args: argparse.Namespace, need_variant: bool = False) -> RunConfig:
    """Merge flags over JSON config over defaults, then validate."""
    provided: dict = {}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path) as fh:
                loaded = json.load(fh)
        except OSError as e:
            raise ConfigError(f"config: cannot read {config_path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config: invalid JSON in {config_path}: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError("config: top-level JSON value must be an object")
        for key, val in loaded.items():
            if key not in _DEFAULTS:
                raise ConfigError(f"config: unknown key {key!r}")
            provided[key] = val
    for key in _DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            provided[key] = flag

    merged = dict(_DEFAULTS)
    merged.update(provided)

    merged["lambda"] = _parse_lambda(merged["lambda"])
    if merged["tau"] is not None and float(merged["tau"]) < 0:
        raise ConfigError(f"tau: must be >= 0, got {merged['tau']}")
    if merged["variant"] not in VARIANTS:
        raise ConfigError(f"variant: unknown {merged['variant']!r}")
    if merged["repr"] not in KEY_REPRS:
        raise ConfigError(f"repr: unknown {merged['repr']!r}")
    if merged["q_repr"] not in QUERY_REPRS:
        raise ConfigError(f"q_repr: unknown {merged['q_repr']!r}")
    if merged["pattern"] not in ("gaussian",) + PATTERNS:
        raise ConfigError(f"pattern: unknown {merged['pattern']!r}")
    for key in ("seq_len", "head_dim", "q_block", "k_block"):
        if int(merged[key]) < 1:
            raise ConfigError(f"{key}: must be >= 1, got {merged[key]}")
        merged[key] = int(merged[key])
    merged["seed"] = int(merged["seed"]) & (2**64 - 1)
    threads = int(os.environ.get("VFA_LAB_THREADS", merged["threads"]))
    if threads < 1:
        raise ConfigError(f"threads: must be >= 1, got {threads}")
    merged["threads"] = threads

    if need_variant:
        variant = merged["variant"]
        allowed = _COMMON_FIELDS | _VARIANT_FIELDS[variant]
        for key in provided:
            if key not in allowed and provided[key] != _DEFAULTS[key]:
                raise ConfigError(
                    f"{key}: not applicable to variant {variant!r}"
                )
    return RunConfig(merged)


# ---------------------------------------------------------------------------
# shared plumbing


def _checksum(m: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(str(m.shape).encode())
    h.update(np.ascontiguousarray(m).tobytes())
    return h.hexdigest()


def _load_tensors(data_dir: str):
    d = Path(data_dir)
    tensors = {}
    for name in ("q", "k", "v"):
        path = d / f"{name}.vft"
        if not path.exists():
            raise DataError(f"missing tensor file {path}")
        tensors[name] = read_matrix(str(path))
    return tensors["q"], tensors["k"], tensors["v"]


def _problem_from(cfg: RunConfig, q, k, v) -> AttentionProblem:
    n_q, d = q.shape
    if k.shape[1] != d or v.shape[1] != d or k.shape[0] != v.shape[0]:
        raise DataError(
            f"inconsistent tensor shapes: q{q.shape} k{k.shape} v{v.shape}"
        )
    try:
        blocks = BlockSpec(
            seq_len_q=n_q,
            seq_len_k=k.shape[0],
            head_dim=d,
            q_block=cfg["q_block"],
            k_block=cfg["k_block"],
        )
        return AttentionProblem(q=q, k=k, v=v, blocks=blocks, causal=cfg["causal"])
    except ValueError as e:
        raise DataError(str(e)) from e


def _execute(cfg: RunConfig, p: AttentionProblem):
    """Dispatch one variant. Returns (out, counters, stats, monitor)."""
    variant = cfg["variant"]
    if variant == "naive":
        return naive_attention(p), None, None, None
    if variant == "fa":
        out, counters, _ = fa_forward(p)
        return out, counters, None, None
    if variant == "vfa":
        out, counters, _, mon = vfa_forward(
            p,
            kind=cfg["repr"],
            reorder=cfg["reorder"],
            use_m_init=cfg["m_init"],
            qkind=cfg["q_repr"],
            tc1=cfg["tc1"],
            monitor=cfg["monitor"],
        )
        return out, counters, None, mon
    if variant in ("blasst", "blasst_swa"):
        skip = SkipConfig(lam=cfg["lambda"])
        order = "sink_local" if variant == "blasst_swa" else "sequential"
        out, counters, stats = blasst_forward(p, skip, order=order)
        return out, counters, stats, None
    if variant == "blasst_fa4":
        skip = SkipConfig(lam=cfg["lambda"], tau=float(cfg["tau"]))
        out, counters, stats = blasst_fa4_forward(p, skip)
        return out, counters, stats, None
    if variant == "blasst_rowskip":
        skip = SkipConfig(lam=cfg["lambda"], granularity="row")
        out, counters, stats = blasst_rowskip_forward(p, skip)
        return out, counters, stats, None
    if variant == "vsa":
        skip = SkipConfig(lam=cfg["lambda"])
        out, counters, stats, mon = vsa_forward(
            p,
            skip,
            kind=cfg["repr"],
            qkind=cfg["q_repr"],
            tc1=cfg["tc1"],
            monitor=cfg["monitor"],
        )
        return out, counters, stats, mon
    raise ConfigError(f"variant: unknown {variant!r}")


def _monitor_dict(mon) -> dict | None:
    if mon is None:
        return None
    return {
        "exp_arg_max": mon.exp_arg_max,
        "count_over_f16": mon.count_over_f16,
        "count_over_f32": mon.count_over_f32,
        "calibration_gap": mon.calibration_gap,
    }


def _write_report(path: str, command: str, cfg_values: dict, values: dict,
                  counters=None, stats=None, monitor=None, wall_time: float = 0.0):
    report = {
        "meta": {
            "command": command,
            "config": {k: v for k, v in sorted(cfg_values.items())},
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "wall_time_s": wall_time,
        },
        "values": values,
        "counters": counters.as_dict() if counters is not None else None,
        "stats": stats.as_dict() if stats is not None else None,
        "monitor": monitor,
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    if path == "-":
        print(text)
    else:
        Path(path).write_text(text + "\n")
    return report


def _rel_err(out: np.ndarray, ref: np.ndarray):
    """Row-wise relative error: ||diff_row||_inf / ||ref_row||_inf."""
    diff = np.abs(out - ref).max(axis=1)
    denom = np.maximum(np.abs(ref).max(axis=1), np.finfo(np.float64).tiny)
    rel = diff / denom
    return float(rel.max()), float(rel.mean())


def _write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)  # RFC-4180 quoting is the csv module default
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    cfg = build_config(args)
    spec = BlockSpec(
        seq_len_q=cfg["seq_len"],
        seq_len_k=cfg["seq_len"],
        head_dim=cfg["head_dim"],
        q_block=cfg["q_block"],
        k_block=cfg["k_block"],
    )
    planted = None
    if cfg["pattern"] == "gaussian":
        q, k, v = gen_gaussian(spec, cfg["seed"], std=float(cfg["std"]))
    else:
        try:
            data = gen_structured(spec, cfg["seed"], cfg["pattern"], float(cfg["boost"]))
        except ValueError as e:
            raise ConfigError(str(e)) from e
        q, k, v, planted = data.q, data.k, data.v, data.planted_block

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, m in (("q", q), ("k", k), ("v", v)):
        write_matrix(str(out_dir / f"{name}.vft"), m)
    manifest = {
        "pattern": cfg["pattern"],
        "seed": cfg["seed"],
        "seq_len": cfg["seq_len"],
        "head_dim": cfg["head_dim"],
        "q_block": cfg["q_block"],
        "k_block": cfg["k_block"],
        "boost": float(cfg["boost"]) if cfg["pattern"] != "gaussian" else None,
        "std": float(cfg["std"]),
        "planted_block": planted,
        "checksums": {"q": _checksum(q), "k": _checksum(k), "v": _checksum(v)},
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    print(f"wrote q.vft k.vft v.vft manifest.json to {out_dir}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = build_config(args, need_variant=True)
    q, k, v = _load_tensors(args.data)
    p = _problem_from(cfg, q, k, v)
    t0 = time.perf_counter()
    out, counters, stats, mon = _execute(cfg, p)
    wall = time.perf_counter() - t0

    values = {
        "variant": cfg["variant"],
        "output_checksum": _checksum(out),
        "output_shape": list(out.shape),
    }
    if cfg["oracle"]:
        ref = naive_attention(p)
        values["max_rel_err"], values["mean_rel_err"] = _rel_err(out, ref)
    if stats is not None:
        values["block_sparsity"] = stats.block_sparsity
        values["row_sparsity"] = stats.row_sparsity
        values["rescale_skip_rate"] = stats.rescale_skip_rate
    _write_report(
        args.report, "run", cfg.values, values,
        counters=counters, stats=stats, monitor=_monitor_dict(mon), wall_time=wall,
    )
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg_a = build_config(args, need_variant=True)
    values_b = dict(cfg_a.values)
    values_b["variant"] = args.variant_b
    if args.lambda_b is not None:
        values_b["lambda"] = args.lambda_b
    if args.tau_b is not None:
        values_b["tau"] = args.tau_b
    ns_b = argparse.Namespace(
        config=None, **{k.replace("-", "_"): v for k, v in values_b.items()}
    )
    cfg_b = build_config(ns_b, need_variant=True)

    q, k, v = _load_tensors(args.data)
    p = _problem_from(cfg_a, q, k, v)
    t0 = time.perf_counter()
    out_a, counters_a, stats_a, _ = _execute(cfg_a, p)
    out_b, counters_b, stats_b, _ = _execute(cfg_b, p)
    wall = time.perf_counter() - t0

    max_rel, mean_rel = _rel_err(out_a, out_b)
    values = {
        "variant_a": cfg_a["variant"],
        "variant_b": cfg_b["variant"],
        "checksum_a": _checksum(out_a),
        "checksum_b": _checksum(out_b),
        "max_rel_diff": max_rel,
        "mean_rel_diff": mean_rel,
        "counter_delta": _counter_delta(counters_a, counters_b),
        "sparsity_a": stats_a.block_sparsity if stats_a else None,
        "sparsity_b": stats_b.block_sparsity if stats_b else None,
    }
    cfg_dump = dict(cfg_a.values)
    cfg_dump["variant_b"] = cfg_b["variant"]
    _write_report(args.report, "compare", cfg_dump, values, wall_time=wall)
    return EXIT_OK


def _counter_delta(a, b) -> dict | None:
    if a is None or b is None:
        return None
    da, db = a.as_dict(), b.as_dict()
    return {key: db[key] - da[key] for key in da}


def cmd_cost(args) -> int:
    try:
        if args.preset == "all" or args.figure1:
            presets = [load_preset(n) for n in PRESET_NAMES]
        else:
            presets = [load_preset(args.preset)]
    except CalibrationError as e:
        raise ConfigError(str(e)) from e
    variants = ("fa", "vfa") if args.variant == "all" else (args.variant,)
    rows = preset_table(presets, variants=variants)

    header = ["preset", "tensor_pct", "exp_pct"] + [f"vector_{v}_pct" for v in variants]
    print("  ".join(f"{h:>16}" for h in header))
    for row in rows:
        print(
            "  ".join(
                f"{row[h]:>16}" if h == "preset" else f"{row[h]:>16.3f}" for h in header
            )
        )
    if args.csv:
        _write_csv(Path(args.csv), header, [[row[h] for h in header] for row in rows])
    if args.report:
        _write_report(
            args.report, "cost", {"preset": args.preset, "variant": args.variant},
            {"table": rows},
        )
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = build_config(args)
    q, k, v = _load_tensors(args.data)
    p = _problem_from(cfg, q, k, v)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()

    _, _, trace = fa_forward(p)
    stab = stabilization_positions(trace)
    _write_csv(
        out_dir / "stabilization.csv",
        ["row", "j_star"],
        [[i, int(j)] for i, j in enumerate(stab.positions)],
    )

    qb, kb = p.blocks.q_block, p.blocks.k_block
    sim_rows = []
    for i in range(1, p.t_r + 1):
        sim_rows.append(["q", i, cos_sim(p.q[(i - 1) * qb : i * qb])])
    for j in range(1, p.t_c + 1):
        sim_rows.append(["k", j, cos_sim(p.k[(j - 1) * kb : j * kb])])
    _write_csv(out_dir / "cos_sim.csv", ["matrix", "block", "cos_sim"], sim_rows)

    norm_rows = []
    for name, m in (("q", p.q), ("k", p.k), ("v", p.v)):
        for row, n in enumerate(l2_norm_profile(m)["per_row_norms"]):
            norm_rows.append([name, row, float(n)])
    _write_csv(out_dir / "l2_profile.csv", ["matrix", "row", "l2_norm"], norm_rows)

    bm_rows = []
    for i in range(1, p.t_r + 1):
        curve = blockmax_curve(p, i)
        for j, val in enumerate(curve, 1):
            bm_rows.append([i, j, float(val)])
    _write_csv(out_dir / "blockmax.csv", ["q_block", "k_block", "block_max"], bm_rows)

    wall = time.perf_counter() - t0
    values = {
        "frac_sink": stab.frac_sink,
        "frac_local": stab.frac_local,
        "frac_other": stab.frac_other,
        "frac_sink_or_local": stab.frac_sink_or_local(),
        "csv_files": [
            "stabilization.csv", "cos_sim.csv", "l2_profile.csv", "blockmax.csv"
        ],
    }
    for name, m in (("q", p.q), ("k", p.k), ("v", p.v)):
        prof = l2_norm_profile(m)
        values[f"l2_{name}"] = {
            key: prof[key] for key in ("min", "max", "mean", "stddev",
                                       "coeff_of_variation")
        }
    report_path = args.report or str(out_dir / "analysis.json")
    _write_report(report_path, "analyze", cfg.values, values, wall_time=wall)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_config_flags(sp, geometry=True, variant=False, generator=False):
    sp.add_argument("--config", help="JSON config file; flags override its keys")
    sp.add_argument("--threads", type=int, help="worker cap (execution is serial)")
    if geometry:
        sp.add_argument("--q-block", dest="q_block", type=int)
        sp.add_argument("--k-block", dest="k_block", type=int)
        sp.add_argument("--causal", action="store_const", const=True, default=None)
    if generator:
        sp.add_argument("--seq-len", dest="seq_len", type=int)
        sp.add_argument("--head-dim", dest="head_dim", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--pattern", choices=("gaussian",) + PATTERNS)
        sp.add_argument("--boost", type=float)
        sp.add_argument("--std", type=float)
    if variant:
        sp.add_argument("--variant", choices=VARIANTS)
        sp.add_argument("--repr", choices=KEY_REPRS)
        sp.add_argument("--q-repr", dest="q_repr", choices=QUERY_REPRS)
        sp.add_argument("--lambda", dest="lambda", metavar="LAMBDA",
                        help="skip threshold in (0, 1], or 'none'")
        sp.add_argument("--tau", type=float)
        sp.add_argument("--tc1", type=int)
        sp.add_argument("--reorder", dest="reorder", action="store_const", const=True,
                        default=None)
        sp.add_argument("--no-reorder", dest="reorder", action="store_const",
                        const=False)
        sp.add_argument("--m-init", dest="m_init", action="store_const", const=True,
                        default=None)
        sp.add_argument("--no-m-init", dest="m_init", action="store_const", const=False)
        sp.add_argument("--monitor", action="store_const", const=True, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="vfa-lab",
        description="Attention-kernel laboratory: streaming softmax variants, "
        "op counting, latency modeling, and attention statistics.",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("gen", help="generate Q/K/V tensor files")
    _add_config_flags(sp, generator=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("run", help="execute one variant")
    _add_config_flags(sp, variant=True)
    sp.add_argument("--data", required=True, help="directory with q/k/v.vft")
    sp.add_argument("--report", default="-", help="report path ('-' for stdout)")
    sp.add_argument("--oracle", action="store_const", const=True, default=None,
                    help="also compute exact-softmax error")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="run two variants on the same tensors")
    _add_config_flags(sp, variant=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--variant-b", required=True, choices=VARIANTS)
    sp.add_argument("--lambda-b", dest="lambda_b")
    sp.add_argument("--tau-b", dest="tau_b", type=float)
    sp.add_argument("--report", default="-")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("cost", help="latency-model tables")
    sp.add_argument("--preset", default="all",
                    help=f"one of {', '.join(PRESET_NAMES)}, or 'all'")
    sp.add_argument("--variant", default="all", choices=("fa", "vfa", "all"))
    sp.add_argument("--figure1", action="store_true",
                    help="emit the five-preset, four-series matrix")
    sp.add_argument("--csv", help="also write the table as CSV")
    sp.add_argument("--report", help="also write a JSON report")
    sp.set_defaults(func=cmd_cost)

    sp = sub.add_parser("analyze", help="attention statistics reports")
    _add_config_flags(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True, help="directory for CSV outputs")
    sp.add_argument("--report", help="JSON report path (default: <out>/analysis.json)")
    sp.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on bad usage, matching the config-error code
        return int(e.code) if e.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, TensorIOError, FullyMaskedRowError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NormalizerUnderflowError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
