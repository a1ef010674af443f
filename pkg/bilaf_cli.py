"""
BiLAF command line
------------------

    bilaf generate    --out pool.blaf [--classes 10 --per-class 500 --dim 32 ...]
    bilaf select      --pool pool.blaf --method bilaf --budget 100 --cores 20
    bilaf evaluate    --pool pool.blaf --methods bilaf,random --budget 100 --cores 20 --trials 5
    bilaf sweep       --pool pool.blaf --budget 100 --cores 20 --denoise-grid idc,none
    bilaf export-viz  --pool pool.blaf --selection out/selection.json --out viz.csv
    bilaf verify      [--quick]

Flags win over values read from ``--config``.  Exit codes: 0 ok, 1 usage,
2 data error, 3 internal invariant violation.
"""

import argparse
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import pandas as pd

from bilaf_engine.baselines import BaselineConfig, select_baseline
from bilaf_engine.boundary_select import run_bilaf, write_denoise_reports
from bilaf_engine.config import CORE_METHODS, build_config, load_config_file, parse_switch
from bilaf_engine.errors import (
    BilafError,
    DataFormatError,
    PoolIOError,
    UsageError,
    exit_code_for,
)
from bilaf_engine.evaluator import SELECTORS, compare_methods, evaluate_selection
from bilaf_engine.feature_store import (
    MixtureSpec,
    generate_mixture,
    load_pool,
    pool_metadata,
    save_pool,
)
from bilaf_engine.projection import projection_frame
from bilaf_engine.reporting import read_index_list, save_csv, save_json, write_index_list
from bilaf_engine.seeding import derive_seed

logger = logging.getLogger("bilaf")

SWEEP_AXES = ["denoise", "criterion", "process", "opponent_penalty", "core_method",
              "core_ratio", "removal_ratio", "opponent_delta"]


class CliParser(argparse.ArgumentParser):
    """argparse parser that raises instead of exiting, so main() owns the exit code."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------
# Flag groups
# ------------------------------------------------------------
def _csv_list(cast):
    def parse(text):
        try:
            return [cast(part.strip()) for part in text.split(",") if part.strip()]
        except ValueError as e:
            raise argparse.ArgumentTypeError(str(e)) from e
    return parse


def _add_logging_flags(p):
    p.add_argument("--verbose", action="store_true", help="debug logging")
    p.add_argument("--quiet", action="store_true", help="warnings and errors only")


def _add_pool_flags(p, required=True):
    p.add_argument("--pool", required=required, help="feature pool file")
    p.add_argument("--format", choices=["binary", "csv"], default=None,
                   help="pool format (default: by file suffix)")
    p.add_argument("--normalize", choices=["on", "off"],
                   help="L2-normalize rows on load (default: on for CSV, header flag for binary)")


def _add_selection_flags(p):
    p.add_argument("--config", help="key = value config file; flags win")
    p.add_argument("--budget", type=int, help="annotation budget B")
    p.add_argument("--cores", type=int, dest="core_count", help="pseudo-class centers K")
    p.add_argument("--knn-k", type=int, dest="knn_k")
    p.add_argument("--removal-ratio", type=float, dest="removal_ratio")
    p.add_argument("--include-fraction", type=float, dest="include_fraction")
    p.add_argument("--delta", type=float, dest="opponent_delta")
    p.add_argument("--denoise", choices=["idc", "db", "dg", "none"])
    p.add_argument("--criterion", choices=["bs", "bd"])
    p.add_argument("--process", choices=["isr", "os"])
    p.add_argument("--opponent-penalty", choices=["on", "off"], dest="opponent_penalty")
    p.add_argument("--freeze-intra", choices=["on", "off"], dest="freeze_intra")
    p.add_argument("--core-method", choices=list(CORE_METHODS), dest="core_method")
    p.add_argument("--tau", type=float)
    p.add_argument("--lambda", type=float, dest="lambda_weight")
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--restarts", type=int, help="independent core-optimization starts")
    p.add_argument("--seed", type=int)


CONFIG_FLAGS = ["budget", "core_count", "knn_k", "removal_ratio", "include_fraction",
                "opponent_delta", "denoise", "criterion", "process", "opponent_penalty",
                "freeze_intra", "core_method", "tau", "lambda_weight", "learning_rate",
                "max_iters", "restarts", "seed"]


def build_parser():
    parser = CliParser(prog="bilaf", description="Boundary-aware sample selection for active finetuning")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    p = sub.add_parser("generate", help="write a synthetic Gaussian-mixture pool")
    p.add_argument("--out", required=True, help="output pool path")
    p.add_argument("--format", choices=["binary", "csv"], default="binary")
    p.add_argument("--classes", type=int, default=MixtureSpec.num_classes)
    p.add_argument("--per-class", type=int, default=MixtureSpec.samples_per_class)
    p.add_argument("--dim", type=int, default=MixtureSpec.dim)
    p.add_argument("--center-separation", type=float, default=MixtureSpec.center_separation)
    p.add_argument("--intra-std", type=float, default=MixtureSpec.intra_std)
    p.add_argument("--noise-fraction", type=float, default=MixtureSpec.noise_fraction)
    p.add_argument("--seed", type=int, default=MixtureSpec.seed)
    _add_logging_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("select", help="select B samples with BiLAF or a baseline")
    _add_pool_flags(p)
    p.add_argument("--method", choices=list(SELECTORS), default="bilaf")
    p.add_argument("--out-dir", default="selection_output")
    _add_selection_flags(p)
    _add_logging_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("evaluate", help="nearest-centroid accuracy of selectors")
    _add_pool_flags(p)
    p.add_argument("--methods", type=_csv_list(str), default=["bilaf", "random"])
    p.add_argument("--selection", help="evaluate a stored index list instead of running selectors")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--out-dir", default="evaluation_output")
    _add_selection_flags(p)
    _add_logging_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="ablation grid over BiLAF switches")
    _add_pool_flags(p)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default="sweep_output")
    p.add_argument("--denoise-grid", type=_csv_list(str))
    p.add_argument("--criterion-grid", type=_csv_list(str))
    p.add_argument("--process-grid", type=_csv_list(str))
    p.add_argument("--penalty-grid", type=_csv_list(str))
    p.add_argument("--core-method-grid", type=_csv_list(str))
    p.add_argument("--core-ratio-grid", type=_csv_list(float))
    p.add_argument("--removal-grid", type=_csv_list(float))
    p.add_argument("--delta-grid", type=_csv_list(float))
    _add_selection_flags(p)
    _add_logging_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-viz", help="2-D PCA projection CSV for plotting")
    _add_pool_flags(p)
    p.add_argument("--selection", help="selection.json or index list to mark picked samples")
    p.add_argument("--out", default="viz_projection.csv")
    _add_logging_flags(p)
    p.set_defaults(func=cmd_export_viz)

    p = sub.add_parser("verify", help="run the selection verification suite")
    p.add_argument("--quick", action="store_true", help="fewer random instances")
    p.add_argument("--out-dir", default="verification_output")
    _add_logging_flags(p)
    p.set_defaults(func=cmd_verify)
    return parser


# ------------------------------------------------------------
# Helpers
# ------------------------------------------------------------
def _configure_logging(args):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def _pool_format(path, explicit):
    if explicit:
        return explicit
    return "csv" if str(path).lower().endswith(".csv") else "binary"


def _load(args):
    fmt = _pool_format(args.pool, args.format)
    if args.normalize is not None:
        normalize = parse_switch(args.normalize)
    else:
        # binary files carry their own flag; CSV has none and defaults to on
        normalize = True if fmt == "csv" else None
    return load_pool(args.pool, format=fmt, normalize=normalize)


def _selection_config(args, need_cores=True):
    file_values = load_config_file(args.config) if args.config else {}
    flags = {name: getattr(args, name, None) for name in CONFIG_FLAGS}
    if flags["budget"] is None and "budget" not in file_values:
        raise UsageError("--budget is required")
    if need_cores and flags["core_count"] is None and "core_count" not in file_values:
        raise UsageError("--cores is required")
    return build_config(file_values, flags)


def _write_provenance(out_dir, command, payload):
    save_json(Path(out_dir) / f"{command}_config.json", {"command": command, **payload})


# ------------------------------------------------------------
# Subcommands
# ------------------------------------------------------------
def cmd_generate(args):
    spec = MixtureSpec(num_classes=args.classes, samples_per_class=args.per_class,
                       dim=args.dim, center_separation=args.center_separation,
                       intra_std=args.intra_std, noise_fraction=args.noise_fraction,
                       seed=args.seed)
    pool = generate_mixture(spec)
    save_pool(pool, args.out, format=args.format)
    save_json(f"{args.out}.meta.json", pool_metadata(pool, {"mixture": asdict(spec)}))
    print(f"✅ Saved pool: {args.out} (N={pool.n}, d={pool.dim})")


def cmd_select(args):
    pool = _load(args)
    need_cores = args.method == "bilaf"
    config = _selection_config(args, need_cores)
    out = Path(args.out_dir)

    if args.method == "bilaf":
        result = run_bilaf(pool, config)
        payload = {"method": "bilaf", **result.to_dict()}
        indices = result.indices
        if result.core_set is not None and result.core_set.loss_trace:
            result.core_set.write_trace(out / "optimizer_trace.csv")
        write_denoise_reports(result.denoise_reports, out / "denoise_reports.json")
    else:
        baseline = BaselineConfig(method=args.method, budget=config.budget,
                                  seed=derive_seed(config.seed, f"baseline:{args.method}"))
        config.validate_for(pool)
        indices = select_baseline(pool, baseline)
        payload = {"method": args.method, "config": asdict(baseline), "budget": len(indices),
                   "selected": [{"index": i, "stage": "baseline"} for i in indices]}

    save_json(out / "selection.json", payload)
    write_index_list(out / "selected_indices.txt", indices)
    print(f"✅ Saved {len(indices)} selected indices to {out / 'selected_indices.txt'}")


def cmd_evaluate(args):
    pool = _load(args)
    out = Path(args.out_dir)

    if args.selection:
        report = evaluate_selection(pool, read_index_list(args.selection))
        save_json(out / "evaluation.json", report.to_dict())
        print(f"✅ Top-1 accuracy {report.top1_accuracy:.4f} "
              f"(coverage {report.class_coverage:.2f}) saved to {out / 'evaluation.json'}")
        return

    unknown = [m for m in args.methods if m not in SELECTORS]
    if unknown:
        raise UsageError(f"unknown method(s) {unknown}; expected {list(SELECTORS)}")
    config = _selection_config(args, need_cores="bilaf" in args.methods)
    table, summary = compare_methods(pool, args.methods, args.trials, config.seed, config)
    save_csv(out / "evaluation_trials.csv", table)
    save_csv(out / "evaluation_summary.csv", summary)
    _write_provenance(out, "evaluate", {"methods": args.methods, "trials": args.trials,
                                        "selection": config.to_dict()})
    for row in summary.itertuples(index=False):
        print(f"   {row.method:8s} accuracy {row.mean:.4f} ± {row.std:.4f}")
    print(f"✅ Saved evaluation tables to {out}")


def _sweep_cells(args, config, n):
    grids = {
        "denoise": args.denoise_grid or [config.denoise.value],
        "criterion": args.criterion_grid or [config.criterion.value],
        "process": args.process_grid or [config.process.value],
        "opponent_penalty": args.penalty_grid or ["on" if config.opponent_penalty else "off"],
        "core_method": args.core_method_grid or [config.core_method],
        "core_ratio": args.core_ratio_grid or [None],
        "removal_ratio": args.removal_grid or [config.removal_ratio],
        "opponent_delta": args.delta_grid or [config.opponent_delta],
    }
    for values in itertools.product(*(grids[a] for a in SWEEP_AXES)):
        cell = dict(zip(SWEEP_AXES, values))
        ratio = cell.pop("core_ratio")
        cores = config.core_count if ratio is None else min(config.budget, max(2, round(ratio * n)))
        yield dict(cell, core_ratio=ratio), config.merged(dict(cell, core_count=cores))


def run_sweep_cell(pool, cell, config, trials):
    """One grid cell: mean/std accuracy of BiLAF over ``trials``."""
    table, summary = compare_methods(pool, ["bilaf"], trials, config.seed, config)
    return {
        **cell,
        "cores": config.core_count,
        "accuracy_mean": float(summary["mean"].iloc[0]),
        "accuracy_std": float(summary["std"].iloc[0]),
        "coverage_mean": float(table["coverage"].mean()),
        "margin_mean": float(table["margin"].mean()),
    }


def cmd_sweep(args):
    pool = _load(args)
    if args.workers < 1 or args.trials < 1:
        raise UsageError("--workers and --trials must be positive")
    config = _selection_config(args)
    cells = list(_sweep_cells(args, config, pool.n))
    print(f"🔹 Sweeping {len(cells)} cells x {args.trials} trials")

    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as ex:
            futures = [ex.submit(run_sweep_cell, pool, cell, cfg, args.trials) for cell, cfg in cells]
            rows = [f.result() for f in futures]
    else:
        rows = [run_sweep_cell(pool, cell, cfg, args.trials) for cell, cfg in cells]

    frame = pd.DataFrame(rows)
    frame["core_ratio"] = frame["core_ratio"].astype(float)
    frame = frame.sort_values(SWEEP_AXES, kind="mergesort", na_position="first").reset_index(drop=True)
    out = Path(args.out_dir)
    save_csv(out / "sweep.csv", frame)
    _write_provenance(out, "sweep", {"trials": args.trials, "selection": config.to_dict(),
                                     "axes": SWEEP_AXES})
    print(f"✅ Saved {len(frame)} sweep rows to {out / 'sweep.csv'}")


def _read_stages(path):
    if str(path).lower().endswith(".json"):
        try:
            with open(path, "r", encoding="utf-8") as f:
                records = json.load(f)["selected"]
        except OSError as e:
            raise PoolIOError(f"cannot read selection ({e.strerror})", path) from e
        except (ValueError, KeyError, TypeError) as e:
            raise DataFormatError(f"not a selection report: {e}", path=path) from e
        return {int(r["index"]): str(r.get("stage", "selected")) for r in records}
    return {i: "selected" for i in read_index_list(path)}


def cmd_export_viz(args):
    pool = _load(args)
    stages = _read_stages(args.selection) if args.selection else {}
    if any(not 0 <= i < pool.n for i in stages):
        raise DataFormatError("selection refers to indices outside the pool", path=args.selection)
    save_csv(args.out, projection_frame(pool, stages))
    print(f"✅ Saved projection: {args.out}")


def cmd_verify(args):
    from selection_verification import SelectionVerification

    suite = SelectionVerification(output_dir=args.out_dir)
    results = suite.run_full_verification_suite(quick=args.quick)
    if not results["overall_passed"]:
        print("❌ ERROR: verification failed")
        return 3
    return 0


# ------------------------------------------------------------
# Entry point
# ------------------------------------------------------------
def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _configure_logging(args)
        return args.func(args) or 0
    except BilafError as e:
        print(f"❌ ERROR: {e}", file=sys.stderr)
        return exit_code_for(e)
    except Exception as e:  # anything unexpected is an internal failure
        logger.exception("unexpected failure")
        print(f"❌ ERROR: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
