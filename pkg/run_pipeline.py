"""
BiLAF Selection: Full Pipeline Runner
--------------------------------------

This pipeline runs:
1. Pool generation (synthetic Gaussian mixture)
2. BiLAF selection
3. Evaluation against Random / FDS / K-Means
4. 2-D projection export for plotting

All outputs are saved to pipeline_output/.
"""

import sys

from bilaf_cli import main as bilaf

OUT = "pipeline_output"


# ------------------------------------------------------------
# Helper function to execute steps safely
# ------------------------------------------------------------
def run_step(label, argv):
    print(f"\n🔹 Running {label}...")
    exit_code = bilaf(argv)

    if exit_code != 0:
        print(f"❌ ERROR: {label} failed (exit code {exit_code}).")
        sys.exit(exit_code)

    print(f"✅ Finished {label}")


def run_pipeline(out_dir=OUT, seed=0, budget=100, cores=20, trials=3, generate_args=()):
    pool = f"{out_dir}/pool.blaf"
    print("\n🚀 Starting BiLAF Selection Pipeline...\n")
    common = ["--budget", str(budget), "--cores", str(cores), "--seed", str(seed)]

    # 1. POOL GENERATION
    run_step("generate", ["generate", "--out", pool, "--seed", str(seed), *generate_args])

    # 2. SELECTION
    run_step("select", ["select", "--pool", pool, "--method", "bilaf",
                        "--out-dir", f"{out_dir}/selection", *common])

    # 3. EVALUATION
    run_step("evaluate", ["evaluate", "--pool", pool, "--methods", "bilaf,random,fds,kmeans",
                          "--trials", str(trials), "--out-dir", f"{out_dir}/evaluation", *common])

    # 4. VISUALIZATION EXPORT
    run_step("export-viz", ["export-viz", "--pool", pool,
                            "--selection", f"{out_dir}/selection/selection.json",
                            "--out", f"{out_dir}/viz_projection.csv"])

    print("\n🎉 Pipeline completed successfully!\n")
    print("📁 Generated Files Summary:")
    for path in [pool, f"{pool}.meta.json",
                 f"{out_dir}/selection/selected_indices.txt",
                 f"{out_dir}/selection/selection.json",
                 f"{out_dir}/selection/optimizer_trace.csv",
                 f"{out_dir}/selection/denoise_reports.json",
                 f"{out_dir}/evaluation/evaluation_trials.csv",
                 f"{out_dir}/evaluation/evaluation_summary.csv",
                 f"{out_dir}/viz_projection.csv"]:
        print(f"- {path}")


if __name__ == "__main__":
    run_pipeline()
