import json

import pandas as pd

from run_pipeline import run_pipeline
from selection_verification import SelectionVerification


class TestRunPipeline:
    def test_all_artifacts_written(self, tmp_path):
        out = tmp_path / "pipeline"
        run_pipeline(out_dir=str(out), seed=1, budget=12, cores=4, trials=1,
                     generate_args=("--classes", "3", "--per-class", "30", "--dim", "8"))
        for name in ("pool.blaf", "pool.blaf.meta.json", "selection/selection.json",
                     "selection/selected_indices.txt", "selection/optimizer_trace.csv",
                     "selection/denoise_reports.json", "evaluation/evaluation_trials.csv",
                     "evaluation/evaluation_summary.csv", "viz_projection.csv"):
            assert (out / name).exists(), name
        summary = pd.read_csv(out / "evaluation" / "evaluation_summary.csv")
        assert list(summary["method"]) == ["bilaf", "random", "fds", "kmeans"]


class TestVerificationSuite:
    def test_quick_suite_passes(self, tmp_path):
        suite = SelectionVerification(output_dir=str(tmp_path))
        report = suite.run_full_verification_suite(quick=True)
        assert report["overall_passed"], report["recommendations"]
        saved = json.loads((tmp_path / "verification_report.json").read_text())
        assert saved["verification_summary"]["overall_status"] == "PASS"
        assert (tmp_path / "verification_summary.txt").read_text().startswith(
            "Selection Engine Verification Summary")
