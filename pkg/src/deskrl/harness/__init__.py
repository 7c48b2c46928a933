from deskrl.harness.config import ExperimentConfig, config_hash, load_config, parse_config_text, resolved_dict
from deskrl.harness.evaluate import EvalSummary, bootstrap_ci, final_success_rate, summarize_runs
from deskrl.harness.plots import emit_plots
from deskrl.harness.records import RunRecord, read_run_jsonl, write_run_jsonl
from deskrl.harness.run import run

__all__ = [
    "EvalSummary",
    "ExperimentConfig",
    "RunRecord",
    "bootstrap_ci",
    "config_hash",
    "emit_plots",
    "final_success_rate",
    "load_config",
    "parse_config_text",
    "read_run_jsonl",
    "resolved_dict",
    "run",
    "write_run_jsonl",
]
