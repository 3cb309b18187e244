from .script import (AdversarialOutcome, Script, ScriptError, ScriptResult,
                     ScriptRunner, Step, StepOutcome, h1_script, run_adversarial,
                     run_script, t26_script)
from .workload import (CSV_COLUMNS, PRESETS, RunMetrics, StarvationError,
                       WorkloadConfig, read_metrics_csv, run_counter_workload,
                       stability_run, write_metrics_csv)

__all__ = [
    "AdversarialOutcome", "CSV_COLUMNS", "PRESETS", "RunMetrics", "Script",
    "ScriptError", "ScriptResult", "ScriptRunner", "StarvationError", "Step",
    "StepOutcome", "WorkloadConfig", "h1_script", "read_metrics_csv",
    "run_adversarial", "run_counter_workload", "run_script", "stability_run",
    "t26_script", "write_metrics_csv"]
