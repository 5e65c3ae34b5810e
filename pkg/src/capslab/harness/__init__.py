from .config import (
    MODES,
    OUTPUT_ENV_VAR,
    ExperimentConfig,
    config_schema,
    load_config,
    parse_config,
)
from .report import (
    Aggregate,
    ComparisonReport,
    ReportRow,
    build_report,
    collect_results,
    report_render,
    write_report,
)
from .runner import EvalNumbers, RunResult, ablation_sweep, new_run_dir, run_experiment, run_seed
from .spectrum import spectrum_export
