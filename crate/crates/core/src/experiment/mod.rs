//! Experiment files, batch execution over (scheduler, layout, seed) cells and
//! CSV export.

mod config;
mod driver;

pub use config::{load_config_file, parse_config, ConfigError, ConfigFile, Experiment, ExperimentSpec,
    ROUNDING_EXACT_BUDGET,
};
pub use driver::{
    cells, export_csv, fmt_float, run_cells, run_cells_sequential, run_experiment, scenario_config, summarize,
    task_config, write_outputs, write_summary, Cell, CellOutcome, ExperimentError, ExperimentReport, SummaryRow,
    EXIT_AUDIT, EXIT_CONFIG, EXIT_OK, EXIT_RUN, ROUND_HEADER,
};
