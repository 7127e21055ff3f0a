//! Simulation studies: scenarios, estimator panels, Monte Carlo runs and
//! result export.

mod examples;
mod export;
mod panel;
mod run;
mod sweep;

pub use examples::{build_example1, build_example2, build_example3, ExperimentId, Scenario, EXAMPLE2_RHOS};
pub use export::{export, read_summary_csv, summary_rows, traces_path, write_summary_csv, write_traces_csv, ExportFormat, SummaryRow};
pub use panel::{default_panel, paper_row, select_panel, PaperRow, PAPER_ROWS};
pub use run::{
    rmse, run_filter, run_panel, simulate_scenario, true_channel_variance, EstimatorResult, ExperimentConfig, PanelResult,
    SeedRun,
};
pub use sweep::{sweep, SweepParam, SweepRow};
