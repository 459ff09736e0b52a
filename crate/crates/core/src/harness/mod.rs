//! Experiment definitions, configuration and result emission.

mod condition;
mod config;
mod experiment;
mod functions;

pub use condition::{
    condition_report, condition_report_iterative, dense_extremal_eigenvalues,
    lanczos_extremal_eigenvalues, ConditionRow, DENSE_EIGEN_LIMIT,
};
pub use config::{Experiment, ExperimentConfig, KernelMesh, Precision};
pub use experiment::{
    build_problem, run_experiment, BlockStat, ExperimentReport, LevelMeta, Problem, ResultRow,
    ResultTable, Timings, RESULT_COLUMNS,
};
pub use functions::{cloud_target, convergence_order, franke, lshape_u, relative_error, Norm};
