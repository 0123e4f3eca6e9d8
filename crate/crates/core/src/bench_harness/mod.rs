//! Test functions, benchmark studies, report files and the command-line
//! front end.

pub mod commands;
pub mod config;
pub mod functions;
pub mod report;
pub mod studies;

pub use config::Config;
pub use functions::{eval_test_function, TestFunction};
pub use report::{read_report_csv, write_report_csv, ExperimentReport};
pub use studies::{
    mape_study, rmspe_study, timing_study, Arm, MapeConfig, RmspeConfig, Strategy, TimingConfig, TimingOutcome,
};
