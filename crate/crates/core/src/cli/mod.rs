//! Batch front end: configuration, file formats and the commands behind
//! the `fairmeasure` binary.

mod commands;
mod config;
mod io;
mod verify;

pub use commands::{evaluate, load_process, run, Command, EvalReport, EXIT_FAILURE, EXIT_INFEASIBLE, MARTINGALE_TOL};
pub use config::{
    CalibrationSource, ConstraintConfig, ExchangeSpec, LatticeConfig, OutputConfig, ProcessSource, RunConfig,
    VerifyConfig, DEFAULT_TIME_UNIT_SECONDS,
};
pub use io::{
    read_measure_csv, read_process_csv, read_process_file, to_json, write_json, write_measure_csv, write_process_csv,
    write_process_file, write_trace_csv, MEASURE_HEADER, PROCESS_HEADER,
};
pub use verify::{verify_suite, CheckResult, Status, VerifySummary};
