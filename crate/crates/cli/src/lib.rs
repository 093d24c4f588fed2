//! Library side of the `permrate` command: CSV ingestion, run
//! orchestration, JSON reports and plot data.

pub mod args;
pub mod ingest;
pub mod plotdata;
pub mod report;
pub mod run;
