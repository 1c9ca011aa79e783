//! CSV tables and SVG plots of solutions, closed-loop traces and batches.

mod plot;
mod tables;

pub use plot::{histogram_svg, overhead_svg};
pub use tables::{failures_csv, mpc_trace_csv, samples_csv, timing_csv, trajectory_csv};
