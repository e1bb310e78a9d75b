//! Monte-Carlo sweeps, theorem checks, fixed-vs-float comparison, timing
//! tables, parameter tuning and result output.

mod config;
mod plot;
mod stats;
mod sweep;
mod timing;
mod tune;
mod verify;

pub use config::{Arithmetic, ChannelSpec, MethodKind, MethodSpec, SweepConfig, WORKERS_ENV};
pub use plot::{write_svg, PlotMetric};
pub use stats::{db_at_ser, db_gap, wilson_interval, CurvePoint};
pub use sweep::{hw_compare, run_sweep, run_sweep_with_workers, HwCompareReport, HwComparePoint, SweepMeta, SweepResult, SweepRow};
pub use timing::{timing_report, TimingRow, TimingTable};
pub use tune::{tune_rho, TuneRequest, TuneResult, ALPHA_GRID, RHO_GRID};
pub use verify::{verify_theorems, verify_theorems_with, TheoremReport, VerifyOptions, Violation};
