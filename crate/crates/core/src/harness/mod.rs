//! Configuration-driven experiment runner: evolve one system with every
//! selected method, compare them, and write plot-ready artifacts.
//!
//! A run writes into its output directory:
//!
//! - `norms.csv`: per-step l1 norms and l2 differences between methods
//! - `trajectory_{method}.csv` with a `.json` sidecar of method metadata
//! - `varqite_params.csv`: scale, norms and gate angles per step
//! - `solution_t{T}.json`: surfaces of every method at each snapshot time
//! - `observables.json`: final-time expectations, direct and through `S_f`
//! - `summary.json`: every checked number with its tolerance and verdict
//!
//! Nothing time- or host-dependent is written, so reruns are byte-identical.

mod compare;
mod config;
mod run;

pub use compare::{compare, compare_pair, load_run, write_rows, ComparisonRow, Trajectory};
pub use config::{
    AnsatzConfig, EvolutionConfig, GridConfig, InitialConfig, Method, ModelConfig, MonteCarloConfig,
    ObservableConfig, ObservableKind, OutputConfig, Resolved, RunConfig, Tolerances, VarQiteSection,
};
pub use run::{
    execute, initial_condition, l1, l2_diff, max_abs_diff, run, time_label, write_outputs, GridMeta, Metric,
    ObservableResult, RunData, RunReport, Series, Summary, Tolerance, SUMMARY_SCHEMA_VERSION,
};
