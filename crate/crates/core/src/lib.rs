//! Offline, multi-branch replay benchmark for mobile GUI agents.
//!
//! A dataset stores one default trajectory per task and, at every step, the
//! full set of actions annotators accepted as valid. Replay walks the default
//! trajectory, asks the agent for an action on each recorded screen, accepts
//! any member of the valid set, and always advances along the default path.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`dataset`] – task schema, loading/validation, taxonomy and statistics.
//! * [`screen`] – accessibility-tree parsing and every screen representation
//!   handed to a model (HTML-style, element list, raw/annotated image, SoM).
//! * [`agent`] – the modular agent: prompt assembly, action parsing, history
//!   generation, reflection, model clients and the end-to-end adapter.
//! * [`eval`] – action matching, task replay, run aggregation and reports.
//! * [`metrics`] – token pricing, latency estimation and Pareto fronts.
//! * [`sweep`] – incremental one-module-at-a-time configuration tuning.
//! * [`annotation`] – candidate generation, majority voting and the HTTP
//!   backend used by annotators.
//! * [`cli`] – the `replaybench` command line.

pub mod agent;
pub mod annotation;
pub mod cli;
pub mod dataset;
pub mod eval;
mod jsonscan;
pub mod metrics;
pub mod screen;
pub mod sweep;
pub mod synth;

pub use agent::{AgentConfig, EndToEndAgent, ModularAgent};
pub use dataset::{load_dataset, Action, TaskRecord};
pub use eval::{evaluate_run, evaluate_task, RunReport};
