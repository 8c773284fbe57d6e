//! Configuration, multi-seed experiments, diagnostics and plot data.

pub mod config;
pub mod diag;
pub mod experiment;
pub mod plot;

pub use config::ExperimentConfig;
pub use diag::{diag_lemma3, diag_lemma4, ActionTable, DiagReport};
pub use experiment::{run_experiment, run_seed, RunRecord, SeedOutcome};
pub use plot::emit_plot_data;
