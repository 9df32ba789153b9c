//! Synthetic corpora, strategy sweeps, and reports.

pub mod eval;
pub mod report;
pub mod synth;

pub use eval::{run_eval, Aggregate, EvalCase, EvalParams, EvalReport, Row, ScoreSource, Stat};
pub use report::{emit_report, read_report, summary_table, to_csv, to_json, ReportFormat, CSV_HEADER};
pub use synth::{generate_synthetic, plant_embeddings, SynthCase, SynthSpec};
