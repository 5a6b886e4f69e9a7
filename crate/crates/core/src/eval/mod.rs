//! Metrics, graph diagnostics and theory checks.

pub mod bounds;
pub mod metrics;
pub mod quality;
pub mod report;
pub mod select;
pub mod theory;

pub use bounds::{deviation_bounds, verify_deviation_bounds, BoundCheckConfig, BoundReport, BoundScenario};
pub use metrics::{ade_fde, evaluate_dataset, reconstruction_loss, sampled_metrics, ErrorSummary, MetricsRecord, SceneMetrics};
pub use quality::{graph_quality, mann_whitney_greater, QualityConfig, QualityReport};
pub use select::{select_graph, Heuristic, Selection, Thresholds, EXHAUSTIVE_LIMIT};
pub use theory::{entropy_table, format_entropy_table, majorization_check, EntropyRow, MajorizationReport};
