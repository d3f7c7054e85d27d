//! Flagging, evasion classification and evaluation metrics.

mod classify;
mod flag;
mod metrics;
pub mod taxonomy;

pub use classify::{classify_evasions, signal_tokens, ClassifyConfig, DEFAULT_TIMEBOMB_FLOOR_MS};
pub use flag::{flag, FlagDecision, SampleReport, DEFAULT_FLAG_THRESHOLD};
pub use metrics::{compute_metrics, Metrics, MetricsError};
pub use taxonomy::{Category, EvasionTaxonomy, CATEGORY_COUNT};
