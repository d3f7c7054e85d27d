use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::scanner::Mode;
use crate::tracker::ChainStats;

pub const DEFAULT_FLAG_THRESHOLD: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagDecision {
    pub flagged: bool,
    pub rationale: String,
}

/// Flag when forced executions reach `threshold` and at least one third-party script was injected.
pub fn flag(forced_exec_count: usize, third_party_urls: &[String], threshold: usize) -> FlagDecision {
    let enough = forced_exec_count >= threshold;
    let injected = !third_party_urls.is_empty();
    let rationale = match (enough, injected) {
        (true, true) => format!(
            "{forced_exec_count} forced executions (threshold {threshold}) and {} third-party injection(s): {}",
            third_party_urls.len(),
            third_party_urls.join(", ")
        ),
        (false, _) => format!("{forced_exec_count} forced executions, below threshold {threshold}"),
        (true, false) => format!("{forced_exec_count} forced executions but no third-party injection"),
    };
    FlagDecision { flagged: enough && injected, rationale }
}

/// Per-sample outcome of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub id: String,
    pub mode: Mode,
    pub forced_exec_count: usize,
    pub third_party_injection_count: usize,
    pub third_party_urls: Vec<String>,
    pub chains: ChainStats,
    pub coverage_forced: usize,
    pub coverage_baseline: Option<usize>,
    pub evasion_categories: BTreeSet<String>,
    pub flagged: bool,
    pub flag_rationale: String,
    pub cluster_label: Option<i64>,
    pub expanded: bool,
    pub errors: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn urls(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("https://t.example/{i}.js")).collect()
    }

    #[test]
    fn threshold_boundary() {
        assert!(!flag(4, &urls(1), 5).flagged);
        assert!(flag(5, &urls(1), 5).flagged);
        assert!(!flag(9, &urls(0), 5).flagged);
    }

    #[test]
    fn rationale_names_the_reason() {
        assert!(flag(4, &urls(1), 5).rationale.contains("below threshold"));
        assert!(flag(9, &[], 5).rationale.contains("no third-party"));
        assert!(flag(5, &urls(1), 5).rationale.contains("https://t.example/0.js"));
    }
}
