//! Provenance records, injection chains, coverage and the JSONL log.

mod chains;
mod log;
mod records;

pub use chains::{chain_lengths, maximal_paths, ChainStats};
pub use log::{emit_log, log_lines};
pub use records::*;

use std::collections::BTreeSet;

/// Total executed lines across scripts.
pub fn coverage_loc(records: &[ScriptRecord]) -> usize {
    records.iter().map(|r| r.executed_lines.len()).sum()
}

/// Executed lines keyed by a caller-supplied script identity, for merging runs.
pub fn coverage_set<'a>(records: impl IntoIterator<Item = (&'a ScriptRecord, String)>) -> BTreeSet<(String, u32)> {
    let mut out = BTreeSet::new();
    for (r, key) in records {
        for &l in &r.executed_lines {
            out.insert((key.clone(), l));
        }
    }
    out
}
