//! Condition discovery, bounded API scans, and the forced-execution plan.

mod catalog;
mod scan;

pub use catalog::{ApiCatalog, ApiSignature, CatalogError, MatchKind, Mode};
pub use scan::{
    condition_kind, dependent_regions, find_condition_nodes, guard_of, is_timer_call, mark_forced_blocks,
    scan_block_for_apis, scan_regions, static_apis, ConditionKind, ForcedPlan, NodeKey, ScanResult, DEFAULT_NODE_LIMIT,
    TIMER_APIS,
};
