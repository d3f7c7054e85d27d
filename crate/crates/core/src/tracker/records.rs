use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::frontend::{NodeKind, Span};
use crate::scanner::{ApiSignature, ConditionKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScriptId(pub u32);

impl fmt::Display for ScriptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Where a script's text came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Root { path: String },
    Eval { parent: ScriptId },
    Injected { parent: ScriptId, url: String },
    Local { parent: ScriptId, path: String },
}

impl Provenance {
    pub fn parent(&self) -> Option<ScriptId> {
        match self {
            Provenance::Root { .. } => None,
            Provenance::Eval { parent } | Provenance::Injected { parent, .. } | Provenance::Local { parent, .. } => {
                Some(*parent)
            }
        }
    }

    /// Edges that count toward injection chains.
    pub fn is_chain_edge(&self) -> bool {
        matches!(self, Provenance::Eval { .. } | Provenance::Injected { .. })
    }
}

/// The origin prefix that marks a sample's own resources.
pub fn local_prefix(sample_id: &str) -> String {
    format!("ext://{sample_id}/")
}

pub fn is_third_party_url(url: &str, sample_id: &str) -> bool {
    !url.starts_with(&local_prefix(sample_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRecord {
    pub id: ScriptId,
    pub provenance: Provenance,
    pub line_count: u32,
    pub byte_count: usize,
    pub executed_lines: BTreeSet<u32>,
    pub children: Vec<ScriptId>,
    pub parse_failed: bool,
    /// Uncaught error or budget exhaustion that ended the script early.
    pub error: Option<String>,
    /// For eval children whose text was taken from a fetched body, the body's URL.
    pub derived_from: Option<String>,
}

impl ScriptRecord {
    pub fn new(id: ScriptId, provenance: Provenance, text: &str) -> Self {
        ScriptRecord {
            id,
            provenance,
            line_count: line_count(text),
            byte_count: text.len(),
            executed_lines: BTreeSet::new(),
            children: Vec::new(),
            parse_failed: false,
            error: None,
            derived_from: None,
        }
    }

    /// Stable identity of the script's text across runs, used to merge coverage.
    pub fn coverage_key(&self, text_hash: &str) -> String {
        match &self.provenance {
            Provenance::Root { path } | Provenance::Local { path, .. } => format!("file:{path}"),
            Provenance::Injected { url, .. } => format!("url:{url}"),
            Provenance::Eval { .. } => format!("eval:{text_hash}"),
        }
    }
}

pub fn line_count(text: &str) -> u32 {
    if text.is_empty() {
        0
    } else {
        text.lines().count().max(1) as u32
    }
}

/// How one branch of a forced condition was executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchOutcome {
    pub branch: String,
    pub executed_in: ExecutedIn,
    pub threw: Option<String>,
    pub lines_executed: BTreeSet<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutedIn {
    Live,
    Clone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcedExecEvent {
    pub script: ScriptId,
    pub condition_span: Span,
    pub node_kind: NodeKind,
    pub kind: ConditionKind,
    pub apis_found: BTreeSet<ApiSignature>,
    pub nodes_visited: usize,
    /// Guard value as a short string; for timers, the requested delay.
    pub guard: String,
    pub branches: Vec<BranchOutcome>,
    /// Command strings whose output was read while evaluating the guard.
    pub guard_sources: Vec<String>,
    /// The guard read a value derived from a fetched response.
    pub server_dependent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiCallRecord {
    pub script: ScriptId,
    pub name: String,
    pub args: String,
    pub span: Span,
}

/// Byte cap on stringified API arguments.
pub const ARG_SUMMARY_CAP: usize = 256;

pub fn cap_summary(s: &str) -> String {
    if s.len() <= ARG_SUMMARY_CAP {
        return s.to_string();
    }
    let mut end = ARG_SUMMARY_CAP;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    s[..end].to_string()
}

/// Chronological activity during a run, in the order it happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Activity {
    Api(ApiCallRecord),
    Forced(ForcedExecEvent),
    Resource404 { url: String },
    Command { cmd: String },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn third_party_prefix() {
        assert!(!is_third_party_url("ext://abc/lib.js", "abc"));
        assert!(is_third_party_url("ext://abd/lib.js", "abc"));
        assert!(is_third_party_url("https://cdn.example/x.js", "abc"));
    }

    #[test]
    fn summary_cap_respects_char_boundaries() {
        let s = "é".repeat(200);
        let c = cap_summary(&s);
        assert!(c.len() <= ARG_SUMMARY_CAP);
        assert!(s.starts_with(&c));
        assert_eq!(cap_summary("short"), "short");
    }

    #[test]
    fn line_counts() {
        assert_eq!(line_count(""), 0);
        assert_eq!(line_count("a"), 1);
        assert_eq!(line_count("a\nb\n"), 2);
    }
}
