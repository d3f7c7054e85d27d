use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::catalog::{terminal_name, ApiCatalog, ApiSignature, GLOBAL_NAMES};
use crate::frontend::{Node, NodeKind, Op, Payload, Span};

pub const DEFAULT_NODE_LIMIT: usize = 500;

/// Names of the host scheduling functions whose callbacks are treated as guarded regions.
pub const TIMER_APIS: [&str; 2] = ["setTimeout", "setInterval"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConditionKind {
    IfStatement,
    Conditional,
    SwitchStatement,
    DoWhileStatement,
    WhileStatement,
    ForStatement,
    ForInStatement,
    ForOfStatement,
    Binary,
    Unary,
    Nary,
    TryCatchStatement,
    /// A `setTimeout`/`setInterval` call; the callback is the guarded region.
    Timer,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 13] = [
        ConditionKind::IfStatement,
        ConditionKind::Conditional,
        ConditionKind::SwitchStatement,
        ConditionKind::DoWhileStatement,
        ConditionKind::WhileStatement,
        ConditionKind::ForStatement,
        ConditionKind::ForInStatement,
        ConditionKind::ForOfStatement,
        ConditionKind::Binary,
        ConditionKind::Unary,
        ConditionKind::Nary,
        ConditionKind::TryCatchStatement,
        ConditionKind::Timer,
    ];

    pub fn as_str(self) -> &'static str {
        use ConditionKind::*;
        match self {
            IfStatement => "IfStatement",
            Conditional => "Conditional",
            SwitchStatement => "SwitchStatement",
            DoWhileStatement => "DoWhileStatement",
            WhileStatement => "WhileStatement",
            ForStatement => "ForStatement",
            ForInStatement => "ForInStatement",
            ForOfStatement => "ForOfStatement",
            Binary => "Binary",
            Unary => "Unary",
            Nary => "Nary",
            TryCatchStatement => "TryCatchStatement",
            Timer => "Timer",
        }
    }

    pub fn group(self) -> &'static str {
        use ConditionKind::*;
        match self {
            IfStatement | Conditional | SwitchStatement => "conditional",
            DoWhileStatement | WhileStatement | ForStatement | ForInStatement | ForOfStatement => "iteration",
            Binary | Unary | Nary => "logical",
            TryCatchStatement => "exception",
            Timer => "timer",
        }
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies a node within one script's tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeKey {
    pub kind: NodeKind,
    pub span: Span,
}

impl NodeKey {
    pub fn of(node: &Node) -> Self {
        NodeKey { kind: node.kind, span: node.span }
    }
}

/// Is this a call of a host timer function (`setTimeout(...)`, `window.setInterval(...)`)?
pub fn is_timer_call(node: &Node) -> bool {
    if node.kind != NodeKind::Call || node.children.len() < 2 {
        return false;
    }
    let callee = &node.children[0];
    let name = match callee.kind {
        NodeKind::Identifier => callee.name(),
        NodeKind::MemberAccess
            if callee.children[0].kind == NodeKind::Identifier
                && callee.children[0].name().is_some_and(|n| GLOBAL_NAMES.contains(&n)) =>
        {
            terminal_name(callee)
        }
        _ => None,
    };
    name.is_some_and(|n| TIMER_APIS.contains(&n))
}

pub fn condition_kind(node: &Node) -> Option<ConditionKind> {
    use ConditionKind as C;
    Some(match node.kind {
        NodeKind::IfStatement => C::IfStatement,
        NodeKind::Conditional => C::Conditional,
        NodeKind::SwitchStatement => C::SwitchStatement,
        NodeKind::DoWhileStatement => C::DoWhileStatement,
        NodeKind::WhileStatement => C::WhileStatement,
        NodeKind::ForStatement => C::ForStatement,
        NodeKind::ForInStatement => C::ForInStatement,
        NodeKind::ForOfStatement => C::ForOfStatement,
        NodeKind::TryCatchStatement => C::TryCatchStatement,
        NodeKind::BinaryOperation if node.op().is_some_and(Op::is_logical) => C::Binary,
        NodeKind::NaryOperation if node.op().is_some_and(Op::is_logical) => C::Nary,
        NodeKind::UnaryOperation if node.op() == Some(Op::Not) => C::Unary,
        NodeKind::Call if is_timer_call(node) => C::Timer,
        _ => return None,
    })
}

/// The guard expression of a condition, if it has one.
pub fn guard_of(node: &Node) -> Option<&Node> {
    match node.kind {
        NodeKind::IfStatement
        | NodeKind::Conditional
        | NodeKind::SwitchStatement
        | NodeKind::WhileStatement
        | NodeKind::ForInStatement
        | NodeKind::ForOfStatement
        | NodeKind::BinaryOperation
        | NodeKind::NaryOperation
        | NodeKind::UnaryOperation => node.children.first(),
        NodeKind::DoWhileStatement => node.children.get(1),
        NodeKind::ForStatement => match node.payload {
            Payload::For { init, test: true, .. } => node.children.get(usize::from(init)),
            _ => None,
        },
        NodeKind::Call => node.children.get(2),
        _ => None,
    }
}

/// Subtrees whose execution depends on the condition, in source order.
pub fn dependent_regions(node: &Node) -> Vec<&Node> {
    let c = &node.children;
    match condition_kind(node) {
        None => Vec::new(),
        Some(kind) => match kind {
            ConditionKind::IfStatement | ConditionKind::Conditional | ConditionKind::SwitchStatement => {
                c[1..].iter().collect()
            }
            ConditionKind::DoWhileStatement => vec![&c[0]],
            ConditionKind::WhileStatement | ConditionKind::ForInStatement | ConditionKind::ForOfStatement => {
                vec![&c[1]]
            }
            ConditionKind::ForStatement => c.last().into_iter().collect(),
            ConditionKind::TryCatchStatement => {
                let has_catch = matches!(node.payload, Payload::Try { has_catch: true, .. });
                if has_catch {
                    vec![&c[0], &c[1]]
                } else {
                    vec![&c[0]]
                }
            }
            ConditionKind::Binary | ConditionKind::Nary => c[1..].iter().collect(),
            ConditionKind::Unary => vec![&c[0]],
            ConditionKind::Timer => vec![&c[1]],
        },
    }
}

/// All condition nodes in forward pre-order.
pub fn find_condition_nodes(program: &Node) -> Vec<&Node> {
    let mut out = Vec::new();
    program.walk(&mut |n| {
        if condition_kind(n).is_some() {
            out.push(n);
        }
    });
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanResult {
    pub condition: NodeKey,
    pub kind: ConditionKind,
    pub apis_found: BTreeSet<ApiSignature>,
    pub nodes_visited: usize,
    pub truncated: bool,
}

/// Bounded pre-order walk over `regions`, collecting catalog API matches.
///
/// Returns `(apis, visited, truncated)`; `truncated` means nodes remained when the budget ran out.
pub fn scan_regions(regions: &[&Node], catalog: &ApiCatalog, limit: usize) -> (BTreeSet<ApiSignature>, usize, bool) {
    let mut apis = BTreeSet::new();
    let mut visited = 0usize;
    let mut stack: Vec<&Node> = regions.iter().rev().copied().collect();
    loop {
        if visited >= limit {
            return (apis, visited, !stack.is_empty());
        }
        let Some(n) = stack.pop() else {
            return (apis, visited, false);
        };
        visited += 1;
        if matches!(n.kind, NodeKind::Call | NodeKind::New) {
            apis.extend(catalog.matching(n).cloned());
        }
        stack.extend(n.children.iter().rev());
    }
}

pub fn scan_block_for_apis(condition: &Node, catalog: &ApiCatalog, limit: usize) -> ScanResult {
    let kind = condition_kind(condition).unwrap_or(ConditionKind::IfStatement);
    let regions = dependent_regions(condition);
    let (apis_found, nodes_visited, truncated) = scan_regions(&regions, catalog, limit.max(1));
    ScanResult { condition: NodeKey::of(condition), kind, apis_found, nodes_visited, truncated }
}

/// Conditions whose dependent blocks contain at least one injection API.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForcedPlan {
    pub marked: BTreeMap<NodeKey, ScanResult>,
}

impl ForcedPlan {
    pub fn empty() -> Self {
        ForcedPlan::default()
    }

    pub fn get(&self, node: &Node) -> Option<&ScanResult> {
        if self.marked.is_empty() {
            return None;
        }
        self.marked.get(&NodeKey::of(node))
    }

    pub fn is_empty(&self) -> bool {
        self.marked.is_empty()
    }

    pub fn len(&self) -> usize {
        self.marked.len()
    }
}

pub fn mark_forced_blocks(program: &Node, catalog: &ApiCatalog, limit: usize) -> ForcedPlan {
    let mut marked = BTreeMap::new();
    for cond in find_condition_nodes(program) {
        let r = scan_block_for_apis(cond, catalog, limit);
        if !r.apis_found.is_empty() {
            marked.insert(r.condition, r);
        }
    }
    ForcedPlan { marked }
}

/// Every catalog API appearing anywhere in the program.
pub fn static_apis(program: &Node, catalog: &ApiCatalog) -> BTreeSet<ApiSignature> {
    let mut out = BTreeSet::new();
    program.walk(&mut |n| {
        if matches!(n.kind, NodeKind::Call | NodeKind::New) {
            out.extend(catalog.matching(n).cloned());
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{node_count, parse_str};

    fn names(set: &BTreeSet<ApiSignature>) -> Vec<&str> {
        set.iter().map(|s| s.name.as_str()).collect()
    }

    #[test]
    fn no_conditions() {
        let p = parse_str("x = 1;").unwrap();
        assert!(find_condition_nodes(&p).is_empty());
    }

    #[test]
    fn nested_order_follows_source() {
        let p = parse_str("while (a) {\n if (b) { c(); }\n}").unwrap();
        let conds = find_condition_nodes(&p);
        assert_eq!(conds.len(), 2);
        assert_eq!(conds[0].kind, NodeKind::WhileStatement);
        assert_eq!(conds[1].kind, NodeKind::IfStatement);
        assert!(conds[0].span.start_line < conds[1].span.start_line);
    }

    #[test]
    fn empty_block_scan() {
        let p = parse_str("if (c) {}").unwrap();
        let r = scan_block_for_apis(&p.children[0], &ApiCatalog::browser(), DEFAULT_NODE_LIMIT);
        assert!(r.apis_found.is_empty());
        assert_eq!(r.nodes_visited, 1);
        assert!(!r.truncated);
    }

    #[test]
    fn guard_is_not_scanned() {
        let p = parse_str("if (fetch('x')) { a(); }").unwrap();
        let plan = mark_forced_blocks(&p, &ApiCatalog::browser(), DEFAULT_NODE_LIMIT);
        assert!(plan.is_empty());
    }

    #[test]
    fn nested_functions_are_scanned() {
        let p = parse_str("if (a) { $(function () { document.body.appendChild(x); }); }").unwrap();
        let plan = mark_forced_blocks(&p, &ApiCatalog::browser(), DEFAULT_NODE_LIMIT);
        assert_eq!(plan.len(), 1);
    }

    #[test]
    fn full_scan_counts_whole_region() {
        let p = parse_str("if (a) { b(1, 2); } else { c.d = [1, {e: 2}]; }").unwrap();
        let cond = &p.children[0];
        let r = scan_block_for_apis(cond, &ApiCatalog::browser(), DEFAULT_NODE_LIMIT);
        assert!(!r.truncated);
        assert_eq!(r.nodes_visited, node_count(&cond.children[1]) + node_count(&cond.children[2]));
    }

    #[test]
    fn timer_callback_is_a_region() {
        let p = parse_str("setTimeout(function () { el.appendChild(s); }, 5000);").unwrap();
        let conds = find_condition_nodes(&p);
        assert_eq!(conds.len(), 1);
        let r = scan_block_for_apis(conds[0], &ApiCatalog::browser(), DEFAULT_NODE_LIMIT);
        assert_eq!(r.kind, ConditionKind::Timer);
        assert_eq!(names(&r.apis_found), ["appendChild"]);
        let plain = parse_str("setTimeout(function () { x++; }, 5);").unwrap();
        assert!(mark_forced_blocks(&plain, &ApiCatalog::browser(), 500).is_empty());
    }

    #[test]
    fn logical_regions_are_right_operands() {
        let p = parse_str("a && eval(s); eval(t) || b;").unwrap();
        let plan = mark_forced_blocks(&p, &ApiCatalog::browser(), DEFAULT_NODE_LIMIT);
        assert_eq!(plan.len(), 1);
        let key = plan.marked.keys().next().unwrap();
        assert_eq!(key.span.start_line, 1);
        assert_eq!(key.span.start_col, 1);
    }

    #[test]
    fn try_scans_try_and_catch_not_finally() {
        let cat = ApiCatalog::browser();
        let p = parse_str("try { a(); } catch (e) { b(); } finally { eval(x); }").unwrap();
        assert!(mark_forced_blocks(&p, &cat, 500).is_empty());
        let p = parse_str("try { a(); } catch (e) { eval(x); }").unwrap();
        assert_eq!(mark_forced_blocks(&p, &cat, 500).len(), 1);
    }

    #[test]
    fn limit_one_visits_only_the_root() {
        let p = parse_str("if (a) { eval(x); }").unwrap();
        let r = scan_block_for_apis(&p.children[0], &ApiCatalog::browser(), 1);
        assert_eq!(r.nodes_visited, 1);
        assert!(r.truncated);
        assert!(r.apis_found.is_empty());
    }
}
