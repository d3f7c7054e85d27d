use std::collections::BTreeSet;

use crate::frontend::{Lit, Node, NodeKind};
use crate::scanner::{dependent_regions, guard_of, ConditionKind, Mode};
use crate::tracker::{ForcedExecEvent, ScriptId};

use super::taxonomy::EvasionTaxonomy;

pub const DEFAULT_TIMEBOMB_FLOOR_MS: f64 = 60_000.0;

/// Dotted text of a member chain, calls spelled `()`, unknown computed keys spelled `[]`.
fn chain_text(n: &Node) -> Option<String> {
    match n.kind {
        NodeKind::Identifier => n.name().map(str::to_string),
        NodeKind::MemberAccess => {
            let base = chain_text(&n.children[0]).unwrap_or_default();
            let key = match n.children.get(1) {
                None => n.name().map(|s| format!(".{s}")),
                Some(k) => match k.literal() {
                    Some(Lit::String(s)) => Some(format!(".{s}")),
                    _ => Some("[]".to_string()),
                },
            };
            Some(base + &key.unwrap_or_default())
        }
        NodeKind::Call => Some(chain_text(&n.children[0]).unwrap_or_default() + "()"),
        _ => None,
    }
}

/// Lowercase lexical tokens of a subtree: identifiers, member chains, string and regex
/// literals, and `callee('literal')` forms.
pub fn signal_tokens(root: &Node) -> Vec<String> {
    let mut out = BTreeSet::new();
    root.walk(&mut |n| match n.kind {
        NodeKind::Identifier => {
            if let Some(name) = n.name() {
                out.insert(name.to_lowercase());
            }
        }
        NodeKind::MemberAccess => {
            if let Some(t) = chain_text(n) {
                out.insert(t.to_lowercase());
            }
        }
        NodeKind::Literal => match n.literal() {
            Some(Lit::String(s)) => {
                out.insert(s.to_lowercase());
            }
            Some(Lit::Regex { pattern, .. }) => {
                out.insert(pattern.to_lowercase());
            }
            _ => {}
        },
        NodeKind::Call => {
            let callee = chain_text(&n.children[0]).unwrap_or_default();
            match n.children.get(1).and_then(Node::literal) {
                Some(Lit::String(s)) => {
                    out.insert(format!("{callee}('{s}')").to_lowercase());
                }
                _ => {
                    out.insert(format!("{callee}()").to_lowercase());
                }
            }
        }
        NodeKind::UnaryOperation => {
            if let (Some(op), Some(c)) = (n.op(), n.children.first()) {
                if let Some(t) = chain_text(c) {
                    out.insert(format!("{} {}", op.symbol(), t).to_lowercase());
                }
            }
        }
        _ => {}
    });
    out.into_iter().collect()
}

/// Settings for [`classify_evasions`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyConfig {
    pub mode: Mode,
    pub timebomb_floor_ms: f64,
}

impl ClassifyConfig {
    pub fn new(mode: Mode) -> Self {
        ClassifyConfig { mode, timebomb_floor_ms: DEFAULT_TIMEBOMB_FLOOR_MS }
    }
}

/// Evasion categories (slugs) suggested by the guards of forced blocks.
///
/// `program_of` returns the parsed tree of the script that owns an event; guards are
/// re-located in it by the event's node kind and span.
pub fn classify_evasions<'a>(
    events: &[ForcedExecEvent],
    program_of: impl Fn(ScriptId) -> Option<&'a Node>,
    taxonomy: &EvasionTaxonomy,
    config: ClassifyConfig,
) -> BTreeSet<String> {
    let mut found = BTreeSet::new();
    let applicable = |slug: &str| taxonomy.by_slug(slug).is_some_and(|c| c.applies_to(config.mode));
    for ev in events {
        let cond = program_of(ev.script).and_then(|p| p.find(ev.node_kind, ev.condition_span));
        let mut tokens = cond.and_then(guard_of).map(signal_tokens).unwrap_or_default();
        tokens.extend(ev.guard_sources.iter().map(|s| s.to_lowercase()));
        for c in taxonomy.matching(&tokens, config.mode) {
            found.insert(c.slug.clone());
        }
        if ev.server_dependent && applicable("server_side") {
            found.insert("server_side".into());
        }
        if ev.kind == ConditionKind::Timer {
            let delay: f64 = ev.guard.parse().unwrap_or(0.0);
            if delay >= config.timebomb_floor_ms {
                let body_tokens: Vec<String> = cond
                    .map(|c| dependent_regions(c).into_iter().flat_map(signal_tokens).collect())
                    .unwrap_or_default();
                let cookie = taxonomy.by_slug("cookie_timebomb").is_some_and(|c| {
                    c.signals.iter().any(|s| body_tokens.iter().chain(&tokens).any(|t| t.contains(s.as_str())))
                });
                let slug = if cookie { "cookie_timebomb" } else { "localstorage_timebomb" };
                if applicable(slug) {
                    found.insert(slug.to_string());
                }
            }
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_str;

    #[test]
    fn tokens_of_member_chains_and_calls() {
        let p = parse_str("if (window.height > 10 && $('#a').hasClass('b') && tab.url.match(/linkedin/)) {}").unwrap();
        let t = signal_tokens(guard_of(&p.children[0]).unwrap());
        assert!(t.contains(&"window.height".to_string()));
        assert!(t.contains(&"$().hasclass('b')".to_string()));
        assert!(t.contains(&"$('#a')".to_string()));
        assert!(t.contains(&"tab.url.match".to_string()));
        assert!(t.contains(&"linkedin".to_string()));
    }

    #[test]
    fn window_size_tokens_match_only_window_size() {
        let tax = EvasionTaxonomy::default();
        let p = parse_str("x = window.height + window.width;").unwrap();
        let t = signal_tokens(&p);
        let cats: Vec<_> = tax.matching(&t, Mode::Browser).map(|c| c.slug.as_str()).collect();
        assert_eq!(cats, ["window_size"]);
    }
}
