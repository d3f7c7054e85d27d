use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{Lit, Node, NodeKind};
use crate::post::taxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Browser,
    Npm,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Browser => "browser",
            Mode::Npm => "npm",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MatchKind {
    /// `name(...)`, or `window.name(...)` and friends.
    #[serde(rename = "bare-call")]
    BareCall,
    /// Any call whose callee chain ends in `name`.
    #[serde(rename = "member-terminal")]
    MemberTerminal,
    /// `new name(...)` only.
    #[serde(rename = "constructor")]
    Constructor,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ApiSignature {
    pub name: String,
    pub match_kind: MatchKind,
}

impl ApiSignature {
    pub fn new(name: &str, match_kind: MatchKind) -> Self {
        ApiSignature { name: name.to_string(), match_kind }
    }

    /// Syntactic match against a `Call` or `New` node.
    pub fn matches(&self, node: &Node) -> bool {
        let Some(callee) = node.children.first() else {
            return false;
        };
        match (node.kind, self.match_kind) {
            (NodeKind::Call, MatchKind::BareCall) | (NodeKind::New, MatchKind::Constructor) => match callee.kind {
                NodeKind::Identifier => callee.name() == Some(&self.name),
                NodeKind::MemberAccess => {
                    is_global_object(&callee.children[0]) && terminal_name(callee) == Some(&self.name)
                }
                _ => false,
            },
            (NodeKind::Call, MatchKind::MemberTerminal) => match callee.kind {
                NodeKind::Identifier => callee.name() == Some(&self.name),
                NodeKind::MemberAccess => terminal_name(callee) == Some(&self.name),
                _ => false,
            },
            _ => false,
        }
    }
}

pub(crate) const GLOBAL_NAMES: [&str; 3] = ["window", "self", "globalThis"];

fn is_global_object(n: &Node) -> bool {
    n.kind == NodeKind::Identifier && n.name().is_some_and(|name| GLOBAL_NAMES.contains(&name))
}

/// Last property name of a member access, when statically known.
pub(crate) fn terminal_name(member: &Node) -> Option<&str> {
    match member.children.get(1) {
        None => member.name(),
        Some(key) => match key.literal() {
            Some(Lit::String(s)) => Some(s),
            _ => None,
        },
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid catalog: {0}")]
    Invalid(#[from] serde_json::Error),
}

/// Injection-target APIs and evasion signals for one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiCatalog {
    pub mode: Mode,
    pub injection_apis: Vec<ApiSignature>,
    /// Category slug to signal terms. Missing categories fall back to the built-in table.
    #[serde(default)]
    pub evasion_apis: BTreeMap<String, Vec<String>>,
}

impl ApiCatalog {
    pub fn browser() -> Self {
        use MatchKind::*;
        let injection_apis = vec![
            ApiSignature::new("setTimeout", BareCall),
            ApiSignature::new("setInterval", BareCall),
            ApiSignature::new("append", MemberTerminal),
            ApiSignature::new("prepend", MemberTerminal),
            ApiSignature::new("insertAfter", MemberTerminal),
            ApiSignature::new("insertBefore", MemberTerminal),
            ApiSignature::new("appendChild", MemberTerminal),
            ApiSignature::new("fetch", BareCall),
            ApiSignature::new("eval", BareCall),
            ApiSignature::new("Function", Constructor),
        ];
        ApiCatalog { mode: Mode::Browser, injection_apis, evasion_apis: taxonomy::default_signal_table() }
    }

    pub fn npm() -> Self {
        let mut c = ApiCatalog::browser();
        c.mode = Mode::Npm;
        for name in ["exec", "execFile", "execSync", "spawnSync", "urlopen"] {
            c.injection_apis.push(ApiSignature::new(name, MatchKind::MemberTerminal));
        }
        c
    }

    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Browser => ApiCatalog::browser(),
            Mode::Npm => ApiCatalog::npm(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let mut c: ApiCatalog = serde_json::from_str(text)?;
        for (k, v) in taxonomy::default_signal_table() {
            c.evasion_apis.entry(k).or_insert(v);
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CatalogError::Io { path: path.display().to_string(), source })?;
        ApiCatalog::from_json(&text)
    }

    /// Every signature that matches a `Call`/`New` node.
    pub fn matching<'a>(&'a self, node: &'a Node) -> impl Iterator<Item = &'a ApiSignature> + 'a {
        self.injection_apis.iter().filter(move |s| s.matches(node))
    }

    pub fn contains_name(&self, name: &str) -> bool {
        self.injection_apis.iter().any(|s| s.name == name)
    }

    pub fn signals(&self, slug: &str) -> &[String] {
        self.evasion_apis.get(slug).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_str;

    fn first_call(src: &str) -> Node {
        let root = parse_str(src).unwrap();
        let mut found = None;
        root.walk(&mut |n| {
            if found.is_none() && matches!(n.kind, NodeKind::Call | NodeKind::New) {
                found = Some(n.clone());
            }
        });
        found.unwrap()
    }

    #[test]
    fn default_catalogs() {
        let b = ApiCatalog::browser();
        for n in [
            "setTimeout",
            "setInterval",
            "append",
            "prepend",
            "insertAfter",
            "insertBefore",
            "appendChild",
            "fetch",
            "eval",
            "Function",
        ] {
            assert!(b.contains_name(n), "{n}");
        }
        assert!(!b.contains_name("exec"));
        let n = ApiCatalog::npm();
        for name in ["exec", "execFile", "execSync", "spawnSync", "urlopen", "eval"] {
            assert!(n.contains_name(name), "{name}");
        }
    }

    #[test]
    fn match_kinds() {
        let c = ApiCatalog::browser();
        let names = |src: &str| {
            let call = first_call(src);
            c.matching(&call).map(|s| s.name.clone()).collect::<Vec<_>>()
        };
        assert_eq!(names("el.appendChild(x)"), ["appendChild"]);
        assert_eq!(names("a.b.c.appendChild(x)"), ["appendChild"]);
        assert_eq!(names("window.setTimeout(f, 1)"), ["setTimeout"]);
        assert!(names("obj.setTimeout(f, 1)").is_empty());
        assert_eq!(names("new Function('x')"), ["Function"]);
        assert!(names("Function('x')").is_empty());
        assert!(names("new fetch()").is_empty());
        assert_eq!(names("el['insertBefore'](a, b)"), ["insertBefore"]);
    }

    #[test]
    fn catalog_from_config_adds_apis() {
        let text = r#"{"mode":"browser","injection_apis":[{"name":"write","match_kind":"member-terminal"}]}"#;
        let c = ApiCatalog::from_json(text).unwrap();
        assert!(c.contains_name("write"));
        assert!(!c.contains_name("eval"));
        assert!(!c.signals("window_size").is_empty());
        assert!(ApiCatalog::from_json("{").is_err());
    }

    #[test]
    fn catalog_json_round_trip() {
        let c = ApiCatalog::npm();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ApiCatalog::from_json(&text).unwrap(), c);
    }
}
