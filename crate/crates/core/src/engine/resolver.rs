use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceKind {
    Script,
    Text,
    #[serde(rename = "404")]
    NotFound,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resource {
    pub kind: ResourceKind,
    #[serde(default)]
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CommandFixture {
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
    #[serde(default)]
    pub code: i32,
}

#[derive(Debug, Error)]
pub enum ResolverError {
    #[error("cannot read resource fixtures {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid resource fixtures: {0}")]
    Invalid(#[from] serde_json::Error),
}

/// Offline stand-in for the network and the shell. Keys ending in `*` match by prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ResourceResolver {
    #[serde(default)]
    pub resources: BTreeMap<String, Resource>,
    #[serde(default)]
    pub commands: BTreeMap<String, CommandFixture>,
}

/// Outcome of a URL lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolved {
    /// Absolute form of the requested URL when a base made it resolvable.
    pub url: String,
    pub resource: Option<Resource>,
}

impl ResourceResolver {
    pub fn from_json(text: &str) -> Result<Self, ResolverError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ResolverError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ResolverError::Io { path: path.display().to_string(), source })?;
        ResourceResolver::from_json(&text)
    }

    /// Merge `other` into `self`; entries of `other` win.
    pub fn extend(&mut self, other: ResourceResolver) {
        self.resources.extend(other.resources);
        self.commands.extend(other.commands);
    }

    fn lookup(&self, key: &str) -> Option<&Resource> {
        if let Some(r) = self.resources.get(key) {
            return Some(r);
        }
        self.resources
            .iter()
            .filter_map(|(k, r)| k.strip_suffix('*').filter(|p| key.starts_with(p)).map(|p| (p.len(), r)))
            .max_by_key(|(len, _)| *len)
            .map(|(_, r)| r)
    }

    /// Look up `raw` as written, then its absolute form against `base`. `NotFound` fixtures
    /// resolve to `None` like unmapped URLs.
    pub fn resolve(&self, raw: &str, base: Option<&str>) -> Resolved {
        let absolute = absolutize(raw, base);
        let found = self.lookup(raw).or_else(|| self.lookup(&absolute));
        let resource = found.filter(|r| r.kind != ResourceKind::NotFound).cloned();
        Resolved { url: absolute, resource }
    }

    pub fn command(&self, cmd: &str) -> CommandFixture {
        self.commands.get(cmd).cloned().unwrap_or_default()
    }
}

/// Resolve `raw` against `base`; returns `raw` unchanged when either does not parse.
pub fn absolutize(raw: &str, base: Option<&str>) -> String {
    if let Ok(u) = url::Url::parse(raw) {
        return u.to_string();
    }
    match base.and_then(|b| url::Url::parse(b).ok()).and_then(|b| b.join(raw).ok()) {
        Some(u) => u.to_string(),
        None => raw.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> ResourceResolver {
        ResourceResolver::from_json(
            r#"{
              "resources": {
                "/vendor/a.js": {"kind": "script", "body": "a=1"},
                "https://cdn.example/lib/*": {"kind": "text", "body": "lib"},
                "https://cdn.example/lib/special.js": {"kind": "script", "body": "s"},
                "https://dead.example/x.js": {"kind": "404"}
              },
              "commands": {"whoami": {"stdout": "root\n", "code": 0}}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn exact_then_absolute_then_prefix() {
        let r = fixture();
        let a = r.resolve("/vendor/a.js", Some("https://news.example.com/page"));
        assert_eq!(a.url, "https://news.example.com/vendor/a.js");
        assert_eq!(a.resource.unwrap().body, "a=1");
        assert_eq!(r.resolve("https://cdn.example/lib/special.js", None).resource.unwrap().body, "s");
        assert_eq!(r.resolve("https://cdn.example/lib/other.js", None).resource.unwrap().body, "lib");
    }

    #[test]
    fn missing_and_dead() {
        let r = fixture();
        assert!(r.resolve("https://gone.example/x.js", None).resource.is_none());
        assert!(r.resolve("https://dead.example/x.js", None).resource.is_none());
    }

    #[test]
    fn commands_default_to_empty_success() {
        let r = fixture();
        assert_eq!(r.command("whoami").stdout, "root\n");
        assert_eq!(r.command("ls"), CommandFixture::default());
    }

    #[test]
    fn ext_urls() {
        assert_eq!(absolutize("ext://abc/x.js", None), "ext://abc/x.js");
        assert_eq!(absolutize("lib.js", Some("ext://abc/bg.js")), "ext://abc/lib.js");
    }
}
