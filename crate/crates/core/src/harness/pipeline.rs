//! Runs a corpus end to end: forced (and optional baseline) runs per sample and page
//! context, reports, clustering with flag expansion, metrics and the run directory.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cluster::{
    build_feature_vector, cluster_sizes, dbscan, expand_flags, ClusterAssignment, DbscanParams, FeatureVector,
};
use crate::engine::{Engine, EngineConfig, PageContext, ResourceResolver, RunOptions};
use crate::frontend::parse_str;
use crate::post::{
    classify_evasions, compute_metrics, flag, ClassifyConfig, EvasionTaxonomy, Metrics, SampleReport,
    DEFAULT_FLAG_THRESHOLD,
};
use crate::scanner::{ApiCatalog, Mode, DEFAULT_NODE_LIMIT};
use crate::tracker::{coverage_set, is_third_party_url, log_lines, maximal_paths, ChainStats, Provenance};

use super::ingest::{Label, Sample, SampleKind};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Forces one mode for every sample; otherwise npm samples run in npm mode and the rest in browser mode.
    pub mode: Option<Mode>,
    /// Replaces the built-in catalog of the sample's mode.
    pub catalog: Option<Arc<ApiCatalog>>,
    pub resolver: Arc<ResourceResolver>,
    pub node_limit: usize,
    pub step_budget: u64,
    pub threshold: usize,
    /// Apply the threshold to each context's run separately instead of to the sum.
    pub per_run_threshold: bool,
    /// Page contexts for browser-mode samples. Npm samples always run once.
    pub contexts: Vec<PageContext>,
    pub baseline: bool,
    pub dbscan: DbscanParams,
    /// Worker threads; 0 uses rayon's default.
    pub jobs: usize,
    pub seed: u64,
    /// Marks every output as coming from a generated corpus.
    pub synthetic: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: None,
            catalog: None,
            resolver: Arc::new(ResourceResolver::default()),
            node_limit: DEFAULT_NODE_LIMIT,
            step_budget: 1_000_000,
            threshold: DEFAULT_FLAG_THRESHOLD,
            per_run_threshold: false,
            contexts: PageContext::defaults(),
            baseline: false,
            dbscan: DbscanParams::default(),
            jobs: 0,
            seed: 0,
            synthetic: false,
        }
    }
}

impl PipelineConfig {
    pub fn mode_for(&self, sample: &Sample) -> Mode {
        self.mode.unwrap_or_else(|| sample.kind.default_mode())
    }

    fn catalog_for(&self, mode: Mode) -> Arc<ApiCatalog> {
        self.catalog.clone().unwrap_or_else(|| Arc::new(ApiCatalog::for_mode(mode)))
    }

    fn contexts_for(&self, mode: Mode) -> Vec<PageContext> {
        if mode == Mode::Npm || self.contexts.is_empty() {
            vec![self.contexts.first().cloned().unwrap_or_else(PageContext::news)]
        } else {
            self.contexts.clone()
        }
    }
}

/// Everything one sample produced.
#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub report: SampleReport,
    /// JSONL lines of every forced run, context after context.
    pub log: Vec<String>,
    pub features: FeatureVector,
    /// Forced executions per context.
    pub per_context: Vec<usize>,
    /// Executed `(script key, line)` pairs, united over contexts.
    pub coverage: BTreeSet<(String, u32)>,
    pub coverage_baseline: Option<BTreeSet<(String, u32)>>,
}

struct RunResult {
    events: usize,
    third_party: Vec<String>,
    paths: Vec<usize>,
    scripts: usize,
    coverage: BTreeSet<(String, u32)>,
    categories: BTreeSet<String>,
    log: Vec<String>,
    errors: Vec<String>,
}

fn text_hash(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

fn run_once(
    sample: &Sample,
    cfg: &PipelineConfig,
    mode: Mode,
    page: &PageContext,
    options: RunOptions,
    index: usize,
) -> RunResult {
    let catalog = cfg.catalog_for(mode);
    let taxonomy = EvasionTaxonomy::from_catalog(&catalog);
    let mut ec = EngineConfig::new(mode).with_options(options);
    ec.catalog = catalog;
    ec.node_limit = cfg.node_limit;
    ec.step_budget = cfg.step_budget;
    ec.sample_id = sample.id.clone();
    ec.page = page.clone();
    ec.local_files = Arc::new(sample.files.clone());
    ec.seed = cfg.seed.wrapping_add(index as u64);
    let mut engine = Engine::new(ec, cfg.resolver.clone());
    if sample.kind == SampleKind::Npm {
        for c in &sample.commands {
            engine.record_command(c);
        }
    }
    for e in &sample.entries {
        engine.run_root(&e.path, &e.text);
        if engine.budget_exhausted() {
            break;
        }
    }

    let records = engine.records();
    let mut third_party = Vec::new();
    for r in records {
        if let Provenance::Injected { url, .. } = &r.provenance {
            if is_third_party_url(url, &sample.id) && !third_party.contains(url) {
                third_party.push(url.clone());
            }
        }
    }
    let coverage =
        coverage_set(records.iter().map(|r| (r, r.coverage_key(&text_hash(engine.script_text(r.id).unwrap_or(""))))));
    let events: Vec<_> = engine.forced_events().into_iter().cloned().collect();
    let categories = classify_evasions(&events, |id| engine.program(id), &taxonomy, ClassifyConfig::new(mode));
    let mut errors = Vec::new();
    for r in records.iter().filter(|r| matches!(r.provenance, Provenance::Root { .. })) {
        if r.parse_failed {
            if let Provenance::Root { path } = &r.provenance {
                errors.push(format!("parse error in {path}: {}", r.error.clone().unwrap_or_default()));
            }
        }
    }
    if engine.budget_exhausted() {
        errors.push("step budget exhausted".to_string());
    }
    RunResult {
        events: events.len(),
        third_party,
        paths: maximal_paths(records),
        scripts: records.len(),
        coverage,
        categories,
        log: log_lines(records, engine.activity()),
        errors,
    }
}

fn analyze(sample: &Sample, cfg: &PipelineConfig) -> SampleOutcome {
    let mode = cfg.mode_for(sample);
    let contexts = cfg.contexts_for(mode);
    let forced: Vec<RunResult> =
        contexts.iter().enumerate().map(|(i, p)| run_once(sample, cfg, mode, p, RunOptions::FORCED, i)).collect();

    let per_context: Vec<usize> = forced.iter().map(|r| r.events).collect();
    let forced_exec_count = per_context.iter().sum();
    let mut third_party_urls: Vec<String> = Vec::new();
    let mut paths = Vec::new();
    let mut scripts = 0;
    let mut coverage = BTreeSet::new();
    let mut categories = BTreeSet::new();
    let mut log = Vec::new();
    let mut errors = BTreeSet::new();
    for r in forced {
        for u in r.third_party {
            if !third_party_urls.contains(&u) {
                third_party_urls.push(u);
            }
        }
        paths.extend(r.paths);
        scripts += r.scripts;
        coverage.extend(r.coverage);
        categories.extend(r.categories);
        log.extend(r.log);
        errors.extend(r.errors);
    }

    let coverage_baseline = cfg.baseline.then(|| {
        let mut base = BTreeSet::new();
        for (i, p) in contexts.iter().enumerate() {
            base.extend(run_once(sample, cfg, mode, p, RunOptions::BASELINE, i).coverage);
        }
        base
    });

    let decision = if cfg.per_run_threshold {
        let best = per_context.iter().copied().max().unwrap_or(0);
        flag(best, &third_party_urls, cfg.threshold)
    } else {
        flag(forced_exec_count, &third_party_urls, cfg.threshold)
    };

    let catalog = cfg.catalog_for(mode);
    let taxonomy = EvasionTaxonomy::from_catalog(&catalog);
    let parsed: Vec<_> = sample.entries.iter().filter_map(|e| parse_str(&e.text).ok()).collect();
    let features = build_feature_vector(&sample.id, &parsed.iter().collect::<Vec<_>>(), &taxonomy, mode);

    SampleOutcome {
        report: SampleReport {
            id: sample.id.clone(),
            mode,
            forced_exec_count,
            third_party_injection_count: third_party_urls.len(),
            third_party_urls,
            chains: ChainStats::from_lengths(&paths, scripts),
            coverage_forced: coverage.len(),
            coverage_baseline: coverage_baseline.as_ref().map(BTreeSet::len),
            evasion_categories: categories,
            flagged: decision.flagged,
            flag_rationale: decision.rationale,
            cluster_label: None,
            expanded: false,
            errors: errors.into_iter().collect(),
        },
        log,
        features,
        per_context,
        coverage,
        coverage_baseline,
    }
}

/// One sample through every context. A panic inside the engine becomes an error entry.
pub fn run_sample(sample: &Sample, cfg: &PipelineConfig) -> SampleOutcome {
    match catch_unwind(AssertUnwindSafe(|| analyze(sample, cfg))) {
        Ok(o) => o,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            let mode = cfg.mode_for(sample);
            SampleOutcome {
                report: SampleReport {
                    id: sample.id.clone(),
                    mode,
                    forced_exec_count: 0,
                    third_party_injection_count: 0,
                    third_party_urls: Vec::new(),
                    chains: ChainStats::default(),
                    coverage_forced: 0,
                    coverage_baseline: None,
                    evasion_categories: BTreeSet::new(),
                    flagged: false,
                    flag_rationale: "analysis failed".into(),
                    cluster_label: None,
                    expanded: false,
                    errors: vec![format!("internal error: {msg}")],
                },
                log: Vec::new(),
                features: FeatureVector::zero(&sample.id, EvasionTaxonomy::default().categories.len()),
                per_context: Vec::new(),
                coverage: BTreeSet::new(),
                coverage_baseline: None,
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    /// Sorted by sample id.
    pub outcomes: Vec<SampleOutcome>,
    pub assignments: Vec<ClusterAssignment>,
    pub expanded: BTreeSet<String>,
    /// Flags alone, against labels.
    pub metrics: Option<Metrics>,
    /// Flags plus cluster expansion, against labels.
    pub metrics_expanded: Option<Metrics>,
    pub summary: Value,
}

impl PipelineResult {
    pub fn reports(&self) -> impl Iterator<Item = &SampleReport> {
        self.outcomes.iter().map(|o| &o.report)
    }

    pub fn report(&self, id: &str) -> Option<&SampleReport> {
        self.reports().find(|r| r.id == id)
    }

    pub fn has_failures(&self) -> bool {
        self.reports().any(|r| !r.errors.is_empty())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SummaryRow {
    id: String,
    label: Option<Label>,
    flagged: bool,
    expanded: bool,
    forced_exec_count: usize,
    third_party_injection_count: usize,
    evasion_categories: BTreeSet<String>,
    cluster_label: Option<i64>,
    coverage_forced: usize,
    coverage_baseline: Option<usize>,
    errors: usize,
}

pub fn run_pipeline(samples: &[Sample], cfg: &PipelineConfig) -> PipelineResult {
    let work = || samples.par_iter().map(|s| run_sample(s, cfg)).collect::<Vec<_>>();
    let mut outcomes = match rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build() {
        Ok(pool) if cfg.jobs > 0 => pool.install(work),
        _ => work(),
    };
    outcomes.sort_by(|a, b| a.report.id.cmp(&b.report.id));

    let features: Vec<FeatureVector> = outcomes.iter().map(|o| o.features.clone()).collect();
    let assignments = dbscan(&features, cfg.dbscan);
    let seeds: BTreeSet<String> = outcomes.iter().filter(|o| o.report.flagged).map(|o| o.report.id.clone()).collect();
    let expanded = expand_flags(&assignments, &seeds);
    for (o, a) in outcomes.iter_mut().zip(&assignments) {
        o.report.cluster_label = Some(a.label.map(|l| l as i64).unwrap_or(-1));
        o.report.expanded = expanded.contains(&o.report.id);
    }

    let labels: BTreeMap<String, Label> = samples.iter().filter_map(|s| s.label.map(|l| (s.id.clone(), l))).collect();
    let labelled = !samples.is_empty() && labels.len() == samples.len();
    let (metrics, metrics_expanded) = if labelled {
        let truth: BTreeMap<String, bool> = labels.iter().map(|(k, l)| (k.clone(), *l == Label::Malicious)).collect();
        let flags: BTreeMap<String, bool> = outcomes.iter().map(|o| (o.report.id.clone(), o.report.flagged)).collect();
        let with_exp: BTreeMap<String, bool> =
            outcomes.iter().map(|o| (o.report.id.clone(), o.report.flagged || o.report.expanded)).collect();
        (compute_metrics(&flags, &truth).ok(), compute_metrics(&with_exp, &truth).ok())
    } else {
        (None, None)
    };

    let rows: Vec<SummaryRow> = outcomes
        .iter()
        .map(|o| SummaryRow {
            id: o.report.id.clone(),
            label: labels.get(&o.report.id).copied(),
            flagged: o.report.flagged,
            expanded: o.report.expanded,
            forced_exec_count: o.report.forced_exec_count,
            third_party_injection_count: o.report.third_party_injection_count,
            evasion_categories: o.report.evasion_categories.clone(),
            cluster_label: o.report.cluster_label,
            coverage_forced: o.report.coverage_forced,
            coverage_baseline: o.report.coverage_baseline,
            errors: o.report.errors.len(),
        })
        .collect();
    let coverage = cfg.baseline.then(|| {
        let forced: usize = outcomes.iter().map(|o| o.report.coverage_forced).sum();
        let base: usize = outcomes.iter().filter_map(|o| o.report.coverage_baseline).sum();
        let uplift = if base == 0 { 0.0 } else { (forced as f64 - base as f64) / base as f64 };
        json!({"forced_lines": forced, "baseline_lines": base, "uplift": uplift})
    });
    let summary = json!({
        "synthetic": cfg.synthetic,
        "sample_count": outcomes.len(),
        "flagged": outcomes.iter().filter(|o| o.report.flagged).map(|o| o.report.id.clone()).collect::<Vec<_>>(),
        "expanded": expanded,
        "failures": outcomes.iter().filter(|o| !o.report.errors.is_empty()).count(),
        "metrics": metrics,
        "metrics_with_expansion": metrics_expanded,
        "coverage": coverage,
        "clusters": cluster_sizes(&assignments),
        "config": {
            "threshold": cfg.threshold,
            "per_run_threshold": cfg.per_run_threshold,
            "node_limit": cfg.node_limit,
            "step_budget": cfg.step_budget,
            "contexts": cfg.contexts.iter().map(|c| c.url.clone()).collect::<Vec<_>>(),
            "baseline": cfg.baseline,
            "dbscan": cfg.dbscan,
            "seed": cfg.seed,
        },
        "samples": rows,
    });
    PipelineResult { outcomes, assignments, expanded, metrics, metrics_expanded, summary }
}

fn pretty(v: &impl Serialize) -> std::io::Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(std::io::Error::other)?;
    s.push('\n');
    Ok(s)
}

/// Write `samples/<id>/{log.jsonl, report.json}` and `summary.json` into `dir`.
pub fn write_run_at(result: &PipelineResult, dir: &Path) -> std::io::Result<()> {
    for o in &result.outcomes {
        let d = dir.join("samples").join(&o.report.id);
        std::fs::create_dir_all(&d)?;
        let mut log = o.log.join("\n");
        if !log.is_empty() {
            log.push('\n');
        }
        std::fs::write(d.join("log.jsonl"), log)?;
        std::fs::write(d.join("report.json"), pretty(&o.report)?)?;
    }
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("summary.json"), pretty(&result.summary)?)
}

/// Write into a fresh `<root>/<UTC timestamp>` directory and return its path.
pub fn write_run(result: &PipelineResult, root: &Path) -> std::io::Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    let mut dir = root.join(&stamp);
    let mut n = 1;
    while dir.exists() {
        dir = root.join(format!("{stamp}-{n}"));
        n += 1;
    }
    write_run_at(result, &dir)?;
    Ok(dir)
}

/// Plain-text table of a summary document.
pub fn render_report(summary: &Value) -> String {
    let mut out = String::new();
    if summary["synthetic"].as_bool() == Some(true) {
        out.push_str("corpus: synthetic (generated)\n");
    }
    out.push_str(&format!(
        "samples: {}  flagged: {}  expanded: {}  failures: {}\n",
        summary["sample_count"],
        summary["flagged"].as_array().map_or(0, Vec::len),
        summary["expanded"].as_array().map_or(0, Vec::len),
        summary["failures"]
    ));
    for (key, name) in [("metrics", "flags"), ("metrics_with_expansion", "flags+expansion")] {
        if let Ok(m) = serde_json::from_value::<Metrics>(summary[key].clone()) {
            out.push_str(&format!("{name}: {m}\n"));
        }
    }
    if let Some(u) = summary["coverage"]["uplift"].as_f64() {
        out.push_str(&format!(
            "coverage: forced {} lines, baseline {} lines, uplift {:.1}%\n",
            summary["coverage"]["forced_lines"],
            summary["coverage"]["baseline_lines"],
            u * 100.0
        ));
    }
    let rows = summary["samples"].as_array().cloned().unwrap_or_default();
    if rows.is_empty() {
        return out;
    }
    let width = rows.iter().filter_map(|r| r["id"].as_str()).map(str::len).max().unwrap_or(2).max(2);
    out.push_str(&format!(
        "\n{:<width$}  {:>6}  {:>3}  {:>4}  {:>7}  {}\n",
        "id", "forced", "3p", "flag", "cluster", "categories"
    ));
    for r in rows {
        let mark = match (r["flagged"].as_bool(), r["expanded"].as_bool()) {
            (Some(true), _) => "yes",
            (_, Some(true)) => "exp",
            _ => "-",
        };
        let cats: Vec<&str> = r["evasion_categories"]
            .as_array()
            .map(|a| a.iter().filter_map(Value::as_str).collect())
            .unwrap_or_default();
        let cluster = r["cluster_label"]
            .as_i64()
            .map(|l| if l < 0 { "noise".to_string() } else { l.to_string() })
            .unwrap_or_default();
        out.push_str(&format!(
            "{:<width$}  {:>6}  {:>3}  {:>4}  {:>7}  {}\n",
            r["id"].as_str().unwrap_or(""),
            r["forced_exec_count"],
            r["third_party_injection_count"],
            mark,
            cluster,
            cats.join(",")
        ));
    }
    out
}
