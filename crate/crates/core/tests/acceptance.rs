//! Acceptance checks, one per criterion. Runs without the libtest harness so that every
//! criterion prints a PASS/FAIL line; the process fails if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use forcejs_core::cluster::{dbscan, expand_flags, DbscanParams, Metric};
use forcejs_core::harness::{
    generate_corpus, run_pipeline, run_sample, threshold_probe, GeneratorSpec, PipelineConfig, Transform,
};
use forcejs_core::post::{compute_metrics, EvasionTaxonomy};
use forcejs_core::scanner::scan_block_for_apis;
use forcejs_core::tracker::{chain_lengths, maximal_paths, Provenance};
use forcejs_core::{
    mark_forced_blocks, node_count, parse_str, ApiCatalog, Engine, EngineConfig, Mode, Node, PageContext,
    ResourceResolver, RunOptions,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const RESOURCES: &str = include_str!("../fixtures/resources.json");
const TIMEBOMB: &str = include_str!("../fixtures/timebomb_tracker.js");
const RETURN_FIRST: &str = include_str!("../fixtures/return_first.js");

fn single_context(resolver: ResourceResolver) -> PipelineConfig {
    PipelineConfig { resolver: Arc::new(resolver), contexts: vec![PageContext::news()], ..PipelineConfig::default() }
}

fn threshold_boundary() -> Check {
    let start = Instant::now();
    let mut seen = Vec::new();
    for (k, want) in [(4, false), (5, true)] {
        let (probe, resources) = threshold_probe(k);
        let resolver = ResourceResolver::from_json(&resources.to_string()).map_err(|e| e.to_string())?;
        let r = run_sample(&probe.sample, &single_context(resolver)).report;
        ensure!(r.forced_exec_count == k, "probe {k}: {} forced executions", r.forced_exec_count);
        ensure!(
            r.third_party_injection_count == 1,
            "probe {k}: {} third-party injections",
            r.third_party_injection_count
        );
        ensure!(r.flagged == want, "probe {k}: flagged={} ({})", r.flagged, r.flag_rationale);
        seen.push(format!("{k}->{}", r.flagged));
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(1), "took {took:?}");
    Ok(format!("{} in {took:?}", seen.join(", ")))
}

/// Pre-order position (1-based) of the first node satisfying `pred`, counting `root` as 1.
fn preorder_position(root: &Node, pred: &dyn Fn(&Node) -> bool) -> Option<usize> {
    let mut i = 0;
    let mut found = None;
    root.walk(&mut |n| {
        i += 1;
        if found.is_none() && pred(n) {
            found = Some(i);
        }
    });
    found
}

/// `if (c) { <filler> eval(s); x; }` with the eval call at visit position `target` of the block scan.
fn budget_fixture(target: usize) -> Option<String> {
    let unit = node_count(&parse_str("a;").ok()?.children[0]);
    let odd = node_count(&parse_str("a.b;").ok()?.children[0]);
    let call_stmt = parse_str("eval(s);").ok()?;
    let call_offset = preorder_position(&call_stmt.children[0], &|n| n.kind == forcejs_core::NodeKind::Call)?;
    for extra in [0, 1] {
        let fixed = 1 + extra * odd + call_offset;
        if target >= fixed && (target - fixed).is_multiple_of(unit) {
            let n = (target - fixed) / unit;
            let mut body = "a;".repeat(n);
            if extra == 1 {
                body.push_str("a.b;");
            }
            return Some(format!("if (c) {{ {body} eval(s); x; }}"));
        }
    }
    None
}

fn dfs_budget() -> Check {
    let catalog = ApiCatalog::browser();
    let mut out = Vec::new();
    for (target, marked) in [(500, true), (501, false)] {
        let src = budget_fixture(target).ok_or("no fixture")?;
        let program = parse_str(&src).map_err(|e| e.to_string())?;
        let cond = &program.children[0];
        // Oracle: block node + node counts of the statements before the call + offset inside its statement.
        let block = &cond.children[1];
        let idx = block
            .children
            .iter()
            .position(|s| preorder_position(s, &|n| n.kind == forcejs_core::NodeKind::Call).is_some())
            .ok_or("no call")?;
        let before: usize = block.children[..idx].iter().map(node_count).sum();
        let pos = 1
            + before
            + preorder_position(&block.children[idx], &|n| n.kind == forcejs_core::NodeKind::Call).unwrap_or(0);
        ensure!(pos == target, "oracle places the call at {pos}, wanted {target}");
        ensure!(
            preorder_position(block, &|n| n.kind == forcejs_core::NodeKind::Call) == Some(target),
            "walk disagrees with node_count"
        );
        let plan = mark_forced_blocks(&program, &catalog, 500);
        ensure!(plan.len() == usize::from(marked), "target {target}: {} marked", plan.len());
        let scan = scan_block_for_apis(cond, &catalog, 500);
        ensure!(scan.nodes_visited == 500, "visited {}", scan.nodes_visited);
        if !marked {
            ensure!(scan.truncated, "target {target}: not truncated");
        }
        out.push(format!("api@{target}: marked={} truncated={}", !plan.is_empty(), scan.truncated));
    }
    Ok(out.join(", "))
}

fn timebomb_forcing() -> Check {
    let start = Instant::now();
    let resolver = Arc::new(ResourceResolver::from_json(RESOURCES).map_err(|e| e.to_string())?);
    let program = parse_str(TIMEBOMB).map_err(|e| e.to_string())?;
    // Lines of the timer callback body, taken from the parsed tree.
    let mut callback_lines = BTreeSet::new();
    program.walk(&mut |n| {
        if n.kind == forcejs_core::NodeKind::Call
            && n.children.first().is_some_and(|c| forcejs_core::render(c) == "setTimeout")
        {
            let body = &n.children[1];
            callback_lines.extend(body.span.start_line + 1..body.span.end_line);
        }
    });
    ensure!(!callback_lines.is_empty(), "no setTimeout callback found");

    let mut base = Engine::new(EngineConfig::new(Mode::Browser).with_options(RunOptions::BASELINE), resolver.clone());
    base.run_root("timebomb_tracker.js", TIMEBOMB);
    let base_hit: Vec<_> = base.records()[0].executed_lines.intersection(&callback_lines).collect();
    ensure!(base_hit.is_empty(), "baseline executed callback lines {base_hit:?}");
    ensure!(base.records().len() == 1, "baseline spawned {} child scripts", base.records().len() - 1);

    let mut forced = Engine::new(EngineConfig::new(Mode::Browser), resolver);
    forced.run_root("timebomb_tracker.js", TIMEBOMB);
    let hit = forced.records()[0].executed_lines.intersection(&callback_lines).count();
    ensure!(hit > 0, "forced run executed no callback lines");
    let injected: Vec<_> = forced
        .records()
        .iter()
        .filter_map(|r| match &r.provenance {
            Provenance::Injected { url, .. } => Some(url.clone()),
            _ => None,
        })
        .collect();
    ensure!(injected.iter().any(|u| u.ends_with("matomo.client.js")), "injected: {injected:?}");
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(1), "took {took:?}");
    Ok(format!(
        "baseline 0/{} callback lines, forced {hit}/{} and {} injected child(ren), {took:?}",
        callback_lines.len(),
        callback_lines.len(),
        injected.len()
    ))
}

fn chain_reconstruction() -> Check {
    let mut res = serde_json::Map::new();
    for k in 1..8 {
        let body = if k < 7 {
            format!("var s = document.createElement('script'); s.src = 'https://chain.example/{}.js'; document.head.appendChild(s);", k + 1)
        } else {
            "var end = true;".to_string()
        };
        res.insert(format!("https://chain.example/{k}.js"), json!({"kind": "script", "body": body}));
    }
    let resolver = ResourceResolver::from_json(&json!({"resources": res}).to_string()).map_err(|e| e.to_string())?;
    let mut e = Engine::new(EngineConfig::new(Mode::Browser), Arc::new(resolver));
    e.run_root(
        "root.js",
        "var s = document.createElement('script'); s.src = 'https://chain.example/1.js'; document.head.appendChild(s);",
    );
    let stats = chain_lengths(e.records());
    ensure!(stats.max == 8, "max chain {}", stats.max);
    for k in 1..=8 {
        ensure!(stats.buckets.get(&k).copied().unwrap_or(0) >= 1, "bucket {k} empty: {:?}", stats.buckets);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let size = rng.gen_range(1..60);
        let forest = common::random_forest(&mut rng, size);
        let mut got = maximal_paths(&forest);
        got.sort_unstable();
        let want = common::brute_force_paths(&forest);
        ensure!(got == want, "forest paths {got:?} != oracle {want:?}");
    }
    Ok(format!("8-deep chain max={} buckets={:?}; 200 random forests match the oracle", stats.max, stats.buckets))
}

fn coverage_uplift() -> Check {
    let corpus = generate_corpus(&GeneratorSpec::default());
    let cfg = PipelineConfig { resolver: Arc::new(corpus.resolver()), baseline: true, ..PipelineConfig::default() };
    let result = run_pipeline(&corpus.plain_samples(), &cfg);
    let (mut forced, mut base) = (0usize, 0usize);
    for o in &result.outcomes {
        let b = o.coverage_baseline.as_ref().ok_or("no baseline coverage")?;
        let missing: Vec<_> = b.difference(&o.coverage).take(3).collect();
        ensure!(missing.is_empty(), "{}: baseline lines not covered by forced run: {missing:?}", o.report.id);
        if corpus.get(&o.report.id).is_some_and(|g| g.expect_detected) {
            forced += o.coverage.len();
            base += b.len();
        }
    }
    ensure!(forced > base, "evasive corpus uplift not positive: {forced} vs {base}");
    Ok(format!(
        "baseline ⊆ forced for {} samples; evasive corpus {forced} vs {base} lines (+{:.1}%)",
        result.outcomes.len(),
        100.0 * (forced as f64 - base as f64) / base as f64
    ))
}

fn metrics_identity() -> Check {
    let mut decisions = BTreeMap::new();
    let mut labels = BTreeMap::new();
    let mut add = |prefix: &str, n: usize, d: bool, l: bool| {
        for i in 0..n {
            decisions.insert(format!("{prefix}{i}"), d);
            labels.insert(format!("{prefix}{i}"), l);
        }
    };
    add("tp", 420, true, true);
    add("fp", 13, true, false);
    add("tn", 487, false, false);
    add("fn", 80, false, true);
    let m = compute_metrics(&decisions, &labels).map_err(|e| e.to_string())?;
    ensure!((m.tp, m.fp, m.tn, m.fn_) == (420, 13, 487, 80), "counts {m}");
    ensure!(m.rounded() == (0.97, 0.84, 0.90), "rounded {:?}", m.rounded());

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let n = rng.gen_range(0..80);
        let d: BTreeMap<String, bool> = (0..n).map(|i| (format!("s{i}"), rng.gen_bool(0.5))).collect();
        let l: BTreeMap<String, bool> = (0..n).map(|i| (format!("s{i}"), rng.gen_bool(0.5))).collect();
        let m = compute_metrics(&d, &l).map_err(|e| e.to_string())?;
        let count = |dv: bool, lv: bool| d.iter().filter(|(k, v)| **v == dv && l[*k] == lv).count() as u64;
        let (tp, fp, tn, fn_) = (count(true, true), count(true, false), count(false, false), count(false, true));
        ensure!((m.tp, m.fp, m.tn, m.fn_) == (tp, fp, tn, fn_), "recount mismatch");
        let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        ensure!(m.precision == p && m.recall == r && m.f1 == f, "formula mismatch for {tp} {fp} {tn} {fn_}");
    }
    Ok(format!("{m}; 1000 random matrices agree with a recount"))
}

fn dbscan_correctness() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut shuffled = 0;
    let mut clusters = 0;
    for corpus in 0..100 {
        let points = common::random_corpus(&mut rng, 200);
        let eps = [0.0, 0.1, 0.2, 0.25, 0.3, 0.4, 0.5, 0.75][rng.gen_range(0..8)];
        let min_pts = rng.gen_range(1..=5);
        let metric = if rng.gen_bool(0.5) { Metric::Jaccard } else { Metric::Hamming };
        let params = DbscanParams { eps, min_pts, metric };
        let got = common::as_map(&dbscan(&points, params));
        let want = common::reference_dbscan(&points, eps, min_pts, metric);
        ensure!(got == want, "corpus {corpus} ({} points, {params:?}) differs from the reference", points.len());
        clusters += got.values().filter_map(|(l, _)| *l).collect::<BTreeSet<_>>().len();
        if corpus < 20 {
            let mut perm = points.clone();
            perm.shuffle(&mut rng);
            ensure!(common::as_map(&dbscan(&perm, params)) == got, "corpus {corpus}: shuffle changed the partition");
            shuffled += 1;
        }
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(30), "took {took:?}");
    Ok(format!("100 corpora ({clusters} clusters) equal the reference, {shuffled} shuffles invariant, {took:?}"))
}

fn return_first_recovery() -> Check {
    let plain = parse_str(RETURN_FIRST).map_err(|e| e.to_string())?;
    let mut e = Engine::new(EngineConfig::new(Mode::Browser), Arc::new(ResourceResolver::default()));
    e.run_root("return_first.js", RETURN_FIRST);
    ensure!(e.forced_events().is_empty(), "fixture produced {} forced executions", e.forced_events().len());
    ensure!(mark_forced_blocks(&plain, &ApiCatalog::browser(), 500).is_empty(), "fixture has marked blocks");

    let spec =
        GeneratorSpec { categories: vec!["dom".into()], transforms: Vec::new(), benign: 6, ..GeneratorSpec::default() };
    let corpus = generate_corpus(&spec);
    let cfg = PipelineConfig { resolver: Arc::new(corpus.resolver()), ..PipelineConfig::default() };
    let result = run_pipeline(&corpus.plain_samples(), &cfg);
    let rf = result.report("return-first").ok_or("no return-first sample")?;
    ensure!(rf.forced_exec_count == 0, "return-first has {} forced executions", rf.forced_exec_count);
    ensure!(!rf.flagged, "return-first flagged directly");
    let seed = result.reports().find(|r| r.flagged).ok_or("no flagged seed")?;
    ensure!(seed.cluster_label == rf.cluster_label && rf.cluster_label.is_some_and(|l| l >= 0), "not co-clustered");
    let seeds: BTreeSet<String> = result.reports().filter(|r| r.flagged).map(|r| r.id.clone()).collect();
    let expanded = expand_flags(&result.assignments, &seeds);
    ensure!(expanded.contains("return-first"), "expand_flags returned {expanded:?}");
    ensure!(expanded.iter().all(|id| !id.starts_with("benign")), "benign sample expanded: {expanded:?}");
    Ok(format!(
        "0 forced executions; clustered with {} (label {:?}) and surfaced by expansion",
        seed.id, rf.cluster_label
    ))
}

fn taxonomy_round_trip() -> Check {
    let corpus = generate_corpus(&GeneratorSpec {
        transforms: Vec::new(),
        benign: 0,
        return_first: false,
        ..GeneratorSpec::default()
    });
    let taxonomy = EvasionTaxonomy::default();
    let cfg = PipelineConfig { resolver: Arc::new(corpus.resolver()), ..PipelineConfig::default() };
    let result = run_pipeline(&corpus.plain_samples(), &cfg);
    let mut recovered = BTreeSet::new();
    for g in &corpus.samples {
        let slug = g.category.as_deref().ok_or("uncategorized sample")?;
        let r = result.report(&g.sample.id).ok_or("missing report")?;
        ensure!(r.evasion_categories.contains(slug), "{}: wanted {slug}, got {:?}", r.id, r.evasion_categories);
        recovered.insert(slug.to_string());
    }
    ensure!(recovered.len() == 28, "{} categories recovered", recovered.len());

    let npm_only: BTreeSet<&str> =
        taxonomy.categories.iter().filter(|c| !c.applies_to(Mode::Browser)).map(|c| c.slug.as_str()).collect();
    ensure!(!npm_only.is_empty(), "no npm-only categories");
    let forced_browser = PipelineConfig { mode: Some(Mode::Browser), ..cfg.clone() };
    let browser_all = run_pipeline(&corpus.plain_samples(), &forced_browser);
    for r in result.reports().filter(|r| r.mode == Mode::Browser).chain(browser_all.reports()) {
        let leaked: Vec<_> = r.evasion_categories.iter().filter(|c| npm_only.contains(c.as_str())).collect();
        ensure!(leaked.is_empty(), "{} in browser mode reports {leaked:?}", r.id);
        let bits = &browser_all.outcomes.iter().find(|o| o.report.id == r.id).ok_or("missing")?.features.bits;
        for slug in &npm_only {
            let idx = taxonomy.by_slug(slug).ok_or("slug")?.index - 1;
            ensure!(bits[idx] == 0, "{} has npm-only feature {slug} in browser mode", r.id);
        }
    }
    Ok(format!("28/28 categories recovered; {} npm-only categories silent in browser mode", npm_only.len()))
}

fn obfuscation_coverage() -> Check {
    let corpus = generate_corpus(&GeneratorSpec {
        categories: Vec::new(),
        benign: 0,
        return_first: false,
        ..GeneratorSpec::default()
    });
    let cfg = PipelineConfig { resolver: Arc::new(corpus.resolver()), ..PipelineConfig::default() };
    let result = run_pipeline(&corpus.plain_samples(), &cfg);
    let mut handled = Vec::new();
    for t in Transform::ALL {
        let g = corpus.samples.iter().find(|g| g.transform == Some(t)).ok_or("missing transform")?;
        let r = result.report(&g.sample.id).ok_or("missing report")?;
        let triggered = r.forced_exec_count > 0 && r.third_party_injection_count > 0;
        if t.expected_detected() {
            ensure!(
                triggered,
                "{}: forced={} third-party={}",
                r.id,
                r.forced_exec_count,
                r.third_party_injection_count
            );
            ensure!(
                r.evasion_categories.contains("localstorage_timebomb"),
                "{}: categories {:?}",
                r.id,
                r.evasion_categories
            );
            handled.push(t.slug());
        } else {
            ensure!(r.forced_exec_count == 0, "{} was expected to be missed but forced {}", r.id, r.forced_exec_count);
        }
    }
    ensure!(handled.len() == 8, "{} handled", handled.len());
    Ok("8/10 triggered; encoding and dynamic_code_modification missed as documented".to_string())
}

fn transparency() -> Check {
    let corpus = generate_corpus(&GeneratorSpec {
        categories: Vec::new(),
        transforms: Vec::new(),
        return_first: false,
        benign: 50,
        seed: 11,
        ..GeneratorSpec::default()
    });
    ensure!(corpus.samples.len() == 50, "{} samples", corpus.samples.len());
    let resolver = Arc::new(corpus.resolver());
    let mut api_calls = 0;
    for g in &corpus.samples {
        let s = &g.sample;
        let mode = s.kind.default_mode();
        let run = |options: RunOptions, empty: bool| {
            let mut cfg = EngineConfig::new(mode).with_options(options);
            if empty {
                cfg.catalog = Arc::new(ApiCatalog { injection_apis: Vec::new(), ..ApiCatalog::for_mode(mode) });
            }
            cfg.sample_id = s.id.clone();
            cfg.local_files = Arc::new(s.files.clone());
            let mut e = Engine::new(cfg, resolver.clone());
            for entry in &s.entries {
                e.run_root(&entry.path, &entry.text);
            }
            e
        };
        let forced = run(RunOptions::FORCED, true);
        let reference = run(RunOptions::REFERENCE, false);
        ensure!(forced.forced_events().is_empty(), "{}: empty plan still forced", s.id);
        ensure!(forced.global_snapshot() == reference.global_snapshot(), "{}: final state differs", s.id);
        ensure!(forced.activity() == reference.activity(), "{}: API log differs", s.id);
        api_calls += reference.api_names().len();
    }
    Ok(format!("50 programs, identical state and {api_calls} logged API calls"))
}

fn safety() -> Check {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("src");
    let banned = ["std::net", "TcpStream", "UdpSocket", "process::Command", "std::process", "reqwest", "hyper"];
    let mut files = 0;
    for entry in walkdir::WalkDir::new(&src) {
        let entry = entry.map_err(|e| e.to_string())?;
        if entry.path().extension().is_some_and(|x| x == "rs") {
            files += 1;
            let text = std::fs::read_to_string(entry.path()).map_err(|e| e.to_string())?;
            for b in banned {
                ensure!(!text.contains(b), "{} mentions {b}", entry.path().display());
            }
        }
    }
    ensure!(files > 10, "only {files} source files scanned");

    let looped =
        "var s = document.createElement('script'); s.src = 'https://loop.example/a.js'; document.head.appendChild(s);";
    let resolver = ResourceResolver::from_json(
        &json!({"resources": {"https://loop.example/a.js": {"kind": "script", "body": looped}}}).to_string(),
    )
    .map_err(|e| e.to_string())?;
    let cfg = EngineConfig::new(Mode::Browser);
    let cap = cfg.max_chain_depth as usize;
    let mut e = Engine::new(cfg, Arc::new(resolver));
    e.run_root("loop.js", looped);
    ensure!(e.records().len() == cap + 1, "self-injection produced {} scripts", e.records().len());

    let hostile = [
        "while (true) {}",
        "function f() { return f(); } f();",
        "var s = 'eval(s)'; eval(s);",
        "setInterval(function () { var x = [1,2,3].map(function (n) { return n; }); }, 1);",
        "for (;;) { if (window.a) { eval('1'); } }",
    ];
    for src in hostile {
        let mut cfg = EngineConfig::new(Mode::Browser);
        cfg.step_budget = 50_000;
        let mut e = Engine::new(cfg, Arc::new(ResourceResolver::default()));
        e.run_root("h.js", src);
        ensure!(e.steps() <= 50_000, "{src:?} took {} steps", e.steps());
    }
    Ok(format!("{files} core sources free of network/process APIs; self-injection stops at {} scripts; hostile programs within budget", cap + 1))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("threshold boundary", threshold_boundary),
        ("DFS node budget", dfs_budget),
        ("timebomb forcing", timebomb_forcing),
        ("chain reconstruction", chain_reconstruction),
        ("coverage uplift", coverage_uplift),
        ("metrics identity", metrics_identity),
        ("DBSCAN correctness", dbscan_correctness),
        ("return-first recovery", return_first_recovery),
        ("taxonomy round-trip", taxonomy_round_trip),
        ("obfuscation coverage", obfuscation_coverage),
        ("transparency", transparency),
        ("safety and termination", safety),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
