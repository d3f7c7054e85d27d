use super::*;
use serde_json::json;

const RESOURCES: &str = include_str!("../../fixtures/resources.json");

fn resolver() -> Arc<ResourceResolver> {
    Arc::new(ResourceResolver::from_json(RESOURCES).unwrap())
}

fn run_with(src: &str, cfg: EngineConfig) -> Engine {
    let mut e = Engine::new(cfg, resolver());
    e.run_root("main.js", src);
    e
}

fn run(src: &str) -> Engine {
    run_with(src, EngineConfig::new(Mode::Browser))
}

fn global(src: &str, name: &str) -> serde_json::Value {
    run(src).global_value(name).unwrap_or(serde_json::Value::Null)
}

#[test]
fn arithmetic_and_strings() {
    assert_eq!(global("var a = 1 + 2 * 3;", "a"), json!(7));
    assert_eq!(global("var a = '1' + 2;", "a"), json!("12"));
    assert_eq!(global("var a = '6' * '7';", "a"), json!(42));
    assert_eq!(global("var a = 7 % 3 + (2 ** 10);", "a"), json!(1025));
    assert_eq!(global("var a = -7 >> 1;", "a"), json!(-4));
    assert_eq!(global("var a = -1 >>> 28;", "a"), json!(15));
    assert_eq!(global("var a = `x${1 + 1}y`;", "a"), json!("x2y"));
    assert_eq!(global("var a = 'abc'.toUpperCase().split('').reverse().join('-');", "a"), json!("C-B-A"));
    assert_eq!(global("var a = 'a-b-c'.replace(/-/g, '+');", "a"), json!("a+b+c"));
    assert_eq!(global("var a = typeof undeclared;", "a"), json!("undefined"));
    assert_eq!(global("var a = null == undefined && 0 !== '0';", "a"), json!(true));
    assert_eq!(global("var a = (0.1 + 0.2).toFixed(2);", "a"), json!("0.30"));
    assert_eq!(global("var a = parseInt('ff', 16) + parseFloat('1.5e1x');", "a"), json!(270));
}

#[test]
fn functions_closures_and_objects() {
    let src = "
        function counter() { var n = 0; return function () { n += 1; return n; }; }
        var c = counter(); c(); c();
        var total = c();
        function Point(x) { this.x = x; }
        Point.prototype.double = function () { return this.x * 2; };
        var d = new Point(21).double();
        var arr = [3, 1, 2].map(function (v) { return v * 10; }).sort((a, b) => a - b);
        var keys = Object.keys({ b: 1, a: 2 }).join(',');
        var fact = (function f(n) { return n <= 1 ? 1 : n * f(n - 1); })(5);
        let blocked = 1; { let blocked = 2; }
    ";
    let e = run(src);
    assert_eq!(e.global_value("total"), Some(json!(3)));
    assert_eq!(e.global_value("d"), Some(json!(42)));
    assert_eq!(e.global_value("arr"), Some(json!([10, 20, 30])));
    assert_eq!(e.global_value("keys"), Some(json!("b,a")));
    assert_eq!(e.global_value("fact"), Some(json!(120)));
    assert_eq!(e.global_value("blocked"), Some(json!(1)));
}

#[test]
fn control_flow_and_exceptions() {
    let src = "
        var log = [];
        for (var i = 0; i < 5; i++) { if (i == 1) continue; if (i == 4) break; log.push(i); }
        for (var k in { p: 1, q: 2 }) log.push(k);
        for (const v of ['x']) log.push(v);
        try { null.f; } catch (e) { log.push(e.name); } finally { log.push('fin'); }
        switch (3) { case 1: log.push('one'); case 3: log.push('three'); case 4: log.push('four'); break; default: log.push('d'); }
        var j = 0; do { j++; } while (j < 3);
        var caught = (function () { try { throw new Error('boom'); } catch (e) { return e.message; } })();
    ";
    let e = run(src);
    assert_eq!(e.global_value("log"), Some(json!([0, 2, 3, "p", "q", "x", "TypeError", "fin", "three", "four"])));
    assert_eq!(e.global_value("j"), Some(json!(3)));
    assert_eq!(e.global_value("caught"), Some(json!("boom")));
}

#[test]
fn json_and_eval() {
    let e = run("var o = JSON.parse('{\"a\":[1,2]}'); var s = JSON.stringify(o); var r = eval('o.a[1] + 40');");
    assert_eq!(e.global_value("s"), Some(json!("{\"a\":[1,2]}")));
    assert_eq!(e.global_value("r"), Some(json!(42)));
    assert_eq!(e.records().len(), 2);
    assert!(matches!(e.records()[1].provenance, Provenance::Eval { parent: ScriptId(0) }));
}

#[test]
fn uncaught_error_is_recorded() {
    let e = run("var a = 1; missing();");
    assert_eq!(e.global_value("a"), Some(json!(1)));
    assert!(e.records()[0].error.as_deref().unwrap().contains("ReferenceError"));
}

#[test]
fn eval_syntax_error_is_catchable() {
    let e = run("var ok = false; try { eval('var = ;'); } catch (e) { ok = e.name == 'SyntaxError'; }");
    assert_eq!(e.global_value("ok"), Some(json!(true)));
    assert!(e.records()[1].parse_failed);
}

#[test]
fn random_is_seeded() {
    let a = global("var r = Math.random();", "r");
    let b = global("var r = Math.random();", "r");
    assert_eq!(a, b);
}

#[test]
fn timebomb_baseline_and_forced() {
    let src = include_str!("../../fixtures/timebomb_tracker.js");
    let base = run_with(src, EngineConfig::new(Mode::Browser).with_options(RunOptions::BASELINE));
    assert_eq!(base.records().len(), 1);
    for line in 8..=15 {
        assert!(!base.records()[0].executed_lines.contains(&line), "line {line} ran in baseline");
    }

    let forced = run(src);
    let injected: Vec<_> = forced
        .records()
        .iter()
        .filter(|r| matches!(&r.provenance, Provenance::Injected { url, .. } if url == "/vendor/matomo.client.js"))
        .collect();
    assert_eq!(injected.len(), 1);
    assert!(forced.records()[0].executed_lines.contains(&15));
    assert_eq!(forced.global_value("matomoLoaded"), Some(json!(true)));
    let events = forced.forced_events();
    assert!(events.iter().any(|f| f.kind == crate::scanner::ConditionKind::Timer && f.guard == "93445000"));
}

#[test]
fn forced_branches_do_not_leak_state() {
    let src = "var x = 1; if (x == 2) { x = 99; var s = document.createElement('script'); s.text = 'var leaked = 1;'; document.head.appendChild(s); }";
    let e = run(src);
    assert_eq!(e.global_value("x"), Some(json!(1)));
    assert_eq!(e.global_value("leaked"), None);
    let events = e.forced_events();
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].branches.len(), 1);
    assert_eq!(events[0].branches[0].executed_in, crate::tracker::ExecutedIn::Clone);
    // The inline script still ran inside the clone and is on record.
    assert_eq!(e.records().len(), 2);
    assert!(e.records()[0].executed_lines.contains(&1));
}

#[test]
fn return_first_has_no_marked_condition() {
    let src = include_str!("../../fixtures/return_first.js");
    let mut cfg = EngineConfig::new(Mode::Browser);
    cfg.page = PageContext::shop();
    let e = run_with(src, cfg);
    assert!(e.forced_events().is_empty());
    assert!(e.api_names().contains(&"$"));
}

#[test]
fn blocked_sites_injects_third_party_script() {
    let src = include_str!("../../fixtures/blocked_sites.js");
    let e = run(src);
    assert!(e.records().iter().any(
        |r| matches!(&r.provenance, Provenance::Injected { url, .. } if url == "https://cdn.tracker.example/inject.js")
    ));
}

#[test]
fn dev_eval_eval_keeps_server_origin() {
    let src = include_str!("../../fixtures/dev_eval.js");
    let mut cfg = EngineConfig::new(Mode::Browser);
    cfg.local_files = Arc::new(BTreeMap::from([
        ("dev.json".to_string(), "{\"isDev\": 1}".to_string()),
        ("dev.js".to_string(), "var devMode = 1;".to_string()),
    ]));
    let e = run_with(src, cfg);
    let evals: Vec<_> = e.records().iter().filter(|r| matches!(r.provenance, Provenance::Eval { .. })).collect();
    assert_eq!(evals.len(), 1);
    assert!(evals[0].derived_from.as_deref().unwrap().starts_with("https://botsorteios.com/app/source/"));
    let cond = e.forced_events().into_iter().find(|f| f.kind == crate::scanner::ConditionKind::Conditional).unwrap();
    // The guard reads the extension's own file, not network data.
    assert!(!cond.server_dependent);
}

#[test]
fn passwd_probe_exec_fixture_feeds_guard_sources() {
    let src = include_str!("../../fixtures/passwd_probe.js");
    let e = run_with(src, EngineConfig::new(Mode::Npm));
    let cmds: Vec<_> = e
        .activity()
        .iter()
        .filter_map(|a| match a {
            Activity::Command { cmd } => Some(cmd.clone()),
            _ => None,
        })
        .collect();
    assert_eq!(cmds[0], "test -f /etc/passwd ; echo $?");
    assert!(cmds.len() >= 2 && cmds[1].contains("oastify.com"));
    let guarded = e.forced_events().into_iter().find(|f| !f.guard_sources.is_empty()).unwrap();
    assert_eq!(guarded.guard, "true");
    assert_eq!(guarded.guard_sources, vec!["test -f /etc/passwd ; echo $?".to_string()]);
}

#[test]
fn encoded_timebomb_obfuscated_is_not_marked() {
    let src = include_str!("../../fixtures/encoded_timebomb.js");
    let e = run(src);
    assert!(e.forced_events().is_empty());
    assert!(e.plan(ScriptId(0)).unwrap().is_empty());
}

#[test]
fn missing_resource_is_logged() {
    let e = run("fetch('https://gone.example/x.js').then(function (r) { window.status404 = r.status; });");
    assert!(e
        .activity()
        .iter()
        .any(|a| matches!(a, Activity::Resource404 { url } if url == "https://gone.example/x.js")));
    assert_eq!(e.global_value("status404"), Some(json!(404)));
}

#[test]
fn self_injection_terminates() {
    let looped =
        "var s = document.createElement('script'); s.src = 'https://loop.example/a.js'; document.head.appendChild(s);";
    let mut r = ResourceResolver::from_json(RESOURCES).unwrap();
    r.extend(
        ResourceResolver::from_json(
            &json!({"resources": {"https://loop.example/a.js": {"kind": "script", "body": looped}}}).to_string(),
        )
        .unwrap(),
    );
    let cfg = EngineConfig::new(Mode::Browser);
    let cap = cfg.max_chain_depth as usize;
    let mut e = Engine::new(cfg, Arc::new(r));
    e.run_root("main.js", looped);
    assert_eq!(e.records().len(), cap + 1);
    assert_eq!(crate::tracker::chain_lengths(e.records()).max, cap + 1);

    let e = run("var s = 'eval(s)'; eval(s);");
    assert!(e.records().len() <= 17);

    let mut cfg = EngineConfig::new(Mode::Browser);
    cfg.step_budget = 10_000;
    let e = run_with("while (true) {}", cfg);
    assert!(e.budget_exhausted());
    assert!(e.steps() <= 10_000);
}

#[test]
fn empty_plan_matches_reference_run() {
    let src = "var out = []; if (Math.random() > 2) { out.push('never'); } setTimeout(function () { out.push('t'); }, 5); out.push(typeof window);";
    let mut forced = EngineConfig::new(Mode::Browser);
    forced.catalog = Arc::new(ApiCatalog { injection_apis: Vec::new(), ..ApiCatalog::browser() });
    let a = run_with(src, forced);
    let b = run_with(src, EngineConfig::new(Mode::Browser).with_options(RunOptions::REFERENCE));
    assert_eq!(a.global_snapshot(), b.global_snapshot());
    assert_eq!(a.activity(), b.activity());
    assert_eq!(a.global_value("out"), Some(json!(["object", "t"])));
}
