mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use forcejs_core::cluster::{dbscan, distance, expand_flags, ClusterAssignment, DbscanParams, FeatureVector, Metric};
use forcejs_core::post::{compute_metrics, flag};
use forcejs_core::tracker::maximal_paths;
use forcejs_core::{parse_str, render, Engine, EngineConfig, Mode, ResourceResolver, RunOptions};

fn ident() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["a", "b", "window", "x1", "navigator", "document"]).prop_map(str::to_string)
}

fn expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        ident(),
        (0u32..1000).prop_map(|n| n.to_string()),
        "[a-z ]{0,6}".prop_map(|s| format!("'{s}'")),
        Just("true".to_string()),
        Just("null".to_string()),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(vec!["+", "-", "*", "<", "===", "&&", "||", "%"]), inner.clone())
                .prop_map(|(a, op, b)| format!("{a} {op} {b}")),
            (inner.clone(), ident()).prop_map(|(a, p)| format!("({a}).{p}")),
            (ident(), prop::collection::vec(inner.clone(), 0..3))
                .prop_map(|(f, args)| format!("{f}({})", args.join(", "))),
            (inner.clone(), inner.clone(), inner.clone()).prop_map(|(c, a, b)| format!("{c} ? {a} : {b}")),
            inner.clone().prop_map(|a| format!("!{a}")),
            prop::collection::vec(inner.clone(), 0..3).prop_map(|xs| format!("[{}]", xs.join(", "))),
            inner.prop_map(|a| format!("({a})")),
        ]
    })
}

fn stmt() -> impl Strategy<Value = String> {
    let simple = prop_oneof![
        (ident(), expr()).prop_map(|(n, e)| format!("var {n} = {e};")),
        expr().prop_map(|e| format!("{e};")),
    ];
    simple.prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            (expr(), prop::collection::vec(inner.clone(), 0..3))
                .prop_map(|(c, b)| format!("if ({c}) {{ {} }}", b.join(" "))),
            (expr(), inner.clone(), inner.clone()).prop_map(|(c, a, b)| format!("if ({c}) {{ {a} }} else {{ {b} }}")),
            prop::collection::vec(inner.clone(), 0..3).prop_map(|b| format!("function f() {{ {} }}", b.join(" "))),
            (inner.clone(), inner).prop_map(|(a, b)| format!("try {{ {a} }} catch (e) {{ {b} }}")),
        ]
    })
}

/// Programs with conditions around injection calls, timers and state updates.
fn program() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        Just("var n = 0;".to_string()),
        Just("n = n + 1;".to_string()),
        (0u32..5).prop_map(|k| format!("if (window.flag{k}) {{\n  eval('n = 2');\n  n = n * 3;\n}}")),
        (0u32..5).prop_map(|k| format!("if (n > {k}) {{\n  n = 0;\n}} else {{\n  setTimeout(function () {{\n    eval('var t = 1');\n  }}, 1000);\n}}")),
        Just("setTimeout(function () {\n  n = n + 5;\n}, 99999999);".to_string()),
        Just("try {\n  undefinedThing();\n} catch (e) {\n  eval('n = 7');\n}".to_string()),
        Just("var s = document.createElement('script');\ns.text = 'var inj = 1;';\nif (Math.random() > 2) {\n  document.head.appendChild(s);\n}".to_string()),
    ];
    prop::collection::vec(piece, 1..8).prop_map(|p| format!("var n = 0;\n{}\n", p.join("\n")))
}

fn bits(dims: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..=1, dims)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn render_is_a_fixed_point(stmts in prop::collection::vec(stmt(), 0..6)) {
        let src = stmts.join("\n");
        let once = render(&parse_str(&src).unwrap());
        let twice = render(&parse_str(&once).unwrap());
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn baseline_coverage_is_within_forced(src in program()) {
        let run = |options| {
            let mut e = Engine::new(EngineConfig::new(Mode::Browser).with_options(options), Arc::new(ResourceResolver::default()));
            e.run_root("p.js", &src);
            e
        };
        let base = run(RunOptions::BASELINE);
        let forced = run(RunOptions::FORCED);
        prop_assert!(base.records()[0].executed_lines.is_subset(&forced.records()[0].executed_lines));
        prop_assert!(base.forced_events().is_empty());
    }

    #[test]
    fn flag_is_monotone(n in 0usize..20, urls in 0usize..3, t in 1usize..10) {
        let u: Vec<String> = (0..urls).map(|i| format!("https://t.example/{i}.js")).collect();
        let a = flag(n, &u, t).flagged;
        let b = flag(n + 1, &u, t).flagged;
        prop_assert!(!a || b);
        prop_assert_eq!(a, n >= t && urls > 0);
    }

    #[test]
    fn distances_are_metric_like(a in bits(12), b in bits(12), c in bits(12)) {
        for m in [Metric::Jaccard, Metric::Hamming] {
            let d = |x: &[u8], y: &[u8]| distance(x, y, m);
            prop_assert_eq!(d(&a, &a), 0.0);
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert!((0.0..=1.0).contains(&d(&a, &b)));
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
            prop_assert_eq!(d(&a, &b), common::reference_distance(&a, &b, m));
        }
    }

    #[test]
    fn maximal_paths_match_enumeration(seed in any::<u64>(), size in 1usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let forest = common::random_forest(&mut rng, size);
        let mut got = maximal_paths(&forest);
        got.sort_unstable();
        prop_assert_eq!(got, common::brute_force_paths(&forest));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn metrics_match_recount(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 0..60)) {
        let d: BTreeMap<String, bool> = pairs.iter().enumerate().map(|(i, p)| (format!("s{i}"), p.0)).collect();
        let l: BTreeMap<String, bool> = pairs.iter().enumerate().map(|(i, p)| (format!("s{i}"), p.1)).collect();
        let m = compute_metrics(&d, &l).unwrap();
        let count = |x: bool, y: bool| pairs.iter().filter(|p| p.0 == x && p.1 == y).count() as u64;
        prop_assert_eq!((m.tp, m.fp, m.tn, m.fn_), (count(true, true), count(true, false), count(false, false), count(false, true)));
        prop_assert!(m.precision <= 1.0 && m.recall <= 1.0 && m.f1 <= 1.0);
        if m.tp > 0 {
            prop_assert!((m.f1 - 2.0 * m.precision * m.recall / (m.precision + m.recall)).abs() < 1e-12);
        } else {
            prop_assert_eq!(m.f1, 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn dbscan_equals_reference(seed in any::<u64>(), eps in prop::sample::select(vec![0.0, 0.125, 0.2, 0.3, 0.5, 1.0]), min_pts in 1usize..6, hamming in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = common::random_corpus(&mut rng, 200);
        let metric = if hamming { Metric::Hamming } else { Metric::Jaccard };
        let params = DbscanParams { eps, min_pts, metric };
        let got = dbscan(&points, params);
        prop_assert_eq!(common::as_map(&got), common::reference_dbscan(&points, eps, min_pts, metric));
        let ids: Vec<&str> = got.iter().map(|a| a.id.as_str()).collect();
        let input: Vec<&str> = points.iter().map(|p| p.id.as_str()).collect();
        prop_assert_eq!(ids, input);
    }

    #[test]
    fn dbscan_ignores_input_order(points in prop::collection::vec(bits(6), 0..40), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let pts: Vec<FeatureVector> = points.into_iter().enumerate().map(|(i, b)| FeatureVector { id: format!("p{i:02}"), bits: b }).collect();
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let params = DbscanParams { eps: 0.34, min_pts: 3, metric: Metric::Jaccard };
        prop_assert_eq!(common::as_map(&dbscan(&pts, params)), common::as_map(&dbscan(&shuffled, params)));
    }

    #[test]
    fn expansion_stays_inside_seeded_clusters(labels in prop::collection::vec(prop::option::of(0usize..4), 0..30), seed_mask in prop::collection::vec(any::<bool>(), 30)) {
        let a: Vec<ClusterAssignment> = labels.iter().enumerate().map(|(i, l)| ClusterAssignment { id: format!("s{i:02}"), label: *l, is_core: true }).collect();
        let seeds: std::collections::BTreeSet<String> = a.iter().zip(&seed_mask).filter(|(_, m)| **m).map(|(x, _)| x.id.clone()).collect();
        let out = expand_flags(&a, &seeds);
        for id in &out {
            let x = a.iter().find(|x| &x.id == id).unwrap();
            prop_assert!(!seeds.contains(id));
            prop_assert!(x.label.is_some());
            prop_assert!(a.iter().any(|s| seeds.contains(&s.id) && s.label == x.label));
        }
        if seeds.is_empty() {
            prop_assert!(out.is_empty());
        }
    }
}
