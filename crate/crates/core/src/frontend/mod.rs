//! Lexer, parser and renderer for the supported JavaScript subset.

pub mod ast;
pub mod error;
pub mod lexer;
mod parser;
pub mod render;

pub use ast::{node_count, DeclKind, FunctionInfo, Lit, Node, NodeKind, Op, Payload, Span};
pub use error::FrontendError;
pub use lexer::{Token, TokenKind};
pub use render::render;

use serde::{Deserialize, Serialize};

use crate::tracker::{Provenance, ScriptId};

/// One unit of source handed to the analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFile {
    pub id: ScriptId,
    pub text: String,
    pub origin: Provenance,
}

impl SourceFile {
    pub fn new(id: ScriptId, text: impl Into<String>, origin: Provenance) -> Self {
        SourceFile { id, text: text.into(), origin }
    }
}

pub fn tokenize(source: &SourceFile) -> Result<Vec<Token>, FrontendError> {
    lexer::tokenize(&source.text)
}

pub fn parse(source: &SourceFile) -> Result<Node, FrontendError> {
    parser::parse_program(&source.text)
}

/// Parse bare text without a surrounding [`SourceFile`].
pub fn parse_str(text: &str) -> Result<Node, FrontendError> {
    parser::parse_program(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(src: &str) -> Node {
        parse_str(src).unwrap_or_else(|e| panic!("{src:?}: {e}"))
    }

    fn kinds(root: &Node) -> Vec<NodeKind> {
        let mut v = Vec::new();
        root.walk(&mut |n| v.push(n.kind));
        v
    }

    fn roundtrip(src: &str) {
        let a = p(src);
        let text = render(&a);
        let b = parse_str(&text).unwrap_or_else(|e| panic!("reparse of {text:?}: {e}"));
        assert!(a.same_shape(&b), "round trip changed shape:\n{src}\n---\n{text}");
    }

    #[test]
    fn empty_program() {
        let root = p("");
        assert_eq!(root.kind, NodeKind::Program);
        assert!(root.children.is_empty());
    }

    #[test]
    fn ternary_has_three_children() {
        let root = p("a ? b() : c()");
        let expr = &root.children[0].children[0];
        assert_eq!(expr.kind, NodeKind::Conditional);
        assert_eq!(expr.children.len(), 3);
    }

    #[test]
    fn class_is_unsupported() {
        match parse_str("class A {}") {
            Err(FrontendError::Unsupported { construct, span }) => {
                assert_eq!(construct, "class");
                assert_eq!((span.start_line, span.start_col), (1, 1));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unsupported_constructs_are_named() {
        let cases = [
            ("function* g() {}", "generator"),
            ("async function f() {}", "async function"),
            ("var {a} = b;", "destructuring"),
            ("f(...xs);", "spread"),
            ("a?.b;", "optional chaining"),
            ("tag`x`;", "tagged template"),
            ("x: for(;;) {}", "labeled statement"),
            ("const f = async () => 1;", "async function"),
            ("function f(a = 1) {}", "default parameter"),
        ];
        for (src, want) in cases {
            match parse_str(src) {
                Err(FrontendError::Unsupported { construct, .. }) => {
                    assert_eq!(construct, want, "{src}")
                }
                other => panic!("{src}: {other:?}"),
            }
        }
    }

    #[test]
    fn parse_error_reports_expected_and_found() {
        match parse_str("if (a b();") {
            Err(FrontendError::Parse { expected, found, .. }) => {
                assert_eq!(expected, "`)`");
                assert_eq!(found, "identifier `b`");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn logical_chains_flatten_until_parenthesized() {
        let root = p("a && b && c; (a && b) && c; a || b && c;");
        let e0 = &root.children[0].children[0];
        assert_eq!(e0.kind, NodeKind::NaryOperation);
        assert_eq!(e0.children.len(), 3);
        let e1 = &root.children[1].children[0];
        assert_eq!(e1.kind, NodeKind::BinaryOperation);
        assert_eq!(e1.children[0].kind, NodeKind::BinaryOperation);
        let e2 = &root.children[2].children[0];
        assert_eq!(e2.op(), Some(Op::Or));
        assert_eq!(e2.children[1].op(), Some(Op::And));
    }

    #[test]
    fn precedence() {
        let root = p("x = 1 + 2 * 3 === 7;");
        let assign = &root.children[0].children[0];
        assert_eq!(assign.kind, NodeKind::Assignment);
        let cmp = &assign.children[1];
        assert_eq!(cmp.kind, NodeKind::CompareOperation);
        assert_eq!(cmp.children[0].op(), Some(Op::Add));
        assert_eq!(cmp.children[0].children[1].op(), Some(Op::Mul));
    }

    #[test]
    fn newline_terminates_statements() {
        let root = p("a = 1\nb = 2\nreturn\nc()");
        assert_eq!(root.children.len(), 4);
        assert!(root.children[2].children.is_empty());
    }

    #[test]
    fn missing_semicolon_on_one_line_is_an_error() {
        assert!(parse_str("a = 1 b = 2").is_err());
    }

    #[test]
    fn arrows_and_function_bodies_are_parsed() {
        let root = p("setTimeout(() => { go(); }, 5); var f = x => x + 1; var g = (a, b) => { return a; };");
        let mut fns = 0;
        root.walk(&mut |n| {
            if n.kind == NodeKind::FunctionLiteral {
                fns += 1;
                assert_eq!(n.children.len(), 1);
            }
        });
        assert_eq!(fns, 3);
    }

    #[test]
    fn all_condition_kinds_parse() {
        let src = r#"
            if (a) b(); else c();
            x = a ? 1 : 2;
            switch (k) { case 1: f(); break; default: g(); }
            do { i++; } while (i < 3);
            while (i > 0) i--;
            for (var i = 0; i < 2; i++) {}
            for (var k in o) {}
            for (const v of xs) {}
            a && b();
            !a || c();
            a && b && c;
            try { t(); } catch (e) { u(); } finally { v(); }
        "#;
        let ks = kinds(&p(src));
        for k in [
            NodeKind::IfStatement,
            NodeKind::Conditional,
            NodeKind::SwitchStatement,
            NodeKind::DoWhileStatement,
            NodeKind::WhileStatement,
            NodeKind::ForStatement,
            NodeKind::ForInStatement,
            NodeKind::ForOfStatement,
            NodeKind::BinaryOperation,
            NodeKind::UnaryOperation,
            NodeKind::NaryOperation,
            NodeKind::TryCatchStatement,
        ] {
            assert!(ks.contains(&k), "missing {k}");
        }
    }

    #[test]
    fn spans_nest_and_cover_lines() {
        let root = p("if (a) {\n  b();\n}\n");
        let if_node = &root.children[0];
        assert_eq!(if_node.span, Span::new(1, 1, 3, 1));
        fn check(n: &Node) {
            for c in &n.children {
                assert!(n.span.contains(&c.span), "{} {} not in {} {}", c.kind, c.span, n.kind, n.span);
                check(c);
            }
        }
        check(&root);
    }

    #[test]
    fn node_count_matches_hand_count() {
        // Program, IfStatement, Identifier a, Block, ExpressionStatement, Call, Identifier b
        assert_eq!(node_count(&p("if (a) { b(); }")), 7);
        let lit = Node::leaf(NodeKind::Literal, Span::default(), Payload::Literal(Lit::Null));
        assert_eq!(node_count(&lit), 1);
    }

    #[test]
    fn template_substitutions() {
        let root = p("var s = `a${x + 1}b${y}`;");
        let t = &root.children[0].children[0].children[0];
        assert_eq!(t.kind, NodeKind::TemplateLiteral);
        assert_eq!(t.children.len(), 2);
        assert_eq!(t.children[0].span.start_col, 13);
    }

    #[test]
    fn round_trips() {
        for src in [
            "if(a){b()}",
            "var a = 1, b = 'x\\n', c = /re[/]x/gi, d = `t${a}\\``;",
            "x = {a: 1, 'b-c': [1, 2], m() { return this.a; }, d};",
            "(function () { return new Foo.Bar(1).baz; })();",
            "new Date;",
            "a = -(-1) + +b - ~c; typeof x === 'undefined';",
            "for (var i = 0, n = ('a' in o); i < n; i++) { continue; }",
            "for (k in o) delete o[k];",
            "do x++; while (x < 10)",
            "switch (a) { case 1: case 2: f(); break; default: }",
            "try { a(); } catch { b(); }",
            "try { a(); } finally { b(); }",
            "a = b ? c ? 1 : 2 : d || e ?? f;",
            "x = (a, b), y = a ** b ** c;",
            "label = function named(a, b) { throw a; };",
            "f = () => ({a: 1});",
            "o.x += 1; o['y'] >>>= 2; --o.z;",
            "if (a) if (b) c(); else d();",
            "x = 1e21 + 0.1 + 5e-324 + 0x10;",
            "x = a instanceof B && !(c in d);",
            "(1).toString(); 'abc'.length; [1][0];",
        ] {
            roundtrip(src);
        }
    }

    #[test]
    fn blocked_sites_fixture_round_trips() {
        roundtrip(include_str!("../../fixtures/blocked_sites.js"));
    }
}
