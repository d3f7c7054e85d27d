//! Source rendering. Output is fully parenthesized so it re-parses to the same tree shape.

use super::ast::*;

pub fn render(node: &Node) -> String {
    let mut out = String::new();
    if node.kind.is_statement() || node.kind == NodeKind::Program {
        stmt(node, &mut out);
    } else {
        expr(node, &mut out);
    }
    out
}

/// JS property-key spelling of a number.
pub fn number_to_key(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e21 {
        format!("{}", n as i128)
    } else {
        number(n)
    }
}

fn number(n: f64) -> String {
    if n.is_infinite() {
        if n > 0.0 {
            "1e999".into()
        } else {
            "-1e999".into()
        }
    } else if n.is_nan() {
        "NaN".into()
    } else {
        format!("{n}")
    }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).unwrap_or_else(|_| "\"\"".into())
}

fn stmts(nodes: &[Node], out: &mut String) {
    for n in nodes {
        stmt(n, out);
        out.push('\n');
    }
}

fn function_head(info: &FunctionInfo, out: &mut String) {
    out.push_str("function");
    if let Some(name) = &info.name {
        out.push(' ');
        out.push_str(name);
    }
    out.push('(');
    out.push_str(&info.params.join(", "));
    out.push_str(") ");
}

fn var_decl(node: &Node, out: &mut String) {
    if let Payload::Decl(kind) = node.payload {
        out.push_str(kind.keyword());
    }
    out.push(' ');
    for (i, d) in node.children.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(d.name().unwrap_or("_"));
        if let Some(init) = d.children.first() {
            out.push_str(" = ");
            expr(init, out);
        }
    }
}

fn stmt(node: &Node, out: &mut String) {
    let c = &node.children;
    match node.kind {
        NodeKind::Program => stmts(c, out),
        NodeKind::Block => {
            out.push_str("{\n");
            stmts(c, out);
            out.push('}');
        }
        NodeKind::VariableDeclaration => {
            var_decl(node, out);
            out.push(';');
        }
        NodeKind::FunctionDeclaration => {
            if let Some(info) = node.function_info() {
                function_head(info, out);
            }
            stmt(&c[0], out);
        }
        NodeKind::IfStatement => {
            out.push_str("if (");
            expr(&c[0], out);
            out.push_str(") ");
            stmt(&c[1], out);
            if let Some(alt) = c.get(2) {
                out.push_str(" else ");
                stmt(alt, out);
            }
        }
        NodeKind::SwitchStatement => {
            out.push_str("switch (");
            expr(&c[0], out);
            out.push_str(") {\n");
            for case in &c[1..] {
                let default = matches!(case.payload, Payload::Case { default: true });
                let body = if default {
                    out.push_str("default:\n");
                    &case.children[..]
                } else {
                    out.push_str("case ");
                    expr(&case.children[0], out);
                    out.push_str(":\n");
                    &case.children[1..]
                };
                stmts(body, out);
            }
            out.push('}');
        }
        NodeKind::DoWhileStatement => {
            out.push_str("do ");
            stmt(&c[0], out);
            out.push_str(" while (");
            expr(&c[1], out);
            out.push_str(");");
        }
        NodeKind::WhileStatement => {
            out.push_str("while (");
            expr(&c[0], out);
            out.push_str(") ");
            stmt(&c[1], out);
        }
        NodeKind::ForStatement => {
            let Payload::For { init, test, update } = node.payload else {
                return;
            };
            let mut i = 0;
            out.push_str("for (");
            if init {
                let n = &c[i];
                if n.kind == NodeKind::VariableDeclaration {
                    var_decl(n, out);
                } else {
                    expr(&n.children[0], out);
                }
                i += 1;
            }
            out.push_str("; ");
            if test {
                expr(&c[i], out);
                i += 1;
            }
            out.push_str("; ");
            if update {
                expr(&c[i], out);
                i += 1;
            }
            out.push_str(") ");
            stmt(&c[i], out);
        }
        NodeKind::ForInStatement | NodeKind::ForOfStatement => {
            let Payload::ForBinding { decl, name } = &node.payload else {
                return;
            };
            out.push_str("for (");
            if let Some(d) = decl {
                out.push_str(d.keyword());
                out.push(' ');
            }
            out.push_str(name);
            out.push_str(if node.kind == NodeKind::ForInStatement { " in " } else { " of " });
            expr(&c[0], out);
            out.push_str(") ");
            stmt(&c[1], out);
        }
        NodeKind::TryCatchStatement => {
            let Payload::Try { param, has_catch, has_finally } = &node.payload else {
                return;
            };
            out.push_str("try ");
            stmt(&c[0], out);
            let mut i = 1;
            if *has_catch {
                out.push_str(" catch ");
                if let Some(p) = param {
                    out.push('(');
                    out.push_str(p);
                    out.push_str(") ");
                }
                stmt(&c[i], out);
                i += 1;
            }
            if *has_finally {
                out.push_str(" finally ");
                stmt(&c[i], out);
            }
        }
        NodeKind::Return => {
            out.push_str("return");
            if let Some(a) = c.first() {
                out.push(' ');
                expr(a, out);
            }
            out.push(';');
        }
        NodeKind::Break => out.push_str("break;"),
        NodeKind::Continue => out.push_str("continue;"),
        NodeKind::Throw => {
            out.push_str("throw ");
            expr(&c[0], out);
            out.push(';');
        }
        NodeKind::ExpressionStatement => {
            expr(&c[0], out);
            out.push(';');
        }
        NodeKind::EmptyStatement => out.push(';'),
        _ => {
            expr(node, out);
            out.push(';');
        }
    }
}

/// Member objects and call callees are left bare only when that cannot change the parse.
fn bare_chain(node: &Node, allow_call: bool) -> bool {
    match node.kind {
        NodeKind::Identifier => true,
        NodeKind::MemberAccess => bare_chain(&node.children[0], allow_call),
        NodeKind::Call => allow_call && bare_chain(&node.children[0], allow_call),
        _ => false,
    }
}

fn wrapped(node: &Node, bare: bool, out: &mut String) {
    if bare {
        expr(node, out);
    } else {
        out.push('(');
        expr(node, out);
        out.push(')');
    }
}

fn args(nodes: &[Node], out: &mut String) {
    out.push('(');
    for (i, a) in nodes.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        expr(a, out);
    }
    out.push(')');
}

fn expr(node: &Node, out: &mut String) {
    let c = &node.children;
    match node.kind {
        NodeKind::Identifier => out.push_str(node.name().unwrap_or("undefined")),
        NodeKind::Literal => match node.literal() {
            Some(Lit::Number(n)) => out.push_str(&number(*n)),
            Some(Lit::String(s)) => out.push_str(&quote(s)),
            Some(Lit::Bool(b)) => out.push_str(if *b { "true" } else { "false" }),
            Some(Lit::Null) => out.push_str("null"),
            Some(Lit::Undefined) | None => out.push_str("undefined"),
            Some(Lit::Regex { pattern, flags }) => {
                out.push('/');
                out.push_str(pattern);
                out.push('/');
                out.push_str(flags);
            }
        },
        NodeKind::TemplateLiteral => {
            let Payload::Template { quasis } = &node.payload else {
                return;
            };
            out.push('`');
            for (i, q) in quasis.iter().enumerate() {
                out.push_str(&q.replace('\\', "\\\\").replace('`', "\\`").replace("${", "\\${"));
                if let Some(e) = c.get(i) {
                    out.push_str("${");
                    expr(e, out);
                    out.push('}');
                }
            }
            out.push('`');
        }
        NodeKind::ArrayLiteral => {
            out.push('[');
            for (i, e) in c.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr(e, out);
            }
            out.push(']');
        }
        NodeKind::ObjectLiteral => {
            out.push_str("({");
            for (i, p) in c.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&quote(p.name().unwrap_or("")));
                out.push_str(": ");
                expr(&p.children[0], out);
            }
            out.push_str("})");
        }
        NodeKind::FunctionLiteral | NodeKind::FunctionDeclaration => {
            let Some(info) = node.function_info() else {
                return;
            };
            out.push('(');
            if info.arrow {
                out.push('(');
                out.push_str(&info.params.join(", "));
                out.push_str(") => ");
                if info.expression_body {
                    wrapped(&c[0], false, out);
                } else {
                    stmt(&c[0], out);
                }
            } else {
                function_head(info, out);
                stmt(&c[0], out);
            }
            out.push(')');
        }
        NodeKind::BinaryOperation | NodeKind::CompareOperation => {
            let op = node.op().map(Op::symbol).unwrap_or("+");
            out.push('(');
            expr(&c[0], out);
            if op == "," {
                out.push_str(", ");
            } else {
                out.push(' ');
                out.push_str(op);
                out.push(' ');
            }
            expr(&c[1], out);
            out.push(')');
        }
        NodeKind::Conditional => {
            out.push('(');
            expr(&c[0], out);
            out.push_str(" ? ");
            expr(&c[1], out);
            out.push_str(" : ");
            expr(&c[2], out);
            out.push(')');
        }
        NodeKind::NaryOperation => {
            let op = node.op().map(Op::symbol).unwrap_or("&&");
            out.push('(');
            for (i, e) in c.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                    out.push_str(op);
                    out.push(' ');
                }
                expr(e, out);
            }
            out.push(')');
        }
        NodeKind::UnaryOperation => {
            let op = node.op().map(Op::symbol).unwrap_or("!");
            out.push('(');
            out.push_str(op);
            if op.chars().all(|ch| ch.is_ascii_alphabetic()) {
                out.push(' ');
            }
            wrapped(&c[0], matches!(c[0].kind, NodeKind::Identifier | NodeKind::Literal), out);
            out.push(')');
        }
        NodeKind::CountOperation => {
            let Payload::Count { increment, prefix } = node.payload else {
                return;
            };
            let op = if increment { "++" } else { "--" };
            out.push('(');
            if prefix {
                out.push_str(op);
            }
            expr(&c[0], out);
            if !prefix {
                out.push_str(op);
            }
            out.push(')');
        }
        NodeKind::Assignment | NodeKind::CompoundAssignment => {
            out.push('(');
            expr(&c[0], out);
            match node.op() {
                Some(op) if node.kind == NodeKind::CompoundAssignment => {
                    out.push(' ');
                    out.push_str(op.symbol());
                    out.push_str("= ");
                }
                _ => out.push_str(" = "),
            }
            expr(&c[1], out);
            out.push(')');
        }
        NodeKind::Call => {
            wrapped(&c[0], bare_chain(&c[0], true), out);
            args(&c[1..], out);
        }
        NodeKind::New => {
            out.push_str("(new ");
            wrapped(&c[0], bare_chain(&c[0], false), out);
            args(&c[1..], out);
            out.push(')');
        }
        NodeKind::MemberAccess => {
            wrapped(&c[0], bare_chain(&c[0], true), out);
            match (&node.payload, c.get(1)) {
                (_, Some(key)) => {
                    out.push('[');
                    expr(key, out);
                    out.push(']');
                }
                (Payload::Member { name: Some(n), .. }, None) => {
                    out.push('.');
                    out.push_str(n);
                }
                _ => {}
            }
        }
        _ => {
            // Statement kinds never appear in expression position.
            out.push_str("undefined");
        }
    }
}
