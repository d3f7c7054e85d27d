use super::ast::*;
use super::error::FrontendError;
use super::lexer::{tokenize, tokenize_at, Token, TokenKind};

type PResult<T> = Result<T, FrontendError>;

/// Parse a whole program. Every function body is parsed up front; nothing is deferred.
pub fn parse_program(src: &str) -> PResult<Node> {
    let tokens = tokenize(src)?;
    let mut p = Parser::new(tokens);
    let mut body = Vec::new();
    while !p.at_end() {
        body.push(p.statement()?);
    }
    let span = match (body.first(), body.last()) {
        (Some(a), Some(b)) => a.span.to(b.span),
        _ => Span::new(1, 1, 1, 1),
    };
    Ok(Node::new(NodeKind::Program, span, Payload::None, body))
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    no_in: bool,
}

fn unsupported<T>(construct: &str, span: Span) -> PResult<T> {
    Err(FrontendError::Unsupported { construct: construct.to_string(), span })
}

fn assignment_op(p: &str) -> Option<Option<Op>> {
    Some(match p {
        "=" => None,
        "+=" => Some(Op::Add),
        "-=" => Some(Op::Sub),
        "*=" => Some(Op::Mul),
        "/=" => Some(Op::Div),
        "%=" => Some(Op::Mod),
        "**=" => Some(Op::Exp),
        "<<=" => Some(Op::Shl),
        ">>=" => Some(Op::Shr),
        ">>>=" => Some(Op::UShr),
        "&=" => Some(Op::BitAnd),
        "|=" => Some(Op::BitOr),
        "^=" => Some(Op::BitXor),
        _ => return None,
    })
}

impl Parser {
    fn new(toks: Vec<Token>) -> Self {
        Parser { toks, pos: 0, no_in: false }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn peek_n(&self, n: usize) -> Option<&Token> {
        self.toks.get(self.pos + n)
    }

    fn at_punct(&self, p: &str) -> bool {
        self.peek().is_some_and(|t| t.is_punct(p))
    }

    fn at_keyword(&self, k: &str) -> bool {
        self.peek().is_some_and(|t| t.is_keyword(k))
    }

    fn at_ident(&self, name: &str) -> bool {
        matches!(self.peek(), Some(Token { kind: TokenKind::Ident(n), .. }) if n == name)
    }

    fn here_span(&self) -> Span {
        match self.peek() {
            Some(t) => t.span,
            None => self.toks.last().map(|t| t.span).unwrap_or(Span::new(1, 1, 1, 1)),
        }
    }

    fn prev_span(&self) -> Span {
        self.pos.checked_sub(1).and_then(|i| self.toks.get(i)).map(|t| t.span).unwrap_or(Span::new(1, 1, 1, 1))
    }

    fn advance(&mut self) -> PResult<Token> {
        let t = self.peek().cloned().ok_or_else(|| FrontendError::Parse {
            span: self.here_span(),
            expected: "more input".into(),
            found: "end of input".into(),
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn expected<T>(&self, what: &str) -> PResult<T> {
        Err(FrontendError::Parse {
            span: self.here_span(),
            expected: what.to_string(),
            found: self.peek().map(|t| t.describe()).unwrap_or_else(|| "end of input".into()),
        })
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.at_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<Span> {
        if self.at_punct(p) {
            Ok(self.advance()?.span)
        } else {
            self.expected(&format!("`{p}`"))
        }
    }

    fn expect_keyword(&mut self, k: &str) -> PResult<Span> {
        if self.at_keyword(k) {
            Ok(self.advance()?.span)
        } else {
            self.expected(&format!("`{k}`"))
        }
    }

    fn binding_name(&mut self) -> PResult<(String, Span)> {
        match self.peek() {
            Some(Token { kind: TokenKind::Ident(n), span, .. }) => {
                let r = (n.clone(), *span);
                self.pos += 1;
                Ok(r)
            }
            Some(t) if t.is_punct("{") || t.is_punct("[") => unsupported("destructuring", t.span),
            Some(t) if t.is_punct("...") => unsupported("rest element", t.span),
            _ => self.expected("identifier"),
        }
    }

    /// Newline-terminated automatic semicolon insertion only.
    fn semicolon(&mut self) -> PResult<()> {
        if self.eat_punct(";") {
            return Ok(());
        }
        match self.peek() {
            None => Ok(()),
            Some(t) if t.is_punct("}") || t.newline_before => Ok(()),
            _ => self.expected("`;`"),
        }
    }

    // ---- statements -------------------------------------------------------

    fn statement(&mut self) -> PResult<Node> {
        let tok = match self.peek() {
            Some(t) => t.clone(),
            None => return self.expected("statement"),
        };
        match &tok.kind {
            TokenKind::Punct("{") => self.block(),
            TokenKind::Punct(";") => {
                self.pos += 1;
                Ok(Node::leaf(NodeKind::EmptyStatement, tok.span, Payload::None))
            }
            TokenKind::Keyword(k) => match *k {
                "var" | "let" | "const" => {
                    let decl = self.var_declaration()?;
                    let end = self.prev_span();
                    self.semicolon()?;
                    let span = decl.span.to(end).to(self.prev_span());
                    Ok(Node { span, ..decl })
                }
                "function" => self.function(true),
                "if" => self.if_statement(),
                "for" => self.for_statement(),
                "while" => {
                    self.pos += 1;
                    self.expect_punct("(")?;
                    let test = self.expression()?;
                    self.expect_punct(")")?;
                    let body = self.statement()?;
                    let span = tok.span.to(body.span);
                    Ok(Node::new(NodeKind::WhileStatement, span, Payload::None, vec![test, body]))
                }
                "do" => {
                    self.pos += 1;
                    let body = self.statement()?;
                    self.expect_keyword("while")?;
                    self.expect_punct("(")?;
                    let test = self.expression()?;
                    let close = self.expect_punct(")")?;
                    self.eat_punct(";");
                    let span = tok.span.to(close).to(self.prev_span());
                    Ok(Node::new(NodeKind::DoWhileStatement, span, Payload::None, vec![body, test]))
                }
                "switch" => self.switch_statement(),
                "try" => self.try_statement(),
                "return" => {
                    self.pos += 1;
                    let mut children = Vec::new();
                    let bare = match self.peek() {
                        None => true,
                        Some(t) => t.newline_before || t.is_punct(";") || t.is_punct("}"),
                    };
                    if !bare {
                        children.push(self.expression()?);
                    }
                    self.semicolon()?;
                    let span = tok.span.to(self.prev_span());
                    Ok(Node::new(NodeKind::Return, span, Payload::None, children))
                }
                "break" | "continue" => {
                    self.pos += 1;
                    if let Some(Token { kind: TokenKind::Ident(_), newline_before: false, span }) = self.peek() {
                        return unsupported("labeled jump", *span);
                    }
                    self.semicolon()?;
                    let kind = if *k == "break" { NodeKind::Break } else { NodeKind::Continue };
                    Ok(Node::leaf(kind, tok.span.to(self.prev_span()), Payload::None))
                }
                "throw" => {
                    self.pos += 1;
                    let arg = self.expression()?;
                    self.semicolon()?;
                    let span = tok.span.to(self.prev_span());
                    Ok(Node::new(NodeKind::Throw, span, Payload::None, vec![arg]))
                }
                "class" => unsupported("class", tok.span),
                "import" | "export" => unsupported("module syntax", tok.span),
                "with" => unsupported("with", tok.span),
                "debugger" => unsupported("debugger", tok.span),
                _ => self.expression_statement(),
            },
            TokenKind::Ident(name) => {
                if name == "async" && self.peek_n(1).is_some_and(|t| t.is_keyword("function") && !t.newline_before) {
                    return unsupported("async function", tok.span);
                }
                if self.peek_n(1).is_some_and(|t| t.is_punct(":")) {
                    return unsupported("labeled statement", tok.span);
                }
                self.expression_statement()
            }
            _ => self.expression_statement(),
        }
    }

    fn expression_statement(&mut self) -> PResult<Node> {
        let expr = self.expression()?;
        self.semicolon()?;
        let span = expr.span.to(self.prev_span());
        Ok(Node::new(NodeKind::ExpressionStatement, span, Payload::None, vec![expr]))
    }

    fn block(&mut self) -> PResult<Node> {
        let open = self.expect_punct("{")?;
        let mut body = Vec::new();
        while !self.at_punct("}") {
            if self.at_end() {
                return self.expected("`}`");
            }
            body.push(self.statement()?);
        }
        let close = self.expect_punct("}")?;
        Ok(Node::new(NodeKind::Block, open.to(close), Payload::None, body))
    }

    fn var_declaration(&mut self) -> PResult<Node> {
        let kw = self.advance()?;
        let kind = match &kw.kind {
            TokenKind::Keyword("var") => DeclKind::Var,
            TokenKind::Keyword("let") => DeclKind::Let,
            _ => DeclKind::Const,
        };
        let mut decls = Vec::new();
        loop {
            let (name, nspan) = self.binding_name()?;
            let mut children = Vec::new();
            if self.eat_punct("=") {
                children.push(self.assignment()?);
            }
            let span = children.last().map(|c| nspan.to(c.span)).unwrap_or(nspan);
            decls.push(Node::new(NodeKind::VariableDeclarator, span, Payload::Name(name), children));
            if !self.eat_punct(",") {
                break;
            }
        }
        let span = kw.span.to(decls.last().map(|d| d.span).unwrap_or(kw.span));
        Ok(Node::new(NodeKind::VariableDeclaration, span, Payload::Decl(kind), decls))
    }

    fn if_statement(&mut self) -> PResult<Node> {
        let kw = self.expect_keyword("if")?;
        self.expect_punct("(")?;
        let test = self.expression()?;
        self.expect_punct(")")?;
        let cons = self.statement()?;
        let mut children = vec![test, cons];
        if self.at_keyword("else") {
            self.pos += 1;
            children.push(self.statement()?);
        }
        let span = kw.to(children.last().map(|c| c.span).unwrap_or(kw));
        Ok(Node::new(NodeKind::IfStatement, span, Payload::None, children))
    }

    fn for_statement(&mut self) -> PResult<Node> {
        let kw = self.expect_keyword("for")?;
        if self.at_keyword("await") {
            return unsupported("for await", self.here_span());
        }
        self.expect_punct("(")?;

        // for (<decl?> name in|of expr)
        let decl = match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Keyword("var")) => Some(DeclKind::Var),
            Some(TokenKind::Keyword("let")) => Some(DeclKind::Let),
            Some(TokenKind::Keyword("const")) => Some(DeclKind::Const),
            _ => None,
        };
        let name_at = if decl.is_some() { 1 } else { 0 };
        let binding = match (self.peek_n(name_at), self.peek_n(name_at + 1)) {
            (Some(Token { kind: TokenKind::Ident(n), .. }), Some(t)) => {
                if t.is_keyword("in") {
                    Some((n.clone(), NodeKind::ForInStatement))
                } else if matches!(&t.kind, TokenKind::Ident(o) if o == "of") {
                    Some((n.clone(), NodeKind::ForOfStatement))
                } else {
                    None
                }
            }
            _ => None,
        };
        if let Some((name, kind)) = binding {
            self.pos += name_at + 2;
            let iterable = if kind == NodeKind::ForOfStatement { self.assignment()? } else { self.expression()? };
            self.expect_punct(")")?;
            let body = self.statement()?;
            let span = kw.to(body.span);
            return Ok(Node::new(kind, span, Payload::ForBinding { decl, name }, vec![iterable, body]));
        }

        let mut children = Vec::new();
        let (mut has_init, mut has_test, mut has_update) = (false, false, false);
        if !self.at_punct(";") {
            let saved = self.no_in;
            self.no_in = true;
            let init = if decl.is_some() {
                self.var_declaration()?
            } else {
                let e = self.expression()?;
                Node::new(NodeKind::ExpressionStatement, e.span, Payload::None, vec![e])
            };
            self.no_in = saved;
            children.push(init);
            has_init = true;
        }
        self.expect_punct(";")?;
        if !self.at_punct(";") {
            children.push(self.expression()?);
            has_test = true;
        }
        self.expect_punct(";")?;
        if !self.at_punct(")") {
            children.push(self.expression()?);
            has_update = true;
        }
        self.expect_punct(")")?;
        let body = self.statement()?;
        let span = kw.to(body.span);
        children.push(body);
        Ok(Node::new(
            NodeKind::ForStatement,
            span,
            Payload::For { init: has_init, test: has_test, update: has_update },
            children,
        ))
    }

    fn switch_statement(&mut self) -> PResult<Node> {
        let kw = self.expect_keyword("switch")?;
        self.expect_punct("(")?;
        let disc = self.expression()?;
        self.expect_punct(")")?;
        self.expect_punct("{")?;
        let mut children = vec![disc];
        while !self.at_punct("}") {
            let start = self.here_span();
            let mut case_children = Vec::new();
            let default = if self.at_keyword("case") {
                self.pos += 1;
                case_children.push(self.expression()?);
                false
            } else if self.at_keyword("default") {
                self.pos += 1;
                true
            } else {
                return self.expected("`case`, `default` or `}`");
            };
            self.expect_punct(":")?;
            while !(self.at_punct("}") || self.at_keyword("case") || self.at_keyword("default")) {
                if self.at_end() {
                    return self.expected("`}`");
                }
                case_children.push(self.statement()?);
            }
            let span = start.to(self.prev_span());
            children.push(Node::new(NodeKind::SwitchCase, span, Payload::Case { default }, case_children));
        }
        let close = self.expect_punct("}")?;
        Ok(Node::new(NodeKind::SwitchStatement, kw.to(close), Payload::None, children))
    }

    fn try_statement(&mut self) -> PResult<Node> {
        let kw = self.expect_keyword("try")?;
        let block = self.block()?;
        let mut children = vec![block];
        let mut param = None;
        let mut has_catch = false;
        let mut has_finally = false;
        if self.at_keyword("catch") {
            self.pos += 1;
            if self.eat_punct("(") {
                param = Some(self.binding_name()?.0);
                self.expect_punct(")")?;
            }
            children.push(self.block()?);
            has_catch = true;
        }
        if self.at_keyword("finally") {
            self.pos += 1;
            children.push(self.block()?);
            has_finally = true;
        }
        if !has_catch && !has_finally {
            return self.expected("`catch` or `finally`");
        }
        let span = kw.to(children.last().map(|c| c.span).unwrap_or(kw));
        Ok(Node::new(NodeKind::TryCatchStatement, span, Payload::Try { param, has_catch, has_finally }, children))
    }

    /// `function` declaration or expression, positioned at the keyword.
    fn function(&mut self, declaration: bool) -> PResult<Node> {
        let kw = self.expect_keyword("function")?;
        if self.at_punct("*") {
            return unsupported("generator", self.here_span());
        }
        let name = match self.peek() {
            Some(Token { kind: TokenKind::Ident(n), .. }) => {
                let n = n.clone();
                self.pos += 1;
                Some(n)
            }
            _ if declaration => return self.expected("function name"),
            _ => None,
        };
        let params = self.params()?;
        let body = self.block()?;
        let span = kw.to(body.span);
        let kind = if declaration { NodeKind::FunctionDeclaration } else { NodeKind::FunctionLiteral };
        let info = FunctionInfo { name, params, arrow: false, expression_body: false };
        Ok(Node::new(kind, span, Payload::Function(info), vec![body]))
    }

    fn params(&mut self) -> PResult<Vec<String>> {
        self.expect_punct("(")?;
        let mut params = Vec::new();
        while !self.at_punct(")") {
            let (name, _) = self.binding_name()?;
            if self.at_punct("=") {
                return unsupported("default parameter", self.here_span());
            }
            params.push(name);
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(")")?;
        Ok(params)
    }

    // ---- expressions ------------------------------------------------------

    fn expression(&mut self) -> PResult<Node> {
        let mut left = self.assignment()?;
        while self.eat_punct(",") {
            let right = self.assignment()?;
            let span = left.span.to(right.span);
            left = Node::new(NodeKind::BinaryOperation, span, Payload::Op(Op::Comma), vec![left, right]);
        }
        Ok(left)
    }

    fn matching_paren(&self, open: usize) -> Option<usize> {
        let mut depth = 0usize;
        for (i, t) in self.toks.iter().enumerate().skip(open) {
            if t.is_punct("(") || t.is_punct("[") || t.is_punct("{") {
                depth += 1;
            } else if t.is_punct(")") || t.is_punct("]") || t.is_punct("}") {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i);
                }
            }
        }
        None
    }

    fn arrow_ahead(&self) -> bool {
        match self.peek() {
            Some(Token { kind: TokenKind::Ident(_), .. }) => self.peek_n(1).is_some_and(|t| t.is_punct("=>")),
            Some(t) if t.is_punct("(") => self
                .matching_paren(self.pos)
                .and_then(|close| self.toks.get(close + 1))
                .is_some_and(|t| t.is_punct("=>")),
            _ => false,
        }
    }

    fn arrow(&mut self) -> PResult<Node> {
        let start = self.here_span();
        let params = if self.at_punct("(") { self.params()? } else { vec![self.binding_name()?.0] };
        self.expect_punct("=>")?;
        let (body, expression_body) = if self.at_punct("{") {
            (self.block()?, false)
        } else {
            let saved = self.no_in;
            self.no_in = false;
            let e = self.assignment()?;
            self.no_in = saved;
            (e, true)
        };
        let span = start.to(body.span);
        let info = FunctionInfo { name: None, params, arrow: true, expression_body };
        Ok(Node::new(NodeKind::FunctionLiteral, span, Payload::Function(info), vec![body]))
    }

    fn assignment(&mut self) -> PResult<Node> {
        if self.at_ident("async") {
            let next = self.peek_n(1);
            let is_async = match next {
                Some(t) if t.newline_before => false,
                Some(t) if t.is_keyword("function") => true,
                Some(Token { kind: TokenKind::Ident(_), .. }) => self.peek_n(2).is_some_and(|t| t.is_punct("=>")),
                Some(t) if t.is_punct("(") => self
                    .matching_paren(self.pos + 1)
                    .and_then(|c| self.toks.get(c + 1))
                    .is_some_and(|t| t.is_punct("=>")),
                _ => false,
            };
            if is_async {
                return unsupported("async function", self.here_span());
            }
        }
        if self.at_keyword("yield") {
            return unsupported("generator", self.here_span());
        }
        if self.arrow_ahead() {
            return self.arrow();
        }
        let left = self.conditional()?;
        let op = match self.peek() {
            Some(Token { kind: TokenKind::Punct(p), span, .. }) => {
                if matches!(*p, "&&=" | "||=" | "??=") {
                    return unsupported("logical assignment", *span);
                }
                assignment_op(p)
            }
            _ => None,
        };
        let Some(op) = op else { return Ok(left) };
        match left.kind {
            NodeKind::Identifier | NodeKind::MemberAccess => {}
            NodeKind::ArrayLiteral | NodeKind::ObjectLiteral => return unsupported("destructuring", left.span),
            _ => return self.expected("assignable target before `=`"),
        }
        self.pos += 1;
        let right = self.assignment()?;
        let span = left.span.to(right.span);
        Ok(match op {
            None => Node::new(NodeKind::Assignment, span, Payload::None, vec![left, right]),
            Some(op) => Node::new(NodeKind::CompoundAssignment, span, Payload::Op(op), vec![left, right]),
        })
    }

    fn conditional(&mut self) -> PResult<Node> {
        let test = self.logical_or()?;
        if !self.eat_punct("?") {
            return Ok(test);
        }
        let saved = self.no_in;
        self.no_in = false;
        let then = self.assignment()?;
        self.no_in = saved;
        self.expect_punct(":")?;
        let alt = self.assignment()?;
        let span = test.span.to(alt.span);
        Ok(Node::new(NodeKind::Conditional, span, Payload::None, vec![test, then, alt]))
    }

    /// Chains of one logical operator fold into a single n-ary node when longer than two.
    fn logical_chain(&mut self, ops: &[(&str, Op)], next: fn(&mut Self) -> PResult<Node>) -> PResult<Node> {
        let mut operands = vec![next(self)?];
        let mut current: Option<Op> = None;
        loop {
            let found = ops.iter().find(|(p, _)| self.at_punct(p)).map(|(_, op)| *op);
            let Some(op) = found else { break };
            if current.is_some_and(|c| c != op) {
                let folded = fold_logical(current.unwrap_or(op), std::mem::take(&mut operands));
                operands.push(folded);
            }
            current = Some(op);
            self.pos += 1;
            operands.push(next(self)?);
        }
        Ok(match current {
            None => operands.pop().unwrap_or_else(|| unreachable!()),
            Some(op) => fold_logical(op, operands),
        })
    }

    fn logical_or(&mut self) -> PResult<Node> {
        self.logical_chain(&[("||", Op::Or), ("??", Op::Nullish)], Self::logical_and)
    }

    fn logical_and(&mut self) -> PResult<Node> {
        self.logical_chain(&[("&&", Op::And)], Self::bit_or)
    }

    fn binary_level(
        &mut self,
        ops: &[(&str, Op)],
        kind: NodeKind,
        next: fn(&mut Self) -> PResult<Node>,
    ) -> PResult<Node> {
        let mut left = next(self)?;
        loop {
            let found = ops.iter().find(|(p, _)| self.at_punct(p)).map(|(_, op)| *op);
            let Some(op) = found else { break };
            self.pos += 1;
            let right = next(self)?;
            let span = left.span.to(right.span);
            left = Node::new(kind, span, Payload::Op(op), vec![left, right]);
        }
        Ok(left)
    }

    fn bit_or(&mut self) -> PResult<Node> {
        self.binary_level(&[("|", Op::BitOr)], NodeKind::BinaryOperation, Self::bit_xor)
    }

    fn bit_xor(&mut self) -> PResult<Node> {
        self.binary_level(&[("^", Op::BitXor)], NodeKind::BinaryOperation, Self::bit_and)
    }

    fn bit_and(&mut self) -> PResult<Node> {
        self.binary_level(&[("&", Op::BitAnd)], NodeKind::BinaryOperation, Self::equality)
    }

    fn equality(&mut self) -> PResult<Node> {
        self.binary_level(
            &[("===", Op::StrictEq), ("!==", Op::StrictNotEq), ("==", Op::Eq), ("!=", Op::NotEq)],
            NodeKind::CompareOperation,
            Self::relational,
        )
    }

    fn relational(&mut self) -> PResult<Node> {
        let mut left = self.shift()?;
        loop {
            let op = match self.peek() {
                Some(t) if t.is_punct("<=") => Op::LtEq,
                Some(t) if t.is_punct(">=") => Op::GtEq,
                Some(t) if t.is_punct("<") => Op::Lt,
                Some(t) if t.is_punct(">") => Op::Gt,
                Some(t) if t.is_keyword("instanceof") => Op::InstanceOf,
                Some(t) if t.is_keyword("in") && !self.no_in => Op::In,
                _ => break,
            };
            self.pos += 1;
            let right = self.shift()?;
            let span = left.span.to(right.span);
            left = Node::new(NodeKind::CompareOperation, span, Payload::Op(op), vec![left, right]);
        }
        Ok(left)
    }

    fn shift(&mut self) -> PResult<Node> {
        self.binary_level(
            &[(">>>", Op::UShr), ("<<", Op::Shl), (">>", Op::Shr)],
            NodeKind::BinaryOperation,
            Self::additive,
        )
    }

    fn additive(&mut self) -> PResult<Node> {
        self.binary_level(&[("+", Op::Add), ("-", Op::Sub)], NodeKind::BinaryOperation, Self::multiplicative)
    }

    fn multiplicative(&mut self) -> PResult<Node> {
        self.binary_level(&[("*", Op::Mul), ("/", Op::Div), ("%", Op::Mod)], NodeKind::BinaryOperation, Self::exponent)
    }

    fn exponent(&mut self) -> PResult<Node> {
        let base = self.unary()?;
        if self.eat_punct("**") {
            let rhs = self.exponent()?;
            let span = base.span.to(rhs.span);
            return Ok(Node::new(NodeKind::BinaryOperation, span, Payload::Op(Op::Exp), vec![base, rhs]));
        }
        Ok(base)
    }

    fn unary(&mut self) -> PResult<Node> {
        let Some(tok) = self.peek().cloned() else {
            return self.expected("expression");
        };
        let op = match &tok.kind {
            TokenKind::Punct("!") => Some(Op::Not),
            TokenKind::Punct("-") => Some(Op::Neg),
            TokenKind::Punct("+") => Some(Op::Plus),
            TokenKind::Punct("~") => Some(Op::BitNot),
            TokenKind::Keyword("typeof") => Some(Op::TypeOf),
            TokenKind::Keyword("void") => Some(Op::Void),
            TokenKind::Keyword("delete") => Some(Op::Delete),
            TokenKind::Keyword("await") => return unsupported("await", tok.span),
            TokenKind::Punct(p @ ("++" | "--")) => {
                self.pos += 1;
                let target = self.unary()?;
                check_update_target(&target)?;
                let span = tok.span.to(target.span);
                let payload = Payload::Count { increment: *p == "++", prefix: true };
                return Ok(Node::new(NodeKind::CountOperation, span, payload, vec![target]));
            }
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            let operand = self.unary()?;
            let span = tok.span.to(operand.span);
            return Ok(Node::new(NodeKind::UnaryOperation, span, Payload::Op(op), vec![operand]));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Node> {
        let expr = self.call_member()?;
        if let Some(t) = self.peek() {
            if (t.is_punct("++") || t.is_punct("--")) && !t.newline_before {
                let increment = t.is_punct("++");
                let end = t.span;
                check_update_target(&expr)?;
                self.pos += 1;
                let span = expr.span.to(end);
                return Ok(Node::new(
                    NodeKind::CountOperation,
                    span,
                    Payload::Count { increment, prefix: false },
                    vec![expr],
                ));
            }
        }
        Ok(expr)
    }

    fn arguments(&mut self) -> PResult<(Vec<Node>, Span)> {
        self.expect_punct("(")?;
        let saved = self.no_in;
        self.no_in = false;
        let mut args = Vec::new();
        while !self.at_punct(")") {
            if self.at_punct("...") {
                return unsupported("spread", self.here_span());
            }
            args.push(self.assignment()?);
            if !self.eat_punct(",") {
                break;
            }
        }
        self.no_in = saved;
        let close = self.expect_punct(")")?;
        Ok((args, close))
    }

    fn member_tail(&mut self, object: Node, allow_call: bool) -> PResult<Option<Node>> {
        let Some(tok) = self.peek().cloned() else {
            return Ok(None);
        };
        match &tok.kind {
            TokenKind::Punct(".") => {
                self.pos += 1;
                let name_tok = self.advance()?;
                let name = match &name_tok.kind {
                    TokenKind::Ident(n) => n.clone(),
                    TokenKind::Keyword(k) => k.to_string(),
                    _ => {
                        self.pos -= 1;
                        return self.expected("property name");
                    }
                };
                let span = object.span.to(name_tok.span);
                Ok(Some(Node::new(
                    NodeKind::MemberAccess,
                    span,
                    Payload::Member { computed: false, name: Some(name) },
                    vec![object],
                )))
            }
            TokenKind::Punct("?.") => unsupported("optional chaining", tok.span),
            TokenKind::Punct("[") => {
                self.pos += 1;
                let saved = self.no_in;
                self.no_in = false;
                let key = self.expression()?;
                self.no_in = saved;
                let close = self.expect_punct("]")?;
                let span = object.span.to(close);
                Ok(Some(Node::new(
                    NodeKind::MemberAccess,
                    span,
                    Payload::Member { computed: true, name: None },
                    vec![object, key],
                )))
            }
            TokenKind::Punct("(") if allow_call => {
                let (args, close) = self.arguments()?;
                let span = object.span.to(close);
                let mut children = vec![object];
                children.extend(args);
                Ok(Some(Node::new(NodeKind::Call, span, Payload::None, children)))
            }
            TokenKind::Template { .. } => unsupported("tagged template", tok.span),
            _ => Ok(None),
        }
    }

    fn call_member(&mut self) -> PResult<Node> {
        let mut expr = if self.at_keyword("new") { self.new_expression()? } else { self.primary()? };
        while let Some(next) = self.member_tail(expr.clone(), true)? {
            expr = next;
        }
        Ok(expr)
    }

    fn new_expression(&mut self) -> PResult<Node> {
        let kw = self.expect_keyword("new")?;
        if self.at_punct(".") {
            return unsupported("new.target", kw);
        }
        let mut callee = if self.at_keyword("new") { self.new_expression()? } else { self.primary()? };
        while let Some(next) = self.member_tail(callee.clone(), false)? {
            callee = next;
        }
        let mut children = vec![callee];
        let mut end = children[0].span;
        if self.at_punct("(") {
            let (args, close) = self.arguments()?;
            children.extend(args);
            end = close;
        }
        Ok(Node::new(NodeKind::New, kw.to(end), Payload::None, children))
    }

    fn primary(&mut self) -> PResult<Node> {
        let Some(tok) = self.peek().cloned() else {
            return self.expected("expression");
        };
        let lit = |l: Lit| Node::leaf(NodeKind::Literal, tok.span, Payload::Literal(l));
        match &tok.kind {
            TokenKind::Ident(n) => {
                self.pos += 1;
                if n == "undefined" {
                    return Ok(lit(Lit::Undefined));
                }
                Ok(Node::leaf(NodeKind::Identifier, tok.span, Payload::Name(n.clone())))
            }
            TokenKind::Number(v) => {
                self.pos += 1;
                Ok(lit(Lit::Number(*v)))
            }
            TokenKind::Str(s) => {
                self.pos += 1;
                Ok(lit(Lit::String(s.clone())))
            }
            TokenKind::Regex { pattern, flags } => {
                self.pos += 1;
                Ok(lit(Lit::Regex { pattern: pattern.clone(), flags: flags.clone() }))
            }
            TokenKind::Template { quasis, exprs } => {
                self.pos += 1;
                let mut children = Vec::new();
                for (src, origin) in exprs {
                    let toks = tokenize_at(src, *origin)?;
                    let mut sub = Parser::new(toks);
                    let e = sub.expression()?;
                    if !sub.at_end() {
                        return sub.expected("`}` closing template substitution");
                    }
                    children.push(e);
                }
                Ok(Node::new(
                    NodeKind::TemplateLiteral,
                    tok.span,
                    Payload::Template { quasis: quasis.clone() },
                    children,
                ))
            }
            TokenKind::Keyword("this") => {
                self.pos += 1;
                Ok(Node::leaf(NodeKind::Identifier, tok.span, Payload::Name("this".into())))
            }
            TokenKind::Keyword("null") => {
                self.pos += 1;
                Ok(lit(Lit::Null))
            }
            TokenKind::Keyword("true") | TokenKind::Keyword("false") => {
                self.pos += 1;
                Ok(lit(Lit::Bool(tok.is_keyword("true"))))
            }
            TokenKind::Keyword("function") => self.function(false),
            TokenKind::Keyword("class") => unsupported("class", tok.span),
            TokenKind::Keyword("super") => unsupported("super", tok.span),
            TokenKind::Keyword("import") => unsupported("module syntax", tok.span),
            TokenKind::Punct("(") => {
                self.pos += 1;
                let saved = self.no_in;
                self.no_in = false;
                let e = self.expression()?;
                self.no_in = saved;
                self.expect_punct(")")?;
                Ok(e)
            }
            TokenKind::Punct("[") => self.array_literal(),
            TokenKind::Punct("{") => self.object_literal(),
            _ => self.expected("expression"),
        }
    }

    fn array_literal(&mut self) -> PResult<Node> {
        let open = self.expect_punct("[")?;
        let mut elems = Vec::new();
        while !self.at_punct("]") {
            if self.at_punct(",") {
                return unsupported("array hole", self.here_span());
            }
            if self.at_punct("...") {
                return unsupported("spread", self.here_span());
            }
            elems.push(self.assignment()?);
            if !self.eat_punct(",") {
                break;
            }
        }
        let close = self.expect_punct("]")?;
        Ok(Node::new(NodeKind::ArrayLiteral, open.to(close), Payload::None, elems))
    }

    fn object_literal(&mut self) -> PResult<Node> {
        let open = self.expect_punct("{")?;
        let mut props = Vec::new();
        while !self.at_punct("}") {
            let key_tok = self.advance()?;
            let key = match &key_tok.kind {
                TokenKind::Ident(n) => n.clone(),
                TokenKind::Keyword(k) => k.to_string(),
                TokenKind::Str(s) => s.clone(),
                TokenKind::Number(n) => super::render::number_to_key(*n),
                TokenKind::Punct("[") => return unsupported("computed property key", key_tok.span),
                TokenKind::Punct("...") => return unsupported("spread", key_tok.span),
                TokenKind::Punct("*") => return unsupported("generator", key_tok.span),
                _ => {
                    self.pos -= 1;
                    return self.expected("property key");
                }
            };
            let is_ident = matches!(key_tok.kind, TokenKind::Ident(_));
            if is_ident && (key == "get" || key == "set" || key == "async") {
                let accessor = match self.peek() {
                    Some(t) => !(t.is_punct(":") || t.is_punct("(") || t.is_punct(",") || t.is_punct("}")),
                    None => false,
                };
                if accessor {
                    let what = if key == "async" { "async function" } else { "accessor property" };
                    return unsupported(what, key_tok.span);
                }
            }
            let value = if self.eat_punct(":") {
                self.assignment()?
            } else if self.at_punct("(") {
                let params = self.params()?;
                let body = self.block()?;
                let span = key_tok.span.to(body.span);
                let info = FunctionInfo { name: None, params, arrow: false, expression_body: false };
                Node::new(NodeKind::FunctionLiteral, span, Payload::Function(info), vec![body])
            } else if is_ident {
                Node::leaf(NodeKind::Identifier, key_tok.span, Payload::Name(key.clone()))
            } else {
                return self.expected("`:`");
            };
            let span = key_tok.span.to(value.span);
            props.push(Node::new(NodeKind::Property, span, Payload::Name(key), vec![value]));
            if !self.eat_punct(",") {
                break;
            }
        }
        let close = self.expect_punct("}")?;
        Ok(Node::new(NodeKind::ObjectLiteral, open.to(close), Payload::None, props))
    }
}

fn fold_logical(op: Op, mut operands: Vec<Node>) -> Node {
    if operands.len() == 1 {
        return operands.pop().unwrap_or_else(|| unreachable!());
    }
    let span = operands[0].span.to(operands[operands.len() - 1].span);
    let kind = if operands.len() == 2 { NodeKind::BinaryOperation } else { NodeKind::NaryOperation };
    Node::new(kind, span, Payload::Op(op), operands)
}

fn check_update_target(target: &Node) -> PResult<()> {
    match target.kind {
        NodeKind::Identifier | NodeKind::MemberAccess => Ok(()),
        _ => Err(FrontendError::Parse {
            span: target.span,
            expected: "assignable operand for `++`/`--`".into(),
            found: target.kind.to_string(),
        }),
    }
}
