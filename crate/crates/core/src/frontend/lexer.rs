use super::ast::Span;
use super::error::FrontendError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Keyword(&'static str),
    Number(f64),
    Str(String),
    Regex {
        pattern: String,
        flags: String,
    },
    /// Untagged template: cooked quasis interleaved with raw embedded sources.
    Template {
        quasis: Vec<String>,
        exprs: Vec<(String, Pos)>,
    },
    Punct(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
    /// A line terminator (or a comment containing one) precedes this token.
    pub newline_before: bool,
}

impl Token {
    pub fn is_punct(&self, p: &str) -> bool {
        matches!(&self.kind, TokenKind::Punct(q) if *q == p)
    }

    pub fn is_keyword(&self, k: &str) -> bool {
        matches!(&self.kind, TokenKind::Keyword(q) if *q == k)
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            TokenKind::Ident(n) => format!("identifier `{n}`"),
            TokenKind::Keyword(k) => format!("`{k}`"),
            TokenKind::Number(n) => format!("number {n}"),
            TokenKind::Str(_) => "string literal".into(),
            TokenKind::Regex { .. } => "regular expression".into(),
            TokenKind::Template { .. } => "template literal".into(),
            TokenKind::Punct(p) => format!("`{p}`"),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "var",
    "let",
    "const",
    "function",
    "return",
    "if",
    "else",
    "for",
    "while",
    "do",
    "switch",
    "case",
    "default",
    "break",
    "continue",
    "throw",
    "try",
    "catch",
    "finally",
    "new",
    "typeof",
    "void",
    "delete",
    "in",
    "instanceof",
    "this",
    "null",
    "true",
    "false",
    "class",
    "extends",
    "import",
    "export",
    "yield",
    "await",
    "with",
    "debugger",
    "super",
];

// Longest first so maximal munch works with a linear scan.
const PUNCTUATORS: &[&str] = &[
    ">>>=", "...", "===", "!==", "**=", "<<=", ">>=", ">>>", "&&=", "||=", "??=", "=>", "==", "!=", "<=", ">=", "&&",
    "||", "??", "?.", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "**", "<<", ">>", "{", "}", "(", ")",
    "[", "]", ";", ",", "<", ">", "+", "-", "*", "/", "%", "&", "|", "^", "!", "~", "?", ":", "=", ".",
];

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    col: u32,
    tokens: Vec<Token>,
}

/// Split source text into tokens. Comments are dropped; line numbering still counts them.
pub fn tokenize(src: &str) -> Result<Vec<Token>, FrontendError> {
    tokenize_at(src, Pos { line: 1, col: 1 })
}

pub(crate) fn tokenize_at(src: &str, origin: Pos) -> Result<Vec<Token>, FrontendError> {
    let mut lx = Lexer { chars: src.chars().collect(), pos: 0, line: origin.line, col: origin.col, tokens: Vec::new() };
    lx.run()?;
    Ok(lx.tokens)
}

fn is_id_start(c: char) -> bool {
    c == '$' || c == '_' || c.is_alphabetic()
}

fn is_id_part(c: char) -> bool {
    is_id_start(c) || c.is_alphanumeric() || c == '\u{200c}' || c == '\u{200d}'
}

fn is_line_terminator(c: char) -> bool {
    matches!(c, '\n' | '\r' | '\u{2028}' | '\u{2029}')
}

impl Lexer {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.chars.get(self.pos + n).copied()
    }

    fn here(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\r' && self.peek() == Some('\n') {
            self.col += 1;
        } else if is_line_terminator(c) {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    /// Span from `start` to the last consumed character (inclusive end column).
    fn span_from(&self, start: Pos) -> Span {
        let (end_line, end_col) = if self.col > 1 { (self.line, self.col - 1) } else { (self.line, 1) };
        let (end_line, end_col) =
            if (end_line, end_col) < (start.line, start.col) { (start.line, start.col) } else { (end_line, end_col) };
        Span::new(start.line, start.col, end_line, end_col)
    }

    fn regex_allowed(&self) -> bool {
        match self.tokens.last() {
            None => true,
            Some(t) => match &t.kind {
                TokenKind::Ident(_) | TokenKind::Number(_) | TokenKind::Str(_) => false,
                TokenKind::Regex { .. } | TokenKind::Template { .. } => false,
                TokenKind::Keyword(k) => !matches!(*k, "this" | "null" | "true" | "false" | "super"),
                TokenKind::Punct(p) => !matches!(*p, ")" | "]" | "}" | "++" | "--"),
            },
        }
    }

    fn run(&mut self) -> Result<(), FrontendError> {
        let mut newline = false;
        while let Some(c) = self.peek() {
            if is_line_terminator(c) {
                newline = true;
                self.bump();
                continue;
            }
            if c.is_whitespace() || c == '\u{feff}' {
                self.bump();
                continue;
            }
            if c == '/' && self.peek_at(1) == Some('/') {
                while let Some(c) = self.peek() {
                    if is_line_terminator(c) {
                        break;
                    }
                    self.bump();
                }
                continue;
            }
            if c == '/' && self.peek_at(1) == Some('*') {
                let start = self.here();
                self.bump();
                self.bump();
                loop {
                    match self.bump() {
                        None => {
                            return Err(FrontendError::Lex {
                                message: "unterminated block comment".into(),
                                span: self.span_from(start),
                            })
                        }
                        Some('*') if self.peek() == Some('/') => {
                            self.bump();
                            break;
                        }
                        Some(c) if is_line_terminator(c) => newline = true,
                        _ => {}
                    }
                }
                continue;
            }
            let start = self.here();
            let kind = self.token(c)?;
            let span = self.span_from(start);
            self.tokens.push(Token { kind, span, newline_before: newline });
            newline = false;
        }
        Ok(())
    }

    fn token(&mut self, c: char) -> Result<TokenKind, FrontendError> {
        if is_id_start(c) || c == '\\' {
            let mut name = String::new();
            while let Some(c) = self.peek() {
                if is_id_part(c) {
                    name.push(c);
                    self.bump();
                } else {
                    break;
                }
            }
            if let Some(k) = KEYWORDS.iter().find(|k| **k == name) {
                return Ok(TokenKind::Keyword(k));
            }
            if name.is_empty() {
                let start = self.here();
                self.bump();
                return Err(FrontendError::Lex {
                    message: "unicode escapes in identifiers are not supported".into(),
                    span: self.span_from(start),
                });
            }
            return Ok(TokenKind::Ident(name));
        }
        if c.is_ascii_digit() || (c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit())) {
            return self.number();
        }
        if c == '"' || c == '\'' {
            return self.string(c).map(TokenKind::Str);
        }
        if c == '`' {
            return self.template();
        }
        if c == '/' && self.regex_allowed() {
            return self.regex();
        }
        for p in PUNCTUATORS {
            if p.chars().enumerate().all(|(i, pc)| self.peek_at(i) == Some(pc)) {
                // `?.` followed by a digit is a conditional, not optional chaining
                if *p == "?." && self.peek_at(2).is_some_and(|d| d.is_ascii_digit()) {
                    continue;
                }
                for _ in 0..p.len() {
                    self.bump();
                }
                return Ok(TokenKind::Punct(p));
            }
        }
        let start = self.here();
        self.bump();
        Err(FrontendError::Lex { message: format!("unexpected character {c:?}"), span: self.span_from(start) })
    }

    fn number(&mut self) -> Result<TokenKind, FrontendError> {
        let start = self.here();
        let mut text = String::new();
        if self.peek() == Some('0') && matches!(self.peek_at(1), Some('x' | 'X' | 'o' | 'O' | 'b' | 'B')) {
            self.bump();
            let radix = match self.bump() {
                Some('x' | 'X') => 16,
                Some('o' | 'O') => 8,
                _ => 2,
            };
            while let Some(c) = self.peek() {
                if c.is_digit(radix) || c == '_' {
                    if c != '_' {
                        text.push(c);
                    }
                    self.bump();
                } else {
                    break;
                }
            }
            let v = u64::from_str_radix(&text, radix).map_err(|_| FrontendError::Lex {
                message: "malformed numeric literal".into(),
                span: self.span_from(start),
            })?;
            return Ok(TokenKind::Number(v as f64));
        }
        let mut seen_dot = false;
        let mut seen_exp = false;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                text.push(c);
            } else if c == '_' {
            } else if c == '.' && !seen_dot && !seen_exp {
                seen_dot = true;
                text.push(c);
            } else if (c == 'e' || c == 'E') && !seen_exp {
                seen_exp = true;
                text.push('e');
                if matches!(self.peek_at(1), Some('+' | '-')) {
                    self.bump();
                    text.push(self.peek().unwrap_or('+'));
                }
            } else {
                break;
            }
            self.bump();
        }
        if self.peek() == Some('n') {
            self.bump();
            return Err(FrontendError::Unsupported { construct: "bigint literal".into(), span: self.span_from(start) });
        }
        text.parse::<f64>().map(TokenKind::Number).map_err(|_| FrontendError::Lex {
            message: format!("malformed numeric literal `{text}`"),
            span: self.span_from(start),
        })
    }

    fn escape(&mut self, out: &mut String, start: Pos) -> Result<(), FrontendError> {
        let unterminated =
            |lx: &Self| FrontendError::Lex { message: "unterminated string literal".into(), span: lx.span_from(start) };
        let c = self.bump().ok_or_else(|| unterminated(self))?;
        match c {
            'n' => out.push('\n'),
            't' => out.push('\t'),
            'r' => out.push('\r'),
            'b' => out.push('\u{8}'),
            'f' => out.push('\u{c}'),
            'v' => out.push('\u{b}'),
            '0' if !self.peek().is_some_and(|d| d.is_ascii_digit()) => out.push('\0'),
            'x' => {
                let hex: String = (0..2).filter_map(|_| self.bump()).collect();
                let v = u32::from_str_radix(&hex, 16).map_err(|_| FrontendError::Lex {
                    message: "malformed \\x escape".into(),
                    span: self.span_from(start),
                })?;
                out.push(char::from_u32(v).unwrap_or('\u{fffd}'));
            }
            'u' => {
                let hex: String = if self.peek() == Some('{') {
                    self.bump();
                    let mut h = String::new();
                    while let Some(c) = self.bump() {
                        if c == '}' {
                            break;
                        }
                        h.push(c);
                    }
                    h
                } else {
                    (0..4).filter_map(|_| self.bump()).collect()
                };
                let v = u32::from_str_radix(&hex, 16).map_err(|_| FrontendError::Lex {
                    message: "malformed \\u escape".into(),
                    span: self.span_from(start),
                })?;
                // lone surrogates decode to the replacement character
                out.push(char::from_u32(v).unwrap_or('\u{fffd}'));
            }
            '\r' => {
                if self.peek() == Some('\n') {
                    self.bump();
                }
            }
            c if is_line_terminator(c) => {}
            c => out.push(c),
        }
        Ok(())
    }

    fn string(&mut self, quote: char) -> Result<String, FrontendError> {
        let start = self.here();
        self.bump();
        let mut out = String::new();
        loop {
            match self.peek() {
                None => {
                    return Err(FrontendError::Lex {
                        message: "unterminated string literal".into(),
                        span: self.span_from(start),
                    })
                }
                Some(c) if c == quote => {
                    self.bump();
                    return Ok(out);
                }
                Some('\\') => {
                    self.bump();
                    self.escape(&mut out, start)?;
                }
                Some(c) if is_line_terminator(c) => {
                    return Err(FrontendError::Lex {
                        message: "unterminated string literal".into(),
                        span: self.span_from(start),
                    })
                }
                Some(c) => {
                    out.push(c);
                    self.bump();
                }
            }
        }
    }

    fn template(&mut self) -> Result<TokenKind, FrontendError> {
        let start = self.here();
        self.bump();
        let mut quasis = Vec::new();
        let mut exprs = Vec::new();
        let mut cur = String::new();
        let unterminated = |lx: &Self| FrontendError::Lex {
            message: "unterminated template literal".into(),
            span: lx.span_from(start),
        };
        loop {
            match self.peek() {
                None => return Err(unterminated(self)),
                Some('`') => {
                    self.bump();
                    quasis.push(cur);
                    return Ok(TokenKind::Template { quasis, exprs });
                }
                Some('\\') => {
                    self.bump();
                    self.escape(&mut cur, start)?;
                }
                Some('$') if self.peek_at(1) == Some('{') => {
                    self.bump();
                    self.bump();
                    quasis.push(std::mem::take(&mut cur));
                    let origin = self.here();
                    let mut depth = 0usize;
                    let mut src = String::new();
                    loop {
                        let c = self.peek().ok_or_else(|| unterminated(self))?;
                        match c {
                            '}' if depth == 0 => {
                                self.bump();
                                break;
                            }
                            '{' => depth += 1,
                            '}' => depth -= 1,
                            '"' | '\'' | '`' => {
                                // copy nested literals verbatim so braces inside them don't count
                                src.push(c);
                                self.bump();
                                loop {
                                    let d = self.bump().ok_or_else(|| unterminated(self))?;
                                    src.push(d);
                                    if d == '\\' {
                                        if let Some(e) = self.bump() {
                                            src.push(e);
                                        }
                                    } else if d == c {
                                        break;
                                    }
                                }
                                continue;
                            }
                            _ => {}
                        }
                        src.push(c);
                        self.bump();
                    }
                    exprs.push((src, origin));
                }
                Some(c) => {
                    cur.push(c);
                    self.bump();
                }
            }
        }
    }

    fn regex(&mut self) -> Result<TokenKind, FrontendError> {
        let start = self.here();
        self.bump();
        let mut pattern = String::new();
        let mut in_class = false;
        loop {
            let c = self.peek().filter(|c| !is_line_terminator(*c)).ok_or_else(|| FrontendError::Lex {
                message: "unterminated regular expression".into(),
                span: self.span_from(start),
            })?;
            self.bump();
            match c {
                '\\' => {
                    pattern.push(c);
                    if let Some(e) = self.bump() {
                        pattern.push(e);
                    }
                }
                '[' => {
                    in_class = true;
                    pattern.push(c);
                }
                ']' => {
                    in_class = false;
                    pattern.push(c);
                }
                '/' if !in_class => break,
                c => pattern.push(c),
            }
        }
        let mut flags = String::new();
        while let Some(c) = self.peek().filter(|c| c.is_ascii_alphabetic()) {
            flags.push(c);
            self.bump();
        }
        Ok(TokenKind::Regex { pattern, flags })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn minimal_program() {
        use TokenKind::*;
        assert_eq!(
            kinds("if (x) y();"),
            vec![
                Keyword("if"),
                Punct("("),
                Ident("x".into()),
                Punct(")"),
                Ident("y".into()),
                Punct("("),
                Punct(")"),
                Punct(";"),
            ]
        );
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").unwrap().is_empty());
    }

    #[test]
    fn comments_count_lines() {
        let toks = tokenize("/* a\nb */ x // c\n y").unwrap();
        assert_eq!(toks[0].span.start_line, 2);
        assert!(toks[0].newline_before);
        assert_eq!(toks[1].span.start_line, 3);
        assert!(toks[1].newline_before);
    }

    #[test]
    fn regex_versus_division() {
        assert!(matches!(kinds("a / b")[1], TokenKind::Punct("/")));
        assert!(
            matches!(&kinds("x = /ab+c/gi")[2], TokenKind::Regex { pattern, flags } if pattern == "ab+c" && flags == "gi")
        );
        assert!(matches!(&kinds("f(/[/]/)")[2], TokenKind::Regex { pattern, .. } if pattern == "[/]"));
    }

    #[test]
    fn unterminated_string_is_error_with_span() {
        match tokenize("var s = 'abc") {
            Err(FrontendError::Lex { span, .. }) => {
                assert_eq!((span.start_line, span.start_col), (1, 9))
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(tokenize("`abc ${x}"), Err(FrontendError::Lex { .. })));
    }

    #[test]
    fn numbers() {
        assert_eq!(
            kinds("93445e3 0x1F .5 1_000"),
            vec![
                TokenKind::Number(93445000.0),
                TokenKind::Number(31.0),
                TokenKind::Number(0.5),
                TokenKind::Number(1000.0)
            ]
        );
    }

    #[test]
    fn template_parts() {
        match &kinds("`a${b + '}'}c`")[0] {
            TokenKind::Template { quasis, exprs } => {
                assert_eq!(quasis, &vec!["a".to_string(), "c".to_string()]);
                assert_eq!(exprs[0].0, "b + '}'");
                assert_eq!(exprs[0].1, Pos { line: 1, col: 5 });
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn string_escapes() {
        assert_eq!(kinds(r#""a\n\x41B\u{43}""#), vec![TokenKind::Str("a\nABC".into())]);
    }
}
