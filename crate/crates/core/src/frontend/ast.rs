use std::fmt;

use serde::{Deserialize, Serialize};

/// 1-based source region. Columns count characters, not bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Span {
    pub start_line: u32,
    pub start_col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl Span {
    pub fn new(start_line: u32, start_col: u32, end_line: u32, end_col: u32) -> Self {
        Span { start_line, start_col, end_line, end_col }
    }

    /// Smallest span covering both.
    pub fn to(self, other: Span) -> Span {
        let (start_line, start_col) = (self.start_line, self.start_col).min((other.start_line, other.start_col));
        let (end_line, end_col) = (self.end_line, self.end_col).max((other.end_line, other.end_col));
        Span { start_line, start_col, end_line, end_col }
    }

    pub fn contains(&self, inner: &Span) -> bool {
        (self.start_line, self.start_col) <= (inner.start_line, inner.start_col)
            && (inner.end_line, inner.end_col) <= (self.end_line, self.end_col)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}-{}:{}", self.start_line, self.start_col, self.end_line, self.end_col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Program,
    Block,
    VariableDeclaration,
    VariableDeclarator,
    FunctionDeclaration,
    FunctionLiteral,
    IfStatement,
    Conditional,
    SwitchStatement,
    SwitchCase,
    DoWhileStatement,
    WhileStatement,
    ForStatement,
    ForInStatement,
    ForOfStatement,
    TryCatchStatement,
    BinaryOperation,
    UnaryOperation,
    NaryOperation,
    CompareOperation,
    Assignment,
    CompoundAssignment,
    CountOperation,
    Call,
    New,
    MemberAccess,
    Identifier,
    Literal,
    TemplateLiteral,
    ArrayLiteral,
    ObjectLiteral,
    Property,
    Return,
    Break,
    Continue,
    Throw,
    ExpressionStatement,
    EmptyStatement,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        use NodeKind::*;
        match self {
            Program => "Program",
            Block => "Block",
            VariableDeclaration => "VariableDeclaration",
            VariableDeclarator => "VariableDeclarator",
            FunctionDeclaration => "FunctionDeclaration",
            FunctionLiteral => "FunctionLiteral",
            IfStatement => "IfStatement",
            Conditional => "Conditional",
            SwitchStatement => "SwitchStatement",
            SwitchCase => "SwitchCase",
            DoWhileStatement => "DoWhileStatement",
            WhileStatement => "WhileStatement",
            ForStatement => "ForStatement",
            ForInStatement => "ForInStatement",
            ForOfStatement => "ForOfStatement",
            TryCatchStatement => "TryCatchStatement",
            BinaryOperation => "BinaryOperation",
            UnaryOperation => "UnaryOperation",
            NaryOperation => "NaryOperation",
            CompareOperation => "CompareOperation",
            Assignment => "Assignment",
            CompoundAssignment => "CompoundAssignment",
            CountOperation => "CountOperation",
            Call => "Call",
            New => "New",
            MemberAccess => "MemberAccess",
            Identifier => "Identifier",
            Literal => "Literal",
            TemplateLiteral => "TemplateLiteral",
            ArrayLiteral => "ArrayLiteral",
            ObjectLiteral => "ObjectLiteral",
            Property => "Property",
            Return => "Return",
            Break => "Break",
            Continue => "Continue",
            Throw => "Throw",
            ExpressionStatement => "ExpressionStatement",
            EmptyStatement => "EmptyStatement",
        }
    }

    pub fn is_statement(self) -> bool {
        use NodeKind::*;
        matches!(
            self,
            Block
                | VariableDeclaration
                | FunctionDeclaration
                | IfStatement
                | SwitchStatement
                | DoWhileStatement
                | WhileStatement
                | ForStatement
                | ForInStatement
                | ForOfStatement
                | TryCatchStatement
                | Return
                | Break
                | Continue
                | Throw
                | ExpressionStatement
                | EmptyStatement
        )
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    // logical
    And,
    Or,
    Nullish,
    // arithmetic / bitwise
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Exp,
    BitAnd,
    BitOr,
    BitXor,
    Shl,
    Shr,
    UShr,
    Comma,
    // comparison
    Eq,
    NotEq,
    StrictEq,
    StrictNotEq,
    Lt,
    Gt,
    LtEq,
    GtEq,
    In,
    InstanceOf,
    // unary
    Not,
    Neg,
    Plus,
    BitNot,
    TypeOf,
    Void,
    Delete,
}

impl Op {
    pub fn symbol(self) -> &'static str {
        use Op::*;
        match self {
            And => "&&",
            Or => "||",
            Nullish => "??",
            Add => "+",
            Sub => "-",
            Mul => "*",
            Div => "/",
            Mod => "%",
            Exp => "**",
            BitAnd => "&",
            BitOr => "|",
            BitXor => "^",
            Shl => "<<",
            Shr => ">>",
            UShr => ">>>",
            Comma => ",",
            Eq => "==",
            NotEq => "!=",
            StrictEq => "===",
            StrictNotEq => "!==",
            Lt => "<",
            Gt => ">",
            LtEq => "<=",
            GtEq => ">=",
            In => "in",
            InstanceOf => "instanceof",
            Not => "!",
            Neg => "-",
            Plus => "+",
            BitNot => "~",
            TypeOf => "typeof",
            Void => "void",
            Delete => "delete",
        }
    }

    pub fn is_logical(self) -> bool {
        matches!(self, Op::And | Op::Or | Op::Nullish)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeclKind {
    Var,
    Let,
    Const,
}

impl DeclKind {
    pub fn keyword(self) -> &'static str {
        match self {
            DeclKind::Var => "var",
            DeclKind::Let => "let",
            DeclKind::Const => "const",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Lit {
    Number(f64),
    String(String),
    Bool(bool),
    Null,
    Undefined,
    /// Kept opaque: pattern source and flags only.
    Regex {
        pattern: String,
        flags: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionInfo {
    pub name: Option<String>,
    pub params: Vec<String>,
    pub arrow: bool,
    /// Arrow with a bare expression body; the single child is that expression.
    pub expression_body: bool,
}

/// Kind-specific data. Child layout per kind is documented on [`Node`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    None,
    Name(String),
    Literal(Lit),
    Op(Op),
    Decl(DeclKind),
    Function(FunctionInfo),
    Count { increment: bool, prefix: bool },
    Member { computed: bool, name: Option<String> },
    For { init: bool, test: bool, update: bool },
    ForBinding { decl: Option<DeclKind>, name: String },
    Try { param: Option<String>, has_catch: bool, has_finally: bool },
    Template { quasis: Vec<String> },
    Case { default: bool },
}

/// Homogeneous syntax tree node.
///
/// Child layouts:
/// - `Program`, `Block`: statements
/// - `VariableDeclaration(Decl)`: declarators; `VariableDeclarator(Name)`: `[init?]`
/// - `FunctionDeclaration` / `FunctionLiteral(Function)`: `[body]` (a `Block`, or an expression for
///   arrows with `expression_body`)
/// - `IfStatement`: `[test, consequent, alternate?]`; `Conditional`: `[test, then, else]`
/// - `SwitchStatement`: `[discriminant, case...]`; `SwitchCase(Case)`: `[test?, statement...]`
/// - `DoWhileStatement`: `[body, test]`; `WhileStatement`: `[test, body]`
/// - `ForStatement(For)`: `[init?, test?, update?, body]`
/// - `ForInStatement` / `ForOfStatement(ForBinding)`: `[iterable, body]`
/// - `TryCatchStatement(Try)`: `[block, handler?, finalizer?]`
/// - `BinaryOperation` / `CompareOperation(Op)`: `[left, right]`; `NaryOperation(Op)`: operands
/// - `UnaryOperation(Op)`: `[operand]`; `CountOperation(Count)`: `[target]`
/// - `Assignment`, `CompoundAssignment(Op)`: `[target, value]`
/// - `Call`, `New`: `[callee, args...]`
/// - `MemberAccess(Member)`: `[object]` or `[object, key]` when computed
/// - `TemplateLiteral(Template)`: embedded expressions
/// - `ArrayLiteral`: elements; `ObjectLiteral`: properties; `Property(Name)`: `[value]`
/// - `Return`: `[argument?]`; `Throw`, `ExpressionStatement`: `[expression]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub span: Span,
    pub payload: Payload,
    pub children: Vec<Node>,
}

impl Node {
    pub fn new(kind: NodeKind, span: Span, payload: Payload, children: Vec<Node>) -> Self {
        Node { kind, span, payload, children }
    }

    pub fn leaf(kind: NodeKind, span: Span, payload: Payload) -> Self {
        Node { kind, span, payload, children: Vec::new() }
    }

    pub fn name(&self) -> Option<&str> {
        match &self.payload {
            Payload::Name(n) => Some(n),
            Payload::Member { name: Some(n), .. } => Some(n),
            Payload::Function(f) => f.name.as_deref(),
            Payload::ForBinding { name, .. } => Some(name),
            _ => None,
        }
    }

    pub fn op(&self) -> Option<Op> {
        match self.payload {
            Payload::Op(op) => Some(op),
            _ => None,
        }
    }

    pub fn literal(&self) -> Option<&Lit> {
        match &self.payload {
            Payload::Literal(l) => Some(l),
            _ => None,
        }
    }

    pub fn function_info(&self) -> Option<&FunctionInfo> {
        match &self.payload {
            Payload::Function(f) => Some(f),
            _ => None,
        }
    }

    /// Structural equality ignoring spans.
    pub fn same_shape(&self, other: &Node) -> bool {
        self.kind == other.kind
            && self.payload == other.payload
            && self.children.len() == other.children.len()
            && self.children.iter().zip(&other.children).all(|(a, b)| a.same_shape(b))
    }

    /// Pre-order traversal, left to right.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Node)) {
        visit(self);
        for c in &self.children {
            c.walk(visit);
        }
    }

    /// First node in pre-order with the given kind and span.
    pub fn find(&self, kind: NodeKind, span: Span) -> Option<&Node> {
        if self.kind == kind && self.span == span {
            return Some(self);
        }
        if !self.span.contains(&span) {
            return None;
        }
        self.children.iter().find_map(|c| c.find(kind, span))
    }
}

/// Count of all nodes in the subtree, root included.
pub fn node_count(root: &Node) -> usize {
    1 + root.children.iter().map(node_count).sum::<usize>()
}
