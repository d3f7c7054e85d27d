use std::collections::{HashMap, VecDeque};
use std::rc::Rc;

use indexmap::IndexMap;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScopeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FuncId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Undefined,
    Null,
    Bool(bool),
    Num(f64),
    Str(Rc<str>),
    Obj(ObjId),
}

impl Value {
    pub fn str(s: &str) -> Value {
        Value::Str(Rc::from(s))
    }

    pub fn as_obj(&self) -> Option<ObjId> {
        match self {
            Value::Obj(id) => Some(*id),
            _ => None,
        }
    }

    pub fn is_nullish(&self) -> bool {
        matches!(self, Value::Undefined | Value::Null)
    }
}

/// Namespace of a host function; decides dispatch and whether calls are logged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ns {
    Global,
    Builtin,
    String,
    Array,
    Number,
    Function,
    RegExp,
    Date,
    Object,
    Math,
    Json,
    Console,
    Element,
    Document,
    Storage,
    Chrome,
    JQuery,
    JQueryStatic,
    Response,
    Promise,
    ChildProcess,
    Process,
}

impl Ns {
    pub fn prefix(self) -> &'static str {
        match self {
            Ns::Global | Ns::Builtin => "",
            Ns::String => "String",
            Ns::Array => "Array",
            Ns::Number => "Number",
            Ns::Function => "Function",
            Ns::RegExp => "RegExp",
            Ns::Date => "Date",
            Ns::Object => "Object",
            Ns::Math => "Math",
            Ns::Json => "JSON",
            Ns::Console => "console",
            Ns::Element => "Element",
            Ns::Document => "document",
            Ns::Storage => "Storage",
            Ns::Chrome => "chrome",
            Ns::JQuery => "jQuery.fn",
            Ns::JQueryStatic => "$",
            Ns::Response => "Response",
            Ns::Promise => "Promise",
            Ns::ChildProcess => "child_process",
            Ns::Process => "process",
        }
    }

    /// Web-platform and runtime APIs are logged; language built-ins are not.
    pub fn logged(self) -> bool {
        !matches!(
            self,
            Ns::Builtin
                | Ns::String
                | Ns::Array
                | Ns::Number
                | Ns::Function
                | Ns::RegExp
                | Ns::Date
                | Ns::Object
                | Ns::Math
                | Ns::Json
                | Ns::Promise
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HostFn {
    pub ns: Ns,
    pub name: &'static str,
}

impl HostFn {
    pub fn qualified(&self) -> String {
        let p = self.ns.prefix();
        if p.is_empty() || p == self.name {
            self.name.to_string()
        } else {
            format!("{p}.{}", self.name)
        }
    }
}

#[derive(Debug, Clone)]
pub enum ObjKind {
    Plain,
    Array(Vec<Value>),
    Closure {
        func: FuncId,
        env: ScopeId,
    },
    Host {
        f: HostFn,
        this: Option<Value>,
    },
    Bound {
        target: ObjId,
        this: Value,
        args: Vec<Value>,
    },
    /// Opaque stand-in for host surfaces not modeled in detail; property reads and calls yield more stubs.
    Stub(Rc<str>),
    Element {
        tag: Rc<str>,
        children: Vec<ObjId>,
        parent: Option<ObjId>,
    },
    RegExp {
        source: Rc<str>,
        flags: Rc<str>,
    },
    Date(f64),
    Error,
    Storage,
    JQuery {
        elems: Vec<ObjId>,
        selector: Rc<str>,
    },
    Response {
        url: Rc<str>,
        body: Rc<str>,
        status: u16,
    },
    Promise {
        value: Value,
        rejected: bool,
    },
}

#[derive(Debug, Clone)]
pub struct Obj {
    pub kind: ObjKind,
    pub props: IndexMap<Rc<str>, Value>,
    pub proto: Option<ObjId>,
}

impl Obj {
    pub fn new(kind: ObjKind) -> Self {
        Obj { kind, props: IndexMap::new(), proto: None }
    }
}

#[derive(Debug, Clone)]
pub struct Scope {
    pub vars: HashMap<Rc<str>, Value>,
    pub parent: Option<ScopeId>,
    /// `None` for arrow-function and block scopes, which see the enclosing `this`.
    pub this: Option<Value>,
}

#[derive(Debug, Clone)]
pub struct Timer {
    pub id: u64,
    pub callback: Value,
    pub args: Vec<Value>,
    pub delay: f64,
    pub script: crate::tracker::ScriptId,
    pub site: Option<crate::frontend::Span>,
}

/// Everything a forced branch may mutate. Cloned before a forced branch and restored after.
#[derive(Debug, Clone)]
pub struct State {
    pub objs: Vec<Obj>,
    pub scopes: Vec<Scope>,
    pub timers: VecDeque<Timer>,
    pub next_timer: u64,
    pub rng: ChaCha8Rng,
}

impl State {
    pub fn alloc(&mut self, obj: Obj) -> ObjId {
        self.objs.push(obj);
        ObjId(self.objs.len() - 1)
    }

    pub fn obj(&self, id: ObjId) -> &Obj {
        &self.objs[id.0]
    }

    pub fn obj_mut(&mut self, id: ObjId) -> &mut Obj {
        &mut self.objs[id.0]
    }

    pub fn new_scope(&mut self, parent: Option<ScopeId>, this: Option<Value>) -> ScopeId {
        self.scopes.push(Scope { vars: HashMap::new(), parent, this });
        ScopeId(self.scopes.len() - 1)
    }
}

/// JS `Number::toString` for radix 10.
pub fn number_to_string(n: f64) -> String {
    if n.is_nan() {
        return "NaN".into();
    }
    if n.is_infinite() {
        return if n > 0.0 { "Infinity".into() } else { "-Infinity".into() };
    }
    if n == 0.0 {
        return "0".into();
    }
    let abs = n.abs();
    if (1e-6..1e21).contains(&abs) {
        return format!("{n}");
    }
    let s = format!("{n:e}");
    match s.split_once('e') {
        Some((m, e)) if !e.starts_with('-') => format!("{m}e+{e}"),
        _ => s,
    }
}

/// JS `ToNumber` for strings.
pub fn string_to_number(s: &str) -> f64 {
    let t = s.trim();
    if t.is_empty() {
        return 0.0;
    }
    let radix = |p: &str, r: u32| u64::from_str_radix(p, r).map(|v| v as f64).unwrap_or(f64::NAN);
    if let Some(h) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        return radix(h, 16);
    }
    if let Some(b) = t.strip_prefix("0b").or_else(|| t.strip_prefix("0B")) {
        return radix(b, 2);
    }
    if let Some(o) = t.strip_prefix("0o").or_else(|| t.strip_prefix("0O")) {
        return radix(o, 8);
    }
    match t {
        "Infinity" | "+Infinity" => f64::INFINITY,
        "-Infinity" => f64::NEG_INFINITY,
        _ => {
            if t.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-')) {
                t.parse().unwrap_or(f64::NAN)
            } else {
                f64::NAN
            }
        }
    }
}

/// JS `ToInt32`.
pub fn to_int32(n: f64) -> i32 {
    if !n.is_finite() {
        return 0;
    }
    let m = n.trunc().rem_euclid(4294967296.0);
    (if m >= 2147483648.0 { m - 4294967296.0 } else { m }) as i32
}

pub fn to_uint32(n: f64) -> u32 {
    to_int32(n) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(number_to_string(1.0), "1");
        assert_eq!(number_to_string(-0.0), "0");
        assert_eq!(number_to_string(0.1), "0.1");
        assert_eq!(number_to_string(93445000.0), "93445000");
        assert_eq!(number_to_string(1e21), "1e+21");
        assert_eq!(number_to_string(1.5e-7), "1.5e-7");
        assert_eq!(number_to_string(f64::NAN), "NaN");
    }

    #[test]
    fn string_conversion() {
        assert_eq!(string_to_number(" 42 "), 42.0);
        assert_eq!(string_to_number(""), 0.0);
        assert_eq!(string_to_number("0x10"), 16.0);
        assert!(string_to_number("12px").is_nan());
        assert_eq!(string_to_number("1e3"), 1000.0);
    }

    #[test]
    fn int32() {
        assert_eq!(to_int32(4294967297.0), 1);
        assert_eq!(to_int32(-1.0), -1);
        assert_eq!(to_uint32(-1.0), u32::MAX);
        assert_eq!(to_int32(f64::NAN), 0);
    }
}
