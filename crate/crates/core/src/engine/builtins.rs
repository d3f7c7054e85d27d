//! Conversions, property access and the language built-ins.

use std::rc::Rc;

use base64::Engine as _;
use rand::Rng;

use super::interp::{Abort, R};
use super::value::*;
use super::Engine;

/// Fixed clock so runs are reproducible.
pub const NOW_MS: f64 = 1_700_000_000_000.0;

/// Prefix for internal properties; never visible to scripts.
pub(crate) const HIDDEN: char = '\0';
pub(crate) const TAINT: &str = "\0t";

const STRING_METHODS: &[&str] = &[
    "charAt",
    "charCodeAt",
    "codePointAt",
    "indexOf",
    "lastIndexOf",
    "includes",
    "startsWith",
    "endsWith",
    "slice",
    "substring",
    "substr",
    "toUpperCase",
    "toLowerCase",
    "toLocaleUpperCase",
    "toLocaleLowerCase",
    "trim",
    "trimStart",
    "trimEnd",
    "split",
    "replace",
    "replaceAll",
    "match",
    "search",
    "concat",
    "repeat",
    "padStart",
    "padEnd",
    "toString",
    "valueOf",
    "localeCompare",
    "at",
    "normalize",
];
const ARRAY_METHODS: &[&str] = &[
    "push",
    "pop",
    "shift",
    "unshift",
    "slice",
    "splice",
    "concat",
    "join",
    "reverse",
    "indexOf",
    "lastIndexOf",
    "includes",
    "map",
    "filter",
    "forEach",
    "reduce",
    "reduceRight",
    "some",
    "every",
    "find",
    "findIndex",
    "sort",
    "fill",
    "flat",
    "at",
    "toString",
];
const NUMBER_METHODS: &[&str] = &["toString", "toFixed", "valueOf", "toLocaleString"];
const FUNCTION_METHODS: &[&str] = &["call", "apply", "bind", "toString"];
const REGEXP_METHODS: &[&str] = &["test", "exec", "toString"];
const DATE_METHODS: &[&str] = &[
    "getTime",
    "valueOf",
    "getFullYear",
    "getMonth",
    "getDate",
    "getDay",
    "getHours",
    "getMinutes",
    "getSeconds",
    "getMilliseconds",
    "getTimezoneOffset",
    "toISOString",
    "toString",
    "toUTCString",
    "toJSON",
];
const OBJECT_METHODS: &[&str] = &["hasOwnProperty", "toString", "valueOf", "propertyIsEnumerable"];
const PROMISE_METHODS: &[&str] = &["then", "catch", "finally"];

pub(crate) fn pick(table: &'static [&'static str], key: &str) -> Option<&'static str> {
    table.iter().find(|m| **m == key).copied()
}

pub(crate) fn arg(args: &[Value], i: usize) -> Value {
    args.get(i).cloned().unwrap_or(Value::Undefined)
}

pub(crate) fn array_index(key: &str) -> Option<usize> {
    let i: usize = key.parse().ok()?;
    (i.to_string() == key).then_some(i)
}

fn relative_index(n: f64, len: usize) -> usize {
    let len = len as f64;
    let n = if n.is_nan() { 0.0 } else { n.trunc() };
    (if n < 0.0 { (len + n).max(0.0) } else { n.min(len) }) as usize
}

fn percent_encode(s: &str, keep: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-_.!~*'()".contains(&b) || keep.as_bytes().contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            let hex = |b: u8| (b as char).to_digit(16);
            if let (Some(h), Some(l)) = (hex(bytes[i + 1]), hex(bytes[i + 2])) {
                out.push((h * 16 + l) as u8);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

fn parse_int(s: &str, radix: u32) -> f64 {
    let t = s.trim_start();
    let (neg, t) = match t.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (radix, t) = match (radix, t.get(..2)) {
        (0 | 16, Some("0x" | "0X")) => (16, &t[2..]),
        (0, _) => (10, t),
        (r, _) => (r, t),
    };
    if !(2..=36).contains(&radix) {
        return f64::NAN;
    }
    let digits: String = t.chars().take_while(|c| c.is_digit(radix)).collect();
    if digits.is_empty() {
        return f64::NAN;
    }
    let v = digits.chars().fold(0.0, |acc, c| acc * radix as f64 + c.to_digit(radix).unwrap_or(0) as f64);
    if neg {
        -v
    } else {
        v
    }
}

fn parse_float(s: &str) -> f64 {
    let t = s.trim_start();
    if t.starts_with("Infinity") || t.starts_with("+Infinity") {
        return f64::INFINITY;
    }
    if t.starts_with("-Infinity") {
        return f64::NEG_INFINITY;
    }
    let mut best = f64::NAN;
    for (i, c) in t.char_indices() {
        if !(c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-')) {
            break;
        }
        if let Ok(v) = t[..i + 1].parse::<f64>() {
            best = v;
        }
    }
    best
}

fn radix_string(n: f64, radix: u32) -> String {
    if radix == 10 || !n.is_finite() || n.fract() != 0.0 {
        return number_to_string(n);
    }
    let neg = n < 0.0;
    let mut v = n.abs() as u128;
    if v == 0 {
        return "0".into();
    }
    let mut digits = Vec::new();
    while v > 0 {
        digits.push(std::char::from_digit((v % radix as u128) as u32, radix).unwrap_or('0'));
        v /= radix as u128;
    }
    if neg {
        digits.push('-');
    }
    digits.iter().rev().collect()
}

fn translate_regex(source: &str, flags: &str) -> String {
    let mut prefix = String::new();
    for (f, p) in [('i', "i"), ('m', "m"), ('s', "s")] {
        if flags.contains(f) {
            prefix.push_str(p);
        }
    }
    let body = source.replace("\\/", "/");
    if prefix.is_empty() {
        body
    } else {
        format!("(?{prefix}){body}")
    }
}

impl Engine {
    // ---- allocation helpers -----------------------------------------------

    pub(crate) fn new_array(&mut self, items: Vec<Value>) -> Value {
        Value::Obj(self.st.alloc(Obj::new(ObjKind::Array(items))))
    }

    pub(crate) fn new_object(&mut self, pairs: Vec<(&str, Value)>) -> Value {
        let mut o = Obj::new(ObjKind::Plain);
        for (k, v) in pairs {
            o.props.insert(Rc::from(k), v);
        }
        Value::Obj(self.st.alloc(o))
    }

    pub(crate) fn host_value(&mut self, ns: Ns, name: &'static str, this: Option<Value>) -> Value {
        Value::Obj(self.st.alloc(Obj::new(ObjKind::Host { f: HostFn { ns, name }, this })))
    }

    pub(crate) fn new_promise(&mut self, value: Value, rejected: bool) -> Value {
        Value::Obj(self.st.alloc(Obj::new(ObjKind::Promise { value, rejected })))
    }

    pub(crate) fn is_callable(&self, v: &Value) -> bool {
        match v {
            Value::Obj(id) => {
                matches!(self.st.obj(*id).kind, ObjKind::Closure { .. } | ObjKind::Host { .. } | ObjKind::Bound { .. })
            }
            _ => false,
        }
    }

    pub(crate) fn list_items(&self, v: &Value) -> Option<Vec<Value>> {
        match v {
            Value::Obj(id) => match &self.st.obj(*id).kind {
                ObjKind::Array(items) => Some(items.clone()),
                ObjKind::JQuery { elems, .. } => Some(elems.iter().map(|e| Value::Obj(*e)).collect()),
                _ => None,
            },
            _ => None,
        }
    }

    pub(crate) fn visible_keys(&self, id: ObjId) -> Vec<Rc<str>> {
        let o = self.st.obj(id);
        let mut keys: Vec<Rc<str>> = match &o.kind {
            ObjKind::Array(items) => (0..items.len()).map(|i| Rc::from(i.to_string().as_str())).collect(),
            _ => Vec::new(),
        };
        keys.extend(o.props.keys().filter(|k| !k.starts_with(HIDDEN)).cloned());
        keys
    }

    pub(crate) fn taint(&mut self, v: &Value) {
        if let Value::Obj(id) = v {
            self.st.obj_mut(*id).props.insert(Rc::from(TAINT), Value::Bool(true));
        }
    }

    // ---- conversions ------------------------------------------------------

    pub(crate) fn truthy(&self, v: &Value) -> bool {
        match v {
            Value::Undefined | Value::Null => false,
            Value::Bool(b) => *b,
            Value::Num(n) => *n != 0.0 && !n.is_nan(),
            Value::Str(s) => !s.is_empty(),
            Value::Obj(_) => true,
        }
    }

    pub(crate) fn to_primitive(&self, v: &Value) -> Value {
        match v {
            Value::Obj(id) => match &self.st.obj(*id).kind {
                ObjKind::Date(t) => Value::Num(*t),
                _ => Value::Str(Rc::from(self.to_str(v).as_str())),
            },
            other => other.clone(),
        }
    }

    pub(crate) fn to_num(&self, v: &Value) -> f64 {
        match v {
            Value::Undefined => f64::NAN,
            Value::Null => 0.0,
            Value::Bool(b) => *b as u8 as f64,
            Value::Num(n) => *n,
            Value::Str(s) => string_to_number(s),
            Value::Obj(id) => match &self.st.obj(*id).kind {
                ObjKind::Date(t) => *t,
                _ => string_to_number(&self.to_str(v)),
            },
        }
    }

    pub(crate) fn to_str(&self, v: &Value) -> String {
        self.to_str_depth(v, 0)
    }

    fn to_str_depth(&self, v: &Value, depth: usize) -> String {
        match v {
            Value::Undefined => "undefined".into(),
            Value::Null => "null".into(),
            Value::Bool(b) => b.to_string(),
            Value::Num(n) => number_to_string(*n),
            Value::Str(s) => s.to_string(),
            Value::Obj(id) => {
                let o = self.st.obj(*id);
                match &o.kind {
                    ObjKind::Array(items) => {
                        if depth > 8 {
                            return String::new();
                        }
                        items
                            .iter()
                            .map(|i| if i.is_nullish() { String::new() } else { self.to_str_depth(i, depth + 1) })
                            .collect::<Vec<_>>()
                            .join(",")
                    }
                    ObjKind::Closure { func, .. } => crate::frontend::render(&self.funcs[func.0].node),
                    ObjKind::Host { f, .. } => format!("function {}() {{ [native code] }}", f.name),
                    ObjKind::Bound { .. } => "function () { [native code] }".into(),
                    ObjKind::Stub(path) => path.to_string(),
                    ObjKind::Element { tag, .. } => {
                        format!("[object HTML{}Element]", capitalize(tag))
                    }
                    ObjKind::RegExp { source, flags } => format!("/{source}/{flags}"),
                    ObjKind::Date(t) => date_string(*t),
                    ObjKind::Error => {
                        let name = o.props.get("name").map(|v| self.to_str_depth(v, depth + 1)).unwrap_or_default();
                        let msg = o.props.get("message").map(|v| self.to_str_depth(v, depth + 1)).unwrap_or_default();
                        if msg.is_empty() {
                            name
                        } else {
                            format!("{name}: {msg}")
                        }
                    }
                    ObjKind::Storage => "[object Storage]".into(),
                    ObjKind::Response { .. } => "[object Response]".into(),
                    ObjKind::Promise { .. } => "[object Promise]".into(),
                    ObjKind::JQuery { .. } | ObjKind::Plain => "[object Object]".into(),
                }
            }
        }
    }

    /// Short human-readable rendering for logs and events.
    pub(crate) fn summary(&self, v: &Value) -> String {
        match v {
            Value::Obj(id) if matches!(self.st.obj(*id).kind, ObjKind::Closure { .. }) => "[function]".into(),
            _ => self.to_str(v),
        }
    }

    pub(crate) fn type_of(&self, v: &Value) -> &'static str {
        match v {
            Value::Undefined => "undefined",
            Value::Null => "object",
            Value::Bool(_) => "boolean",
            Value::Num(_) => "number",
            Value::Str(_) => "string",
            v if self.is_callable(v) => "function",
            Value::Obj(_) => "object",
        }
    }

    pub(crate) fn strict_eq(&self, a: &Value, b: &Value) -> bool {
        match (a, b) {
            (Value::Num(x), Value::Num(y)) => x == y,
            _ => a == b,
        }
    }

    pub(crate) fn loose_eq(&self, a: &Value, b: &Value) -> bool {
        match (a, b) {
            (x, y) if x.is_nullish() && y.is_nullish() => true,
            (x, y) if x.is_nullish() || y.is_nullish() => false,
            (Value::Obj(_), Value::Obj(_)) => a == b,
            (Value::Str(x), Value::Str(y)) => x == y,
            (Value::Obj(_), _) => {
                let p = self.to_primitive(a);
                self.loose_eq(&p, b)
            }
            (_, Value::Obj(_)) => {
                let p = self.to_primitive(b);
                self.loose_eq(a, &p)
            }
            _ => self.to_num(a) == self.to_num(b),
        }
    }

    // ---- properties -------------------------------------------------------

    fn own_or_proto(&self, id: ObjId, key: &str) -> Option<Value> {
        let mut cur = Some(id);
        let mut hops = 0;
        while let Some(c) = cur {
            let o = self.st.obj(c);
            if let Some(v) = o.props.get(key) {
                return Some(v.clone());
            }
            cur = o.proto;
            hops += 1;
            if hops > 64 {
                break;
            }
        }
        None
    }

    pub(crate) fn has_prop(&self, v: &Value, key: &str) -> bool {
        let Value::Obj(id) = v else { return false };
        if self.own_or_proto(*id, key).is_some() {
            return true;
        }
        match &self.st.obj(*id).kind {
            ObjKind::Array(items) => key == "length" || array_index(key).is_some_and(|i| i < items.len()),
            _ => false,
        }
    }

    pub(crate) fn instance_of(&mut self, v: &Value, ctor: &Value) -> bool {
        let (Value::Obj(id), Value::Obj(c)) = (v, ctor) else {
            return false;
        };
        match self.st.obj(*c).kind.clone() {
            ObjKind::Closure { .. } => {
                let proto = self.prototype_of_fn(*c);
                let mut cur = self.st.obj(*id).proto;
                while let Some(p) = cur {
                    if p == proto {
                        return true;
                    }
                    cur = self.st.obj(p).proto;
                }
                false
            }
            ObjKind::Host { f, .. } => {
                let k = &self.st.obj(*id).kind;
                match f.name {
                    "Object" => true,
                    "Array" => matches!(k, ObjKind::Array(_)),
                    "Error" => matches!(k, ObjKind::Error),
                    "TypeError" | "RangeError" | "SyntaxError" | "ReferenceError" => {
                        matches!(k, ObjKind::Error)
                            && self.st.obj(*id).props.get("name").is_some_and(|n| self.to_str(n) == f.name)
                    }
                    "RegExp" => matches!(k, ObjKind::RegExp { .. }),
                    "Date" => matches!(k, ObjKind::Date(_)),
                    "Promise" => matches!(k, ObjKind::Promise { .. }),
                    "Function" => self.is_callable(v),
                    _ => false,
                }
            }
            _ => false,
        }
    }

    fn method_of(&self, recv: &Value, key: &str) -> Option<HostFn> {
        let found = |ns, table| pick(table, key).map(|name| HostFn { ns, name });
        match recv {
            Value::Str(_) => found(Ns::String, STRING_METHODS),
            Value::Num(_) | Value::Bool(_) => found(Ns::Number, NUMBER_METHODS),
            Value::Obj(id) => {
                let specific = match &self.st.obj(*id).kind {
                    ObjKind::Array(_) => found(Ns::Array, ARRAY_METHODS),
                    ObjKind::Closure { .. } | ObjKind::Host { .. } | ObjKind::Bound { .. } => {
                        found(Ns::Function, FUNCTION_METHODS)
                    }
                    ObjKind::RegExp { .. } => found(Ns::RegExp, REGEXP_METHODS),
                    ObjKind::Date(_) => found(Ns::Date, DATE_METHODS),
                    ObjKind::Promise { .. } => found(Ns::Promise, PROMISE_METHODS),
                    _ => self.web_method_of(*id, key),
                };
                specific.or_else(|| found(Ns::Object, OBJECT_METHODS))
            }
            _ => None,
        }
    }

    pub(crate) fn get_prop(&mut self, recv: &Value, key: &str) -> R<Value> {
        match recv {
            Value::Undefined | Value::Null => {
                let what = self.to_str(recv);
                return self.throw_error("TypeError", &format!("Cannot read properties of {what} (reading '{key}')"));
            }
            Value::Str(s) => {
                if key == "length" {
                    return Ok(Value::Num(s.chars().count() as f64));
                }
                if let Some(i) = array_index(key) {
                    return Ok(s.chars().nth(i).map(|c| Value::str(&c.to_string())).unwrap_or(Value::Undefined));
                }
            }
            Value::Obj(id) => {
                if let Some(v) = self.own_or_proto(*id, key) {
                    return Ok(v);
                }
                if let Some(v) = self.computed_prop(*id, key)? {
                    return Ok(v);
                }
            }
            _ => {}
        }
        match self.method_of(recv, key) {
            Some(f) => Ok(self.host_value(f.ns, f.name, Some(recv.clone()))),
            None => Ok(Value::Undefined),
        }
    }

    /// Properties derived from an object's kind rather than stored on it.
    fn computed_prop(&mut self, id: ObjId, key: &str) -> R<Option<Value>> {
        let kind = self.st.obj(id).kind.clone();
        Ok(match kind {
            ObjKind::Array(items) => match key {
                "length" => Some(Value::Num(items.len() as f64)),
                _ => array_index(key).map(|i| items.get(i).cloned().unwrap_or(Value::Undefined)),
            },
            ObjKind::Closure { func, .. } => match key {
                "prototype" => Some(Value::Obj(self.prototype_of_fn(id))),
                "name" => Some(Value::str(
                    self.funcs[func.0].node.function_info().and_then(|i| i.name.as_deref()).unwrap_or(""),
                )),
                "length" => Some(Value::Num(
                    self.funcs[func.0].node.function_info().map(|i| i.params.len()).unwrap_or(0) as f64,
                )),
                _ => None,
            },
            ObjKind::Host { f, .. } => match key {
                "name" => Some(Value::str(f.name)),
                "prototype" => Some(Value::Obj(self.prototype_of_fn(id))),
                _ => None,
            },
            ObjKind::RegExp { source, flags } => match key {
                "source" => Some(Value::Str(source)),
                "flags" => Some(Value::Str(flags.clone())),
                "global" => Some(Value::Bool(flags.contains('g'))),
                "lastIndex" => Some(Value::Num(0.0)),
                _ => None,
            },
            ObjKind::Stub(path) => Some(self.stub_child(id, &path, key)),
            _ => self.web_prop(id, key)?,
        })
    }

    pub(crate) fn set_prop(&mut self, recv: &Value, key: &str, v: Value) -> R<()> {
        let id = match recv {
            Value::Undefined | Value::Null => {
                let what = self.to_str(recv);
                return self.throw_error("TypeError", &format!("Cannot set properties of {what} (setting '{key}')"));
            }
            Value::Obj(id) => *id,
            _ => return Ok(()),
        };
        if self.set_web_prop(id, key, &v)? {
            return Ok(());
        }
        let o = self.st.obj_mut(id);
        if let ObjKind::Array(items) = &mut o.kind {
            if let Some(i) = array_index(key) {
                if i >= items.len() {
                    if i > items.len() + 1_000_000 {
                        return Ok(());
                    }
                    items.resize(i + 1, Value::Undefined);
                }
                items[i] = v;
                return Ok(());
            }
            if key == "length" {
                let n = match &v {
                    Value::Num(n) if *n >= 0.0 && *n <= 1e6 => *n as usize,
                    _ => return Ok(()),
                };
                items.resize(n, Value::Undefined);
                return Ok(());
            }
        }
        o.props.insert(Rc::from(key), v);
        Ok(())
    }

    /// `recv[key](...args)` without allocating a bound function for built-in methods.
    pub(crate) fn call_method(&mut self, recv: &Value, key: &str, args: Vec<Value>) -> R<Value> {
        if let Value::Obj(id) = recv {
            if let Some(f) = self.own_or_proto(*id, key) {
                return self.call_value(&f, recv.clone(), args);
            }
            if let ObjKind::Stub(path) = &self.st.obj(*id).kind {
                let path = path.clone();
                let child = self.stub_child(*id, &path, key);
                return self.call_value(&child, recv.clone(), args);
            }
            if let Some(v) = self.computed_prop(*id, key)? {
                return self.call_value(&v, recv.clone(), args);
            }
        }
        if recv.is_nullish() {
            self.get_prop(recv, key)?;
        }
        match self.method_of(recv, key) {
            Some(f) => self.call_host(f, recv.clone(), args),
            None => {
                let what = self.summary(recv);
                let shown: String = what.chars().take(40).collect();
                self.throw_error("TypeError", &format!("{shown}.{key} is not a function"))
            }
        }
    }

    // ---- host dispatch ----------------------------------------------------

    pub(crate) fn log_api(&mut self, name: String, args: &[Value]) {
        let rendered: Vec<String> = args.iter().map(|a| self.summary(a)).collect();
        let args = crate::tracker::cap_summary(&rendered.join(", "));
        self.activity.push(crate::tracker::Activity::Api(crate::tracker::ApiCallRecord {
            script: self.cur,
            name,
            args,
            span: self.site,
        }));
    }

    pub(crate) fn call_host(&mut self, f: HostFn, this: Value, args: Vec<Value>) -> R<Value> {
        if f.ns.logged() {
            self.log_api(f.qualified(), &args);
        }
        match f.ns {
            Ns::String => self.string_method(f.name, &this, args),
            Ns::Array => self.array_method(f.name, &this, args),
            Ns::Number => self.number_method(f.name, &this, &args),
            Ns::Function => self.function_method(f.name, &this, args),
            Ns::RegExp => self.regexp_method(f.name, &this, &args),
            Ns::Date => Ok(self.date_method(f.name, &this)),
            Ns::Object => self.object_method(f.name, &this, &args),
            Ns::Math => Ok(self.math(f.name, &args)),
            Ns::Json => self.json(f.name, &args),
            Ns::Promise => self.promise_method(f.name, &this, args),
            Ns::Builtin => self.builtin(f.name, args),
            _ => self.call_web(f, this, args),
        }
    }

    pub(crate) fn construct_host(&mut self, f: HostFn, args: Vec<Value>) -> R<Value> {
        match (f.ns, f.name) {
            (Ns::Builtin, "Date") => {
                let t = match args.first() {
                    None => NOW_MS,
                    Some(Value::Str(s)) => {
                        chrono::DateTime::parse_from_rfc3339(s).map(|d| d.timestamp_millis() as f64).unwrap_or(f64::NAN)
                    }
                    Some(v) => self.to_num(v),
                };
                Ok(Value::Obj(self.st.alloc(Obj::new(ObjKind::Date(t)))))
            }
            (Ns::Builtin, "Object") => Ok(self.new_object(Vec::new())),
            (Ns::Builtin, "Promise") => {
                let exec = arg(&args, 0);
                let p = self.new_promise(Value::Undefined, false);
                let pid = p.as_obj().unwrap_or(ObjId(0));
                let resolve = self.host_value(Ns::Promise, "resolve", Some(p.clone()));
                let reject = self.host_value(Ns::Promise, "reject", Some(p.clone()));
                if let Err(Abort::Throw(e)) = self.call_value(&exec, Value::Undefined, vec![resolve, reject]) {
                    self.st.obj_mut(pid).kind = ObjKind::Promise { value: e, rejected: true };
                }
                Ok(p)
            }
            _ => self.call_host(f, Value::Undefined, args),
        }
    }

    // ---- global functions and constructors --------------------------------

    fn builtin(&mut self, name: &str, args: Vec<Value>) -> R<Value> {
        let a0 = arg(&args, 0);
        Ok(match name {
            "parseInt" => {
                let radix = match args.get(1) {
                    Some(r) if !r.is_nullish() => self.to_num(r) as u32,
                    _ => 0,
                };
                Value::Num(parse_int(&self.to_str(&a0), radix))
            }
            "parseFloat" | "Number.parseFloat" => Value::Num(parse_float(&self.to_str(&a0))),
            "Number.parseInt" => Value::Num(parse_int(&self.to_str(&a0), 0)),
            "isNaN" => Value::Bool(self.to_num(&a0).is_nan()),
            "isFinite" => Value::Bool(self.to_num(&a0).is_finite()),
            "Number.isNaN" => Value::Bool(matches!(a0, Value::Num(n) if n.is_nan())),
            "Number.isInteger" => Value::Bool(matches!(a0, Value::Num(n) if n.is_finite() && n.fract() == 0.0)),
            "String" => Value::str(&if args.is_empty() { String::new() } else { self.to_str(&a0) }),
            "Number" => Value::Num(if args.is_empty() { 0.0 } else { self.to_num(&a0) }),
            "Boolean" => Value::Bool(self.truthy(&a0)),
            "Symbol" => Value::str(&format!("Symbol({})", self.to_str(&a0))),
            "Object" => match a0 {
                Value::Obj(_) => a0,
                _ => self.new_object(Vec::new()),
            },
            "Array" => match (&a0, args.len()) {
                (Value::Num(n), 1) => self.new_array(vec![Value::Undefined; (*n as usize).min(1_000_000)]),
                _ => self.new_array(args),
            },
            "Error" | "TypeError" | "RangeError" | "SyntaxError" | "ReferenceError" => {
                let msg = if a0.is_nullish() { String::new() } else { self.to_str(&a0) };
                self.make_error(name, &msg)
            }
            "RegExp" => {
                let (source, flags) = match &a0 {
                    Value::Obj(id) => match &self.st.obj(*id).kind {
                        ObjKind::RegExp { source, flags } => (source.to_string(), flags.to_string()),
                        _ => (self.to_str(&a0), String::new()),
                    },
                    _ => (self.to_str(&a0), String::new()),
                };
                let flags = match args.get(1) {
                    Some(f) if !f.is_nullish() => self.to_str(f),
                    _ => flags,
                };
                let o =
                    Obj::new(ObjKind::RegExp { source: Rc::from(source.as_str()), flags: Rc::from(flags.as_str()) });
                Value::Obj(self.st.alloc(o))
            }
            "Date" => Value::str(&date_string(NOW_MS)),
            "Date.now" => Value::Num(NOW_MS),
            "Promise" => self.new_promise(Value::Undefined, false),
            "encodeURIComponent" | "escape" => Value::str(&percent_encode(&self.to_str(&a0), "")),
            "encodeURI" => Value::str(&percent_encode(&self.to_str(&a0), ";,/?:@&=+$#")),
            "decodeURIComponent" | "decodeURI" | "unescape" => Value::str(&percent_decode(&self.to_str(&a0))),
            "Object.keys" | "Object.values" | "Object.entries" | "Object.getOwnPropertyNames" => {
                let Value::Obj(id) = a0 else {
                    return Ok(self.new_array(Vec::new()));
                };
                let keys = self.visible_keys(id);
                let mut out = Vec::with_capacity(keys.len());
                for k in keys {
                    let v = self.get_prop(&a0, &k)?;
                    out.push(match name {
                        "Object.values" => v,
                        "Object.entries" => self.new_array(vec![Value::Str(k), v]),
                        _ => Value::Str(k),
                    });
                }
                self.new_array(out)
            }
            "Object.assign" => {
                for src in args.iter().skip(1) {
                    if let Value::Obj(sid) = src {
                        for k in self.visible_keys(*sid) {
                            let v = self.get_prop(src, &k)?;
                            self.set_prop(&a0, &k, v)?;
                        }
                    }
                }
                a0
            }
            "Object.create" => {
                let mut o = Obj::new(ObjKind::Plain);
                o.proto = a0.as_obj();
                Value::Obj(self.st.alloc(o))
            }
            "Object.defineProperty" => {
                let desc = arg(&args, 2);
                let key = self.to_str(&arg(&args, 1));
                if self.has_prop(&desc, "value") {
                    let v = self.get_prop(&desc, "value")?;
                    self.set_prop(&a0, &key, v)?;
                }
                a0
            }
            "Object.getPrototypeOf" => match a0 {
                Value::Obj(id) => self.st.obj(id).proto.map(Value::Obj).unwrap_or(Value::Null),
                _ => Value::Null,
            },
            "Object.freeze" | "Object.seal" => a0,
            "Array.isArray" => {
                Value::Bool(matches!(&a0, Value::Obj(id) if matches!(self.st.obj(*id).kind, ObjKind::Array(_))))
            }
            "Array.from" => {
                let items = match &a0 {
                    Value::Str(s) => s.chars().map(|c| Value::str(&c.to_string())).collect(),
                    v => match self.list_items(v) {
                        Some(items) => items,
                        None => {
                            let n = self.get_prop(v, "length").map(|l| self.to_num(&l)).unwrap_or(0.0);
                            let n = if n.is_finite() && n > 0.0 { (n as usize).min(100_000) } else { 0 };
                            let mut out = Vec::with_capacity(n);
                            for i in 0..n {
                                out.push(self.get_prop(v, &i.to_string())?);
                            }
                            out
                        }
                    },
                };
                let f = arg(&args, 1);
                if self.is_callable(&f) {
                    let mut out = Vec::with_capacity(items.len());
                    for (i, it) in items.into_iter().enumerate() {
                        out.push(self.call_value(&f, Value::Undefined, vec![it, Value::Num(i as f64)])?);
                    }
                    self.new_array(out)
                } else {
                    self.new_array(items)
                }
            }
            "Array.of" => self.new_array(args),
            "String.fromCharCode" => {
                let s: String =
                    args.iter().filter_map(|a| char::from_u32(to_uint32(self.to_num(a)) & 0xFFFF)).collect();
                Value::str(&s)
            }
            "Promise.resolve" => match a0 {
                Value::Obj(id) if matches!(self.st.obj(id).kind, ObjKind::Promise { .. }) => a0,
                v => self.new_promise(v, false),
            },
            "Promise.reject" => self.new_promise(a0, true),
            "Promise.all" | "Promise.allSettled" | "Promise.race" => {
                let items = self.list_items(&a0).unwrap_or_default();
                let mut out = Vec::new();
                for it in items {
                    match &it {
                        Value::Obj(id) => match &self.st.obj(*id).kind {
                            ObjKind::Promise { value, rejected: true } => {
                                return Ok(self.new_promise(value.clone(), true))
                            }
                            ObjKind::Promise { value, .. } => out.push(value.clone()),
                            _ => out.push(it.clone()),
                        },
                        _ => out.push(it.clone()),
                    }
                }
                if name == "Promise.race" {
                    let first = out.into_iter().next().unwrap_or(Value::Undefined);
                    self.new_promise(first, false)
                } else {
                    let arr = self.new_array(out);
                    self.new_promise(arr, false)
                }
            }
            _ => Value::Undefined,
        })
    }

    fn math(&mut self, name: &str, args: &[Value]) -> Value {
        let n = |i: usize| args.get(i).map(|v| self.to_num(v)).unwrap_or(f64::NAN);
        Value::Num(match name {
            "random" => self.st.rng.gen::<f64>(),
            "floor" => n(0).floor(),
            "ceil" => n(0).ceil(),
            "round" => (n(0) + 0.5).floor(),
            "abs" => n(0).abs(),
            "trunc" => n(0).trunc(),
            "sign" => {
                let x = n(0);
                if x == 0.0 || x.is_nan() {
                    x
                } else {
                    x.signum()
                }
            }
            "sqrt" => n(0).sqrt(),
            "pow" => n(0).powf(n(1)),
            "log" => n(0).ln(),
            "exp" => n(0).exp(),
            "sin" => n(0).sin(),
            "cos" => n(0).cos(),
            "max" => args.iter().map(|v| self.to_num(v)).fold(f64::NEG_INFINITY, |a, b| {
                if a.is_nan() || b.is_nan() {
                    f64::NAN
                } else {
                    a.max(b)
                }
            }),
            "min" => args.iter().map(|v| self.to_num(v)).fold(f64::INFINITY, |a, b| {
                if a.is_nan() || b.is_nan() {
                    f64::NAN
                } else {
                    a.min(b)
                }
            }),
            _ => f64::NAN,
        })
    }

    // ---- JSON -------------------------------------------------------------

    pub(crate) fn value_from_json(&mut self, j: &serde_json::Value) -> Value {
        match j {
            serde_json::Value::Null => Value::Null,
            serde_json::Value::Bool(b) => Value::Bool(*b),
            serde_json::Value::Number(n) => Value::Num(n.as_f64().unwrap_or(f64::NAN)),
            serde_json::Value::String(s) => Value::str(s),
            serde_json::Value::Array(items) => {
                let vals = items.iter().map(|i| self.value_from_json(i)).collect();
                self.new_array(vals)
            }
            serde_json::Value::Object(map) => {
                let id = self.st.alloc(Obj::new(ObjKind::Plain));
                for (k, v) in map {
                    let v = self.value_from_json(v);
                    self.st.obj_mut(id).props.insert(Rc::from(k.as_str()), v);
                }
                Value::Obj(id)
            }
        }
    }

    pub(crate) fn to_json(&self, v: &Value, seen: &mut Vec<ObjId>) -> Option<serde_json::Value> {
        use serde_json::Value as J;
        Some(match v {
            Value::Undefined => return None,
            Value::Null => J::Null,
            Value::Bool(b) => J::Bool(*b),
            Value::Num(n) if !n.is_finite() => J::Null,
            Value::Num(n) if n.fract() == 0.0 && n.abs() < 9e15 => J::from(*n as i64),
            Value::Num(n) => serde_json::Number::from_f64(*n).map(J::Number).unwrap_or(J::Null),
            Value::Str(s) => J::String(s.to_string()),
            Value::Obj(id) => {
                if seen.contains(id) || seen.len() > 64 || self.is_callable(v) {
                    return None;
                }
                seen.push(*id);
                let o = self.st.obj(*id);
                let out = match &o.kind {
                    ObjKind::Array(items) => {
                        J::Array(items.iter().map(|i| self.to_json(i, seen).unwrap_or(J::Null)).collect())
                    }
                    ObjKind::Date(t) => J::String(iso_string(*t)),
                    ObjKind::Stub(p) => J::String(p.to_string()),
                    _ => {
                        let mut map = serde_json::Map::new();
                        for (k, val) in &o.props {
                            if k.starts_with(HIDDEN) {
                                continue;
                            }
                            if let Some(j) = self.to_json(val, seen) {
                                map.insert(k.to_string(), j);
                            }
                        }
                        J::Object(map)
                    }
                };
                seen.pop();
                out
            }
        })
    }

    fn json(&mut self, name: &str, args: &[Value]) -> R<Value> {
        let a0 = arg(args, 0);
        match name {
            "parse" => {
                let text = self.to_str(&a0);
                let parsed: serde_json::Value = match serde_json::from_str(&text) {
                    Ok(j) => j,
                    Err(e) => return self.throw_error("SyntaxError", &format!("JSON.parse: {e}")),
                };
                let v = self.value_from_json(&parsed);
                self.note_parsed_payload(&text, &parsed, &v);
                Ok(v)
            }
            "stringify" => {
                let Some(j) = self.to_json(&a0, &mut Vec::new()) else {
                    return Ok(Value::Undefined);
                };
                let pretty = args.get(2).is_some_and(|i| !i.is_nullish());
                let s = if pretty { serde_json::to_string_pretty(&j) } else { serde_json::to_string(&j) };
                Ok(Value::str(&s.unwrap_or_default()))
            }
            _ => Ok(Value::Undefined),
        }
    }

    // ---- primitive methods ------------------------------------------------

    fn string_method(&mut self, name: &str, this: &Value, args: Vec<Value>) -> R<Value> {
        let s = self.to_str(this);
        let chars: Vec<char> = s.chars().collect();
        let len = chars.len();
        let a0 = arg(&args, 0);
        let num = |e: &Self, i: usize, d: f64| match args.get(i) {
            Some(v) if !matches!(v, Value::Undefined) => e.to_num(v),
            _ => d,
        };
        let sub = |a: usize, b: usize| -> Value {
            let (a, b) = (a.min(len), b.min(len));
            if a >= b {
                Value::str("")
            } else {
                Value::str(&chars[a..b].iter().collect::<String>())
            }
        };
        let find = |needle: &str, from: usize| -> Option<usize> {
            let n: Vec<char> = needle.chars().collect();
            (from..=len.saturating_sub(n.len())).find(|&i| i + n.len() <= len && chars[i..i + n.len()] == n[..])
        };
        Ok(match name {
            "charAt" | "at" => {
                let mut i = num(self, 0, 0.0);
                if name == "at" && i < 0.0 {
                    i += len as f64;
                }
                match chars.get(i as usize) {
                    Some(c) if i >= 0.0 => Value::str(&c.to_string()),
                    _ if name == "at" => Value::Undefined,
                    _ => Value::str(""),
                }
            }
            "charCodeAt" | "codePointAt" => {
                let i = num(self, 0, 0.0);
                match chars.get(i as usize) {
                    Some(c) if i >= 0.0 => Value::Num(*c as u32 as f64),
                    _ => Value::Num(f64::NAN),
                }
            }
            "indexOf" => {
                let from = relative_index(num(self, 1, 0.0).max(0.0), len);
                Value::Num(find(&self.to_str(&a0), from).map(|i| i as f64).unwrap_or(-1.0))
            }
            "lastIndexOf" => {
                let n: Vec<char> = self.to_str(&a0).chars().collect();
                let pos = (0..=len.saturating_sub(n.len()))
                    .rev()
                    .find(|&i| i + n.len() <= len && chars[i..i + n.len()] == n[..]);
                Value::Num(pos.map(|i| i as f64).unwrap_or(-1.0))
            }
            "includes" => Value::Bool(find(&self.to_str(&a0), 0).is_some()),
            "startsWith" => Value::Bool(s.starts_with(&self.to_str(&a0))),
            "endsWith" => Value::Bool(s.ends_with(&self.to_str(&a0))),
            "slice" => {
                let a = relative_index(num(self, 0, 0.0), len);
                let b = relative_index(num(self, 1, len as f64), len);
                sub(a, b)
            }
            "substring" => {
                let clamp = |x: f64| {
                    if x.is_nan() {
                        0
                    } else {
                        x.max(0.0).min(len as f64) as usize
                    }
                };
                let (a, b) = (clamp(num(self, 0, 0.0)), clamp(num(self, 1, len as f64)));
                sub(a.min(b), a.max(b))
            }
            "substr" => {
                let a = relative_index(num(self, 0, 0.0), len);
                let n = num(self, 1, len as f64).max(0.0) as usize;
                sub(a, a.saturating_add(n))
            }
            "toUpperCase" | "toLocaleUpperCase" => Value::str(&s.to_uppercase()),
            "toLowerCase" | "toLocaleLowerCase" => Value::str(&s.to_lowercase()),
            "trim" => Value::str(s.trim()),
            "trimStart" => Value::str(s.trim_start()),
            "trimEnd" => Value::str(s.trim_end()),
            "concat" => {
                let mut out = s.clone();
                for a in &args {
                    out.push_str(&self.to_str(a));
                }
                Value::str(&out)
            }
            "repeat" => {
                let n = num(self, 0, 0.0);
                if n < 0.0 || !n.is_finite() {
                    return self.throw_error("RangeError", "Invalid count value");
                }
                if (n as usize).saturating_mul(s.len()) > 1 << 24 {
                    return self.throw_error("RangeError", "Invalid string length");
                }
                Value::str(&s.repeat(n as usize))
            }
            "padStart" | "padEnd" => {
                let target = num(self, 0, 0.0).clamp(0.0, 1e6) as usize;
                let fill = match args.get(1) {
                    Some(f) if !matches!(f, Value::Undefined) => self.to_str(f),
                    _ => " ".into(),
                };
                if target <= len || fill.is_empty() {
                    Value::str(&s)
                } else {
                    let pad: String = fill.chars().cycle().take(target - len).collect();
                    Value::str(&if name == "padStart" { pad + &s } else { s + &pad })
                }
            }
            "toString" | "valueOf" | "normalize" => Value::str(&s),
            "localeCompare" => Value::Num(match s.as_str().cmp(self.to_str(&a0).as_str()) {
                std::cmp::Ordering::Less => -1.0,
                std::cmp::Ordering::Equal => 0.0,
                std::cmp::Ordering::Greater => 1.0,
            }),
            "split" => self.split(&s, &a0, args.get(1))?,
            "replace" | "replaceAll" => self.replace(&s, &a0, &arg(&args, 1), name == "replaceAll")?,
            "match" => self.string_match(&s, &a0)?,
            "search" => {
                let (re, _) = self.regex_arg(&a0);
                let pos = re.and_then(|r| r.find(&s).map(|m| s[..m.start()].chars().count() as f64));
                Value::Num(pos.unwrap_or(-1.0))
            }
            _ => Value::Undefined,
        })
    }

    pub(crate) fn compiled(&mut self, source: &str, flags: &str) -> Option<Rc<regex::Regex>> {
        let key = (source.to_string(), flags.to_string());
        if let Some(r) = self.regex_cache.get(&key) {
            return r.clone();
        }
        let r = regex::Regex::new(&translate_regex(source, flags)).ok().map(Rc::new);
        self.regex_cache.insert(key, r.clone());
        r
    }

    /// Regex for a pattern argument; strings become literal patterns. Second value is the global flag.
    fn regex_arg(&mut self, v: &Value) -> (Option<Rc<regex::Regex>>, bool) {
        if let Value::Obj(id) = v {
            if let ObjKind::RegExp { source, flags } = &self.st.obj(*id).kind {
                let (source, flags) = (source.clone(), flags.clone());
                return (self.compiled(&source, &flags), flags.contains('g'));
            }
        }
        let lit = regex::escape(&self.to_str(v));
        (self.compiled(&lit, ""), false)
    }

    fn is_regexp(&self, v: &Value) -> bool {
        matches!(v, Value::Obj(id) if matches!(self.st.obj(*id).kind, ObjKind::RegExp { .. }))
    }

    fn split(&mut self, s: &str, sep: &Value, limit: Option<&Value>) -> R<Value> {
        let limit = match limit {
            Some(l) if !matches!(l, Value::Undefined) => self.to_num(l) as usize,
            _ => usize::MAX,
        };
        let parts: Vec<String> = if matches!(sep, Value::Undefined) {
            vec![s.to_string()]
        } else if self.is_regexp(sep) {
            match self.regex_arg(sep).0 {
                Some(re) => re.split(s).map(str::to_string).collect(),
                None => vec![s.to_string()],
            }
        } else {
            let sep = self.to_str(sep);
            if sep.is_empty() {
                s.chars().map(|c| c.to_string()).collect()
            } else {
                s.split(sep.as_str()).map(str::to_string).collect()
            }
        };
        let items = parts.into_iter().take(limit).map(|p| Value::str(&p)).collect();
        Ok(self.new_array(items))
    }

    fn replace(&mut self, s: &str, pat: &Value, rep: &Value, all: bool) -> R<Value> {
        let (re, global) = self.regex_arg(pat);
        let Some(re) = re else {
            return Ok(Value::str(s));
        };
        let global = global || all;
        let mut out = String::new();
        let mut last = 0;
        let caps: Vec<regex::Captures> =
            if global { re.captures_iter(s).collect() } else { re.captures(s).into_iter().collect() };
        for c in caps {
            let m = c.get(0).map(|m| (m.start(), m.end(), m.as_str())).unwrap_or((0, 0, ""));
            out.push_str(&s[last..m.0]);
            if self.is_callable(rep) {
                let mut cargs = vec![Value::str(m.2)];
                for g in c.iter().skip(1) {
                    cargs.push(g.map(|g| Value::str(g.as_str())).unwrap_or(Value::Undefined));
                }
                cargs.push(Value::Num(s[..m.0].chars().count() as f64));
                cargs.push(Value::str(s));
                let r = self.call_value(rep, Value::Undefined, cargs)?;
                out.push_str(&self.to_str(&r));
            } else {
                let template = self.to_str(rep);
                let mut it = template.chars().peekable();
                while let Some(ch) = it.next() {
                    if ch != '$' {
                        out.push(ch);
                        continue;
                    }
                    match it.peek().copied() {
                        Some('&') => {
                            it.next();
                            out.push_str(m.2);
                        }
                        Some('$') => {
                            it.next();
                            out.push('$');
                        }
                        Some(d) if d.is_ascii_digit() => {
                            it.next();
                            let idx = d.to_digit(10).unwrap_or(0) as usize;
                            out.push_str(c.get(idx).map(|g| g.as_str()).unwrap_or(""));
                        }
                        _ => out.push('$'),
                    }
                }
            }
            last = m.1;
        }
        out.push_str(&s[last..]);
        Ok(Value::str(&out))
    }

    fn match_array(&mut self, s: &str, c: &regex::Captures) -> Value {
        let items = c.iter().map(|g| g.map(|g| Value::str(g.as_str())).unwrap_or(Value::Undefined)).collect();
        let arr = self.new_array(items);
        let start = c.get(0).map(|m| s[..m.start()].chars().count()).unwrap_or(0);
        if let Value::Obj(id) = arr {
            self.st.obj_mut(id).props.insert(Rc::from("index"), Value::Num(start as f64));
            self.st.obj_mut(id).props.insert(Rc::from("input"), Value::str(s));
        }
        arr
    }

    fn string_match(&mut self, s: &str, pat: &Value) -> R<Value> {
        let (re, global) = self.regex_arg(pat);
        let Some(re) = re else { return Ok(Value::Null) };
        if global {
            let all: Vec<Value> = re.find_iter(s).map(|m| Value::str(m.as_str())).collect();
            return Ok(if all.is_empty() { Value::Null } else { self.new_array(all) });
        }
        Ok(match re.captures(s) {
            Some(c) => self.match_array(s, &c),
            None => Value::Null,
        })
    }

    fn regexp_method(&mut self, name: &str, this: &Value, args: &[Value]) -> R<Value> {
        let input = self.to_str(&arg(args, 0));
        if name == "toString" {
            return Ok(Value::str(&self.to_str(this)));
        }
        let (re, _) = self.regex_arg(this);
        let Some(re) = re else {
            return Ok(if name == "test" { Value::Bool(false) } else { Value::Null });
        };
        Ok(match name {
            "test" => Value::Bool(re.is_match(&input)),
            _ => match re.captures(&input) {
                Some(c) => self.match_array(&input, &c),
                None => Value::Null,
            },
        })
    }

    fn number_method(&mut self, name: &str, this: &Value, args: &[Value]) -> R<Value> {
        if let Value::Bool(b) = this {
            return Ok(match name {
                "valueOf" => Value::Bool(*b),
                _ => Value::str(if *b { "true" } else { "false" }),
            });
        }
        let n = self.to_num(this);
        Ok(match name {
            "toString" => {
                let radix = match args.first() {
                    Some(r) if !r.is_nullish() => self.to_num(r) as u32,
                    _ => 10,
                };
                if !(2..=36).contains(&radix) {
                    return self.throw_error("RangeError", "toString() radix must be between 2 and 36");
                }
                Value::str(&radix_string(n, radix))
            }
            "toFixed" => {
                let d = args.first().map(|v| self.to_num(v)).unwrap_or(0.0).clamp(0.0, 100.0) as usize;
                Value::str(&if n.is_finite() { format!("{n:.d$}") } else { number_to_string(n) })
            }
            "toLocaleString" => Value::str(&number_to_string(n)),
            _ => Value::Num(n),
        })
    }

    fn function_method(&mut self, name: &str, this: &Value, args: Vec<Value>) -> R<Value> {
        match name {
            "call" => {
                let mut it = args.into_iter();
                let t = it.next().unwrap_or(Value::Undefined);
                self.call_value(this, t, it.collect())
            }
            "apply" => {
                let t = arg(&args, 0);
                let list = self.list_items(&arg(&args, 1)).unwrap_or_default();
                self.call_value(this, t, list)
            }
            "bind" => {
                let Value::Obj(target) = this else {
                    return Ok(Value::Undefined);
                };
                let mut it = args.into_iter();
                let t = it.next().unwrap_or(Value::Undefined);
                let o = Obj::new(ObjKind::Bound { target: *target, this: t, args: it.collect() });
                Ok(Value::Obj(self.st.alloc(o)))
            }
            _ => Ok(Value::str(&self.to_str(this))),
        }
    }

    fn date_method(&mut self, name: &str, this: &Value) -> Value {
        let t = self.to_num(this);
        let dt = chrono::DateTime::from_timestamp_millis(t as i64);
        let Some(dt) = dt.filter(|_| t.is_finite()) else {
            return if name.starts_with("to") { Value::str("Invalid Date") } else { Value::Num(f64::NAN) };
        };
        use chrono::{Datelike, Timelike};
        match name {
            "getTime" | "valueOf" => Value::Num(t),
            "getFullYear" => Value::Num(dt.year() as f64),
            "getMonth" => Value::Num(dt.month0() as f64),
            "getDate" => Value::Num(dt.day() as f64),
            "getDay" => Value::Num(dt.weekday().num_days_from_sunday() as f64),
            "getHours" => Value::Num(dt.hour() as f64),
            "getMinutes" => Value::Num(dt.minute() as f64),
            "getSeconds" => Value::Num(dt.second() as f64),
            "getMilliseconds" => Value::Num((t as i64).rem_euclid(1000) as f64),
            "getTimezoneOffset" => Value::Num(0.0),
            "toISOString" | "toJSON" => Value::str(&iso_string(t)),
            "toUTCString" => Value::str(&dt.format("%a, %d %b %Y %H:%M:%S GMT").to_string()),
            _ => Value::str(&date_string(t)),
        }
    }

    fn object_method(&mut self, name: &str, this: &Value, args: &[Value]) -> R<Value> {
        Ok(match name {
            "hasOwnProperty" | "propertyIsEnumerable" => {
                let key = self.to_str(&arg(args, 0));
                Value::Bool(match this {
                    Value::Obj(id) => {
                        self.st.obj(*id).props.contains_key(key.as_str())
                            || matches!(&self.st.obj(*id).kind, ObjKind::Array(items) if array_index(&key).is_some_and(|i| i < items.len()))
                    }
                    _ => false,
                })
            }
            "valueOf" => this.clone(),
            _ => Value::str(&self.to_str(this)),
        })
    }

    fn promise_method(&mut self, name: &str, this: &Value, args: Vec<Value>) -> R<Value> {
        let Value::Obj(pid) = this else {
            return Ok(Value::Undefined);
        };
        let (value, rejected) = match &self.st.obj(*pid).kind {
            ObjKind::Promise { value, rejected } => (value.clone(), *rejected),
            _ => (Value::Undefined, false),
        };
        match name {
            // Settlement functions handed to an executor.
            "resolve" | "reject" => {
                self.st.obj_mut(*pid).kind = ObjKind::Promise { value: arg(&args, 0), rejected: name == "reject" };
                Ok(Value::Undefined)
            }
            "then" | "catch" | "finally" => {
                let handler = match (name, rejected) {
                    ("then", false) => arg(&args, 0),
                    ("then", true) => arg(&args, 1),
                    ("catch", true) => arg(&args, 0),
                    ("finally", _) => arg(&args, 0),
                    _ => Value::Undefined,
                };
                if !self.is_callable(&handler) {
                    return Ok(this.clone());
                }
                let hargs = if name == "finally" { Vec::new() } else { vec![value.clone()] };
                match self.call_value(&handler, Value::Undefined, hargs) {
                    Ok(r) if name == "finally" => {
                        let _ = r;
                        Ok(this.clone())
                    }
                    Ok(Value::Obj(id)) if matches!(self.st.obj(id).kind, ObjKind::Promise { .. }) => Ok(Value::Obj(id)),
                    Ok(r) => Ok(self.new_promise(r, false)),
                    Err(Abort::Throw(e)) => Ok(self.new_promise(e, true)),
                    Err(Abort::Budget) => Err(Abort::Budget),
                }
            }
            _ => Ok(Value::Undefined),
        }
    }

    fn array_method(&mut self, name: &str, this: &Value, args: Vec<Value>) -> R<Value> {
        let Value::Obj(id) = this else {
            return Ok(Value::Undefined);
        };
        let id = *id;
        let items = self.list_items(this).unwrap_or_default();
        let len = items.len();
        let a0 = arg(&args, 0);
        let set = |e: &mut Self, v: Vec<Value>| {
            if let ObjKind::Array(items) = &mut e.st.obj_mut(id).kind {
                *items = v;
            }
        };
        Ok(match name {
            "push" => {
                let mut v = items;
                v.extend(args);
                let n = v.len();
                set(self, v);
                Value::Num(n as f64)
            }
            "pop" => {
                let mut v = items;
                let last = v.pop().unwrap_or(Value::Undefined);
                set(self, v);
                last
            }
            "shift" => {
                let mut v = items;
                let first = if v.is_empty() { Value::Undefined } else { v.remove(0) };
                set(self, v);
                first
            }
            "unshift" => {
                let mut v = args;
                v.extend(items);
                let n = v.len();
                set(self, v);
                Value::Num(n as f64)
            }
            "slice" => {
                let a = relative_index(if args.is_empty() { 0.0 } else { self.to_num(&a0) }, len);
                let b = match args.get(1) {
                    Some(v) if !matches!(v, Value::Undefined) => relative_index(self.to_num(v), len),
                    _ => len,
                };
                let out = if a < b { items[a..b].to_vec() } else { Vec::new() };
                self.new_array(out)
            }
            "splice" => {
                let start = relative_index(self.to_num(&a0), len);
                let count = match args.get(1) {
                    Some(v) => (self.to_num(v).max(0.0) as usize).min(len - start),
                    None => len - start,
                };
                let mut v = items;
                let removed: Vec<Value> = v.splice(start..start + count, args.into_iter().skip(2)).collect();
                set(self, v);
                self.new_array(removed)
            }
            "concat" => {
                let mut v = items;
                for a in &args {
                    match self.list_items(a) {
                        Some(more) if matches!(a, Value::Obj(i) if matches!(self.st.obj(*i).kind, ObjKind::Array(_))) => {
                            v.extend(more)
                        }
                        _ => v.push(a.clone()),
                    }
                }
                self.new_array(v)
            }
            "join" | "toString" => {
                let sep = match args.first() {
                    Some(s) if !matches!(s, Value::Undefined) && name == "join" => self.to_str(s),
                    _ => ",".into(),
                };
                let parts: Vec<String> =
                    items.iter().map(|i| if i.is_nullish() { String::new() } else { self.to_str(i) }).collect();
                Value::str(&parts.join(&sep))
            }
            "reverse" => {
                let mut v = items;
                v.reverse();
                set(self, v);
                this.clone()
            }
            "indexOf" | "lastIndexOf" | "includes" => {
                let pos = if name == "lastIndexOf" {
                    items.iter().rposition(|i| self.strict_eq(i, &a0))
                } else {
                    items.iter().position(|i| {
                        self.strict_eq(i, &a0)
                            || (name == "includes"
                                && matches!((i, &a0), (Value::Num(x), Value::Num(y)) if x.is_nan() && y.is_nan()))
                    })
                };
                if name == "includes" {
                    Value::Bool(pos.is_some())
                } else {
                    Value::Num(pos.map(|p| p as f64).unwrap_or(-1.0))
                }
            }
            "at" => {
                let mut i = self.to_num(&a0);
                if i < 0.0 {
                    i += len as f64;
                }
                if i < 0.0 {
                    Value::Undefined
                } else {
                    items.get(i as usize).cloned().unwrap_or(Value::Undefined)
                }
            }
            "fill" => {
                let v = vec![a0; len];
                set(self, v);
                this.clone()
            }
            "flat" => {
                let mut out = Vec::new();
                for i in items {
                    match self.list_items(&i) {
                        Some(inner) if matches!(&i, Value::Obj(x) if matches!(self.st.obj(*x).kind, ObjKind::Array(_))) => {
                            out.extend(inner)
                        }
                        _ => out.push(i),
                    }
                }
                self.new_array(out)
            }
            "sort" => {
                let sorted = self.sort_values(items, &a0)?;
                set(self, sorted);
                this.clone()
            }
            "reduce" | "reduceRight" => {
                let mut order: Vec<usize> = (0..len).collect();
                if name == "reduceRight" {
                    order.reverse();
                }
                let mut it = order.into_iter();
                let mut acc = match args.get(1) {
                    Some(init) => init.clone(),
                    None => match it.next() {
                        Some(i) => items[i].clone(),
                        None => return self.throw_error("TypeError", "Reduce of empty array with no initial value"),
                    },
                };
                for i in it {
                    acc = self.call_value(
                        &a0,
                        Value::Undefined,
                        vec![acc, items[i].clone(), Value::Num(i as f64), this.clone()],
                    )?;
                }
                acc
            }
            _ => {
                // Iteration methods with a callback.
                if !self.is_callable(&a0) {
                    let what = self.summary(&a0);
                    return self.throw_error("TypeError", &format!("{what} is not a function"));
                }
                let this_arg = arg(&args, 1);
                let mut mapped = Vec::new();
                for (i, item) in items.iter().enumerate() {
                    let r =
                        self.call_value(&a0, this_arg.clone(), vec![item.clone(), Value::Num(i as f64), this.clone()])?;
                    let t = self.truthy(&r);
                    match name {
                        "map" => mapped.push(r),
                        "filter" if t => mapped.push(item.clone()),
                        "some" if t => return Ok(Value::Bool(true)),
                        "every" if !t => return Ok(Value::Bool(false)),
                        "find" if t => return Ok(item.clone()),
                        "findIndex" if t => return Ok(Value::Num(i as f64)),
                        _ => {}
                    }
                }
                match name {
                    "map" | "filter" => self.new_array(mapped),
                    "some" => Value::Bool(false),
                    "every" => Value::Bool(true),
                    "findIndex" => Value::Num(-1.0),
                    _ => Value::Undefined,
                }
            }
        })
    }

    /// Stable merge sort with a comparator that may throw.
    fn sort_values(&mut self, items: Vec<Value>, cmp: &Value) -> R<Vec<Value>> {
        if items.len() <= 1 {
            return Ok(items);
        }
        let mut right = items;
        let left: Vec<Value> = right.drain(..right.len() / 2).collect();
        let left = self.sort_values(left, cmp)?;
        let right = self.sort_values(right, cmp)?;
        let mut out = Vec::with_capacity(left.len() + right.len());
        let (mut l, mut r) = (left.into_iter().peekable(), right.into_iter().peekable());
        while let (Some(a), Some(b)) = (l.peek(), r.peek()) {
            let take_right = if a.is_nullish() {
                !b.is_nullish() && matches!(a, Value::Undefined)
            } else if b.is_nullish() {
                false
            } else if self.is_callable(cmp) {
                let v = self.call_value(cmp, Value::Undefined, vec![a.clone(), b.clone()])?;
                self.to_num(&v) > 0.0
            } else {
                self.to_str(a) > self.to_str(b)
            };
            if take_right {
                out.extend(r.next());
            } else {
                out.extend(l.next());
            }
        }
        out.extend(l);
        out.extend(r);
        Ok(out)
    }

    // ---- base64 -----------------------------------------------------------

    pub(crate) fn atob(&mut self, s: &str) -> R<Value> {
        let cleaned: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let padded = match cleaned.len() % 4 {
            2 => format!("{cleaned}=="),
            3 => format!("{cleaned}="),
            _ => cleaned,
        };
        match base64::engine::general_purpose::STANDARD.decode(padded.as_bytes()) {
            Ok(bytes) => Ok(Value::str(&bytes.iter().map(|b| *b as char).collect::<String>())),
            Err(_) => self.throw_error("InvalidCharacterError", "The string to be decoded is not correctly encoded."),
        }
    }

    pub(crate) fn btoa(&mut self, s: &str) -> R<Value> {
        let mut bytes = Vec::with_capacity(s.len());
        for c in s.chars() {
            if c as u32 > 255 {
                return self.throw_error(
                    "InvalidCharacterError",
                    "The string to be encoded contains characters outside of the Latin1 range.",
                );
            }
            bytes.push(c as u32 as u8);
        }
        Ok(Value::str(&base64::engine::general_purpose::STANDARD.encode(bytes)))
    }
}

fn capitalize(tag: &str) -> String {
    let mut c = tag.chars();
    match c.next() {
        Some(f) if tag != "#document" => f.to_uppercase().chain(c).collect(),
        _ => String::new(),
    }
}

fn iso_string(t: f64) -> String {
    chrono::DateTime::from_timestamp_millis(t as i64)
        .map(|d| d.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string())
        .unwrap_or_else(|| "Invalid Date".into())
}

fn date_string(t: f64) -> String {
    chrono::DateTime::from_timestamp_millis(t as i64)
        .filter(|_| t.is_finite())
        .map(|d| d.format("%a %b %d %Y %H:%M:%S GMT+0000 (Coordinated Universal Time)").to_string())
        .unwrap_or_else(|| "Invalid Date".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn int_parsing() {
        assert_eq!(parse_int("  42px", 0), 42.0);
        assert_eq!(parse_int("0x1f", 0), 31.0);
        assert_eq!(parse_int("-17", 10), -17.0);
        assert_eq!(parse_int("ff", 16), 255.0);
        assert!(parse_int("px", 10).is_nan());
    }

    #[test]
    fn float_parsing() {
        assert_eq!(parse_float("2.5abc"), 2.5);
        assert_eq!(parse_float("1e3x"), 1000.0);
        assert!(parse_float("abc").is_nan());
    }

    #[test]
    fn radix() {
        assert_eq!(radix_string(255.0, 16), "ff");
        assert_eq!(radix_string(-5.0, 2), "-101");
        assert_eq!(radix_string(0.0, 36), "0");
    }

    #[test]
    fn uri_coding() {
        assert_eq!(percent_encode("a b&c", ""), "a%20b%26c");
        assert_eq!(percent_decode("a%20b%26c"), "a b&c");
        assert_eq!(percent_decode("100%"), "100%");
    }

    #[test]
    fn regex_flags() {
        assert_eq!(translate_regex("a\\/b", "gi"), "(?i)a/b");
        assert_eq!(translate_regex("x", "g"), "x");
    }
}
