//! The simulated browser / Node host: DOM, network, timers, dynamic code loading, stubs.

use std::rc::Rc;

use crate::scanner::Mode;
use crate::tracker::{local_prefix, Activity, Provenance};

use super::builtins::{arg, pick, HIDDEN};
use super::interp::R;
use super::resolver::{absolutize, ResourceKind};
use super::value::*;
use super::Engine;

const ELEMENT_METHODS: &[&str] = &[
    "appendChild",
    "insertBefore",
    "append",
    "prepend",
    "removeChild",
    "remove",
    "replaceChild",
    "setAttribute",
    "getAttribute",
    "hasAttribute",
    "removeAttribute",
    "addEventListener",
    "removeEventListener",
    "querySelector",
    "querySelectorAll",
    "getElementsByTagName",
    "getElementsByClassName",
    "contains",
    "click",
    "focus",
    "blur",
    "dispatchEvent",
    "cloneNode",
    "getBoundingClientRect",
];
const DOCUMENT_METHODS: &[&str] =
    &["createElement", "createTextNode", "getElementById", "write", "writeln", "hasFocus"];
const STORAGE_METHODS: &[&str] = &["getItem", "setItem", "removeItem", "clear", "key"];
const RESPONSE_METHODS: &[&str] = &["text", "json", "clone"];
const JQUERY_METHODS: &[&str] = &[
    "hasClass",
    "remove",
    "append",
    "prepend",
    "appendTo",
    "html",
    "text",
    "attr",
    "css",
    "addClass",
    "removeClass",
    "on",
    "click",
    "ready",
    "each",
    "find",
    "val",
    "hide",
    "show",
    "trigger",
    "get",
    "eq",
    "first",
    "parent",
    "insertAfter",
    "insertBefore",
    "load",
];
const CHILD_PROCESS_METHODS: &[&str] = &["exec", "execFile", "execSync", "execFileSync", "spawn", "spawnSync", "fork"];

/// Where a URL's body came from.
pub(crate) enum Loaded {
    Resource { url: String, body: String, kind: ResourceKind },
    Local { url: String, path: String, body: String },
    Missing { url: String },
}

/// Browser surroundings a sample is run against. Several contexts expose context-dependent checks.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PageContext {
    pub url: String,
    pub user_agent: String,
    pub language: String,
    pub width: u32,
    pub height: u32,
    pub cookie: String,
    /// `(tag, id, class)` triples placed under `<body>`.
    pub elements: Vec<(String, String, String)>,
}

impl PageContext {
    pub fn news() -> Self {
        PageContext {
            url: "https://news.example.com/".into(),
            user_agent:
                "Mozilla/5.0 (X11; Linux x86_64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/120.0 Safari/537.36"
                    .into(),
            language: "en-US".into(),
            width: 1920,
            height: 1080,
            cookie: String::new(),
            elements: vec![("div".into(), "main".into(), "content".into())],
        }
    }

    pub fn linkedin() -> Self {
        PageContext {
            url: "https://www.linkedin.com/feed/".into(),
            language: "en-GB".into(),
            width: 1366,
            height: 768,
            cookie: "li_at=1".into(),
            ..PageContext::news()
        }
    }

    pub fn shop() -> Self {
        PageContext {
            url: "https://shop.example.org/cart".into(),
            user_agent: "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/119.0 Safari/537.36".into(),
            language: "de-DE".into(),
            width: 1280,
            height: 720,
            cookie: "session=abc".into(),
            elements: vec![
                ("div".into(), "joinShoppersIframeDiv".into(), "joinShoppersIframeDiv".into()),
                ("div".into(), "jsIframeParentDiv".into(), String::new()),
            ],
        }
    }

    /// The three contexts every browser sample is run in.
    pub fn defaults() -> Vec<PageContext> {
        vec![PageContext::news(), PageContext::linkedin(), PageContext::shop()]
    }

    pub fn hostname(&self) -> String {
        url::Url::parse(&self.url).ok().and_then(|u| u.host_str().map(str::to_string)).unwrap_or_default()
    }
}

impl Engine {
    // ---- setup ------------------------------------------------------------

    fn element(&mut self, tag: &str, parent: Option<ObjId>) -> ObjId {
        let id = self.st.alloc(Obj::new(ObjKind::Element { tag: Rc::from(tag), children: Vec::new(), parent }));
        if let Some(p) = parent {
            if let ObjKind::Element { children, .. } = &mut self.st.obj_mut(p).kind {
                children.push(id);
            }
        }
        id
    }

    fn put(&mut self, target: ObjId, key: &str, v: Value) {
        self.st.obj_mut(target).props.insert(Rc::from(key), v);
    }

    fn put_host(&mut self, target: ObjId, key: &str, ns: Ns, name: &'static str) {
        let v = self.host_value(ns, name, None);
        self.put(target, key, v);
    }

    fn stub(&mut self, path: &str) -> Value {
        Value::Obj(self.st.alloc(Obj::new(ObjKind::Stub(Rc::from(path)))))
    }

    pub(crate) fn install_globals(&mut self) {
        let w = self.g.window;
        let builtins: &[&'static str] = &[
            "parseInt",
            "parseFloat",
            "isNaN",
            "isFinite",
            "String",
            "Number",
            "Boolean",
            "Symbol",
            "Object",
            "Array",
            "Error",
            "TypeError",
            "RangeError",
            "SyntaxError",
            "ReferenceError",
            "RegExp",
            "Date",
            "Promise",
            "encodeURIComponent",
            "encodeURI",
            "decodeURIComponent",
            "decodeURI",
            "escape",
            "unescape",
        ];
        for name in builtins {
            self.put_host(w, name, Ns::Builtin, name);
        }
        let statics: &[(&str, &[&'static str])] = &[
            (
                "Object",
                &[
                    "Object.keys",
                    "Object.values",
                    "Object.entries",
                    "Object.assign",
                    "Object.create",
                    "Object.defineProperty",
                    "Object.getPrototypeOf",
                    "Object.getOwnPropertyNames",
                    "Object.freeze",
                    "Object.seal",
                ],
            ),
            ("Array", &["Array.isArray", "Array.from", "Array.of"]),
            ("String", &["String.fromCharCode"]),
            ("Date", &["Date.now"]),
            ("Promise", &["Promise.resolve", "Promise.reject", "Promise.all", "Promise.allSettled", "Promise.race"]),
            ("Number", &["Number.isInteger", "Number.isNaN", "Number.parseFloat", "Number.parseInt"]),
        ];
        for (owner, names) in statics {
            let Some(Value::Obj(o)) = self.st.obj(w).props.get(*owner).cloned() else {
                continue;
            };
            for name in *names {
                let short = &name[owner.len() + 1..];
                self.put_host(o, short, Ns::Builtin, name);
            }
        }
        if let Some(Value::Obj(n)) = self.st.obj(w).props.get("Number").cloned() {
            self.put(n, "MAX_SAFE_INTEGER", Value::Num(9007199254740991.0));
            self.put(n, "NaN", Value::Num(f64::NAN));
        }
        self.put(w, "NaN", Value::Num(f64::NAN));
        self.put(w, "Infinity", Value::Num(f64::INFINITY));

        let math = self.st.alloc(Obj::new(ObjKind::Plain));
        for name in [
            "random", "floor", "ceil", "round", "abs", "trunc", "sign", "sqrt", "pow", "log", "exp", "sin", "cos",
            "max", "min",
        ] {
            self.put_host(math, name, Ns::Math, name);
        }
        self.put(math, "PI", Value::Num(std::f64::consts::PI));
        self.put(math, "E", Value::Num(std::f64::consts::E));
        self.put(w, "Math", Value::Obj(math));
        let json = self.st.alloc(Obj::new(ObjKind::Plain));
        self.put_host(json, "parse", Ns::Json, "parse");
        self.put_host(json, "stringify", Ns::Json, "stringify");
        self.put(w, "JSON", Value::Obj(json));
        let console = self.st.alloc(Obj::new(ObjKind::Plain));
        for name in ["log", "warn", "error", "info", "debug"] {
            self.put_host(console, name, Ns::Console, name);
        }
        self.put(w, "console", Value::Obj(console));

        for name in [
            "setTimeout",
            "setInterval",
            "clearTimeout",
            "clearInterval",
            "fetch",
            "eval",
            "Function",
            "atob",
            "btoa",
            "queueMicrotask",
        ] {
            self.put_host(w, name, Ns::Global, name);
        }
        let modules = self.st.alloc(Obj::new(ObjKind::Plain));
        self.g.modules = modules;
        self.put(w, "globalThis", Value::Obj(w));

        match self.cfg.mode {
            Mode::Browser => self.install_browser(),
            Mode::Npm => self.install_node(),
        }
    }

    fn install_browser(&mut self) {
        let w = self.g.window;
        let page = self.cfg.page.clone();
        for name in ["window", "self", "top", "parent", "frames"] {
            self.put(w, name, Value::Obj(w));
        }
        for name in [
            "alert",
            "confirm",
            "prompt",
            "addEventListener",
            "removeEventListener",
            "postMessage",
            "open",
            "requestAnimationFrame",
            "getComputedStyle",
            "matchMedia",
            "dispatchEvent",
        ] {
            self.put_host(w, name, Ns::Global, name);
        }
        self.put(w, "innerWidth", Value::Num(page.width as f64));
        self.put(w, "innerHeight", Value::Num(page.height as f64));
        self.put(w, "outerWidth", Value::Num(page.width as f64));
        self.put(w, "outerHeight", Value::Num(page.height as f64 + 80.0));
        self.put(w, "devicePixelRatio", Value::Num(1.0));
        let screen = self.new_object(vec![
            ("width", Value::Num(page.width as f64)),
            ("height", Value::Num(page.height as f64)),
            ("availWidth", Value::Num(page.width as f64)),
            ("availHeight", Value::Num(page.height as f64)),
        ]);
        self.put(w, "screen", screen);

        let langs = self.new_array(vec![Value::str(&page.language)]);
        let nav = self.new_object(vec![
            ("userAgent", Value::str(&page.user_agent)),
            ("language", Value::str(&page.language)),
            ("languages", langs),
            ("platform", Value::str(if page.user_agent.contains("Windows") { "Win32" } else { "Linux x86_64" })),
            ("webdriver", Value::Bool(false)),
            ("cookieEnabled", Value::Bool(true)),
            ("hardwareConcurrency", Value::Num(8.0)),
            ("vendor", Value::str("Google Inc.")),
        ]);
        if let Value::Obj(n) = nav {
            self.put_host(n, "sendBeacon", Ns::Global, "navigator.sendBeacon");
            let perms = self.stub("navigator.permissions");
            self.put(n, "permissions", perms);
            let media = self.stub("navigator.mediaDevices");
            self.put(n, "mediaDevices", media);
            let geo = self.stub("navigator.geolocation");
            self.put(n, "geolocation", geo);
        }
        self.put(w, "navigator", nav);

        let parsed = url::Url::parse(&page.url).ok();
        let part = |f: fn(&url::Url) -> String| parsed.as_ref().map(f).unwrap_or_default();
        let loc = self.new_object(vec![
            ("href", Value::str(&page.url)),
            ("hostname", Value::str(&page.hostname())),
            ("host", Value::str(&part(|u| u.host_str().unwrap_or("").to_string()))),
            ("protocol", Value::str(&part(|u| format!("{}:", u.scheme())))),
            ("pathname", Value::str(&part(|u| u.path().to_string()))),
            ("origin", Value::str(&part(|u| u.origin().ascii_serialization()))),
            ("search", Value::str(&part(|u| u.query().map(|q| format!("?{q}")).unwrap_or_default()))),
            ("hash", Value::str("")),
            ("port", Value::str("")),
        ]);
        if let Value::Obj(l) = loc {
            self.put_host(l, "assign", Ns::Global, "location.assign");
            self.put_host(l, "replace", Ns::Global, "location.replace");
            self.put_host(l, "reload", Ns::Global, "location.reload");
            self.put_host(l, "toString", Ns::Global, "location.toString");
        }
        self.put(w, "location", loc);

        let doc = self.element("#document", None);
        let html = self.element("html", Some(doc));
        let head = self.element("head", Some(html));
        let body = self.element("body", Some(html));
        self.element("script", Some(head));
        for (tag, id, class) in &page.elements {
            let e = self.element(tag, Some(body));
            if !id.is_empty() {
                self.put(e, "id", Value::str(id));
            }
            if !class.is_empty() {
                self.put(e, "className", Value::str(class));
            }
        }
        self.put(doc, "\0cookie", Value::str(&page.cookie));
        self.g.document = doc;
        self.g.head = head;
        self.g.body = body;
        self.g.html = html;
        self.put(w, "document", Value::Obj(doc));

        for name in ["localStorage", "sessionStorage"] {
            let s = self.st.alloc(Obj::new(ObjKind::Storage));
            self.put(w, name, Value::Obj(s));
        }
        let chrome = self.stub("chrome");
        self.put(w, "chrome", chrome.clone());
        self.put(w, "browser", chrome);
        for name in [
            "history",
            "performance",
            "crypto",
            "Intl",
            "MutationObserver",
            "WebSocket",
            "XMLHttpRequest",
            "Notification",
            "Image",
            "indexedDB",
        ] {
            let s = self.stub(name);
            self.put(w, name, s);
        }

        let jq = self.host_value(Ns::JQueryStatic, "$", None);
        if let Value::Obj(j) = jq {
            for name in
                ["get", "post", "getScript", "getJSON", "ajax", "each", "extend", "trim", "noop", "when", "isArray"]
            {
                self.put_host(j, name, Ns::JQueryStatic, name);
            }
        }
        self.put(w, "$", jq.clone());
        self.put(w, "jQuery", jq);
    }

    fn install_node(&mut self) {
        let w = self.g.window;
        self.put(w, "global", Value::Obj(w));
        for name in ["require", "urlopen"] {
            self.put_host(w, name, Ns::Global, name);
        }
        let env = self.new_object(Vec::new());
        let argv = self.new_array(vec![Value::str("node"), Value::str("index.js")]);
        let versions = self.new_object(vec![("node", Value::str("18.17.0"))]);
        let process = self.new_object(vec![
            ("env", env),
            ("argv", argv),
            ("platform", Value::str("linux")),
            ("versions", versions),
        ]);
        if let Value::Obj(p) = process {
            for name in ["exit", "cwd", "on"] {
                self.put_host(p, name, Ns::Process, name);
            }
        }
        self.put(w, "process", process);
        let exports = self.new_object(Vec::new());
        let module = self.new_object(vec![("exports", exports.clone())]);
        self.put(w, "module", module);
        self.put(w, "exports", exports);
        self.put(w, "__dirname", Value::str("/pkg"));
        self.put(w, "__filename", Value::str("/pkg/index.js"));
        let buffer = self.stub("Buffer");
        self.put(w, "Buffer", buffer);
    }

    // ---- dispatch tables --------------------------------------------------

    pub(crate) fn web_method_of(&self, id: ObjId, key: &str) -> Option<HostFn> {
        let found = |ns, table| pick(table, key).map(|name| HostFn { ns, name });
        match &self.st.obj(id).kind {
            ObjKind::Element { .. } if id == self.g.document => {
                found(Ns::Document, DOCUMENT_METHODS).or_else(|| found(Ns::Document, ELEMENT_METHODS))
            }
            ObjKind::Element { .. } => found(Ns::Element, ELEMENT_METHODS),
            ObjKind::Storage => found(Ns::Storage, STORAGE_METHODS),
            ObjKind::Response { .. } => found(Ns::Response, RESPONSE_METHODS),
            ObjKind::JQuery { .. } => found(Ns::JQuery, JQUERY_METHODS),
            _ if id == self.g.child_process => found(Ns::ChildProcess, CHILD_PROCESS_METHODS),
            _ => None,
        }
    }

    pub(crate) fn web_prop(&mut self, id: ObjId, key: &str) -> R<Option<Value>> {
        let kind = self.st.obj(id).kind.clone();
        Ok(match kind {
            ObjKind::Element { tag, children, parent } => match key {
                "tagName" | "nodeName" => Some(Value::str(&tag.to_uppercase())),
                "parentNode" | "parentElement" => Some(parent.map(Value::Obj).unwrap_or(Value::Null)),
                "children" | "childNodes" => Some(self.new_array(children.iter().map(|c| Value::Obj(*c)).collect())),
                "firstChild" | "firstElementChild" => {
                    Some(children.first().map(|c| Value::Obj(*c)).unwrap_or(Value::Null))
                }
                "lastChild" | "lastElementChild" => {
                    Some(children.last().map(|c| Value::Obj(*c)).unwrap_or(Value::Null))
                }
                "id" | "className" | "innerHTML" | "textContent" | "innerText" | "src" | "text" | "value" => {
                    Some(Value::str(""))
                }
                "style" | "dataset" => {
                    let o = self.new_object(Vec::new());
                    self.put(id, key, o.clone());
                    Some(o)
                }
                "classList" => {
                    let o = self.st.alloc(Obj::new(ObjKind::Plain));
                    for (k, name) in [
                        ("contains", "classList.contains"),
                        ("add", "classList.add"),
                        ("remove", "classList.remove"),
                        ("toggle", "classList.toggle"),
                    ] {
                        let f = self.host_value(Ns::Element, name, Some(Value::Obj(id)));
                        self.put(o, k, f);
                    }
                    Some(Value::Obj(o))
                }
                "cookie" if id == self.g.document => {
                    Some(self.st.obj(id).props.get("\0cookie").cloned().unwrap_or(Value::str("")))
                }
                "documentElement" if id == self.g.document => Some(Value::Obj(self.g.html)),
                "head" if id == self.g.document => Some(Value::Obj(self.g.head)),
                "body" if id == self.g.document => Some(Value::Obj(self.g.body)),
                "readyState" if id == self.g.document => Some(Value::str("complete")),
                "URL" | "documentURI" if id == self.g.document => Some(Value::str(&self.cfg.page.url)),
                "domain" if id == self.g.document => Some(Value::str(&self.cfg.page.hostname())),
                "referrer" | "title" if id == self.g.document => Some(Value::str("")),
                "location" if id == self.g.document => self.st.obj(self.g.window).props.get("location").cloned(),
                "scripts" if id == self.g.document => Some(self.query_all(id, "script")),
                "visibilityState" if id == self.g.document => Some(Value::str("visible")),
                "hidden" if id == self.g.document => Some(Value::Bool(false)),
                "ownerDocument" => Some(Value::Obj(self.g.document)),
                _ => None,
            },
            ObjKind::Storage if key == "length" => {
                Some(Value::Num(self.st.obj(id).props.keys().filter(|k| !k.starts_with(HIDDEN)).count() as f64))
            }
            ObjKind::Response { url, status, .. } => match key {
                "ok" => Some(Value::Bool((200..300).contains(&status))),
                "status" => Some(Value::Num(status as f64)),
                "url" => Some(Value::Str(url)),
                "statusText" => Some(Value::str(if status == 200 { "OK" } else { "Not Found" })),
                _ => None,
            },
            ObjKind::JQuery { elems, selector } => match key {
                "length" => Some(Value::Num(elems.len() as f64)),
                "selector" => Some(Value::Str(selector)),
                k => super::builtins::array_index(k)
                    .map(|i| elems.get(i).map(|e| Value::Obj(*e)).unwrap_or(Value::Undefined)),
            },
            _ => None,
        })
    }

    /// Writes with host side effects. Returns `true` when handled.
    pub(crate) fn set_web_prop(&mut self, id: ObjId, key: &str, v: &Value) -> R<bool> {
        if id == self.g.document && key == "cookie" {
            let assignment = self.to_str(v);
            let pair = assignment.split(';').next().unwrap_or("").trim().to_string();
            let name = pair.split('=').next().unwrap_or("").to_string();
            let current = self.st.obj(id).props.get("\0cookie").map(|c| self.to_str(c)).unwrap_or_default();
            let mut parts: Vec<String> = current
                .split("; ")
                .filter(|p| !p.is_empty() && p.split('=').next() != Some(name.as_str()))
                .map(str::to_string)
                .collect();
            if !pair.is_empty() {
                parts.push(pair);
            }
            self.put(id, "\0cookie", Value::str(&parts.join("; ")));
            return Ok(true);
        }
        if matches!(self.st.obj(id).kind, ObjKind::Storage) {
            let s = self.to_str(v);
            self.put(id, key, Value::str(&s));
            return Ok(true);
        }
        Ok(false)
    }

    // ---- stubs ------------------------------------------------------------

    pub(crate) fn stub_child(&mut self, id: ObjId, path: &str, key: &str) -> Value {
        if let Some(v) = self.st.obj(id).props.get(key) {
            return v.clone();
        }
        let child_path = format!("{path}.{key}");
        let v = match child_path.trim_start_matches("browser.").trim_start_matches("chrome.") {
            "runtime.getURL" | "extension.getURL" => self.host_value(Ns::Chrome, "runtime.getURL", None),
            "runtime.getManifest" => self.host_value(Ns::Chrome, "runtime.getManifest", None),
            "runtime.id" => Value::str(&self.cfg.sample_id),
            _ => self.stub(&child_path),
        };
        self.put(id, key, v.clone());
        v
    }

    pub(crate) fn call_stub(&mut self, id: ObjId, args: Vec<Value>) -> R<Value> {
        let path = match &self.st.obj(id).kind {
            ObjKind::Stub(p) => p.clone(),
            _ => return Ok(Value::Undefined),
        };
        let terminal = path.rsplit('.').next().unwrap_or("");
        if terminal == "urlopen" && self.cfg.mode == Mode::Npm {
            return self.call_web(HostFn { ns: Ns::Global, name: "urlopen" }, Value::Undefined, args);
        }
        self.log_api(path.to_string(), &args);
        if terminal == "executeScript" {
            self.execute_script_request(&args)?;
        }
        for a in &args {
            if self.is_callable(a) {
                let cb_args = (0..3).map(|i| self.stub(&format!("{path}#{i}"))).collect();
                self.call_value(a, Value::Undefined, cb_args)?;
            }
        }
        if let Some(v) = self.st.obj(id).props.get("\0call") {
            return Ok(v.clone());
        }
        let result = self.stub(&format!("{path}()"));
        self.put(id, "\0call", result.clone());
        Ok(result)
    }

    /// `chrome.tabs.executeScript` / `chrome.scripting.executeScript` with `code` or `file(s)`.
    fn execute_script_request(&mut self, args: &[Value]) -> R<()> {
        for a in args {
            if !matches!(a, Value::Obj(id) if matches!(self.st.obj(*id).kind, ObjKind::Plain)) {
                continue;
            }
            let code = self.get_prop(a, "code")?;
            if let Value::Str(code) = code {
                self.run_child(&code, Provenance::Eval { parent: self.cur }, None, false)?;
            }
            let mut files = Vec::new();
            let file = self.get_prop(a, "file")?;
            if let Value::Str(f) = file {
                files.push(f.to_string());
            }
            let list = self.get_prop(a, "files")?;
            for f in self.list_items(&list).unwrap_or_default() {
                files.push(self.to_str(&f));
            }
            for f in files {
                let url = format!("{}{}", local_prefix(&self.cfg.sample_id), f.trim_start_matches('/'));
                let loaded = self.load_url(&url);
                self.inject(loaded, true)?;
            }
        }
        Ok(())
    }

    // ---- network and dynamic code ------------------------------------------

    pub(crate) fn load_url(&self, raw: &str) -> Loaded {
        let prefix = local_prefix(&self.cfg.sample_id);
        let abs = absolutize(raw, Some(&self.cfg.page.url));
        for cand in [raw, abs.as_str()] {
            if let Some(path) = cand.strip_prefix(&prefix) {
                let url = cand.to_string();
                return match self.cfg.local_files.get(path) {
                    Some(body) => Loaded::Local { url, path: path.to_string(), body: body.clone() },
                    None => Loaded::Missing { url },
                };
            }
        }
        let r = self.resolver.resolve(raw, Some(&self.cfg.page.url));
        let url = if self.resolver.resources.contains_key(raw) { raw.to_string() } else { r.url };
        match r.resource {
            Some(res) => Loaded::Resource { url, body: res.body, kind: res.kind },
            None => Loaded::Missing { url },
        }
    }

    /// Run a loaded body as a child script. `always` runs text resources too (script elements do).
    pub(crate) fn inject(&mut self, loaded: Loaded, always: bool) -> R<Option<String>> {
        let parent = self.cur;
        match loaded {
            Loaded::Missing { url } => {
                self.activity.push(Activity::Resource404 { url });
                Ok(None)
            }
            Loaded::Local { path, body, .. } => {
                self.run_child(&body, Provenance::Local { parent, path }, None, false)?;
                Ok(Some(body))
            }
            Loaded::Resource { url, body, kind } => {
                self.fetched.push((Rc::from(body.as_str()), url.clone()));
                if kind == ResourceKind::Script || always {
                    self.run_child(&body, Provenance::Injected { parent, url }, None, false)?;
                }
                Ok(Some(body))
            }
        }
    }

    fn provenance_for(&self, text: &str) -> (Provenance, Option<String>) {
        let parent = self.cur;
        if let Some((_, url)) = self.fetched.iter().find(|(b, _)| &**b == text) {
            return (Provenance::Injected { parent, url: url.clone() }, None);
        }
        let derived = self.hints.iter().find(|(leaf, _)| leaf == text).map(|(_, url)| url.clone());
        (Provenance::Eval { parent }, derived)
    }

    /// `eval` of a string: a child script whose completion value is returned.
    pub(crate) fn spawn_eval(&mut self, text: &str) -> R<Value> {
        let (prov, derived) = self.provenance_for(text);
        self.run_child(text, prov, derived, true)
    }

    /// Remember where parsed JSON came from so code pulled out of it keeps its origin.
    pub(crate) fn note_parsed_payload(&mut self, text: &str, parsed: &serde_json::Value, v: &Value) {
        let Some(url) = self.fetched.iter().find(|(b, _)| &**b == text).map(|(_, u)| u.clone()) else {
            return;
        };
        fn leaves(j: &serde_json::Value, out: &mut Vec<String>) {
            match j {
                serde_json::Value::String(s) => out.push(s.clone()),
                serde_json::Value::Array(a) => a.iter().for_each(|x| leaves(x, out)),
                serde_json::Value::Object(m) => m.values().for_each(|x| leaves(x, out)),
                _ => {}
            }
        }
        let mut out = Vec::new();
        leaves(parsed, &mut out);
        for leaf in out {
            if !leaf.is_empty() {
                self.hints.push((leaf, url.clone()));
            }
        }
        self.taint(v);
    }

    fn script_element_inserted(&mut self, el: ObjId) -> R<()> {
        let is_script =
            matches!(&self.st.obj(el).kind, ObjKind::Element { tag, .. } if tag.eq_ignore_ascii_case("script"));
        if !is_script || self.st.obj(el).props.contains_key("\0ran") {
            return Ok(());
        }
        self.put(el, "\0ran", Value::Bool(true));
        let props = &self.st.obj(el).props;
        let src = props.get("src").map(|v| self.to_str(v)).filter(|s| !s.is_empty());
        let inline = ["text", "textContent", "innerHTML", "innerText"]
            .iter()
            .filter_map(|k| props.get(*k).map(|v| self.to_str(v)))
            .find(|s| !s.trim().is_empty());
        if let Some(src) = src {
            let loaded = self.load_url(&src);
            self.inject(loaded, true)?;
        } else if let Some(code) = inline {
            let (prov, derived) = self.provenance_for(&code);
            self.run_child(&code, prov, derived, false)?;
        }
        Ok(())
    }

    fn detach(&mut self, node: ObjId) {
        let parent = match &self.st.obj(node).kind {
            ObjKind::Element { parent, .. } => *parent,
            _ => None,
        };
        if let Some(p) = parent {
            if let ObjKind::Element { children, .. } = &mut self.st.obj_mut(p).kind {
                children.retain(|c| *c != node);
            }
        }
        if let ObjKind::Element { parent, .. } = &mut self.st.obj_mut(node).kind {
            *parent = None;
        }
    }

    /// Insert `node` under `parent` at `index` (end when `None`), then run it if it is a script.
    fn insert_node(&mut self, parent: ObjId, node: &Value, index: Option<usize>) -> R<()> {
        let Value::Obj(n) = node else { return Ok(()) };
        let n = *n;
        if !matches!(self.st.obj(n).kind, ObjKind::Element { .. })
            || !matches!(self.st.obj(parent).kind, ObjKind::Element { .. })
            || n == parent
        {
            return Ok(());
        }
        self.detach(n);
        if let ObjKind::Element { children, .. } = &mut self.st.obj_mut(parent).kind {
            let at = index.unwrap_or(children.len()).min(children.len());
            children.insert(at, n);
        }
        if let ObjKind::Element { parent: p, .. } = &mut self.st.obj_mut(n).kind {
            *p = Some(parent);
        }
        self.script_element_inserted(n)
    }

    fn child_index(&self, parent: ObjId, child: &Value) -> Option<usize> {
        let Value::Obj(c) = child else { return None };
        match &self.st.obj(parent).kind {
            ObjKind::Element { children, .. } => children.iter().position(|x| x == c),
            _ => None,
        }
    }

    fn descendants(&self, root: ObjId) -> Vec<ObjId> {
        let mut ordered = Vec::new();
        fn walk(e: &Engine, n: ObjId, out: &mut Vec<ObjId>) {
            if let ObjKind::Element { children, .. } = &e.st.obj(n).kind {
                for c in children {
                    out.push(*c);
                    walk(e, *c, out);
                }
            }
        }
        walk(self, root, &mut ordered);
        ordered
    }

    fn matches_selector(&self, el: ObjId, sel: &str) -> bool {
        let ObjKind::Element { tag, .. } = &self.st.obj(el).kind else {
            return false;
        };
        let sel = sel.split_whitespace().last().unwrap_or("");
        if sel == "*" {
            return true;
        }
        let prop = |k: &str| self.st.obj(el).props.get(k).map(|v| self.to_str(v)).unwrap_or_default();
        let mut rest = sel;
        let tag_end = rest.find(['#', '.', '[']).unwrap_or(rest.len());
        let want_tag = &rest[..tag_end];
        if !want_tag.is_empty() && !want_tag.eq_ignore_ascii_case(tag) {
            return false;
        }
        rest = &rest[tag_end..];
        while !rest.is_empty() {
            let marker = rest.as_bytes()[0];
            let end = rest[1..].find(['#', '.', '[']).map(|i| i + 1).unwrap_or(rest.len());
            let name = &rest[1..end];
            let ok = match marker {
                b'#' => prop("id") == name,
                b'.' => prop("className").split_whitespace().any(|c| c == name),
                _ => true,
            };
            if !ok {
                return false;
            }
            rest = &rest[end..];
        }
        true
    }

    fn query(&self, root: ObjId, sel: &str) -> Vec<ObjId> {
        let sels: Vec<&str> = sel.split(',').map(str::trim).collect();
        self.descendants(root).into_iter().filter(|e| sels.iter().any(|s| self.matches_selector(*e, s))).collect()
    }

    fn query_all(&mut self, root: ObjId, sel: &str) -> Value {
        let found = self.query(root, sel).into_iter().map(Value::Obj).collect();
        self.new_array(found)
    }

    fn fire_listener(&mut self, cb: &Value, this: Value) -> R<()> {
        if self.is_callable(cb) {
            let ev = self.stub("event");
            self.call_value(cb, this, vec![ev])?;
        }
        Ok(())
    }

    fn schedule(&mut self, callback: Value, delay: f64, args: Vec<Value>) -> Value {
        let id = self.st.next_timer;
        self.st.next_timer += 1;
        self.st.timers.push_back(Timer { id, callback, args, delay, script: self.cur, site: Some(self.site) });
        Value::Num(id as f64)
    }

    fn response(&mut self, url: &str, body: &str, status: u16) -> Value {
        let o = Obj::new(ObjKind::Response { url: Rc::from(url), body: Rc::from(body), status });
        Value::Obj(self.st.alloc(o))
    }

    /// Body value handed to jQuery callbacks: parsed for JSON resources, text otherwise.
    fn jquery_body(&mut self, url: &str, body: &str, json: bool) -> Value {
        if json || url.ends_with(".json") {
            if let Ok(parsed) = serde_json::from_str::<serde_json::Value>(body) {
                let v = self.value_from_json(&parsed);
                self.note_parsed_payload(body, &parsed, &v);
                return v;
            }
        }
        Value::str(body)
    }

    // ---- host functions -----------------------------------------------------

    pub(crate) fn call_web(&mut self, f: HostFn, this: Value, args: Vec<Value>) -> R<Value> {
        let a0 = arg(&args, 0);
        match f.ns {
            Ns::Global => self.call_global(f.name, args),
            Ns::Console | Ns::Process => Ok(match f.name {
                "cwd" => Value::str("/pkg"),
                _ => Value::Undefined,
            }),
            Ns::Chrome => Ok(match f.name {
                "runtime.getURL" => {
                    let p = self.to_str(&a0);
                    Value::str(&format!("{}{}", local_prefix(&self.cfg.sample_id), p.trim_start_matches('/')))
                }
                _ => {
                    let version = self
                        .cfg
                        .local_files
                        .get("manifest.json")
                        .and_then(|m| serde_json::from_str::<serde_json::Value>(m).ok())
                        .and_then(|m| m.get("version").and_then(|v| v.as_str()).map(str::to_string))
                        .unwrap_or_else(|| "1.0.0".into());
                    self.new_object(vec![("version", Value::str(&version)), ("manifest_version", Value::Num(3.0))])
                }
            }),
            Ns::Document | Ns::Element => self.element_method(f.name, this, args),
            Ns::Storage => {
                let Value::Obj(s) = this else {
                    return Ok(Value::Undefined);
                };
                Ok(match f.name {
                    "getItem" => {
                        let k = self.to_str(&a0);
                        self.st.obj(s).props.get(k.as_str()).cloned().unwrap_or(Value::Null)
                    }
                    "setItem" => {
                        let k = self.to_str(&a0);
                        let v = self.to_str(&arg(&args, 1));
                        self.put(s, &k, Value::str(&v));
                        Value::Undefined
                    }
                    "removeItem" => {
                        let k = self.to_str(&a0);
                        self.st.obj_mut(s).props.shift_remove(k.as_str());
                        Value::Undefined
                    }
                    "clear" => {
                        self.st.obj_mut(s).props.retain(|k, _| k.starts_with(HIDDEN));
                        Value::Undefined
                    }
                    _ => {
                        let i = self.to_num(&a0) as usize;
                        let keys = self.visible_keys(s);
                        keys.get(i).map(|k| Value::Str(k.clone())).unwrap_or(Value::Null)
                    }
                })
            }
            Ns::Response => {
                let Value::Obj(r) = this else {
                    return Ok(Value::Undefined);
                };
                let ObjKind::Response { body, .. } = self.st.obj(r).kind.clone() else {
                    return Ok(Value::Undefined);
                };
                match f.name {
                    "text" => Ok(self.new_promise(Value::Str(body), false)),
                    "json" => match serde_json::from_str::<serde_json::Value>(&body) {
                        Ok(parsed) => {
                            let v = self.value_from_json(&parsed);
                            self.note_parsed_payload(&body, &parsed, &v);
                            Ok(self.new_promise(v, false))
                        }
                        Err(e) => {
                            let err = self.make_error("SyntaxError", &e.to_string());
                            Ok(self.new_promise(err, true))
                        }
                    },
                    _ => Ok(this),
                }
            }
            Ns::JQuery => self.jquery_method(f.name, this, args),
            Ns::JQueryStatic => self.jquery_static(f.name, args),
            Ns::ChildProcess => self.child_process(f.name, args),
            _ => Ok(Value::Undefined),
        }
    }

    fn call_global(&mut self, name: &str, args: Vec<Value>) -> R<Value> {
        let a0 = arg(&args, 0);
        match name {
            "setTimeout" | "setInterval" | "requestAnimationFrame" | "queueMicrotask" => {
                let delay =
                    if matches!(name, "setTimeout" | "setInterval") { self.to_num(&arg(&args, 1)) } else { 0.0 };
                let delay = if delay.is_nan() { 0.0 } else { delay };
                let extra = args.iter().skip(2).cloned().collect();
                Ok(self.schedule(a0, delay, extra))
            }
            "clearTimeout" | "clearInterval" => Ok(Value::Undefined),
            "fetch" => {
                let raw = self.to_str(&a0);
                let loaded = self.load_url(&raw);
                let resp = match &loaded {
                    Loaded::Missing { url } => {
                        let url = url.clone();
                        self.response(&url, "", 404)
                    }
                    Loaded::Resource { url, body, .. } | Loaded::Local { url, body, .. } => {
                        let (url, body) = (url.clone(), body.clone());
                        self.response(&url, &body, 200)
                    }
                };
                if !matches!(loaded, Loaded::Local { .. }) {
                    self.inject(loaded, false)?;
                }
                Ok(self.new_promise(resp, false))
            }
            "eval" => match a0 {
                Value::Str(s) => self.spawn_eval(&s),
                other => Ok(other),
            },
            "Function" => {
                let mut parts: Vec<String> = args.iter().map(|a| self.to_str(a)).collect();
                let body = parts.pop().unwrap_or_default();
                let source = format!("(function anonymous({}\n) {{\n{}\n}})", parts.join(","), body);
                let (prov, derived) = self.provenance_for(&body);
                self.run_child(&source, prov, derived, true)
            }
            "atob" => {
                let s = self.to_str(&a0);
                self.atob(&s)
            }
            "btoa" => {
                let s = self.to_str(&a0);
                self.btoa(&s)
            }
            "addEventListener" => {
                let cb = arg(&args, 1);
                let w = Value::Obj(self.g.window);
                self.fire_listener(&cb, w)?;
                Ok(Value::Undefined)
            }
            "confirm" => Ok(Value::Bool(true)),
            "prompt" | "open" => Ok(Value::Null),
            "matchMedia" => Ok(self.new_object(vec![("matches", Value::Bool(false))])),
            "getComputedStyle" => Ok(self.new_object(Vec::new())),
            "location.toString" => {
                let href = self.cfg.page.url.clone();
                Ok(Value::str(&href))
            }
            "navigator.sendBeacon" => Ok(Value::Bool(true)),
            "require" => self.require(&self.to_str(&a0)),
            "urlopen" => {
                let raw = self.to_str(&a0);
                let loaded = self.load_url(&raw);
                Ok(match self.inject(loaded, true)? {
                    Some(body) => Value::str(&body),
                    None => Value::Undefined,
                })
            }
            _ => Ok(Value::Undefined),
        }
    }

    fn element_method(&mut self, name: &str, this: Value, args: Vec<Value>) -> R<Value> {
        let Value::Obj(el) = this else {
            return Ok(Value::Undefined);
        };
        let a0 = arg(&args, 0);
        let prop = |e: &Self, k: &str| e.st.obj(el).props.get(k).map(|v| e.to_str(v)).unwrap_or_default();
        Ok(match name {
            "createElement" => {
                let tag = self.to_str(&a0).to_lowercase();
                Value::Obj(self.element(&tag, None))
            }
            "createTextNode" => Value::Obj(self.element("#text", None)),
            "getElementById" => {
                let want = self.to_str(&a0);
                let doc = self.g.document;
                self.query(doc, &format!("#{want}")).first().map(|e| Value::Obj(*e)).unwrap_or(Value::Null)
            }
            "write" | "writeln" => {
                let html = self.to_str(&a0);
                self.inject_html(&html)?;
                Value::Undefined
            }
            "hasFocus" => Value::Bool(true),
            "appendChild" => {
                self.insert_node(el, &a0, None)?;
                a0
            }
            "append" => {
                for a in &args {
                    self.insert_node(el, a, None)?;
                }
                Value::Undefined
            }
            "prepend" => {
                for (i, a) in args.iter().enumerate() {
                    self.insert_node(el, a, Some(i))?;
                }
                Value::Undefined
            }
            "insertBefore" => {
                let at = self.child_index(el, &arg(&args, 1));
                self.insert_node(el, &a0, at)?;
                a0
            }
            "replaceChild" => {
                let old = arg(&args, 1);
                let at = self.child_index(el, &old);
                if let Value::Obj(o) = old {
                    self.detach(o);
                }
                self.insert_node(el, &a0, at)?;
                arg(&args, 1)
            }
            "removeChild" => {
                if let Value::Obj(c) = a0 {
                    self.detach(c);
                }
                a0
            }
            "remove" => {
                self.detach(el);
                Value::Undefined
            }
            "setAttribute" => {
                let k = self.to_str(&a0);
                let k = if k == "class" { "className".to_string() } else { k };
                let v = self.to_str(&arg(&args, 1));
                self.put(el, &k, Value::str(&v));
                Value::Undefined
            }
            "getAttribute" => {
                let k = self.to_str(&a0);
                let k = if k == "class" { "className".to_string() } else { k };
                self.st.obj(el).props.get(k.as_str()).map(|v| Value::str(&self.to_str(v))).unwrap_or(Value::Null)
            }
            "hasAttribute" => {
                let k = self.to_str(&a0);
                Value::Bool(self.st.obj(el).props.contains_key(k.as_str()))
            }
            "removeAttribute" => {
                let k = self.to_str(&a0);
                self.st.obj_mut(el).props.shift_remove(k.as_str());
                Value::Undefined
            }
            "addEventListener" => {
                let cb = arg(&args, 1);
                self.fire_listener(&cb, Value::Obj(el))?;
                Value::Undefined
            }
            "querySelector" => {
                let sel = self.to_str(&a0);
                self.query(el, &sel).first().map(|e| Value::Obj(*e)).unwrap_or(Value::Null)
            }
            "querySelectorAll" => {
                let sel = self.to_str(&a0);
                self.query_all(el, &sel)
            }
            "getElementsByTagName" => {
                let tag = self.to_str(&a0);
                self.query_all(el, &tag)
            }
            "getElementsByClassName" => {
                let class = self.to_str(&a0);
                self.query_all(el, &format!(".{class}"))
            }
            "contains" => Value::Bool(matches!(a0, Value::Obj(c) if c == el || self.descendants(el).contains(&c))),
            "cloneNode" => {
                let tag = match &self.st.obj(el).kind {
                    ObjKind::Element { tag, .. } => tag.to_string(),
                    _ => "div".into(),
                };
                let c = self.element(&tag, None);
                let props = self.st.obj(el).props.clone();
                self.st.obj_mut(c).props = props;
                self.st.obj_mut(c).props.shift_remove("\0ran");
                Value::Obj(c)
            }
            "getBoundingClientRect" => self.new_object(vec![
                ("width", Value::Num(100.0)),
                ("height", Value::Num(20.0)),
                ("top", Value::Num(0.0)),
                ("left", Value::Num(0.0)),
            ]),
            "classList.contains" => {
                let c = self.to_str(&a0);
                Value::Bool(prop(self, "className").split_whitespace().any(|x| x == c))
            }
            "classList.add" | "classList.remove" | "classList.toggle" => {
                let c = self.to_str(&a0);
                let mut classes: Vec<String> = prop(self, "className").split_whitespace().map(str::to_string).collect();
                let had = classes.contains(&c);
                classes.retain(|x| *x != c);
                if name == "classList.add" || (name == "classList.toggle" && !had) {
                    classes.push(c);
                }
                self.put(el, "className", Value::str(&classes.join(" ")));
                Value::Undefined
            }
            _ => Value::Undefined,
        })
    }

    /// Markup handed to `document.write` or jQuery: only `<script>` tags matter.
    fn inject_html(&mut self, html: &str) -> R<()> {
        let Some(re) = self.compiled(r#"<script([^>]*)>([\s\S]*?)</script>"#, "i") else {
            return Ok(());
        };
        let src_re = self.compiled(r#"src\s*=\s*["']?([^"'\s>]+)"#, "i");
        let found: Vec<(Option<String>, String)> = re
            .captures_iter(html)
            .map(|c| {
                let attrs = c.get(1).map(|m| m.as_str()).unwrap_or("");
                let src = src_re
                    .as_ref()
                    .and_then(|r| r.captures(attrs))
                    .and_then(|s| s.get(1))
                    .map(|m| m.as_str().to_string());
                (src, c.get(2).map(|m| m.as_str().to_string()).unwrap_or_default())
            })
            .collect();
        for (src, code) in found {
            let el = self.element("script", None);
            match src {
                Some(s) => self.put(el, "src", Value::str(&s)),
                None => self.put(el, "text", Value::str(&code)),
            }
            let head = self.g.head;
            self.insert_node(head, &Value::Obj(el), None)?;
        }
        Ok(())
    }

    fn jquery_elems(&self, v: &Value) -> Vec<ObjId> {
        match v {
            Value::Obj(id) => match &self.st.obj(*id).kind {
                ObjKind::JQuery { elems, .. } => elems.clone(),
                ObjKind::Element { .. } => vec![*id],
                _ => Vec::new(),
            },
            _ => Vec::new(),
        }
    }

    fn wrap(&mut self, elems: Vec<ObjId>, selector: &str) -> Value {
        let o = Obj::new(ObjKind::JQuery { elems, selector: Rc::from(selector) });
        Value::Obj(self.st.alloc(o))
    }

    fn jquery_call(&mut self, a0: &Value) -> R<Value> {
        if self.is_callable(a0) {
            let jq = self.st.obj(self.g.window).props.get("$").cloned().unwrap_or(Value::Undefined);
            self.call_value(a0, Value::Obj(self.g.document), vec![jq])?;
            let doc = self.g.document;
            return Ok(self.wrap(vec![doc], "document"));
        }
        if let Value::Str(s) = a0 {
            let s = s.trim();
            if let Some(rest) = s.strip_prefix('<') {
                if s.to_ascii_lowercase().starts_with("<script") && s.contains("</script>") {
                    let el = self.element("script", None);
                    let src_re = self.compiled(r#"src\s*=\s*["']?([^"'\s>]+)"#, "i");
                    if let Some(src) =
                        src_re.and_then(|r| r.captures(s).and_then(|c| c.get(1).map(|m| m.as_str().to_string())))
                    {
                        self.put(el, "src", Value::str(&src));
                    } else if let (Some(a), Some(b)) = (s.find('>'), s.rfind("</script>")) {
                        if a < b {
                            self.put(el, "text", Value::str(&s[a + 1..b]));
                        }
                    }
                    return Ok(self.wrap(vec![el], s));
                }
                let tag: String = rest.chars().take_while(|c| c.is_ascii_alphanumeric()).collect();
                let el = self.element(&tag.to_lowercase(), None);
                return Ok(self.wrap(vec![el], s));
            }
            let doc = self.g.document;
            let found = self.query(doc, s);
            return Ok(self.wrap(found, s));
        }
        if let Value::Obj(id) = a0 {
            if matches!(self.st.obj(*id).kind, ObjKind::JQuery { .. }) {
                return Ok(a0.clone());
            }
        }
        let elems = self.jquery_elems(a0);
        Ok(self.wrap(elems, ""))
    }

    fn jquery_static(&mut self, name: &str, args: Vec<Value>) -> R<Value> {
        let a0 = arg(&args, 0);
        match name {
            "$" => self.jquery_call(&a0),
            "get" | "post" | "getJSON" | "getScript" | "ajax" => {
                let (url, cb, script, json) = if name == "ajax" {
                    let url = self.get_prop(&a0, "url")?;
                    let url = if url.is_nullish() { self.to_str(&a0) } else { self.to_str(&url) };
                    let cb = self.get_prop(&a0, "success")?;
                    let dt = self.get_prop(&a0, "dataType")?;
                    let dt = self.to_str(&dt);
                    (url, cb, dt == "script", dt == "json")
                } else {
                    let cb = args.iter().skip(1).find(|a| self.is_callable(a)).cloned().unwrap_or(Value::Undefined);
                    (self.to_str(&a0), cb, name == "getScript", name == "getJSON")
                };
                let loaded = self.load_url(&url);
                let (loaded_url, body, runs) = match &loaded {
                    Loaded::Missing { .. } => (String::new(), None, false),
                    Loaded::Resource { url, body, kind } => {
                        (url.clone(), Some(body.clone()), script || *kind == ResourceKind::Script)
                    }
                    Loaded::Local { url, body, path } => {
                        (url.clone(), Some(body.clone()), script || path.ends_with(".js"))
                    }
                };
                match (&loaded, runs) {
                    (Loaded::Missing { .. }, _) | (_, true) => {
                        self.inject(loaded, true)?;
                    }
                    (Loaded::Local { .. }, false) => {}
                    (_, false) => {
                        self.inject(loaded, false)?;
                    }
                }
                let Some(body) = body else {
                    return Ok(self.new_promise(Value::Undefined, true));
                };
                let data = if runs { Value::str(&body) } else { self.jquery_body(&loaded_url, &body, json) };
                if self.is_callable(&cb) {
                    self.call_value(&cb, Value::Undefined, vec![data.clone(), Value::str("success")])?;
                }
                Ok(self.new_promise(data, false))
            }
            "each" => {
                let f = arg(&args, 1);
                let items = self.list_items(&a0).unwrap_or_default();
                for (i, it) in items.into_iter().enumerate() {
                    self.call_value(&f, it.clone(), vec![Value::Num(i as f64), it])?;
                }
                Ok(a0)
            }
            "extend" => {
                let target = args.iter().find(|a| matches!(a, Value::Obj(_))).cloned().unwrap_or(Value::Undefined);
                for src in args.iter().skip_while(|a| **a != target).skip(1) {
                    if let Value::Obj(sid) = src {
                        for k in self.visible_keys(*sid) {
                            let v = self.get_prop(src, &k)?;
                            self.set_prop(&target, &k, v)?;
                        }
                    }
                }
                Ok(target)
            }
            "trim" => Ok(Value::str(self.to_str(&a0).trim())),
            "isArray" => {
                Ok(Value::Bool(matches!(&a0, Value::Obj(id) if matches!(self.st.obj(*id).kind, ObjKind::Array(_)))))
            }
            "when" => Ok(self.new_promise(a0, false)),
            _ => Ok(Value::Undefined),
        }
    }

    fn jquery_method(&mut self, name: &str, this: Value, args: Vec<Value>) -> R<Value> {
        let elems = self.jquery_elems(&this);
        let a0 = arg(&args, 0);
        let class_of =
            |e: &Self, el: ObjId| e.st.obj(el).props.get("className").map(|v| e.to_str(v)).unwrap_or_default();
        match name {
            "hasClass" => {
                let c = self.to_str(&a0);
                Ok(Value::Bool(elems.iter().any(|el| class_of(self, *el).split_whitespace().any(|x| x == c))))
            }
            "remove" => {
                for el in elems {
                    self.detach(el);
                }
                Ok(this)
            }
            "append" | "prepend" | "html" if matches!(a0, Value::Str(_)) => {
                let html = self.to_str(&a0);
                if html.to_ascii_lowercase().contains("<script") {
                    self.inject_html(&html)?;
                } else if name == "html" {
                    for el in elems {
                        self.put(el, "innerHTML", Value::str(&html));
                    }
                }
                Ok(this)
            }
            "append" | "prepend" => {
                let Some(target) = elems.first().copied() else {
                    return Ok(this);
                };
                for a in &args {
                    for (i, child) in self.jquery_elems(a).into_iter().enumerate() {
                        let at = if name == "prepend" { Some(i) } else { None };
                        self.insert_node(target, &Value::Obj(child), at)?;
                    }
                }
                Ok(this)
            }
            "appendTo" | "insertAfter" | "insertBefore" => {
                let targets = match &a0 {
                    Value::Str(_) => {
                        let wrapped = self.jquery_call(&a0)?;
                        self.jquery_elems(&wrapped)
                    }
                    other => self.jquery_elems(other),
                };
                if let Some(t) = targets.first().copied() {
                    for el in elems {
                        if name == "appendTo" {
                            self.insert_node(t, &Value::Obj(el), None)?;
                        } else {
                            let parent = match &self.st.obj(t).kind {
                                ObjKind::Element { parent: Some(p), .. } => *p,
                                _ => continue,
                            };
                            let at = self.child_index(parent, &Value::Obj(t)).map(|i| {
                                if name == "insertAfter" {
                                    i + 1
                                } else {
                                    i
                                }
                            });
                            self.insert_node(parent, &Value::Obj(el), at)?;
                        }
                    }
                }
                Ok(this)
            }
            "html" | "text" | "val" => {
                let key = match name {
                    "html" => "innerHTML",
                    "text" => "textContent",
                    _ => "value",
                };
                if args.is_empty() {
                    let v = elems.first().and_then(|e| self.st.obj(*e).props.get(key).cloned());
                    return Ok(v.unwrap_or(Value::str("")));
                }
                let s = self.to_str(&a0);
                for el in elems {
                    self.put(el, key, Value::str(&s));
                }
                Ok(this)
            }
            "attr" => {
                let k = self.to_str(&a0);
                if args.len() < 2 {
                    let v = elems.first().and_then(|e| self.st.obj(*e).props.get(k.as_str()).cloned());
                    return Ok(v.unwrap_or(Value::Undefined));
                }
                let v = self.to_str(&arg(&args, 1));
                for el in elems {
                    self.put(el, &k, Value::str(&v));
                }
                Ok(this)
            }
            "addClass" | "removeClass" => {
                let c = self.to_str(&a0);
                for el in elems {
                    let mut classes: Vec<String> = class_of(self, el).split_whitespace().map(str::to_string).collect();
                    classes.retain(|x| *x != c);
                    if name == "addClass" {
                        classes.push(c.clone());
                    }
                    self.put(el, "className", Value::str(&classes.join(" ")));
                }
                Ok(this)
            }
            "on" | "click" | "ready" | "load" | "trigger" => {
                if let Some(cb) = args.iter().find(|a| self.is_callable(a)).cloned() {
                    let target = elems.first().map(|e| Value::Obj(*e)).unwrap_or(Value::Undefined);
                    self.fire_listener(&cb, target)?;
                }
                Ok(this)
            }
            "each" => {
                for (i, el) in elems.into_iter().enumerate() {
                    self.call_value(&a0, Value::Obj(el), vec![Value::Num(i as f64), Value::Obj(el)])?;
                }
                Ok(this)
            }
            "find" => {
                let sel = self.to_str(&a0);
                let mut found = Vec::new();
                for el in elems {
                    found.extend(self.query(el, &sel));
                }
                Ok(self.wrap(found, &sel))
            }
            "get" | "eq" => {
                let i = self.to_num(&a0);
                let el = if i.is_nan() { None } else { elems.get(i as usize).copied() };
                Ok(match (name, el) {
                    ("get", Some(e)) => Value::Obj(e),
                    ("get", None) => Value::Undefined,
                    (_, e) => self.wrap(e.into_iter().collect(), ""),
                })
            }
            "first" => Ok(self.wrap(elems.into_iter().take(1).collect(), "")),
            "parent" => {
                let parents = elems
                    .iter()
                    .filter_map(|e| match &self.st.obj(*e).kind {
                        ObjKind::Element { parent, .. } => *parent,
                        _ => None,
                    })
                    .collect();
                Ok(self.wrap(parents, ""))
            }
            _ => Ok(this),
        }
    }

    fn require(&mut self, name: &str) -> R<Value> {
        let key = name.trim_start_matches("node:");
        let modules = self.g.modules;
        if let Some(v) = self.st.obj(modules).props.get(key) {
            return Ok(v.clone());
        }
        let v = if key == "child_process" {
            Value::Obj(self.g.child_process)
        } else if key.starts_with('.') || key.starts_with('/') {
            return self.require_local(key);
        } else {
            self.stub(key)
        };
        self.put(modules, key, v.clone());
        Ok(v)
    }

    fn current_dir(&self) -> String {
        let mut id = Some(self.cur);
        while let Some(i) = id {
            match &self.records[i.0 as usize].provenance {
                Provenance::Root { path } | Provenance::Local { path, .. } => {
                    return path.rsplit_once('/').map(|(d, _)| d.to_string()).unwrap_or_default();
                }
                p => id = p.parent(),
            }
        }
        String::new()
    }

    fn require_local(&mut self, spec: &str) -> R<Value> {
        let dir = self.current_dir();
        let mut parts: Vec<&str> =
            if spec.starts_with('/') { Vec::new() } else { dir.split('/').filter(|p| !p.is_empty()).collect() };
        for seg in spec.split('/') {
            match seg {
                "" | "." => {}
                ".." => {
                    parts.pop();
                }
                s => parts.push(s),
            }
        }
        let base = parts.join("/");
        let candidates = [base.clone(), format!("{base}.js"), format!("{base}/index.js")];
        let Some((path, body)) =
            candidates.iter().find_map(|c| self.cfg.local_files.get(c).map(|b| (c.clone(), b.clone())))
        else {
            return self.throw_error("Error", &format!("Cannot find module '{spec}'"));
        };
        let modules = self.g.modules;
        if let Some(v) = self.st.obj(modules).props.get(path.as_str()) {
            return Ok(v.clone());
        }
        let w = self.g.window;
        let saved_module = self.st.obj(w).props.get("module").cloned();
        let saved_exports = self.st.obj(w).props.get("exports").cloned();
        let exports = self.new_object(Vec::new());
        let module = self.new_object(vec![("exports", exports.clone())]);
        self.put(w, "module", module.clone());
        self.put(w, "exports", exports);
        self.put(modules, &path, Value::Undefined);
        let r = self.run_child(&body, Provenance::Local { parent: self.cur, path: path.clone() }, None, false);
        let result = self.get_prop(&module, "exports")?;
        self.put(modules, &path, result.clone());
        if let Some(m) = saved_module {
            self.put(w, "module", m);
        }
        if let Some(e) = saved_exports {
            self.put(w, "exports", e);
        }
        r?;
        Ok(result)
    }

    fn child_process(&mut self, name: &str, args: Vec<Value>) -> R<Value> {
        if self.cfg.mode != Mode::Npm {
            return Ok(Value::Undefined);
        }
        let a0 = arg(&args, 0);
        let mut cmd = self.to_str(&a0);
        if matches!(name, "execFile" | "execFileSync" | "spawn" | "spawnSync" | "fork") {
            if let Some(extra) = args.get(1).and_then(|a| self.list_items(a)) {
                for x in extra {
                    cmd.push(' ');
                    cmd.push_str(&self.to_str(&x));
                }
            }
        }
        self.activity.push(Activity::Command { cmd: cmd.clone() });
        let fixture = self.resolver.command(&cmd);
        if !fixture.stdout.is_empty() {
            self.command_outputs.push((fixture.stdout.clone(), cmd.clone()));
        }
        let stdout = Value::str(&fixture.stdout);
        let stderr = Value::str(&fixture.stderr);
        match name {
            "execSync" | "execFileSync" => {
                if fixture.code != 0 {
                    return self.throw_error("Error", &format!("Command failed: {cmd}"));
                }
                Ok(stdout)
            }
            "spawnSync" => Ok(self.new_object(vec![
                ("stdout", stdout),
                ("stderr", stderr),
                ("status", Value::Num(fixture.code as f64)),
            ])),
            "spawn" | "fork" => Ok(self.stub(&format!("child_process.{name}()"))),
            _ => {
                let err = if fixture.code != 0 {
                    self.make_error("Error", &format!("Command failed: {cmd}"))
                } else {
                    Value::Null
                };
                if let Some(cb) = args.iter().rev().find(|a| self.is_callable(a)).cloned() {
                    self.call_value(&cb, Value::Undefined, vec![err, stdout, stderr])?;
                }
                Ok(self.stub(&format!("child_process.{name}()")))
            }
        }
    }
}
