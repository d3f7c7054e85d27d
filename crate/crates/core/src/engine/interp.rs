//! Statement and expression evaluation, including forced execution of marked conditions.

use std::collections::BTreeSet;
use std::rc::Rc;

use crate::frontend::{DeclKind, Lit, Node, NodeKind, Op, Payload};
use crate::scanner::ScanResult;
use crate::tracker::{Activity, BranchOutcome, ExecutedIn, ForcedExecEvent};

use super::value::*;
use super::Engine;

/// An object (or scope holder) and a property key.
type Slot = (Value, Rc<str>);

pub(crate) enum Flow {
    Normal,
    Return(Value),
    Break,
    Continue,
}

#[derive(Debug, Clone)]
pub(crate) enum Abort {
    Throw(Value),
    Budget,
}

pub(crate) type R<T> = Result<T, Abort>;

/// Values read while evaluating a guard that reveal what the guard depends on.
#[derive(Debug, Default, Clone)]
pub(crate) struct GuardWatch {
    pub sources: Vec<String>,
    pub server: bool,
}

pub(crate) struct FuncDef {
    pub node: Node,
    pub script: crate::tracker::ScriptId,
    pub var_names: Vec<Rc<str>>,
}

/// `var` names declared in a statement list, not looking into nested functions.
pub(crate) fn var_names(stmts: &[Node]) -> Vec<Rc<str>> {
    fn visit(n: &Node, out: &mut Vec<Rc<str>>) {
        match n.kind {
            NodeKind::FunctionDeclaration | NodeKind::FunctionLiteral => {}
            NodeKind::VariableDeclaration => {
                if n.payload == Payload::Decl(DeclKind::Var) {
                    for d in &n.children {
                        if let Some(name) = d.name() {
                            out.push(Rc::from(name));
                        }
                    }
                }
            }
            NodeKind::ForInStatement | NodeKind::ForOfStatement => {
                if let Payload::ForBinding { decl: Some(DeclKind::Var), name } = &n.payload {
                    out.push(Rc::from(name.as_str()));
                }
                n.children.iter().for_each(|c| visit(c, out));
            }
            _ if n.kind.is_statement() || matches!(n.kind, NodeKind::SwitchCase) => {
                n.children.iter().for_each(|c| visit(c, out));
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    stmts.iter().for_each(|s| visit(s, &mut out));
    out
}

fn needs_block_scope(stmts: &[Node]) -> bool {
    stmts.iter().any(|s| {
        s.kind == NodeKind::FunctionDeclaration
            || (s.kind == NodeKind::VariableDeclaration && s.payload != Payload::Decl(DeclKind::Var))
    })
}

impl Engine {
    // ---- bookkeeping ------------------------------------------------------

    #[inline]
    pub(crate) fn tick(&mut self, n: &Node) -> R<()> {
        if self.steps >= self.cfg.step_budget {
            return Err(Abort::Budget);
        }
        self.steps += 1;
        let line = n.span.start_line;
        if self.line_mark != (self.cur.0, line) {
            self.line_mark = (self.cur.0, line);
            if let Some(r) = self.records.get_mut(self.cur.0 as usize) {
                r.executed_lines.insert(line);
            }
            if let Some(top) = self.branch_lines.last_mut() {
                top.insert(line);
            }
        }
        Ok(())
    }

    pub(crate) fn throw_error<T>(&mut self, name: &str, message: &str) -> R<T> {
        let e = self.make_error(name, message);
        Err(Abort::Throw(e))
    }

    pub(crate) fn make_error(&mut self, name: &str, message: &str) -> Value {
        let mut o = Obj::new(ObjKind::Error);
        o.props.insert(Rc::from("name"), Value::str(name));
        o.props.insert(Rc::from("message"), Value::str(message));
        o.props.insert(Rc::from("stack"), Value::str(&format!("{name}: {message}")));
        Value::Obj(self.st.alloc(o))
    }

    fn note_guard_read(&mut self, v: &Value) {
        let Some(w) = self.guard_watch.as_mut() else {
            return;
        };
        match v {
            Value::Str(s) if !s.is_empty() => {
                for (out, cmd) in &self.command_outputs {
                    if out.trim() == s.trim() && !w.sources.contains(cmd) {
                        w.sources.push(cmd.clone());
                    }
                }
                if s.len() >= 2 && self.fetched.iter().any(|(body, _)| body.contains(&**s)) {
                    w.server = true;
                }
            }
            Value::Obj(id)
                if self.st.obj(*id).props.contains_key(super::builtins::TAINT)
                    || matches!(self.st.obj(*id).kind, ObjKind::Response { .. }) =>
            {
                w.server = true;
            }
            _ => {}
        }
    }

    fn eval_guard(&mut self, n: &Node) -> R<(Value, GuardWatch)> {
        let prev = self.guard_watch.replace(GuardWatch::default());
        let r = self.eval(n);
        let w = std::mem::replace(&mut self.guard_watch, prev).unwrap_or_default();
        if let Some(outer) = self.guard_watch.as_mut() {
            outer.sources.extend(w.sources.iter().cloned());
            outer.server |= w.server;
        }
        Ok((r?, w))
    }

    fn marked(&self, n: &Node) -> Option<ScanResult> {
        if !self.cfg.options.apply_plan {
            return None;
        }
        self.cur_plan.get(n).cloned()
    }

    /// Run `body` against `snapshot`, then put the live state back. Writes made by `body` are
    /// discarded; observations (records, logs) are kept.
    pub(crate) fn run_forced(
        &mut self,
        snapshot: State,
        branch: String,
        body: impl FnOnce(&mut Self) -> R<()>,
    ) -> R<BranchOutcome> {
        let live = std::mem::replace(&mut self.st, snapshot);
        let (scope, cur, plan, depth) = (self.scope, self.cur, self.cur_plan.clone(), self.call_depth);
        let watermark = self.st.next_timer;
        self.branch_lines.push(BTreeSet::new());
        let mut r = body(self);
        if r.is_ok() && self.cfg.options.fire_timers {
            r = self.drain_timers(watermark);
        }
        let lines = self.branch_lines.pop().unwrap_or_default();
        self.st = live;
        self.scope = scope;
        self.cur = cur;
        self.cur_plan = plan;
        self.call_depth = depth;
        self.line_mark = (u32::MAX, 0);
        let threw = match r {
            Ok(()) => None,
            Err(Abort::Budget) => return Err(Abort::Budget),
            Err(Abort::Throw(v)) => Some(self.summary(&v)),
        };
        Ok(BranchOutcome { branch, executed_in: ExecutedIn::Clone, threw, lines_executed: lines })
    }

    fn live_outcome(&self, branch: &str) -> BranchOutcome {
        BranchOutcome {
            branch: branch.to_string(),
            executed_in: ExecutedIn::Live,
            threw: None,
            lines_executed: BTreeSet::new(),
        }
    }

    pub(crate) fn emit_forced(
        &mut self,
        n: &Node,
        scan: &ScanResult,
        guard: String,
        watch: GuardWatch,
        branches: Vec<BranchOutcome>,
    ) {
        self.activity.push(Activity::Forced(ForcedExecEvent {
            script: self.cur,
            condition_span: n.span,
            node_kind: n.kind,
            kind: scan.kind,
            apis_found: scan.apis_found.clone(),
            nodes_visited: scan.nodes_visited,
            guard,
            branches,
            guard_sources: watch.sources,
            server_dependent: watch.server,
        }));
    }

    // ---- scopes -----------------------------------------------------------

    pub(crate) fn declare(&mut self, scope: ScopeId, name: Rc<str>, v: Value) {
        if scope == self.global_scope {
            let w = self.g.window;
            self.st.obj_mut(w).props.insert(name, v);
        } else {
            self.st.scopes[scope.0].vars.insert(name, v);
        }
    }

    fn declare_lexical(&mut self, name: Rc<str>, v: Value) {
        let s = self.scope;
        self.st.scopes[s.0].vars.insert(name, v);
    }

    pub(crate) fn hoist(&mut self, scope: ScopeId, names: &[Rc<str>]) {
        for n in names {
            let exists = if scope == self.global_scope {
                self.st.obj(self.g.window).props.contains_key(n)
            } else {
                self.st.scopes[scope.0].vars.contains_key(n)
            };
            if !exists {
                self.declare(scope, n.clone(), Value::Undefined);
            }
        }
    }

    pub(crate) fn hoist_functions(&mut self, scope: ScopeId, stmts: &[Node]) {
        for s in stmts {
            if s.kind == NodeKind::FunctionDeclaration {
                let f = self.make_closure(s);
                if let Some(name) = s.name() {
                    self.declare(scope, Rc::from(name), f);
                }
            }
        }
    }

    fn lookup(&self, name: &str) -> Option<Value> {
        let mut s = Some(self.scope);
        while let Some(id) = s {
            let sc = &self.st.scopes[id.0];
            if let Some(v) = sc.vars.get(name) {
                return Some(v.clone());
            }
            s = sc.parent;
        }
        self.st.obj(self.g.window).props.get(name).cloned()
    }

    pub(crate) fn this_value(&self) -> Value {
        let mut s = Some(self.scope);
        while let Some(id) = s {
            let sc = &self.st.scopes[id.0];
            if let Some(t) = &sc.this {
                return t.clone();
            }
            s = sc.parent;
        }
        Value::Obj(self.g.window)
    }

    fn get_var(&mut self, name: &str) -> R<Value> {
        if name == "this" {
            return Ok(self.this_value());
        }
        match self.lookup(name) {
            Some(v) => Ok(v),
            None => self.throw_error("ReferenceError", &format!("{name} is not defined")),
        }
    }

    pub(crate) fn set_var(&mut self, name: &str, v: Value) {
        let mut s = Some(self.scope);
        while let Some(id) = s {
            let sc = &mut self.st.scopes[id.0];
            if let Some(slot) = sc.vars.get_mut(name) {
                *slot = v;
                return;
            }
            s = sc.parent;
        }
        let w = self.g.window;
        self.st.obj_mut(w).props.insert(Rc::from(name), v);
    }

    // ---- functions --------------------------------------------------------

    pub(crate) fn make_closure(&mut self, n: &Node) -> Value {
        let key = n as *const Node as usize;
        let fid = match self.func_cache.get(&key) {
            Some(f) => *f,
            None => {
                let body: &[Node] = match n.function_info() {
                    Some(i) if i.expression_body => &[],
                    _ => &n.children[0].children,
                };
                let def = FuncDef { node: n.clone(), script: self.cur, var_names: var_names(body) };
                self.funcs.push(Rc::new(def));
                let id = FuncId(self.funcs.len() - 1);
                self.func_cache.insert(key, id);
                // The clone has its own addresses; map them too so nested literals resolve once.
                let cloned = &self.funcs[id.0].node as *const Node as usize;
                self.func_cache.insert(cloned, id);
                id
            }
        };
        let name = match n.function_info() {
            Some(i) if n.kind == NodeKind::FunctionLiteral && !i.arrow => i.name.clone(),
            _ => None,
        };
        let Some(name) = name else {
            return Value::Obj(self.st.alloc(Obj::new(ObjKind::Closure { func: fid, env: self.scope })));
        };
        // A named function expression sees its own name.
        let env = self.st.new_scope(Some(self.scope), None);
        let f = Value::Obj(self.st.alloc(Obj::new(ObjKind::Closure { func: fid, env })));
        self.st.scopes[env.0].vars.insert(Rc::from(name.as_str()), f.clone());
        f
    }

    pub(crate) fn call_closure(&mut self, fid: FuncId, env: ScopeId, this: Value, args: Vec<Value>) -> R<Value> {
        if self.call_depth >= self.cfg.max_call_depth {
            return self.throw_error("RangeError", "Maximum call stack size exceeded");
        }
        let def = self.funcs[fid.0].clone();
        let info = def.node.function_info().cloned().unwrap_or(crate::frontend::FunctionInfo {
            name: None,
            params: Vec::new(),
            arrow: false,
            expression_body: false,
        });
        let this = if info.arrow {
            None
        } else if this.is_nullish() {
            Some(Value::Obj(self.g.window))
        } else {
            Some(this)
        };
        let scope = self.st.new_scope(Some(env), this);
        for (i, p) in info.params.iter().enumerate() {
            let v = args.get(i).cloned().unwrap_or(Value::Undefined);
            self.st.scopes[scope.0].vars.insert(Rc::from(p.as_str()), v);
        }
        if !info.arrow {
            let id = self.st.alloc(Obj::new(ObjKind::Array(args)));
            self.st.scopes[scope.0].vars.insert(Rc::from("arguments"), Value::Obj(id));
        }
        let saved = (self.scope, self.cur, self.cur_plan.clone());
        self.scope = scope;
        if def.script != self.cur {
            self.cur = def.script;
            self.cur_plan = self.plans[def.script.0 as usize].clone();
            self.line_mark = (u32::MAX, 0);
        }
        self.call_depth += 1;
        let body = &def.node.children[0];
        let r = if info.expression_body {
            self.eval(body)
        } else {
            self.hoist(scope, &def.var_names);
            self.hoist_functions(scope, &body.children);
            self.exec_list(&body.children).map(|f| match f {
                Flow::Return(v) => v,
                _ => Value::Undefined,
            })
        };
        self.call_depth -= 1;
        self.scope = saved.0;
        if self.cur != saved.1 {
            self.line_mark = (u32::MAX, 0);
        }
        self.cur = saved.1;
        self.cur_plan = saved.2;
        r
    }

    /// Call any callable value.
    pub(crate) fn call_value(&mut self, f: &Value, this: Value, args: Vec<Value>) -> R<Value> {
        let Value::Obj(id) = f else {
            let what = self.summary(f);
            return self.throw_error("TypeError", &format!("{what} is not a function"));
        };
        match self.st.obj(*id).kind.clone() {
            ObjKind::Closure { func, env } => self.call_closure(func, env, this, args),
            ObjKind::Host { f, this: bound } => {
                let this = bound.unwrap_or(this);
                self.call_host(f, this, args)
            }
            ObjKind::Bound { target, this: bthis, args: bargs } => {
                let mut all = bargs;
                all.extend(args);
                self.call_value(&Value::Obj(target), bthis, all)
            }
            ObjKind::Stub(_) => self.call_stub(*id, args),
            _ => {
                let what = self.summary(f);
                self.throw_error("TypeError", &format!("{what} is not a function"))
            }
        }
    }

    pub(crate) fn construct(&mut self, f: &Value, args: Vec<Value>) -> R<Value> {
        let Value::Obj(id) = f else {
            let what = self.summary(f);
            return self.throw_error("TypeError", &format!("{what} is not a constructor"));
        };
        match self.st.obj(*id).kind.clone() {
            ObjKind::Closure { func, env } => {
                let proto = self.prototype_of_fn(*id);
                let mut o = Obj::new(ObjKind::Plain);
                o.proto = Some(proto);
                let this = Value::Obj(self.st.alloc(o));
                let r = self.call_closure(func, env, this.clone(), args)?;
                Ok(if matches!(r, Value::Obj(_)) { r } else { this })
            }
            ObjKind::Host { f, .. } => self.construct_host(f, args),
            ObjKind::Stub(_) => self.call_stub(*id, args),
            ObjKind::Bound { target, args: bargs, .. } => {
                let mut all = bargs;
                all.extend(args);
                self.construct(&Value::Obj(target), all)
            }
            _ => {
                let what = self.summary(f);
                self.throw_error("TypeError", &format!("{what} is not a constructor"))
            }
        }
    }

    pub(crate) fn prototype_of_fn(&mut self, f: ObjId) -> ObjId {
        if let Some(Value::Obj(p)) = self.st.obj(f).props.get("prototype") {
            return *p;
        }
        let mut p = Obj::new(ObjKind::Plain);
        p.props.insert(Rc::from("constructor"), Value::Obj(f));
        let pid = self.st.alloc(p);
        self.st.obj_mut(f).props.insert(Rc::from("prototype"), Value::Obj(pid));
        pid
    }

    // ---- statements -------------------------------------------------------

    pub(crate) fn exec_list(&mut self, stmts: &[Node]) -> R<Flow> {
        for s in stmts {
            match self.exec(s)? {
                Flow::Normal => {}
                other => return Ok(other),
            }
        }
        Ok(Flow::Normal)
    }

    fn exec_block(&mut self, n: &Node) -> R<Flow> {
        if needs_block_scope(&n.children) {
            let saved = self.scope;
            self.scope = self.st.new_scope(Some(saved), None);
            let s = self.scope;
            self.hoist_functions(s, &n.children);
            let r = self.exec_list(&n.children);
            self.scope = saved;
            r
        } else {
            self.exec_list(&n.children)
        }
    }

    fn exec_var_decl(&mut self, n: &Node) -> R<()> {
        let var = n.payload == Payload::Decl(DeclKind::Var);
        for d in &n.children {
            self.tick(d)?;
            let Some(name) = d.name() else { continue };
            match d.children.first() {
                Some(init) => {
                    let v = self.eval(init)?;
                    self.name_function(&v, name);
                    if var {
                        self.set_var(name, v);
                    } else {
                        self.declare_lexical(Rc::from(name), v);
                    }
                }
                None if !var => self.declare_lexical(Rc::from(name), Value::Undefined),
                None => {}
            }
        }
        Ok(())
    }

    fn name_function(&mut self, v: &Value, name: &str) {
        if let Value::Obj(id) = v {
            if matches!(self.st.obj(*id).kind, ObjKind::Closure { .. }) && !self.st.obj(*id).props.contains_key("name")
            {
                self.st.obj_mut(*id).props.insert(Rc::from("name"), Value::str(name));
            }
        }
    }

    pub(crate) fn exec(&mut self, n: &Node) -> R<Flow> {
        self.tick(n)?;
        let c = &n.children;
        match n.kind {
            NodeKind::Program => self.exec_list(c),
            NodeKind::Block => self.exec_block(n),
            NodeKind::EmptyStatement => Ok(Flow::Normal),
            NodeKind::ExpressionStatement => {
                let v = self.eval(&c[0])?;
                self.completion = v;
                Ok(Flow::Normal)
            }
            NodeKind::VariableDeclaration => {
                self.exec_var_decl(n)?;
                Ok(Flow::Normal)
            }
            NodeKind::FunctionDeclaration => {
                // Already bound when its scope was entered, unless declared in a nested block.
                if let Some(name) = n.name() {
                    if self.lookup(name).is_none() {
                        let f = self.make_closure(n);
                        self.declare_lexical(Rc::from(name), f);
                    }
                }
                Ok(Flow::Normal)
            }
            NodeKind::Return => {
                let v = match c.first() {
                    Some(e) => self.eval(e)?,
                    None => Value::Undefined,
                };
                Ok(Flow::Return(v))
            }
            NodeKind::Break => Ok(Flow::Break),
            NodeKind::Continue => Ok(Flow::Continue),
            NodeKind::Throw => {
                let v = self.eval(&c[0])?;
                Err(Abort::Throw(v))
            }
            NodeKind::IfStatement => self.exec_if(n),
            NodeKind::WhileStatement => self.exec_while(n),
            NodeKind::DoWhileStatement => self.exec_do_while(n),
            NodeKind::ForStatement => self.exec_for(n),
            NodeKind::ForInStatement | NodeKind::ForOfStatement => self.exec_for_in_of(n),
            NodeKind::SwitchStatement => self.exec_switch(n),
            NodeKind::TryCatchStatement => self.exec_try(n),
            _ => {
                let v = self.eval(n)?;
                self.completion = v;
                Ok(Flow::Normal)
            }
        }
    }

    fn exec_if(&mut self, n: &Node) -> R<Flow> {
        let c = &n.children;
        let Some(scan) = self.marked(n) else {
            let t = self.eval(&c[0])?;
            return if self.truthy(&t) {
                self.exec(&c[1])
            } else if let Some(alt) = c.get(2) {
                self.exec(alt)
            } else {
                Ok(Flow::Normal)
            };
        };
        let (g, watch) = self.eval_guard(&c[0])?;
        let taken = self.truthy(&g);
        let snapshot = self.st.clone();
        let (live_idx, other_idx) = if taken { (1, 2) } else { (2, 1) };
        let live = match c.get(live_idx) {
            Some(b) => self.exec(b),
            None => Ok(Flow::Normal),
        };
        if matches!(live, Err(Abort::Budget)) {
            return live;
        }
        let mut branches = Vec::new();
        if c.get(live_idx).is_some() {
            branches.push(self.live_outcome(if taken { "consequent" } else { "alternate" }));
        }
        if let Some(other) = c.get(other_idx) {
            let label = if taken { "alternate" } else { "consequent" };
            branches.push(self.run_forced(snapshot, label.into(), |e| e.exec(other).map(|_| ()))?);
        }
        let gs = self.summary(&g);
        self.emit_forced(n, &scan, gs, watch, branches);
        live
    }

    fn loop_body(&mut self, body: &Node) -> R<Option<Flow>> {
        match self.exec(body)? {
            Flow::Break => Ok(Some(Flow::Normal)),
            Flow::Return(v) => Ok(Some(Flow::Return(v))),
            Flow::Normal | Flow::Continue => Ok(None),
        }
    }

    fn exec_while(&mut self, n: &Node) -> R<Flow> {
        let (test, body) = (&n.children[0], &n.children[1]);
        let mut first = true;
        loop {
            let t = if first {
                first = false;
                if let Some(scan) = self.marked(n) {
                    let (g, watch) = self.eval_guard(test)?;
                    let t = self.truthy(&g);
                    let branches = if t {
                        vec![self.live_outcome("body")]
                    } else {
                        let snap = self.st.clone();
                        vec![self.run_forced(snap, "body".into(), |e| e.exec(body).map(|_| ()))?]
                    };
                    let gs = self.summary(&g);
                    self.emit_forced(n, &scan, gs, watch, branches);
                    t
                } else {
                    let g = self.eval(test)?;
                    self.truthy(&g)
                }
            } else {
                let g = self.eval(test)?;
                self.truthy(&g)
            };
            if !t {
                return Ok(Flow::Normal);
            }
            if let Some(f) = self.loop_body(body)? {
                return Ok(f);
            }
        }
    }

    fn exec_do_while(&mut self, n: &Node) -> R<Flow> {
        let (body, test) = (&n.children[0], &n.children[1]);
        let scan = self.marked(n);
        let mut first = true;
        loop {
            if let Some(f) = self.loop_body(body)? {
                return Ok(f);
            }
            let (g, watch) = if first && scan.is_some() {
                self.eval_guard(test)?
            } else {
                (self.eval(test)?, GuardWatch::default())
            };
            let t = self.truthy(&g);
            if first {
                first = false;
                if let Some(scan) = &scan {
                    let mut branches = vec![self.live_outcome("body")];
                    if !t {
                        let snap = self.st.clone();
                        branches.push(self.run_forced(snap, "body".into(), |e| e.exec(body).map(|_| ()))?);
                    }
                    let gs = self.summary(&g);
                    self.emit_forced(n, scan, gs, watch, branches);
                }
            }
            if !t {
                return Ok(Flow::Normal);
            }
        }
    }

    fn exec_for(&mut self, n: &Node) -> R<Flow> {
        let Payload::For { init, test, update } = n.payload else {
            return Ok(Flow::Normal);
        };
        let c = &n.children;
        let mut i = 0;
        let saved = self.scope;
        self.scope = self.st.new_scope(Some(saved), None);
        let r = (|| {
            if init {
                let node = &c[i];
                if node.kind == NodeKind::VariableDeclaration {
                    self.tick(node)?;
                    self.exec_var_decl(node)?;
                } else {
                    self.exec(node)?;
                }
                i += 1;
            }
            let test_node = if test {
                i += 1;
                Some(&c[i - 1])
            } else {
                None
            };
            let update_node = if update {
                i += 1;
                Some(&c[i - 1])
            } else {
                None
            };
            let body = &c[i];
            let scan = self.marked(n);
            let mut first = true;
            loop {
                let t = match test_node {
                    None => true,
                    Some(tn) => {
                        if first && scan.is_some() {
                            let (g, watch) = self.eval_guard(tn)?;
                            let t = self.truthy(&g);
                            let branches = if t {
                                vec![self.live_outcome("body")]
                            } else {
                                let snap = self.st.clone();
                                vec![self.run_forced(snap, "body".into(), |e| e.exec(body).map(|_| ()))?]
                            };
                            let gs = self.summary(&g);
                            if let Some(s) = &scan {
                                self.emit_forced(n, s, gs, watch, branches);
                            }
                            t
                        } else {
                            let g = self.eval(tn)?;
                            self.truthy(&g)
                        }
                    }
                };
                if first && test_node.is_none() {
                    if let Some(s) = &scan {
                        self.emit_forced(n, s, "true".into(), GuardWatch::default(), vec![self.live_outcome("body")]);
                    }
                }
                first = false;
                if !t {
                    return Ok(Flow::Normal);
                }
                if let Some(f) = self.loop_body(body)? {
                    return Ok(f);
                }
                if let Some(u) = update_node {
                    self.eval(u)?;
                }
            }
        })();
        self.scope = saved;
        r
    }

    fn iteration_items(&mut self, n: &Node, v: &Value) -> R<Vec<Value>> {
        let of = n.kind == NodeKind::ForOfStatement;
        Ok(match v {
            Value::Str(s) => {
                if of {
                    s.chars().map(|c| Value::str(&c.to_string())).collect()
                } else {
                    (0..s.chars().count()).map(|i| Value::str(&i.to_string())).collect()
                }
            }
            Value::Obj(id) => {
                let o = self.st.obj(*id);
                match (&o.kind, of) {
                    (ObjKind::Array(items), true) => items.clone(),
                    (ObjKind::JQuery { elems, .. }, true) => elems.iter().map(|e| Value::Obj(*e)).collect(),
                    (ObjKind::Array(items), false) => {
                        let mut keys: Vec<Value> = (0..items.len()).map(|i| Value::str(&i.to_string())).collect();
                        keys.extend(
                            o.props
                                .keys()
                                .filter(|k| !k.starts_with(super::builtins::HIDDEN))
                                .map(|k| Value::Str(k.clone())),
                        );
                        keys
                    }
                    (_, false) => o
                        .props
                        .keys()
                        .filter(|k| !k.starts_with(super::builtins::HIDDEN))
                        .map(|k| Value::Str(k.clone()))
                        .collect(),
                    (_, true) => {
                        let what = self.summary(v);
                        return self.throw_error("TypeError", &format!("{what} is not iterable"));
                    }
                }
            }
            Value::Undefined | Value::Null if !of => Vec::new(),
            _ => {
                let what = self.summary(v);
                return self.throw_error("TypeError", &format!("{what} is not iterable"));
            }
        })
    }

    fn bind_loop_var(&mut self, decl: Option<DeclKind>, name: &str, v: Value) {
        match decl {
            Some(DeclKind::Let) | Some(DeclKind::Const) => self.declare_lexical(Rc::from(name), v),
            _ => self.set_var(name, v),
        }
    }

    fn exec_for_in_of(&mut self, n: &Node) -> R<Flow> {
        let Payload::ForBinding { decl, name } = &n.payload else {
            return Ok(Flow::Normal);
        };
        let (iter_node, body) = (&n.children[0], &n.children[1]);
        let scan = self.marked(n);
        let (iterable, watch) =
            if scan.is_some() { self.eval_guard(iter_node)? } else { (self.eval(iter_node)?, GuardWatch::default()) };
        let items = self.iteration_items(n, &iterable)?;
        let saved = self.scope;
        self.scope = self.st.new_scope(Some(saved), None);
        let r = (|| {
            if let Some(scan) = &scan {
                let branches = if items.is_empty() {
                    let snap = self.st.clone();
                    vec![self.run_forced(snap, "body".into(), |e| {
                        e.bind_loop_var(*decl, name, Value::Undefined);
                        e.exec(body).map(|_| ())
                    })?]
                } else {
                    vec![self.live_outcome("body")]
                };
                let gs = format!("{} item(s)", items.len());
                self.emit_forced(n, scan, gs, watch, branches);
            }
            for item in items {
                self.bind_loop_var(*decl, name, item);
                if let Some(f) = self.loop_body(body)? {
                    return Ok(f);
                }
            }
            Ok(Flow::Normal)
        })();
        self.scope = saved;
        r
    }

    fn exec_case_body(&mut self, case: &Node) -> R<Flow> {
        let default = matches!(case.payload, Payload::Case { default: true });
        let stmts = if default { &case.children[..] } else { &case.children[1..] };
        self.exec_list(stmts)
    }

    fn exec_switch(&mut self, n: &Node) -> R<Flow> {
        let c = &n.children;
        let scan = self.marked(n);
        let (d, watch) =
            if scan.is_some() { self.eval_guard(&c[0])? } else { (self.eval(&c[0])?, GuardWatch::default()) };
        let cases = &c[1..];
        let mut start = None;
        for (i, case) in cases.iter().enumerate() {
            if let Payload::Case { default: false } = case.payload {
                self.tick(case)?;
                let t = self.eval(&case.children[0])?;
                if self.strict_eq(&d, &t) {
                    start = Some(i);
                    break;
                }
            }
        }
        if start.is_none() {
            start = cases.iter().position(|cs| matches!(cs.payload, Payload::Case { default: true }));
        }
        let snapshot = scan.as_ref().map(|_| self.st.clone());
        let mut ran = Vec::new();
        let mut result = Ok(Flow::Normal);
        if let Some(s) = start {
            for (i, case) in cases.iter().enumerate().skip(s) {
                ran.push(i);
                match self.exec_case_body(case) {
                    Ok(Flow::Normal) | Ok(Flow::Continue) if false => {}
                    Ok(Flow::Normal) => continue,
                    Ok(Flow::Break) => break,
                    other => {
                        result = other;
                        break;
                    }
                }
            }
        }
        if matches!(result, Err(Abort::Budget)) {
            return result;
        }
        if let (Some(scan), Some(snapshot)) = (scan, snapshot) {
            let mut branches: Vec<BranchOutcome> =
                ran.iter().map(|i| self.live_outcome(&format!("case {i}"))).collect();
            for (i, case) in cases.iter().enumerate() {
                if ran.contains(&i) {
                    continue;
                }
                let snap = snapshot.clone();
                branches.push(self.run_forced(snap, format!("case {i}"), |e| e.exec_case_body(case).map(|_| ()))?);
            }
            let gs = self.summary(&d);
            self.emit_forced(n, &scan, gs, watch, branches);
        }
        result
    }

    fn exec_catch(&mut self, handler: &Node, param: &Option<String>, err: Value) -> R<Flow> {
        let saved = self.scope;
        self.scope = self.st.new_scope(Some(saved), None);
        if let Some(p) = param {
            self.declare_lexical(Rc::from(p.as_str()), err);
        }
        let r = self.exec(handler);
        self.scope = saved;
        r
    }

    fn exec_try(&mut self, n: &Node) -> R<Flow> {
        let Payload::Try { param, has_catch, has_finally } = &n.payload else {
            return Ok(Flow::Normal);
        };
        let c = &n.children;
        let scan = self.marked(n);
        let snapshot = scan.as_ref().map(|_| self.st.clone());
        let block = self.exec(&c[0]);
        let mut branches = Vec::new();
        let mut result = match block {
            Err(Abort::Budget) => return Err(Abort::Budget),
            Err(Abort::Throw(e)) if *has_catch => {
                branches.push(self.live_outcome("try"));
                branches.push(self.live_outcome("catch"));
                self.exec_catch(&c[1], param, e)
            }
            other => {
                branches.push(self.live_outcome("try"));
                if other.is_ok() && *has_catch {
                    if let Some(snap) = snapshot {
                        let handler = &c[1];
                        branches.push(self.run_forced(snap, "catch".into(), |e| {
                            let err = e.make_error("Error", "forced");
                            e.exec_catch(handler, param, err).map(|_| ())
                        })?);
                    }
                }
                other
            }
        };
        if matches!(result, Err(Abort::Budget)) {
            return result;
        }
        if *has_finally {
            let fin = &c[if *has_catch { 2 } else { 1 }];
            match self.exec(fin)? {
                Flow::Normal => {}
                abrupt => result = Ok(abrupt),
            }
        }
        if let Some(scan) = scan {
            self.emit_forced(n, &scan, "no guard".into(), GuardWatch::default(), branches);
        }
        result
    }

    // ---- expressions ------------------------------------------------------

    fn member_key(&mut self, n: &Node) -> R<Rc<str>> {
        match n.children.get(1) {
            None => Ok(Rc::from(n.name().unwrap_or(""))),
            Some(k) => {
                let v = self.eval(k)?;
                Ok(Rc::from(self.to_str(&v).as_str()))
            }
        }
    }

    fn eval_args(&mut self, nodes: &[Node]) -> R<Vec<Value>> {
        let mut out = Vec::with_capacity(nodes.len());
        for a in nodes {
            out.push(self.eval(a)?);
        }
        Ok(out)
    }

    pub(crate) fn eval(&mut self, n: &Node) -> R<Value> {
        self.tick(n)?;
        let c = &n.children;
        match n.kind {
            NodeKind::Literal => Ok(match n.literal() {
                Some(Lit::Number(v)) => Value::Num(*v),
                Some(Lit::String(s)) => Value::str(s),
                Some(Lit::Bool(b)) => Value::Bool(*b),
                Some(Lit::Null) => Value::Null,
                Some(Lit::Undefined) | None => Value::Undefined,
                Some(Lit::Regex { pattern, flags }) => {
                    let o = Obj::new(ObjKind::RegExp {
                        source: Rc::from(pattern.as_str()),
                        flags: Rc::from(flags.as_str()),
                    });
                    Value::Obj(self.st.alloc(o))
                }
            }),
            NodeKind::Identifier => {
                let v = self.get_var(n.name().unwrap_or(""))?;
                if self.guard_watch.is_some() {
                    self.note_guard_read(&v);
                }
                Ok(v)
            }
            NodeKind::TemplateLiteral => {
                let Payload::Template { quasis } = &n.payload else {
                    return Ok(Value::str(""));
                };
                let mut s = String::new();
                for (i, q) in quasis.iter().enumerate() {
                    s.push_str(q);
                    if let Some(e) = c.get(i) {
                        let v = self.eval(e)?;
                        s.push_str(&self.to_str(&v));
                    }
                }
                Ok(Value::str(&s))
            }
            NodeKind::ArrayLiteral => {
                let items = self.eval_args(c)?;
                Ok(Value::Obj(self.st.alloc(Obj::new(ObjKind::Array(items)))))
            }
            NodeKind::ObjectLiteral => {
                let id = self.st.alloc(Obj::new(ObjKind::Plain));
                for p in c {
                    self.tick(p)?;
                    let v = self.eval(&p.children[0])?;
                    let key = p.name().unwrap_or("");
                    self.name_function(&v, key);
                    self.st.obj_mut(id).props.insert(Rc::from(key), v);
                }
                Ok(Value::Obj(id))
            }
            NodeKind::FunctionLiteral => Ok(self.make_closure(n)),
            NodeKind::MemberAccess => {
                let obj = self.eval(&c[0])?;
                let key = self.member_key(n)?;
                let v = self.get_prop(&obj, &key)?;
                if self.guard_watch.is_some() {
                    self.note_guard_read(&v);
                }
                Ok(v)
            }
            NodeKind::Call => {
                let callee = &c[0];
                if callee.kind == NodeKind::MemberAccess {
                    let obj = self.eval(&callee.children[0])?;
                    let key = self.member_key(callee)?;
                    let args = self.eval_args(&c[1..])?;
                    self.site = n.span;
                    self.call_method(&obj, &key, args)
                } else {
                    let f = self.eval(callee)?;
                    let args = self.eval_args(&c[1..])?;
                    self.site = n.span;
                    self.call_value(&f, Value::Undefined, args)
                }
            }
            NodeKind::New => {
                let f = self.eval(&c[0])?;
                let args = self.eval_args(&c[1..])?;
                self.site = n.span;
                self.construct(&f, args)
            }
            NodeKind::Assignment => {
                let v = self.eval(&c[1])?;
                self.assign(&c[0], v.clone())?;
                Ok(v)
            }
            NodeKind::CompoundAssignment => {
                let op = n.op().unwrap_or(Op::Add);
                let target = &c[0];
                let (obj_key, cur) = self.read_target(target)?;
                let rhs = self.eval(&c[1])?;
                let v = self.binary(op, &cur, &rhs)?;
                self.write_target(target, obj_key, v.clone())?;
                Ok(v)
            }
            NodeKind::CountOperation => {
                let Payload::Count { increment, prefix } = n.payload else {
                    return Ok(Value::Undefined);
                };
                let (obj_key, cur) = self.read_target(&c[0])?;
                let old = self.to_num(&cur);
                let new = if increment { old + 1.0 } else { old - 1.0 };
                self.write_target(&c[0], obj_key, Value::Num(new))?;
                Ok(Value::Num(if prefix { new } else { old }))
            }
            NodeKind::Conditional => self.eval_conditional(n),
            NodeKind::BinaryOperation if n.op().is_some_and(Op::is_logical) => self.eval_logical(n),
            NodeKind::NaryOperation => self.eval_logical(n),
            NodeKind::BinaryOperation | NodeKind::CompareOperation => {
                let op = n.op().unwrap_or(Op::Add);
                let l = self.eval(&c[0])?;
                let r = self.eval(&c[1])?;
                self.binary(op, &l, &r)
            }
            NodeKind::UnaryOperation => self.eval_unary(n),
            _ => Ok(Value::Undefined),
        }
    }

    fn eval_conditional(&mut self, n: &Node) -> R<Value> {
        let c = &n.children;
        let Some(scan) = self.marked(n) else {
            let t = self.eval(&c[0])?;
            return if self.truthy(&t) { self.eval(&c[1]) } else { self.eval(&c[2]) };
        };
        let (g, watch) = self.eval_guard(&c[0])?;
        let taken = self.truthy(&g);
        let snapshot = self.st.clone();
        let (live, other, labels) =
            if taken { (&c[1], &c[2], ("then", "else")) } else { (&c[2], &c[1], ("else", "then")) };
        let v = self.eval(live);
        if matches!(v, Err(Abort::Budget)) {
            return v;
        }
        let mut branches = vec![self.live_outcome(labels.0)];
        branches.push(self.run_forced(snapshot, labels.1.into(), |e| e.eval(other).map(|_| ()))?);
        let gs = self.summary(&g);
        self.emit_forced(n, &scan, gs, watch, branches);
        v
    }

    fn short_circuits(&self, op: Op, v: &Value) -> bool {
        match op {
            Op::And => !self.truthy(v),
            Op::Or => self.truthy(v),
            _ => !v.is_nullish(),
        }
    }

    fn eval_logical(&mut self, n: &Node) -> R<Value> {
        let op = n.op().unwrap_or(Op::And);
        let c = &n.children;
        let scan = self.marked(n);
        let (first, watch) =
            if scan.is_some() { self.eval_guard(&c[0])? } else { (self.eval(&c[0])?, GuardWatch::default()) };
        let mut v = first.clone();
        let mut stop = None;
        for (i, operand) in c.iter().enumerate().skip(1) {
            if self.short_circuits(op, &v) {
                stop = Some(i);
                break;
            }
            v = self.eval(operand)?;
        }
        if let Some(scan) = scan {
            let mut branches = Vec::new();
            if stop != Some(1) {
                branches.push(self.live_outcome("right"));
            }
            if let Some(k) = stop {
                let snap = self.st.clone();
                let rest = &c[k..];
                branches.push(self.run_forced(snap, "right".into(), |e| {
                    for r in rest {
                        e.eval(r)?;
                    }
                    Ok(())
                })?);
            }
            let gs = self.summary(&first);
            self.emit_forced(n, &scan, gs, watch, branches);
        }
        Ok(v)
    }

    fn eval_unary(&mut self, n: &Node) -> R<Value> {
        let op = n.op().unwrap_or(Op::Not);
        let operand = &n.children[0];
        match op {
            Op::TypeOf if operand.kind == NodeKind::Identifier => {
                let name = operand.name().unwrap_or("");
                self.tick(operand)?;
                let v = if name == "this" { Some(self.this_value()) } else { self.lookup(name) };
                Ok(Value::str(v.map(|v| self.type_of(&v)).unwrap_or("undefined")))
            }
            Op::Delete => {
                if operand.kind == NodeKind::MemberAccess {
                    self.tick(operand)?;
                    let obj = self.eval(&operand.children[0])?;
                    let key = self.member_key(operand)?;
                    if let Value::Obj(id) = obj {
                        self.st.obj_mut(id).props.shift_remove(&*key);
                    }
                }
                Ok(Value::Bool(true))
            }
            Op::Not => {
                let scan = self.marked(n);
                let (v, watch) = if scan.is_some() {
                    self.eval_guard(operand)?
                } else {
                    (self.eval(operand)?, GuardWatch::default())
                };
                if let Some(scan) = scan {
                    let gs = self.summary(&v);
                    self.emit_forced(n, &scan, gs, watch, vec![self.live_outcome("operand")]);
                }
                Ok(Value::Bool(!self.truthy(&v)))
            }
            _ => {
                let v = self.eval(operand)?;
                Ok(match op {
                    Op::Neg => Value::Num(-self.to_num(&v)),
                    Op::Plus => Value::Num(self.to_num(&v)),
                    Op::BitNot => Value::Num(!to_int32(self.to_num(&v)) as f64),
                    Op::TypeOf => Value::str(self.type_of(&v)),
                    _ => Value::Undefined,
                })
            }
        }
    }

    fn assign(&mut self, target: &Node, v: Value) -> R<()> {
        match target.kind {
            NodeKind::Identifier => {
                self.tick(target)?;
                let name = target.name().unwrap_or("");
                self.name_function(&v, name);
                self.set_var(name, v);
                Ok(())
            }
            NodeKind::MemberAccess => {
                self.tick(target)?;
                let obj = self.eval(&target.children[0])?;
                let key = self.member_key(target)?;
                self.set_prop(&obj, &key, v)
            }
            _ => self.throw_error("SyntaxError", "invalid assignment target"),
        }
    }

    /// Evaluate an assignment target once, returning the resolved object/key and current value.
    fn read_target(&mut self, target: &Node) -> R<(Option<Slot>, Value)> {
        self.tick(target)?;
        match target.kind {
            NodeKind::MemberAccess => {
                let obj = self.eval(&target.children[0])?;
                let key = self.member_key(target)?;
                let cur = self.get_prop(&obj, &key)?;
                Ok((Some((obj, key)), cur))
            }
            _ => {
                let cur = self.get_var(target.name().unwrap_or(""))?;
                Ok((None, cur))
            }
        }
    }

    fn write_target(&mut self, target: &Node, obj_key: Option<(Value, Rc<str>)>, v: Value) -> R<()> {
        match obj_key {
            Some((obj, key)) => self.set_prop(&obj, &key, v),
            None => {
                self.set_var(target.name().unwrap_or(""), v);
                Ok(())
            }
        }
    }

    pub(crate) fn binary(&mut self, op: Op, l: &Value, r: &Value) -> R<Value> {
        use Op::*;
        Ok(match op {
            Add => {
                let lp = self.to_primitive(l);
                let rp = self.to_primitive(r);
                if matches!(lp, Value::Str(_)) || matches!(rp, Value::Str(_)) {
                    let mut s = self.to_str(&lp);
                    s.push_str(&self.to_str(&rp));
                    Value::str(&s)
                } else {
                    Value::Num(self.to_num(&lp) + self.to_num(&rp))
                }
            }
            Sub => Value::Num(self.to_num(l) - self.to_num(r)),
            Mul => Value::Num(self.to_num(l) * self.to_num(r)),
            Div => Value::Num(self.to_num(l) / self.to_num(r)),
            Mod => {
                let (a, b) = (self.to_num(l), self.to_num(r));
                Value::Num(a % b)
            }
            Exp => Value::Num(self.to_num(l).powf(self.to_num(r))),
            BitAnd => Value::Num((to_int32(self.to_num(l)) & to_int32(self.to_num(r))) as f64),
            BitOr => Value::Num((to_int32(self.to_num(l)) | to_int32(self.to_num(r))) as f64),
            BitXor => Value::Num((to_int32(self.to_num(l)) ^ to_int32(self.to_num(r))) as f64),
            Shl => Value::Num(to_int32(self.to_num(l)).wrapping_shl(to_uint32(self.to_num(r)) & 31) as f64),
            Shr => Value::Num((to_int32(self.to_num(l)) >> (to_uint32(self.to_num(r)) & 31)) as f64),
            UShr => Value::Num((to_uint32(self.to_num(l)) >> (to_uint32(self.to_num(r)) & 31)) as f64),
            Comma => r.clone(),
            Eq => Value::Bool(self.loose_eq(l, r)),
            NotEq => Value::Bool(!self.loose_eq(l, r)),
            StrictEq => Value::Bool(self.strict_eq(l, r)),
            StrictNotEq => Value::Bool(!self.strict_eq(l, r)),
            Lt | Gt | LtEq | GtEq => {
                let lp = self.to_primitive(l);
                let rp = self.to_primitive(r);
                let ord = if let (Value::Str(a), Value::Str(b)) = (&lp, &rp) {
                    Some(a.cmp(b))
                } else {
                    self.to_num(&lp).partial_cmp(&self.to_num(&rp))
                };
                Value::Bool(match (op, ord) {
                    (_, None) => false,
                    (Lt, Some(o)) => o.is_lt(),
                    (Gt, Some(o)) => o.is_gt(),
                    (LtEq, Some(o)) => o.is_le(),
                    (_, Some(o)) => o.is_ge(),
                })
            }
            In => {
                let key = self.to_str(l);
                Value::Bool(self.has_prop(r, &key))
            }
            InstanceOf => Value::Bool(self.instance_of(l, r)),
            And | Or | Nullish | Not | Neg | Plus | BitNot | TypeOf | Void | Delete => Value::Undefined,
        })
    }

    // ---- timers -----------------------------------------------------------

    /// Fire queued timers with id ≥ `min_id`, including ones they schedule, oldest first.
    pub(crate) fn drain_timers(&mut self, min_id: u64) -> R<()> {
        let mut fired = 0usize;
        loop {
            let Some(pos) = self.st.timers.iter().position(|t| t.id >= min_id) else {
                return Ok(());
            };
            let Some(t) = self.st.timers.remove(pos) else {
                return Ok(());
            };
            fired += 1;
            if fired > self.cfg.max_timers {
                return Ok(());
            }
            self.fire_timer(t)?;
        }
    }

    fn fire_timer(&mut self, t: Timer) -> R<()> {
        let saved = (self.cur, self.cur_plan.clone(), self.scope);
        self.cur = t.script;
        self.cur_plan = self.plans[t.script.0 as usize].clone();
        self.scope = self.global_scope;
        self.line_mark = (u32::MAX, 0);
        let marked = match (&t.site, self.cfg.options.apply_plan) {
            (Some(span), true) => {
                self.cur_plan.marked.get(&crate::scanner::NodeKey { kind: NodeKind::Call, span: *span }).cloned()
            }
            _ => None,
        };
        let r = match &t.callback {
            Value::Str(code) => {
                let code = code.clone();
                self.spawn_eval(&code).map(|_| ())
            }
            f => self.call_value(f, Value::Undefined, t.args.clone()).map(|_| ()),
        };
        let outcome = BranchOutcome {
            branch: "callback".into(),
            executed_in: ExecutedIn::Live,
            threw: match &r {
                Err(Abort::Throw(v)) => Some(self.summary(v)),
                _ => None,
            },
            lines_executed: BTreeSet::new(),
        };
        if let (Some(scan), Some(span)) = (marked, t.site) {
            let call = crate::frontend::Node::leaf(NodeKind::Call, span, Payload::None);
            let delay = number_to_string(t.delay);
            self.emit_forced(&call, &scan, delay, GuardWatch::default(), vec![outcome]);
        }
        self.cur = saved.0;
        self.cur_plan = saved.1;
        self.scope = saved.2;
        self.line_mark = (u32::MAX, 0);
        match r {
            Err(Abort::Budget) => Err(Abort::Budget),
            _ => Ok(()),
        }
    }
}
