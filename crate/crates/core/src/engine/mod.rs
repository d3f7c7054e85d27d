//! Tree-walking interpreter with forced execution of marked condition blocks.
//!
//! One [`Engine`] runs one sample: a root script plus every script it loads, evaluates or
//! injects. Marked conditions execute their live branch normally and every other branch
//! in a cloned heap that is thrown away afterwards.

mod builtins;
mod host;
mod interp;
mod resolver;
mod value;

use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::frontend::{parse_str, Node, Span};
use crate::scanner::{mark_forced_blocks, ApiCatalog, ForcedPlan, Mode, DEFAULT_NODE_LIMIT};
use crate::tracker::{Activity, ForcedExecEvent, Provenance, ScriptId, ScriptRecord};

pub use host::PageContext;
pub use resolver::{CommandFixture, ResolverError, Resource, ResourceKind, ResourceResolver};

use interp::{var_names, Abort, FuncDef, GuardWatch, R};
use value::*;

/// Which parts of forced execution are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RunOptions {
    /// Execute the non-taken branches of marked conditions.
    pub apply_plan: bool,
    /// Fire queued timers at the end of the run and inside forced branches.
    pub fire_timers: bool,
}

impl RunOptions {
    /// Plain execution: live branches only, timers never fire.
    pub const BASELINE: RunOptions = RunOptions { apply_plan: false, fire_timers: false };
    pub const FORCED: RunOptions = RunOptions { apply_plan: true, fire_timers: true };
    /// Live branches, but timers fire. Used as a comparison point for coverage.
    pub const REFERENCE: RunOptions = RunOptions { apply_plan: false, fire_timers: true };
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub mode: Mode,
    pub catalog: Arc<ApiCatalog>,
    pub node_limit: usize,
    pub step_budget: u64,
    /// Longest chain of scripts loading scripts before further loads are dropped.
    pub max_chain_depth: u32,
    pub max_call_depth: usize,
    pub max_timers: usize,
    pub options: RunOptions,
    /// Extension or package id. Decides which `ext://` URLs are the sample's own files.
    pub sample_id: String,
    pub page: PageContext,
    /// The sample's own files by relative path.
    pub local_files: Arc<BTreeMap<String, String>>,
    pub seed: u64,
}

impl EngineConfig {
    pub fn new(mode: Mode) -> Self {
        EngineConfig {
            mode,
            catalog: Arc::new(ApiCatalog::for_mode(mode)),
            node_limit: DEFAULT_NODE_LIMIT,
            step_budget: 1_000_000,
            max_chain_depth: 16,
            max_call_depth: 100,
            max_timers: 256,
            options: RunOptions::FORCED,
            sample_id: "sample".into(),
            page: PageContext::news(),
            local_files: Arc::new(BTreeMap::new()),
            seed: 0,
        }
    }

    pub fn with_options(mut self, options: RunOptions) -> Self {
        self.options = options;
        self
    }
}

pub(crate) struct Globals {
    pub window: ObjId,
    pub document: ObjId,
    pub html: ObjId,
    pub head: ObjId,
    pub body: ObjId,
    pub modules: ObjId,
    pub child_process: ObjId,
}

pub struct Engine {
    pub(crate) cfg: EngineConfig,
    pub(crate) resolver: Arc<ResourceResolver>,
    pub(crate) st: State,
    pub(crate) g: Globals,
    pub(crate) global_scope: ScopeId,
    pub(crate) funcs: Vec<Rc<FuncDef>>,
    pub(crate) func_cache: HashMap<usize, FuncId>,
    pub(crate) programs: Vec<Option<Rc<Node>>>,
    pub(crate) plans: Vec<Rc<ForcedPlan>>,
    pub(crate) records: Vec<ScriptRecord>,
    texts: Vec<Rc<str>>,
    depths: Vec<u32>,
    pub(crate) activity: Vec<Activity>,
    pub(crate) cur: ScriptId,
    pub(crate) cur_plan: Rc<ForcedPlan>,
    pub(crate) scope: ScopeId,
    pub(crate) steps: u64,
    pub(crate) call_depth: usize,
    pub(crate) line_mark: (u32, u32),
    pub(crate) branch_lines: Vec<std::collections::BTreeSet<u32>>,
    pub(crate) guard_watch: Option<GuardWatch>,
    /// Span of the call currently being evaluated, for API records and timer sites.
    pub(crate) site: Span,
    pub(crate) completion: Value,
    /// Bodies received over the network, with their URLs.
    pub(crate) fetched: Vec<(Rc<str>, String)>,
    /// String leaves of parsed network JSON, with their URLs.
    pub(crate) hints: Vec<(String, String)>,
    /// Command outputs, with the command that produced them.
    pub(crate) command_outputs: Vec<(String, String)>,
    pub(crate) regex_cache: HashMap<(String, String), Option<Rc<regex::Regex>>>,
    budget_hit: bool,
}

impl Engine {
    pub fn new(cfg: EngineConfig, resolver: Arc<ResourceResolver>) -> Self {
        let mut st = State {
            objs: Vec::new(),
            scopes: Vec::new(),
            timers: Default::default(),
            next_timer: 1,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        };
        let window = st.alloc(Obj::new(ObjKind::Plain));
        let child_process = st.alloc(Obj::new(ObjKind::Plain));
        let global_scope = st.new_scope(None, Some(Value::Obj(window)));
        let mut e = Engine {
            cfg,
            resolver,
            st,
            g: Globals {
                window,
                document: window,
                html: window,
                head: window,
                body: window,
                modules: window,
                child_process,
            },
            global_scope,
            funcs: Vec::new(),
            func_cache: HashMap::new(),
            programs: Vec::new(),
            plans: Vec::new(),
            records: Vec::new(),
            texts: Vec::new(),
            depths: Vec::new(),
            activity: Vec::new(),
            cur: ScriptId(0),
            cur_plan: Rc::new(ForcedPlan::empty()),
            scope: global_scope,
            steps: 0,
            call_depth: 0,
            line_mark: (u32::MAX, 0),
            branch_lines: Vec::new(),
            guard_watch: None,
            site: Span::default(),
            completion: Value::Undefined,
            fetched: Vec::new(),
            hints: Vec::new(),
            command_outputs: Vec::new(),
            regex_cache: HashMap::new(),
            budget_hit: false,
        };
        e.install_globals();
        e
    }

    /// Run a root script (and everything it pulls in). Queued timers fire afterwards
    /// when the options allow it.
    pub fn run_root(&mut self, path: &str, text: &str) -> ScriptId {
        let id = ScriptId(self.records.len() as u32);
        let r = self.run_child(text, Provenance::Root { path: path.to_string() }, None, false);
        if r.is_ok() && self.cfg.options.fire_timers {
            let first = self.st.timers.iter().map(|t| t.id).min().unwrap_or(0);
            if let Err(Abort::Budget) = self.drain_timers(first) {
                self.budget_hit = true;
            }
        }
        id
    }

    /// Parse, plan and execute a script loaded by the current one.
    /// With `propagate`, exceptions reach the caller (eval semantics).
    pub(crate) fn run_child(
        &mut self,
        text: &str,
        provenance: Provenance,
        derived_from: Option<String>,
        propagate: bool,
    ) -> R<Value> {
        let parent = provenance.parent();
        let depth = parent.map(|p| self.depths[p.0 as usize] + 1).unwrap_or(0);
        if depth > self.cfg.max_chain_depth {
            return Ok(Value::Undefined);
        }
        let id = ScriptId(self.records.len() as u32);
        let mut rec = ScriptRecord::new(id, provenance, text);
        rec.derived_from = derived_from;
        if let Some(p) = parent {
            self.records[p.0 as usize].children.push(id);
        }
        self.depths.push(depth);
        self.texts.push(Rc::from(text));
        match parse_str(text) {
            Err(err) => {
                rec.parse_failed = true;
                rec.error = Some(err.to_string());
                self.records.push(rec);
                self.programs.push(None);
                self.plans.push(Rc::new(ForcedPlan::empty()));
                if propagate {
                    return self.throw_error("SyntaxError", &err.to_string());
                }
                Ok(Value::Undefined)
            }
            Ok(program) => {
                self.records.push(rec);
                let plan = mark_forced_blocks(&program, &self.cfg.catalog, self.cfg.node_limit);
                self.programs.push(Some(Rc::new(program)));
                self.plans.push(Rc::new(plan));
                self.execute(id, propagate)
            }
        }
    }

    fn execute(&mut self, id: ScriptId, propagate: bool) -> R<Value> {
        let Some(program) = self.programs[id.0 as usize].clone() else {
            return Ok(Value::Undefined);
        };
        let saved = (self.cur, self.cur_plan.clone(), self.scope, self.call_depth);
        let saved_completion = std::mem::replace(&mut self.completion, Value::Undefined);
        let saved_site = self.site;
        self.cur = id;
        self.cur_plan = self.plans[id.0 as usize].clone();
        self.scope = self.global_scope;
        self.line_mark = (u32::MAX, 0);
        let names = var_names(&program.children);
        self.hoist(self.global_scope, &names);
        self.hoist_functions(self.global_scope, &program.children);
        let r = self.exec(&program);
        let completion = std::mem::replace(&mut self.completion, saved_completion);
        self.cur = saved.0;
        self.cur_plan = saved.1;
        self.scope = saved.2;
        self.call_depth = saved.3;
        self.site = saved_site;
        self.line_mark = (u32::MAX, 0);
        match r {
            Ok(_) => Ok(completion),
            Err(Abort::Throw(v)) => {
                let msg = self.summary(&v);
                self.records[id.0 as usize].error = Some(msg);
                if propagate {
                    Err(Abort::Throw(v))
                } else {
                    Ok(Value::Undefined)
                }
            }
            Err(Abort::Budget) => {
                self.budget_hit = true;
                self.records[id.0 as usize].error = Some("step budget exhausted".into());
                Err(Abort::Budget)
            }
        }
    }

    pub fn records(&self) -> &[ScriptRecord] {
        &self.records
    }

    pub fn activity(&self) -> &[Activity] {
        &self.activity
    }

    pub fn forced_events(&self) -> Vec<&ForcedExecEvent> {
        self.activity
            .iter()
            .filter_map(|a| match a {
                Activity::Forced(f) => Some(f),
                _ => None,
            })
            .collect()
    }

    /// Names of all logged API calls, in order.
    pub fn api_names(&self) -> Vec<&str> {
        self.activity
            .iter()
            .filter_map(|a| match a {
                Activity::Api(c) => Some(c.name.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn script_text(&self, id: ScriptId) -> Option<&str> {
        self.texts.get(id.0 as usize).map(|t| &**t)
    }

    /// Log a command the sample declares but that is never run (package lifecycle scripts).
    pub fn record_command(&mut self, cmd: &str) {
        self.activity.push(Activity::Command { cmd: cmd.to_string() });
    }

    pub fn program(&self, id: ScriptId) -> Option<&Node> {
        self.programs.get(id.0 as usize).and_then(|p| p.as_deref())
    }

    pub fn plan(&self, id: ScriptId) -> Option<&ForcedPlan> {
        self.plans.get(id.0 as usize).map(|p| &**p)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn budget_exhausted(&self) -> bool {
        self.budget_hit
    }

    /// A global variable as JSON, or `None` if undefined or not representable.
    pub fn global_value(&self, name: &str) -> Option<serde_json::Value> {
        let v = match self.st.scopes[self.global_scope.0].vars.get(name) {
            Some(v) => v,
            None => self.st.obj(self.g.window).props.get(name)?,
        };
        self.to_json(v, &mut Vec::new())
    }

    /// Every global variable that has a JSON form, in a stable order.
    pub fn global_snapshot(&self) -> BTreeMap<String, serde_json::Value> {
        self.st
            .obj(self.g.window)
            .props
            .iter()
            .filter(|(k, _)| !k.starts_with(builtins::HIDDEN))
            .filter_map(|(k, v)| {
                let j = match v {
                    Value::Obj(id) if !matches!(self.st.obj(*id).kind, ObjKind::Plain | ObjKind::Array(_)) => {
                        return None
                    }
                    Value::Obj(id) if *id == self.g.window => return None,
                    _ => self.to_json(v, &mut vec![self.g.window])?,
                };
                Some((k.to_string(), j))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests;
