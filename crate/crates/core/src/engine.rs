//! A small step runner that executes a JSON run plan through the shell and
//! records the run as a Provenance Run Crate.
//!
//! [`load_plan`] checks the plan, [`run`] executes it and returns a
//! [`RunRecord`], and [`build_crate`] turns plan and record into a crate
//! without touching the filesystem. [`execute`] does all three and writes
//! `ro-crate-metadata.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use percent_encoding::{utf8_percent_encode, AsciiSet, CONTROLS};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    serialize_crate, ContextRef, CrateDocument, Entity, Value, METADATA_DESCRIPTOR_ID,
    METADATA_FILE_NAME, RO_CRATE_CONTEXT,
};
use crate::profile::{ProfileId, RO_CRATE_SPEC, WORKFLOW_RO_CRATE_PROFILE};
use crate::timestamp;

pub const ENGINE_ID: &str = "#wfrun-engine";
pub const PLAN_LANGUAGE_ID: &str = "#wfrun-plan-language";
pub const COMPLETED: &str = "http://schema.org/CompletedActionStatus";
pub const FAILED: &str = "http://schema.org/FailedActionStatus";
pub const DEFAULT_PATH: &str = "/usr/local/bin:/usr/bin:/bin";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("malformed plan: {0}")]
    MalformedPlan(String),
    #[error("steps form a cycle: {}", .0.join(", "))]
    CyclicDataflow(Vec<String>),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("duplicate step id {0:?}")]
    DuplicateStepId(String),
    #[error("missing input {0:?}")]
    MissingInput(String),
    #[error("invalid value for input {param:?}: {reason}")]
    InvalidInput { param: String, reason: String },
    #[error("could not start step {step:?}: {source}")]
    StepSpawnFailure { step: String, source: io::Error },
    #[error("output directory {0} is not writable")]
    OutDirNotWritable(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> EngineError + '_ {
    move |source| EngineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamType {
    File,
    Text,
    Integer,
    Collection,
}

impl ParamType {
    fn as_str(self) -> &'static str {
        match self {
            ParamType::File => "File",
            ParamType::Text => "Text",
            ParamType::Integer => "Integer",
            ParamType::Collection => "Collection",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanParam {
    pub id: String,
    pub direction: Direction,
    #[serde(rename = "type")]
    pub kind: ParamType,
    #[serde(rename = "encodingFormat", default, skip_serializing_if = "Option::is_none")]
    pub encoding_format: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunStep {
    pub id: String,
    #[serde(rename = "toolId")]
    pub tool_id: String,
    pub command: String,
    #[serde(default)]
    pub params: Vec<PlanParam>,
    /// Value source (`param` or `step/param`) to tool parameter.
    #[serde(default)]
    pub bindings: BTreeMap<String, String>,
}

impl RunStep {
    pub fn param(&self, id: &str) -> Option<&PlanParam> {
        self.params.iter().find(|p| p.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Connection {
    pub source: String,
    pub target: String,
    pub owner: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunPlan {
    pub name: String,
    #[serde(rename = "workflowId")]
    pub workflow_id: String,
    #[serde(default)]
    pub params: Vec<PlanParam>,
    pub steps: Vec<RunStep>,
    #[serde(default)]
    pub connections: Vec<Connection>,
    /// The plan text as loaded; staged as the workflow payload.
    #[serde(skip)]
    pub source: String,
}

/// A parameter reference: workflow-level `p` or tool-level `step/p`.
enum ParamRef<'a> {
    Workflow(&'a PlanParam),
    Step(&'a RunStep, &'a PlanParam),
}

impl RunPlan {
    pub fn param(&self, id: &str) -> Option<&PlanParam> {
        self.params.iter().find(|p| p.id == id)
    }

    pub fn step(&self, id: &str) -> Option<&RunStep> {
        self.steps.iter().find(|s| s.id == id)
    }

    fn resolve(&self, reference: &str) -> Option<ParamRef<'_>> {
        match reference.split_once('/') {
            Some((step, p)) => {
                let step = self.step(step)?;
                Some(ParamRef::Step(step, step.param(p)?))
            }
            None => self.param(reference).map(ParamRef::Workflow),
        }
    }

    /// Crate id of a workflow-level or tool-level parameter reference.
    pub fn param_entity_id(&self, reference: &str) -> Option<String> {
        Some(match self.resolve(reference)? {
            ParamRef::Workflow(p) => format!("{}#{}", self.workflow_id, p.id),
            ParamRef::Step(s, p) => tool_param_id(&s.tool_id, &p.id),
        })
    }

    /// Step-to-step dependencies implied by bindings and connections.
    pub fn dependency_edges(&self) -> BTreeSet<(String, String)> {
        let step_of = |r: &str| r.split_once('/').map(|(s, _)| s.to_string());
        let mut edges = BTreeSet::new();
        for step in &self.steps {
            for source in step.bindings.keys() {
                if let Some(from) = step_of(source) {
                    edges.insert((from, step.id.clone()));
                }
            }
        }
        for c in &self.connections {
            if let (Some(a), Some(b)) = (step_of(&c.source), step_of(&c.target)) {
                edges.insert((a, b));
            }
        }
        edges.retain(|(a, b)| a != b);
        edges
    }

    /// Steps in dependency order; ties go to the earlier step in the plan.
    pub fn execution_order(&self) -> Result<Vec<&RunStep>, EngineError> {
        let edges = self.dependency_edges();
        let index: BTreeMap<&str, usize> = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        let mut indegree = vec![0usize; self.steps.len()];
        for (_, to) in &edges {
            indegree[index[to.as_str()]] += 1;
        }
        let mut done = vec![false; self.steps.len()];
        let mut order = Vec::with_capacity(self.steps.len());
        while let Some(next) = (0..self.steps.len()).find(|&i| !done[i] && indegree[i] == 0) {
            done[next] = true;
            order.push(&self.steps[next]);
            for (from, to) in &edges {
                if from == &self.steps[next].id {
                    indegree[index[to.as_str()]] -= 1;
                }
            }
        }
        if order.len() < self.steps.len() {
            let stuck = self
                .steps
                .iter()
                .zip(&done)
                .filter(|(_, d)| !**d)
                .map(|(s, _)| s.id.clone())
                .collect();
            return Err(EngineError::CyclicDataflow(stuck));
        }
        Ok(order)
    }
}

pub fn tool_param_id(tool: &str, param: &str) -> String {
    format!("#{tool}/{param}")
}

/// `{name}` placeholders in a command; `${...}` is left to the shell.
pub fn placeholders(command: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let bytes = command.as_bytes();
    let mut i = 0;
    while let Some(open) = command[i..].find('{').map(|o| o + i) {
        let Some(close) = command[open..].find('}').map(|c| c + open) else {
            break;
        };
        let name = &command[open + 1..close];
        let shell_var = open > 0 && bytes[open - 1] == b'$';
        let ident = !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if ident && !shell_var {
            out.push(name);
        }
        i = open + 1;
    }
    out
}

fn malformed(msg: impl Into<String>) -> EngineError {
    EngineError::MalformedPlan(msg.into())
}

fn check_ids<'a>(what: &str, ids: impl Iterator<Item = &'a str>) -> Result<(), EngineError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        let plain = !id.is_empty()
            && id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
        if !plain {
            return Err(malformed(format!("{what} id {id:?} must be letters, digits, '_', '-' or '.'")));
        }
        if !seen.insert(id) {
            return Err(malformed(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(())
}

/// Parses and checks a plan.
pub fn load_plan(text: &str) -> Result<RunPlan, EngineError> {
    let mut plan: RunPlan = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    plan.source = text.to_string();

    let wf = &plan.workflow_id;
    if wf.is_empty() || wf.contains(['/', '#', '\\']) || wf == METADATA_FILE_NAME || wf.starts_with('.') {
        return Err(malformed(format!("workflowId {wf:?} must be a plain file name")));
    }
    if plan.steps.is_empty() {
        return Err(malformed("a plan needs at least one step"));
    }
    let mut step_ids = BTreeSet::new();
    for s in &plan.steps {
        if !step_ids.insert(s.id.as_str()) {
            return Err(EngineError::DuplicateStepId(s.id.clone()));
        }
    }
    check_ids("step", plan.steps.iter().map(|s| s.id.as_str()))?;
    check_ids("parameter", plan.params.iter().map(|p| p.id.as_str()))?;

    let mut tools: BTreeMap<&str, &Vec<PlanParam>> = BTreeMap::new();
    for step in &plan.steps {
        check_ids("tool", std::iter::once(step.tool_id.as_str()))?;
        check_ids("parameter", step.params.iter().map(|p| p.id.as_str()))?;
        if let Some(prev) = tools.insert(&step.tool_id, &step.params) {
            if prev != &step.params {
                return Err(malformed(format!(
                    "tool {:?} is used with different parameters",
                    step.tool_id
                )));
            }
        }
        for p in &step.params {
            if p.direction == Direction::Out && p.kind != ParamType::File {
                return Err(malformed(format!(
                    "output {}/{} must have type File",
                    step.id, p.id
                )));
            }
        }
        for name in placeholders(&step.command) {
            if step.param(name).is_none() {
                return Err(EngineError::UnknownParam(name.to_string()));
            }
        }
        for (source, target) in &step.bindings {
            if !step.param(target).is_some_and(|p| p.direction == Direction::In) {
                return Err(EngineError::UnknownParam(format!("{}/{target}", step.id)));
            }
            let ok = match plan.resolve(source) {
                Some(ParamRef::Workflow(p)) => p.direction == Direction::In,
                Some(ParamRef::Step(s, p)) => s.id != step.id && p.direction == Direction::Out,
                None => false,
            };
            if !ok {
                return Err(EngineError::UnknownParam(source.clone()));
            }
        }
        for p in step.params.iter().filter(|p| p.direction == Direction::In) {
            if !step.bindings.values().any(|t| t == &p.id) {
                return Err(malformed(format!("input {}/{} is not bound", step.id, p.id)));
            }
        }
    }

    for c in &plan.connections {
        for end in [&c.source, &c.target] {
            if plan.resolve(end).is_none() {
                return Err(EngineError::UnknownParam(end.clone()));
            }
        }
        if c.source == c.target {
            return Err(malformed(format!("connection from {:?} to itself", c.source)));
        }
        if c.owner != plan.workflow_id && plan.step(&c.owner).is_none() {
            return Err(malformed(format!("connection owner {:?} does not exist", c.owner)));
        }
    }
    for p in plan.params.iter().filter(|p| p.direction == Direction::Out) {
        let fed = plan
            .connections
            .iter()
            .any(|c| c.target == p.id && c.source.contains('/'));
        if !fed {
            return Err(malformed(format!("workflow output {:?} has no source connection", p.id)));
        }
    }
    plan.execution_order()?;
    Ok(plan)
}

pub fn load_plan_file(path: &Path) -> Result<RunPlan, EngineError> {
    load_plan(&fs::read_to_string(path).map_err(io_err(path))?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentDescriptor {
    pub name: String,
    pub identifier: Option<String>,
}

impl AgentDescriptor {
    pub fn entity_id(&self) -> String {
        if let Some(id) = &self.identifier {
            return id.clone();
        }
        let lower = self.name.to_lowercase();
        let words: Vec<&str> = lower
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect();
        format!("#{}", words.join("-"))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub agent: Option<AgentDescriptor>,
    pub deterministic_ids: bool,
    /// Environment variables passed to steps besides `PATH`.
    pub env_allow: Vec<String>,
}

/// A file or directory copied into the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagedFile {
    /// Path relative to the output directory.
    pub name: String,
    /// Set when a name clash forced a rename.
    pub original_name: Option<String>,
    pub size: u64,
    pub directory: bool,
    pub encoding_format: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputValue {
    File(StagedFile),
    Literal(Value),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepStatus {
    Completed,
    Failed { error: String },
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRecord {
    pub step_id: String,
    pub action_id: String,
    pub control_id: String,
    pub status: StepStatus,
    pub start: Option<String>,
    pub end: Option<String>,
    /// Tool output parameter to produced file.
    pub outputs: BTreeMap<String, StagedFile>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunRecord {
    pub workflow_action_id: String,
    pub organize_action_id: String,
    pub start: String,
    pub end: String,
    pub plan_size: u64,
    /// Workflow input parameter to value, in plan order.
    pub inputs: Vec<(String, InputValue)>,
    /// In execution order.
    pub steps: Vec<StepRecord>,
    pub agent: Option<AgentDescriptor>,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.steps.iter().any(|s| s.status != StepStatus::Completed)
    }

    pub fn step(&self, id: &str) -> Option<&StepRecord> {
        self.steps.iter().find(|s| s.step_id == id)
    }
}

const ID_ESCAPES: &AsciiSet = &CONTROLS.add(b' ').add(b'#').add(b'%').add(b'?').add(b'"');

fn entity_id_for(name: &str) -> String {
    utf8_percent_encode(name, ID_ESCAPES).to_string()
}

fn extension(format: Option<&str>) -> &'static str {
    match format {
        Some("text/plain") => ".txt",
        Some("text/tab-separated-values") => ".tsv",
        Some("text/csv") => ".csv",
        Some("application/json") => ".json",
        Some("text/html") => ".html",
        Some("image/png") => ".png",
        _ => "",
    }
}

fn shell_quote(s: &str) -> String {
    let safe = !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '/' | ',' | ':' | '+' | '='));
    if safe {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

fn copy_tree(from: &Path, to: &Path) -> io::Result<u64> {
    if from.is_dir() {
        fs::create_dir_all(to)?;
        let mut total = 0;
        let mut entries: Vec<_> = fs::read_dir(from)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            total += copy_tree(&e.path(), &to.join(e.file_name()))?;
        }
        Ok(total)
    } else {
        fs::copy(from, to)
    }
}

struct Names(BTreeSet<String>);

impl Names {
    /// `wanted`, or `<prefix>-<wanted>` when taken.
    fn claim(&mut self, wanted: &str, prefix: &str) -> (String, Option<String>) {
        if self.0.insert(wanted.to_string()) {
            return (wanted.to_string(), None);
        }
        let mut n = 1;
        let mut candidate = format!("{prefix}-{wanted}");
        while !self.0.insert(candidate.clone()) {
            n += 1;
            candidate = format!("{prefix}{n}-{wanted}");
        }
        (candidate, Some(wanted.to_string()))
    }
}

struct Ids {
    deterministic: bool,
}

impl Ids {
    fn make(&self, label: &str) -> String {
        if self.deterministic {
            format!("#{label}")
        } else {
            format!("#{}", uuid::Uuid::new_v4())
        }
    }
}

/// Runs the plan's steps in `out_dir` and records what happened. Does not
/// write crate metadata.
pub fn run(
    plan: &RunPlan,
    inputs: &BTreeMap<String, String>,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<RunRecord, EngineError> {
    for key in inputs.keys() {
        if !plan
            .param(key)
            .is_some_and(|p| p.direction == Direction::In)
        {
            return Err(EngineError::UnknownParam(key.clone()));
        }
    }
    for p in plan.params.iter().filter(|p| p.direction == Direction::In) {
        let v = inputs
            .get(&p.id)
            .ok_or_else(|| EngineError::MissingInput(p.id.clone()))?;
        match p.kind {
            ParamType::File if !Path::new(v).is_file() => {
                return Err(EngineError::MissingInput(p.id.clone()))
            }
            ParamType::Collection if !Path::new(v).is_dir() => {
                return Err(EngineError::MissingInput(p.id.clone()))
            }
            ParamType::Integer if v.trim().parse::<i64>().is_err() => {
                return Err(EngineError::InvalidInput {
                    param: p.id.clone(),
                    reason: format!("{v:?} is not an integer"),
                })
            }
            _ => {}
        }
    }

    fs::create_dir_all(out_dir).map_err(|_| EngineError::OutDirNotWritable(out_dir.into()))?;
    let probe = out_dir.join(".wfrun-write-probe");
    fs::write(&probe, b"").map_err(|_| EngineError::OutDirNotWritable(out_dir.into()))?;
    let _ = fs::remove_file(&probe);

    let ids = Ids {
        deterministic: opts.deterministic_ids,
    };
    let mut names = Names(
        [METADATA_FILE_NAME.to_string(), plan.workflow_id.clone()]
            .into_iter()
            .collect(),
    );
    let plan_path = out_dir.join(&plan.workflow_id);
    fs::write(&plan_path, &plan.source).map_err(io_err(&plan_path))?;

    let mut staged_inputs = Vec::new();
    for p in plan.params.iter().filter(|p| p.direction == Direction::In) {
        let raw = &inputs[&p.id];
        let value = match p.kind {
            ParamType::File | ParamType::Collection => {
                let src = Path::new(raw);
                let base = src
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.id.clone());
                let (name, original_name) = names.claim(&base, &p.id);
                let dest = out_dir.join(&name);
                let size = copy_tree(src, &dest).map_err(io_err(src))?;
                let directory = p.kind == ParamType::Collection;
                InputValue::File(StagedFile {
                    name: if directory { format!("{name}/") } else { name },
                    original_name,
                    size,
                    directory,
                    encoding_format: p.encoding_format.clone(),
                })
            }
            ParamType::Integer => InputValue::Literal(Value::Integer(
                raw.trim().parse().expect("checked above"),
            )),
            ParamType::Text => InputValue::Literal(Value::Text(raw.clone())),
        };
        staged_inputs.push((p.id.clone(), value));
    }

    let workflow_action_id = ids.make("run-workflow");
    let organize_action_id = ids.make("run-organize");
    let start = timestamp::now();
    let mut records: Vec<StepRecord> = Vec::new();
    for step in plan.execution_order()? {
        let action_id = ids.make(&format!("run-{}", step.id));
        let control_id = ids.make(&format!("control-{}", step.id));
        let mut outputs = BTreeMap::new();
        for p in step.params.iter().filter(|p| p.direction == Direction::Out) {
            let wanted = format!("{}{}", p.id, extension(p.encoding_format.as_deref()));
            let (name, original_name) = names.claim(&wanted, &step.id);
            outputs.insert(
                p.id.clone(),
                StagedFile {
                    name,
                    original_name,
                    size: 0,
                    directory: false,
                    encoding_format: p.encoding_format.clone(),
                },
            );
        }

        let mut args: BTreeMap<&str, String> = BTreeMap::new();
        let mut blocked = None;
        for (source, target) in &step.bindings {
            let value = match source.split_once('/') {
                Some((from, p)) => {
                    let rec = records.iter().find(|r| r.step_id == from);
                    match rec.filter(|r| r.status == StepStatus::Completed) {
                        Some(r) => r.outputs[p].name.clone(),
                        None => {
                            blocked = Some(from.to_string());
                            break;
                        }
                    }
                }
                None => match &staged_inputs.iter().find(|(k, _)| k == source).expect("bound").1 {
                    InputValue::File(f) => f.name.trim_end_matches('/').to_string(),
                    InputValue::Literal(v) => v.to_string(),
                },
            };
            args.insert(target, value);
        }
        for (p, f) in &outputs {
            args.insert(p, f.name.clone());
        }
        let blocked = blocked.or_else(|| {
            plan.dependency_edges()
                .into_iter()
                .filter(|(_, to)| to == &step.id)
                .find(|(from, _)| {
                    records
                        .iter()
                        .any(|r| &r.step_id == from && r.status != StepStatus::Completed)
                })
                .map(|(from, _)| from)
        });
        if let Some(from) = blocked {
            log::info!("skipping step {} because {from} did not complete", step.id);
            records.push(StepRecord {
                step_id: step.id.clone(),
                action_id,
                control_id,
                status: StepStatus::Skipped,
                start: None,
                end: None,
                outputs: BTreeMap::new(),
            });
            continue;
        }

        let command = substitute(&step.command, &args);
        log::info!("step {}: {command}", step.id);
        let step_start = timestamp::now();
        let output = shell(&command, out_dir, &opts.env_allow).map_err(|source| {
            EngineError::StepSpawnFailure {
                step: step.id.clone(),
                source,
            }
        })?;
        let step_end = timestamp::now();

        let mut status = if output.status.success() {
            StepStatus::Completed
        } else {
            let stderr = String::from_utf8_lossy(&output.stderr);
            let detail = stderr.lines().rev().find(|l| !l.trim().is_empty());
            let code = output
                .status
                .code()
                .map(|c| format!("exit status {c}"))
                .unwrap_or_else(|| "a signal".to_string());
            StepStatus::Failed {
                error: match detail {
                    Some(d) => format!("command ended with {code}: {}", d.trim()),
                    None => format!("command ended with {code}"),
                },
            }
        };
        if status == StepStatus::Completed {
            for f in outputs.values_mut() {
                match fs::metadata(out_dir.join(&f.name)) {
                    Ok(m) => f.size = m.len(),
                    Err(_) => {
                        status = StepStatus::Failed {
                            error: format!("command did not produce {}", f.name),
                        };
                        break;
                    }
                }
            }
        }
        if status != StepStatus::Completed {
            outputs.clear();
        }
        records.push(StepRecord {
            step_id: step.id.clone(),
            action_id,
            control_id,
            status,
            start: Some(step_start),
            end: Some(step_end),
            outputs,
        });
    }
    let end = timestamp::now();

    Ok(RunRecord {
        workflow_action_id,
        organize_action_id,
        start,
        end,
        plan_size: plan.source.len() as u64,
        inputs: staged_inputs,
        steps: records,
        agent: opts.agent.clone(),
    })
}

fn substitute(command: &str, args: &BTreeMap<&str, String>) -> String {
    let mut out = command.to_string();
    for name in placeholders(command) {
        if let Some(v) = args.get(name) {
            out = out.replacen(&format!("{{{name}}}"), &shell_quote(v), 1);
        }
    }
    out
}

fn shell(command: &str, cwd: &Path, env_allow: &[String]) -> io::Result<std::process::Output> {
    let mut cmd = Command::new("/bin/sh");
    cmd.arg("-c")
        .arg(command)
        .current_dir(cwd)
        .env_clear()
        .stdin(Stdio::null())
        .env("PATH", std::env::var("PATH").unwrap_or_else(|_| DEFAULT_PATH.to_string()));
    for name in env_allow {
        if let Ok(v) = std::env::var(name) {
            cmd.env(name, v);
        }
    }
    cmd.output()
}

fn file_entity(f: &StagedFile) -> Entity {
    let mut e = Entity::new(entity_id_for(&f.name))
        .with_type(if f.directory { "Dataset" } else { "File" })
        .with_text("contentSize", f.size.to_string());
    if let Some(fmt) = &f.encoding_format {
        e.push("encodingFormat", Value::text(fmt));
    }
    if let Some(orig) = &f.original_name {
        e.push("alternateName", Value::text(orig));
    }
    e
}

fn status_props(mut e: Entity, status: &StepStatus, what: &str) -> Entity {
    match status {
        StepStatus::Failed { error } => {
            e.push("actionStatus", Value::reference(FAILED));
            e.push("error", Value::text(format!("{what}: {error}")));
        }
        _ => e.push("actionStatus", Value::reference(COMPLETED)),
    }
    e
}

/// Assembles the crate for a finished run. Pure: the same plan and record
/// always give the same crate.
pub fn build_crate(record: &RunRecord, plan: &RunPlan) -> CrateDocument {
    let wf = plan.workflow_id.as_str();
    let wf_param = |p: &str| format!("{wf}#{p}");
    let step_entity = |s: &str| format!("{wf}#{s}");
    let mut entities: Vec<Entity> = Vec::new();

    // Data entities: workflow inputs, then step outputs in execution order.
    // Each collects exampleOfWork links to every parameter it realizes.
    let mut data: Vec<(String, Entity)> = Vec::new();
    let mut input_ids: BTreeMap<&str, String> = BTreeMap::new();
    for (param, value) in &record.inputs {
        let e = match value {
            InputValue::File(f) => file_entity(f),
            InputValue::Literal(v) => Entity::new(format!("#pv-{param}"))
                .with_type("PropertyValue")
                .with_text("name", param)
                .with("value", v.clone()),
        };
        input_ids.insert(param, e.id.clone());
        data.push((e.id.clone(), e.with_ref("exampleOfWork", wf_param(param))));
    }
    let mut output_ids: BTreeMap<(String, String), String> = BTreeMap::new();
    for s in &record.steps {
        let step = plan.step(&s.step_id).expect("record matches plan");
        for (p, f) in &s.outputs {
            let e = file_entity(f).with_ref("exampleOfWork", tool_param_id(&step.tool_id, p));
            output_ids.insert((s.step_id.clone(), p.clone()), e.id.clone());
            data.push((e.id.clone(), e));
        }
    }
    let value_of = |source: &str| -> Option<String> {
        match source.split_once('/') {
            Some((s, p)) => output_ids.get(&(s.to_string(), p.to_string())).cloned(),
            None => input_ids.get(source).cloned(),
        }
    };
    let link = |data: &mut Vec<(String, Entity)>, id: &str, param: String| {
        if let Some((_, e)) = data.iter_mut().find(|(k, _)| k == id) {
            if !e.refs("exampleOfWork").any(|r| r == param) {
                e.push("exampleOfWork", Value::reference(param));
            }
        }
    };

    // Per-step objects, and the workflow's results.
    let mut step_objects: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for s in &record.steps {
        let step = plan.step(&s.step_id).expect("record matches plan");
        let mut objects = Vec::new();
        for tp in step.params.iter().filter(|p| p.direction == Direction::In) {
            let source = step
                .bindings
                .iter()
                .find(|(_, t)| *t == &tp.id)
                .map(|(src, _)| src.as_str())
                .expect("checked at load");
            if let Some(id) = value_of(source) {
                link(&mut data, &id, tool_param_id(&step.tool_id, &tp.id));
                objects.push(id);
            }
        }
        step_objects.insert(&s.step_id, objects);
    }
    let mut wf_results = Vec::new();
    for p in plan.params.iter().filter(|p| p.direction == Direction::Out) {
        let produced = plan
            .connections
            .iter()
            .filter(|c| c.target == p.id)
            .find_map(|c| value_of(&c.source));
        if let Some(id) = produced {
            link(&mut data, &id, wf_param(&p.id));
            wf_results.push(id);
        }
    }

    let conforms: Vec<&str> = ProfileId::ALL
        .iter()
        .map(|p| p.iri())
        .chain([WORKFLOW_RO_CRATE_PROFILE])
        .collect();
    entities.push(
        Entity::new(METADATA_DESCRIPTOR_ID)
            .with_type("CreativeWork")
            .with_ref("conformsTo", RO_CRATE_SPEC)
            .with_ref("about", "./"),
    );
    let mut root_parts = vec![wf.to_string()];
    root_parts.extend(data.iter().map(|(k, _)| k.clone()));
    entities.push(
        Entity::new("./")
            .with_type("Dataset")
            .with_text("name", format!("Run of {}", plan.name))
            .with_text("datePublished", &record.end)
            .with_refs("conformsTo", conforms.iter().copied())
            .with_ref("mainEntity", wf)
            .with_refs("hasPart", root_parts),
    );
    let profile_names = [
        "Process Run Crate",
        "Workflow Run Crate",
        "Provenance Run Crate",
    ];
    for (p, name) in ProfileId::ALL.iter().zip(profile_names) {
        entities.push(
            Entity::new(p.iri())
                .with_type("CreativeWork")
                .with_text("name", name)
                .with_text("version", p.version()),
        );
    }
    entities.push(
        Entity::new(WORKFLOW_RO_CRATE_PROFILE)
            .with_type("CreativeWork")
            .with_text("name", "Workflow RO-Crate")
            .with_text("version", "1.0"),
    );

    let mut tools: Vec<&RunStep> = Vec::new();
    for s in &plan.steps {
        if !tools.iter().any(|t| t.tool_id == s.tool_id) {
            tools.push(s);
        }
    }
    let owned = |owner: &str| -> Vec<String> {
        plan.connections
            .iter()
            .enumerate()
            .filter(|(_, c)| c.owner == owner)
            .map(|(i, _)| format!("#connection-{}", i + 1))
            .collect()
    };
    let params_of = |dir: Direction| -> Vec<String> {
        plan.params
            .iter()
            .filter(|p| p.direction == dir)
            .map(|p| wf_param(&p.id))
            .collect()
    };
    entities.push(
        Entity::new(wf)
            .with_types(["File", "SoftwareSourceCode", "ComputationalWorkflow", "HowTo"])
            .with_text("name", &plan.name)
            .with_text("contentSize", record.plan_size.to_string())
            .with_text("encodingFormat", "application/json")
            .with_ref("programmingLanguage", PLAN_LANGUAGE_ID)
            .with_refs("input", params_of(Direction::In))
            .with_refs("output", params_of(Direction::Out))
            .with_refs("hasPart", tools.iter().map(|t| format!("#{}", t.tool_id)))
            .with_refs("step", plan.steps.iter().map(|s| step_entity(&s.id)))
            .with_refs("connection", owned(wf)),
    );
    entities.push(
        Entity::new(PLAN_LANGUAGE_ID)
            .with_type("ComputerLanguage")
            .with_text("name", "wfrun run plan")
            .with_text("version", env!("CARGO_PKG_VERSION")),
    );
    entities.push(
        Entity::new(ENGINE_ID)
            .with_type("SoftwareApplication")
            .with_text("name", "wfrun")
            .with_text("version", env!("CARGO_PKG_VERSION")),
    );

    let formal = |id: String, p: &PlanParam| {
        let mut e = Entity::new(id)
            .with_type("FormalParameter")
            .with_text("name", &p.id)
            .with_text("additionalType", p.kind.as_str());
        if let Some(f) = &p.encoding_format {
            e.push("encodingFormat", Value::text(f));
        }
        if p.direction == Direction::In {
            e.push("valueRequired", Value::text("True"));
        }
        e
    };
    for p in &plan.params {
        entities.push(formal(wf_param(&p.id), p));
    }
    for t in &tools {
        let ids = |dir: Direction| -> Vec<String> {
            t.params
                .iter()
                .filter(|p| p.direction == dir)
                .map(|p| tool_param_id(&t.tool_id, &p.id))
                .collect()
        };
        entities.push(
            Entity::new(format!("#{}", t.tool_id))
                .with_type("SoftwareApplication")
                .with_text("name", &t.tool_id)
                .with_refs("input", ids(Direction::In))
                .with_refs("output", ids(Direction::Out)),
        );
        for p in &t.params {
            entities.push(formal(tool_param_id(&t.tool_id, &p.id), p));
        }
    }
    for (i, s) in plan.steps.iter().enumerate() {
        entities.push(
            Entity::new(step_entity(&s.id))
                .with_type("HowToStep")
                .with_text("name", &s.id)
                .with("position", Value::Integer(i as i64))
                .with_ref("workExample", format!("#{}", s.tool_id))
                .with_refs("connection", owned(&s.id)),
        );
    }
    for (i, c) in plan.connections.iter().enumerate() {
        entities.push(
            Entity::new(format!("#connection-{}", i + 1))
                .with_type("ParameterConnection")
                .with_ref("sourceParameter", plan.param_entity_id(&c.source).expect("checked"))
                .with_ref("targetParameter", plan.param_entity_id(&c.target).expect("checked")),
        );
    }
    let agent_id = record.agent.as_ref().map(|a| {
        let id = a.entity_id();
        entities.push(
            Entity::new(id.clone())
                .with_type("Person")
                .with_text("name", &a.name),
        );
        id
    });
    entities.extend(data.into_iter().map(|(_, e)| e));

    let with_agent = |e: Entity| match &agent_id {
        Some(a) => e.with_ref("agent", a.clone()),
        None => e,
    };
    let failed_steps: Vec<&str> = record
        .steps
        .iter()
        .filter(|s| matches!(s.status, StepStatus::Failed { .. }))
        .map(|s| s.step_id.as_str())
        .collect();
    let wf_status = match failed_steps.as_slice() {
        [] => StepStatus::Completed,
        ids => StepStatus::Failed {
            error: format!("failed steps: {}", ids.join(", ")),
        },
    };
    let wf_objects: Vec<String> = record.inputs.iter().map(|(p, _)| input_ids[p.as_str()].clone()).collect();
    entities.push(status_props(
        with_agent(
            Entity::new(&record.workflow_action_id)
                .with_type("CreateAction")
                .with_text("name", format!("Run of {}", plan.name))
                .with_ref("instrument", wf)
                .with_text("startTime", &record.start)
                .with_text("endTime", &record.end)
                .with_refs("object", wf_objects)
                .with_refs("result", wf_results),
        ),
        &wf_status,
        "workflow",
    ));
    let mut controls = Vec::new();
    for s in record.steps.iter().filter(|s| s.status != StepStatus::Skipped) {
        let step = plan.step(&s.step_id).expect("record matches plan");
        let times = |e: Entity| {
            e.with_text("startTime", s.start.clone().unwrap_or_default())
                .with_text("endTime", s.end.clone().unwrap_or_default())
        };
        let results = s.outputs.keys().map(|p| output_ids[&(s.step_id.clone(), p.clone())].clone());
        entities.push(status_props(
            with_agent(times(
                Entity::new(&s.action_id)
                    .with_type("CreateAction")
                    .with_text("name", format!("Run of {}", step.tool_id))
                    .with_ref("instrument", format!("#{}", step.tool_id))
                    .with_refs("object", step_objects[s.step_id.as_str()].iter().cloned())
                    .with_refs("result", results),
            )),
            &s.status,
            &format!("step {}", s.step_id),
        ));
        entities.push(status_props(
            times(
                Entity::new(&s.control_id)
                    .with_type("ControlAction")
                    .with_text("name", format!("Orchestration of step {}", s.step_id))
                    .with_ref("instrument", step_entity(&s.step_id))
                    .with_ref("object", &s.action_id),
            ),
            &s.status,
            &format!("step {}", s.step_id),
        ));
        controls.push(s.control_id.clone());
    }
    controls.push(wf.to_string());
    entities.push(status_props(
        with_agent(
            Entity::new(&record.organize_action_id)
                .with_type("OrganizeAction")
                .with_text("name", format!("Orchestration of {}", plan.name))
                .with_ref("instrument", ENGINE_ID)
                .with_text("startTime", &record.start)
                .with_text("endTime", &record.end)
                .with_refs("object", controls)
                .with_ref("result", &record.workflow_action_id),
        ),
        &wf_status,
        "workflow",
    ));

    let mut doc = CrateDocument::new(vec![ContextRef::Iri(RO_CRATE_CONTEXT.to_string())]);
    for e in entities {
        doc.insert(e).expect("engine entity ids are unique");
    }
    doc
}

/// Runs the plan, builds the crate and writes its metadata file.
pub fn execute(
    plan: &RunPlan,
    inputs: &BTreeMap<String, String>,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<(CrateDocument, RunRecord), EngineError> {
    let record = run(plan, inputs, out_dir, opts)?;
    let mut doc = build_crate(&record, plan);
    let path = out_dir.join(METADATA_FILE_NAME);
    fs::write(&path, serialize_crate(&doc)).map_err(io_err(&path))?;
    doc.source_path = Some(out_dir.to_path_buf());
    Ok((doc, record))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan_json(steps: &str, connections: &str) -> String {
        format!(
            r#"{{"name": "t", "workflowId": "t.json",
                "params": [{{"id": "src", "direction": "in", "type": "File"}}],
                "steps": [{steps}], "connections": [{connections}]}}"#
        )
    }

    const FILE_IN: &str = r#"{"id": "x", "direction": "in", "type": "File"}"#;
    const FILE_OUT: &str = r#"{"id": "y", "direction": "out", "type": "File"}"#;

    #[test]
    fn cycle_is_rejected() {
        let steps = format!(
            r#"{{"id": "a", "toolId": "ta", "command": "cat {{x}} > {{y}}", "params": [{FILE_IN}, {FILE_OUT}], "bindings": {{"b/y": "x"}}}},
               {{"id": "b", "toolId": "tb", "command": "cat {{x}} > {{y}}", "params": [{FILE_IN}, {FILE_OUT}], "bindings": {{"a/y": "x"}}}}"#
        );
        let err = load_plan(&plan_json(&steps, "")).unwrap_err();
        assert!(matches!(err, EngineError::CyclicDataflow(_)), "{err}");
    }

    #[test]
    fn undeclared_placeholder() {
        let steps = format!(
            r#"{{"id": "a", "toolId": "ta", "command": "cat {{missing}}", "params": [{FILE_IN}], "bindings": {{"src": "x"}}}}"#
        );
        match load_plan(&plan_json(&steps, "")) {
            Err(EngineError::UnknownParam(p)) => assert_eq!(p, "missing"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_steps() {
        assert!(matches!(
            load_plan(&plan_json("", "")),
            Err(EngineError::MalformedPlan(_))
        ));
    }

    #[test]
    fn duplicate_step() {
        let one = format!(
            r#"{{"id": "a", "toolId": "ta", "command": "true {{x}}", "params": [{FILE_IN}], "bindings": {{"src": "x"}}}}"#
        );
        assert!(matches!(
            load_plan(&plan_json(&format!("{one}, {one}"), "")),
            Err(EngineError::DuplicateStepId(id)) if id == "a"
        ));
    }

    #[test]
    fn placeholder_scan() {
        assert_eq!(placeholders("a {x} ${HOME} {y-z} {} {not ok}"), ["x", "y-z"]);
        assert_eq!(shell_quote("it's"), r"'it'\''s'");
        assert_eq!(shell_quote("lines.txt"), "lines.txt");
    }

    #[test]
    fn order_follows_plan_on_ties() {
        let steps = format!(
            r#"{{"id": "late", "toolId": "t1", "command": "cat {{x}} > {{y}}", "params": [{FILE_IN}, {FILE_OUT}], "bindings": {{"early/y": "x"}}}},
               {{"id": "early", "toolId": "t1", "command": "cat {{x}} > {{y}}", "params": [{FILE_IN}, {FILE_OUT}], "bindings": {{"src": "x"}}}},
               {{"id": "other", "toolId": "t1", "command": "cat {{x}} > {{y}}", "params": [{FILE_IN}, {FILE_OUT}], "bindings": {{"src": "x"}}}}"#
        );
        let plan = load_plan(&plan_json(&steps, "")).unwrap();
        let order: Vec<&str> = plan.execution_order().unwrap().iter().map(|s| s.id.as_str()).collect();
        assert_eq!(order, ["early", "late", "other"]);
    }

    #[test]
    fn agent_slug() {
        let a = AgentDescriptor { name: "Ada Lovelace".into(), identifier: None };
        assert_eq!(a.entity_id(), "#ada-lovelace");
        let b = AgentDescriptor { name: "A. Researcher".into(), identifier: None };
        assert_eq!(b.entity_id(), "#a-researcher");
    }
}
