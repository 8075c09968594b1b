//! Conformance checks for the Process, Workflow and Provenance Run Crate
//! profiles.
//!
//! Each profile applies its own rules plus every rule of the profiles it
//! inherits (Process ⊂ Workflow ⊂ Provenance). Findings are
//! [`ValidationIssue`]s keyed by a closed set of [`RuleCode`]s; a report is
//! conformant when it holds no `Error` issue.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use percent_encoding::percent_decode_str;
use serde::Serialize;

use crate::model::{is_absolute_iri, CrateDocument, Entity, Value, METADATA_DESCRIPTOR_ID};
use crate::profile::{self, ProfileId, WORKFLOW_RO_CRATE_PREFIX};
use crate::timestamp;

/// Declared in descending order of importance, so sorting ascending puts
/// errors first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

impl Severity {
    pub fn label(self) -> &'static str {
        match self {
            Severity::Error => "ERROR",
            Severity::Warning => "WARNING",
            Severity::Info => "INFO",
        }
    }
}

macro_rules! rule_codes {
    ($($variant:ident => $code:literal, $sev:ident, $profile:ident;)*) => {
        /// The closed rule catalogue.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum RuleCode { $($variant,)* }

        impl RuleCode {
            pub const ALL: &'static [RuleCode] = &[$(RuleCode::$variant,)*];

            pub fn as_str(self) -> &'static str {
                match self { $(RuleCode::$variant => $code,)* }
            }

            pub fn severity(self) -> Severity {
                match self { $(RuleCode::$variant => Severity::$sev,)* }
            }

            /// Profile whose rule set owns the code.
            pub fn profile(self) -> ProfileId {
                match self { $(RuleCode::$variant => ProfileId::$profile,)* }
            }

            pub fn from_code(s: &str) -> Option<RuleCode> {
                match s { $($code => Some(RuleCode::$variant),)* _ => None }
            }
        }
    };
}

rule_codes! {
    C1Descriptor => "C1_DESCRIPTOR", Error, Process;
    C2ConformsTo => "C2_CONFORMS_TO", Warning, Process;
    C3DanglingReference => "C3_DANGLING_REFERENCE", Error, Process;
    C4ExternalReference => "C4_EXTERNAL_REFERENCE", Info, Process;
    C5PayloadMissing => "C5_PAYLOAD_MISSING", Warning, Process;
    P1NoCreateAction => "P1_NO_CREATE_ACTION", Error, Process;
    P2InstrumentType => "P2_INSTRUMENT_TYPE", Error, Process;
    P3Agent => "P3_AGENT", Warning, Process;
    P4Time => "P4_TIME", Error, Process;
    P4Missing => "P4_MISSING", Warning, Process;
    P5ValueType => "P5_VALUE_TYPE", Warning, Process;
    P6CollectionMainEntity => "P6_COLLECTION_MAIN_ENTITY", Error, Process;
    P7ActionStatus => "P7_ACTION_STATUS", Warning, Process;
    W1MainWorkflow => "W1_MAIN_WORKFLOW", Error, Workflow;
    W2ProgrammingLanguage => "W2_PROGRAMMING_LANGUAGE", Warning, Workflow;
    W3NoWorkflowRun => "W3_NO_WORKFLOW_RUN", Error, Workflow;
    W4FormalParameter => "W4_FORMAL_PARAMETER", Warning, Workflow;
    W5ExampleOfWork => "W5_EXAMPLE_OF_WORK", Warning, Workflow;
    W6WorkflowProfile => "W6_WORKFLOW_PROFILE", Warning, Workflow;
    V1HasPart => "V1_HAS_PART", Error, Provenance;
    V2Step => "V2_STEP", Error, Provenance;
    V3ControlAction => "V3_CONTROL_ACTION", Error, Provenance;
    V4NoOrganizeAction => "V4_NO_ORGANIZE_ACTION", Warning, Provenance;
    V4OrganizeAction => "V4_ORGANIZE_ACTION", Error, Provenance;
    V4ExtraObject => "V4_EXTRA_OBJECT", Info, Provenance;
    V5ParameterConnection => "V5_PARAMETER_CONNECTION", Error, Provenance;
    V6ToolExampleOfWork => "V6_TOOL_EXAMPLE_OF_WORK", Warning, Provenance;
    AutoDefaulted => "AUTO_DEFAULTED", Info, Process;
}

impl fmt::Display for RuleCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for RuleCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    pub code: RuleCode,
    pub subject: Option<String>,
    pub profile: ProfileId,
    pub message: String,
}

impl ValidationIssue {
    fn new(code: RuleCode, subject: Option<&str>, message: String) -> Self {
        ValidationIssue {
            severity: code.severity(),
            code,
            subject: subject.map(str::to_string),
            profile: code.profile(),
            message,
        }
    }

    fn sort_key(&self) -> (Severity, &'static str, Option<&str>, &str) {
        (self.severity, self.code.as_str(), self.subject.as_deref(), &self.message)
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}: {}",
            self.severity.label(),
            self.code,
            self.subject.as_deref().unwrap_or("-"),
            self.message
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    #[serde(serialize_with = "profile_iri")]
    pub profile: ProfileId,
    pub conformant: bool,
    pub issues: Vec<ValidationIssue>,
}

fn profile_iri<S: serde::Serializer>(p: &ProfileId, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(p.iri())
}

impl ValidationReport {
    fn new(profile: ProfileId, issues: Vec<ValidationIssue>) -> Self {
        let mut issues = issues;
        issues.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        issues.dedup();
        let conformant = !issues.iter().any(|i| i.severity == Severity::Error);
        ValidationReport {
            profile,
            conformant,
            issues,
        }
    }

    pub fn errors(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn codes(&self) -> BTreeSet<RuleCode> {
        self.issues.iter().map(|i| i.code).collect()
    }

    pub fn has(&self, code: RuleCode) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }

    /// One issue per line: `<SEVERITY> <CODE> <subject>: <message>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for issue in &self.issues {
            out.push_str(&issue.to_string());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

const TOOL_TYPES: &[&str] = &["SoftwareApplication", "SoftwareSourceCode", "ComputationalWorkflow"];
const VALUE_TYPES: &[&str] = &["MediaObject", "Dataset", "Collection", "PropertyValue"];
const ACTION_TYPES: &[&str] = &["CreateAction", "ControlAction", "OrganizeAction"];
const AGENT_TYPES: &[&str] = &["Person", "Organization"];
const WORKFLOW_TYPES: &[&str] = &["MediaObject", "SoftwareSourceCode", "ComputationalWorkflow"];

/// Checks `doc` against `profile` and every profile it inherits.
pub fn validate(doc: &CrateDocument, profile: ProfileId, payload_check: bool) -> ValidationReport {
    let mut c = Checker::new(doc);
    c.common(profile, payload_check);
    for p in profile.lineage() {
        match p {
            ProfileId::Process => c.process(),
            ProfileId::Workflow => c.workflow(),
            ProfileId::Provenance => c.provenance(),
        }
    }
    ValidationReport::new(profile, c.issues)
}

/// Validates against the most specific declared profile, or Process when
/// none is declared.
pub fn validate_auto(doc: &CrateDocument, payload_check: bool) -> ValidationReport {
    match profile::declared_profiles(doc).into_iter().max() {
        Some(p) => validate(doc, p, payload_check),
        None => {
            let mut report = validate(doc, ProfileId::Process, payload_check);
            // Nothing was requested, so a missing declaration is reported once.
            report.issues.retain(|i| i.code != RuleCode::C2ConformsTo);
            report.issues.push(ValidationIssue::new(
                RuleCode::AutoDefaulted,
                None,
                "no run profile declared; validated against the Process Run Crate rules".into(),
            ));
            ValidationReport::new(ProfileId::Process, report.issues)
        }
    }
}

struct Checker<'a> {
    doc: &'a CrateDocument,
    issues: Vec<ValidationIssue>,
}

impl<'a> Checker<'a> {
    fn new(doc: &'a CrateDocument) -> Self {
        Checker {
            doc,
            issues: Vec::new(),
        }
    }

    fn push(&mut self, code: RuleCode, subject: Option<&str>, message: impl Into<String>) {
        self.issues
            .push(ValidationIssue::new(code, subject, message.into()));
    }

    fn typed(&self, id: &str, types: &[&str]) -> bool {
        self.doc.get(id).is_some_and(|e| e.has_any_type(types))
    }

    fn create_actions(&self) -> Vec<&'a Entity> {
        self.doc.entities_of_type("CreateAction").collect()
    }

    fn actions(&self) -> Vec<&'a Entity> {
        self.doc
            .entities
            .values()
            .filter(|e| e.has_any_type(ACTION_TYPES))
            .collect()
    }

    fn main_workflow_id(&self) -> Option<&'a str> {
        self.doc.root()?.refs("mainEntity").next()
    }

    fn main_workflow(&self) -> Option<&'a Entity> {
        self.main_workflow_id().and_then(|id| self.doc.get(id))
    }

    fn workflow_params(&self, wf: &Entity) -> BTreeSet<&'a str> {
        let wf = self.doc.get(&wf.id).expect("workflow is in the graph");
        wf.refs("input").chain(wf.refs("output")).collect()
    }

    fn is_workflow_run(&self, action: &Entity, wf_id: Option<&str>) -> bool {
        wf_id.is_some_and(|wf| action.refs("instrument").any(|i| i == wf))
    }

    // ---- common ----

    fn common(&mut self, requested: ProfileId, payload_check: bool) {
        let doc = self.doc;
        match doc.root() {
            None => self.push(
                RuleCode::C1Descriptor,
                Some(METADATA_DESCRIPTOR_ID),
                "metadata descriptor `about` does not reference exactly one entity in the graph",
            ),
            Some(root) if !root.has_type("Dataset") => self.push(
                RuleCode::C1Descriptor,
                Some(&root.id),
                "root entity is not typed Dataset",
            ),
            Some(_) => {}
        }

        if !profile::conforms_to_iris(doc).contains(&requested.iri()) {
            self.push(
                RuleCode::C2ConformsTo,
                doc.root_id(),
                format!("conformsTo does not include {}", requested.iri()),
            );
        }

        for e in doc.entities.values() {
            for (prop, values) in &e.properties {
                for id in values.iter().filter_map(Value::as_reference) {
                    if doc.get(id).is_some() {
                        continue;
                    }
                    if is_absolute_iri(id) {
                        self.push(
                            RuleCode::C4ExternalReference,
                            Some(&e.id),
                            format!("{prop} references external {id}"),
                        );
                    } else {
                        self.push(
                            RuleCode::C3DanglingReference,
                            Some(&e.id),
                            format!("{prop} references {id:?}, which is not in the graph"),
                        );
                    }
                }
            }
        }

        if payload_check {
            if let Some(base) = &doc.source_path {
                self.payload(base);
            }
        }
    }

    fn payload(&mut self, base: &Path) {
        let root_id = self.doc.root_id();
        for e in self.doc.entities.values() {
            if !e.has_any_type(&["MediaObject", "Dataset"])
                || e.id == METADATA_DESCRIPTOR_ID
                || Some(e.id.as_str()) == root_id
                || e.id.starts_with('#')
                || is_absolute_iri(&e.id)
            {
                continue;
            }
            let rel = percent_decode_str(&e.id).decode_utf8_lossy();
            let path = base.join(rel.trim_start_matches("./"));
            if !path.exists() {
                self.push(
                    RuleCode::C5PayloadMissing,
                    Some(&e.id),
                    format!("payload {} does not exist", path.display()),
                );
            }
        }
    }

    // ---- Process Run Crate ----

    fn process(&mut self) {
        let creates = self.create_actions();
        if creates.is_empty() {
            self.push(RuleCode::P1NoCreateAction, None, "crate has no CreateAction");
        }
        for a in &creates {
            self.instrument(a);
            self.agent(a);
            self.values_typed(a);
            let missing: Vec<&str> = ["startTime", "endTime"]
                .into_iter()
                .filter(|p| !a.has(p))
                .collect();
            if !missing.is_empty() {
                self.push(
                    RuleCode::P4Missing,
                    Some(&a.id),
                    format!("action has no {}", missing.join(" or ")),
                );
            }
        }
        for a in self.actions() {
            self.times(a);
            self.status(a);
        }
        let collections: Vec<&Entity> = self.doc.entities_of_type("Collection").collect();
        for col in collections {
            let parts: BTreeSet<&str> = col.refs("hasPart").collect();
            for main in col.refs("mainEntity") {
                if !parts.contains(main) {
                    self.push(
                        RuleCode::P6CollectionMainEntity,
                        Some(&col.id),
                        format!("mainEntity {main} is not listed in hasPart"),
                    );
                }
            }
        }
    }

    fn instrument(&mut self, a: &Entity) {
        let instruments: Vec<&str> = a.refs("instrument").collect();
        if instruments.is_empty() {
            self.push(RuleCode::P2InstrumentType, Some(&a.id), "action has no instrument");
        }
        for i in instruments {
            if !self.typed(i, TOOL_TYPES) {
                self.push(
                    RuleCode::P2InstrumentType,
                    Some(&a.id),
                    format!(
                        "instrument {i} is not a SoftwareApplication, SoftwareSourceCode or ComputationalWorkflow"
                    ),
                );
            }
        }
    }

    fn agent(&mut self, a: &Entity) {
        if !a.has("agent") {
            self.push(RuleCode::P3Agent, Some(&a.id), "action has no agent");
            return;
        }
        for v in a.values("agent") {
            let ok = v.as_reference().is_some_and(|id| self.typed(id, AGENT_TYPES));
            if !ok {
                self.push(
                    RuleCode::P3Agent,
                    Some(&a.id),
                    format!("agent {v} is not a Person or Organization"),
                );
            }
        }
    }

    fn values_typed(&mut self, a: &Entity) {
        for prop in ["object", "result"] {
            for v in a.values(prop) {
                match v {
                    Value::Reference(id) => {
                        if let Some(e) = self.doc.get(id) {
                            if !e.has_any_type(VALUE_TYPES) {
                                self.push(
                                    RuleCode::P5ValueType,
                                    Some(&a.id),
                                    format!("{prop} member {id} is not a File, Dataset, Collection or PropertyValue"),
                                );
                            }
                        }
                    }
                    literal => self.push(
                        RuleCode::P5ValueType,
                        Some(&a.id),
                        format!("{prop} member {literal:?} is an inline literal; PropertyValue is recommended"),
                    ),
                }
            }
        }
    }

    fn times(&mut self, a: &Entity) {
        let mut parsed = [None, None];
        for (slot, prop) in ["startTime", "endTime"].into_iter().enumerate() {
            let Some(v) = a.values(prop).first() else {
                continue;
            };
            match v.as_text().and_then(timestamp::parse) {
                Some(t) => parsed[slot] = Some(t),
                None => self.push(
                    RuleCode::P4Time,
                    Some(&a.id),
                    format!("{prop} {v:?} is not an ISO 8601 timestamp with offset"),
                ),
            }
        }
        if let [Some(start), Some(end)] = parsed {
            if end < start {
                self.push(RuleCode::P4Time, Some(&a.id), "endTime precedes startTime");
            }
        }
    }

    fn status(&mut self, a: &Entity) {
        for v in a.values("actionStatus") {
            let s = v.to_string();
            if s.ends_with("FailedActionStatus") {
                if !a.has("error") {
                    self.push(
                        RuleCode::P7ActionStatus,
                        Some(&a.id),
                        "FailedActionStatus without error",
                    );
                }
            } else if !s.ends_with("CompletedActionStatus") {
                self.push(
                    RuleCode::P7ActionStatus,
                    Some(&a.id),
                    format!("actionStatus {s} is neither CompletedActionStatus nor FailedActionStatus"),
                );
            }
        }
    }

    // ---- Workflow Run Crate ----

    fn workflow(&mut self) {
        let doc = self.doc;
        let root_id = doc.root_id();
        let Some(wf_id) = self.main_workflow_id() else {
            self.push(RuleCode::W1MainWorkflow, root_id, "root has no mainEntity");
            self.companion_profile();
            return;
        };
        let Some(wf) = doc.get(wf_id) else {
            self.push(
                RuleCode::W1MainWorkflow,
                root_id,
                format!("mainEntity {wf_id} is not in the graph"),
            );
            self.companion_profile();
            return;
        };
        let missing: Vec<&str> = WORKFLOW_TYPES
            .iter()
            .copied()
            .filter(|t| !wf.has_type(t))
            .collect();
        if !missing.is_empty() {
            let shown: Vec<&str> = missing
                .iter()
                .map(|t| if *t == "MediaObject" { "File" } else { t })
                .collect();
            self.push(
                RuleCode::W1MainWorkflow,
                Some(wf_id),
                format!("main workflow is not typed {}", shown.join(", ")),
            );
        }

        if !wf.refs("programmingLanguage").any(|l| self.typed(l, &["ComputerLanguage"])) {
            self.push(
                RuleCode::W2ProgrammingLanguage,
                Some(wf_id),
                "workflow has no programmingLanguage ComputerLanguage",
            );
        }

        let runs: Vec<&Entity> = self
            .create_actions()
            .into_iter()
            .filter(|a| self.is_workflow_run(a, Some(wf_id)))
            .collect();
        if runs.is_empty() {
            self.push(
                RuleCode::W3NoWorkflowRun,
                Some(wf_id),
                "no CreateAction has the main workflow as instrument",
            );
        }

        for prop in ["input", "output"] {
            for p in wf.refs(prop) {
                match doc.get(p) {
                    Some(fp) if fp.has_type("FormalParameter") => {
                        for needed in ["additionalType", "name"] {
                            if !fp.has(needed) {
                                self.push(
                                    RuleCode::W4FormalParameter,
                                    Some(p),
                                    format!("FormalParameter has no {needed}"),
                                );
                            }
                        }
                    }
                    Some(_) => self.push(
                        RuleCode::W4FormalParameter,
                        Some(wf_id),
                        format!("{prop} {p} is not a FormalParameter"),
                    ),
                    None => {}
                }
            }
        }

        let params = self.workflow_params(wf);
        for run in runs {
            self.example_of_work(run, &params, RuleCode::W5ExampleOfWork, "workflow");
        }
        self.companion_profile();
    }

    fn companion_profile(&mut self) {
        if !profile::conforms_to_iris(self.doc)
            .iter()
            .any(|i| i.starts_with(WORKFLOW_RO_CRATE_PREFIX))
        {
            self.push(
                RuleCode::W6WorkflowProfile,
                self.doc.root_id(),
                "conformsTo does not include the Workflow RO-Crate profile",
            );
        }
    }

    fn example_of_work(
        &mut self,
        action: &Entity,
        params: &BTreeSet<&str>,
        code: RuleCode,
        what: &str,
    ) {
        for prop in ["object", "result"] {
            for v in action.values(prop) {
                match v {
                    Value::Reference(id) => {
                        let Some(e) = self.doc.get(id) else { continue };
                        if !e.refs("exampleOfWork").any(|p| params.contains(p)) {
                            self.push(
                                code,
                                Some(id),
                                format!(
                                    "{prop} of {} has no exampleOfWork into the {what} parameters",
                                    action.id
                                ),
                            );
                        }
                    }
                    literal => self.push(
                        code,
                        Some(&action.id),
                        format!("{prop} literal {literal:?} cannot link to a {what} parameter"),
                    ),
                }
            }
        }
    }

    // ---- Provenance Run Crate ----

    fn provenance(&mut self) {
        let doc = self.doc;
        let wf_id = self.main_workflow_id();
        let wf = self.main_workflow();

        if let Some(wf) = wf {
            let parts: BTreeSet<&str> = wf.refs("hasPart").collect();
            let mut tools = BTreeSet::new();
            for s in wf.refs("step") {
                match doc.get(s) {
                    Some(step) if step.has_type("HowToStep") => tools.extend(step.refs("workExample")),
                    _ => self.push(
                        RuleCode::V2Step,
                        Some(&wf.id),
                        format!("step {s} is not a HowToStep"),
                    ),
                }
            }
            for tool in tools {
                if !parts.contains(tool) {
                    self.push(
                        RuleCode::V1HasPart,
                        Some(&wf.id),
                        format!("workflow hasPart does not include step tool {tool}"),
                    );
                }
            }
        }

        let steps: Vec<&Entity> = doc.entities_of_type("HowToStep").collect();
        for step in steps {
            if !step.refs("workExample").any(|t| self.typed(t, TOOL_TYPES)) {
                self.push(RuleCode::V2Step, Some(&step.id), "HowToStep has no workExample tool");
            }
        }

        let controls: Vec<&Entity> = doc.entities_of_type("ControlAction").collect();
        for ca in controls {
            let step_ids: Vec<&str> = ca.refs("instrument").collect();
            if step_ids.is_empty() {
                self.push(RuleCode::V3ControlAction, Some(&ca.id), "ControlAction has no instrument");
            }
            let mut tools = BTreeSet::new();
            for s in &step_ids {
                match doc.get(s) {
                    Some(step) if step.has_type("HowToStep") => tools.extend(step.refs("workExample")),
                    _ => self.push(
                        RuleCode::V3ControlAction,
                        Some(&ca.id),
                        format!("instrument {s} is not a HowToStep"),
                    ),
                }
            }
            for obj in ca.refs("object") {
                let Some(created) = doc.get(obj).filter(|e| e.has_type("CreateAction")) else {
                    continue;
                };
                for i in created.refs("instrument") {
                    if !tools.contains(i) {
                        self.push(
                            RuleCode::V3ControlAction,
                            Some(&ca.id),
                            format!("object {obj} ran {i}, which is not the step's workExample"),
                        );
                    }
                }
            }
        }

        let organizes: Vec<&Entity> = doc.entities_of_type("OrganizeAction").collect();
        if organizes.is_empty() {
            self.push(RuleCode::V4NoOrganizeAction, None, "crate has no OrganizeAction");
        }
        for oa in organizes {
            let instruments: Vec<&str> = oa.refs("instrument").collect();
            if instruments.is_empty()
                || !instruments.iter().all(|i| self.typed(i, &["SoftwareApplication"]))
            {
                self.push(
                    RuleCode::V4OrganizeAction,
                    Some(&oa.id),
                    "instrument is not a SoftwareApplication",
                );
            }
            let results = oa.values("result");
            let all_runs = !results.is_empty()
                && results.iter().all(|v| {
                    v.as_reference()
                        .and_then(|id| doc.get(id))
                        .is_some_and(|a| a.has_type("CreateAction") && self.is_workflow_run(a, wf_id))
                });
            if !all_runs {
                self.push(
                    RuleCode::V4OrganizeAction,
                    Some(&oa.id),
                    "result is not the workflow-level CreateAction",
                );
            }
            for obj in oa.values("object") {
                let is_control = obj
                    .as_reference()
                    .is_some_and(|id| self.typed(id, &["ControlAction"]));
                if !is_control {
                    self.push(
                        RuleCode::V4ExtraObject,
                        Some(&oa.id),
                        format!("object member {obj} is not a ControlAction"),
                    );
                }
            }
        }

        for e in doc.entities.values() {
            if e.has_type("ParameterConnection") {
                for prop in ["sourceParameter", "targetParameter"] {
                    let ok = e.refs(prop).next().is_some() && e.refs(prop).all(|p| doc.get(p).is_some());
                    if !ok {
                        self.push(
                            RuleCode::V5ParameterConnection,
                            Some(&e.id),
                            format!("{prop} is missing or dangling"),
                        );
                    }
                }
            }
            if e.has("connection") && !e.has_type("HowToStep") && Some(e.id.as_str()) != wf_id {
                self.push(
                    RuleCode::V5ParameterConnection,
                    Some(&e.id),
                    "connection is only allowed on a HowToStep or the main workflow",
                );
            }
        }

        let tool_runs: Vec<&Entity> = self
            .create_actions()
            .into_iter()
            .filter(|a| !self.is_workflow_run(a, wf_id))
            .collect();
        for run in tool_runs {
            let params: BTreeSet<&str> = run
                .refs("instrument")
                .filter_map(|i| doc.get(i))
                .flat_map(|t| t.refs("input").chain(t.refs("output")))
                .collect();
            self.example_of_work(run, &params, RuleCode::V6ToolExampleOfWork, "tool");
        }
    }
}
