//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use regex::Regex;
use serde_json::{json, Value as Json};
use wfrun::{parse_crate, read_crate_dir, CrateDocument};

pub const CORPUS: &[&str] = &["listing1", "listing2", "snippet", "minimal", "empty", "engine-demo"];

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn load(name: &str) -> CrateDocument {
    read_crate_dir(&fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn corpus() -> Vec<(&'static str, CrateDocument)> {
    CORPUS.iter().map(|n| (*n, load(n))).collect()
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// The `n`th (0-based) published code listing, with the one line the
/// typesetter wrapped joined back together.
pub fn published_listing(n: usize) -> String {
    let source = read(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../paper.md"));
    let block = Regex::new(r"(?s)\\begin\{lstlisting\}\[[^\n]*\]\n(.*?)\\end\{lstlisting\}").unwrap();
    let listing = block
        .captures_iter(&source)
        .nth(n)
        .unwrap_or_else(|| panic!("no listing {n}"))[1]
        .to_string();
    Regex::new(r",\s*\n\s+'").unwrap().replace_all(&listing, ", '").into_owned()
}

pub fn trim_trailing(s: &str) -> String {
    s.lines().map(str::trim_end).collect::<Vec<_>>().join("\n").trim_end().to_string()
}

/// Keeps only action, inputs and outputs lines, with a blank line between
/// actions.
pub fn io_projection(report: &str) -> String {
    let mut out: Vec<&str> = Vec::new();
    let mut section = false;
    for line in report.lines() {
        if line.starts_with("action: ") {
            if !out.is_empty() {
                out.push("");
            }
            out.push(line);
            section = false;
        } else if line == "  inputs:" || line == "  outputs:" {
            out.push(line);
            section = true;
        } else if line.starts_with("    ") && section {
            out.push(line);
        } else {
            section = false;
        }
    }
    out.join("\n") + "\n"
}

// ---- raw JSON access, independent of the library model ----

pub fn raw_graph(name: &str) -> Vec<Json> {
    let text = read(&fixture(name).join("ro-crate-metadata.json"));
    let v: Json = serde_json::from_str(&text).unwrap();
    v["@graph"].as_array().unwrap().clone()
}

pub fn raw_types(e: &Json) -> Vec<String> {
    match &e["@type"] {
        Json::String(s) => vec![s.clone()],
        Json::Array(a) => a.iter().filter_map(|t| t.as_str().map(String::from)).collect(),
        _ => Vec::new(),
    }
}

pub fn raw_len(v: &Json) -> usize {
    match v {
        Json::Null => 0,
        Json::Array(a) => a.len(),
        _ => 1,
    }
}

// ---- graph mutation ----

pub struct Graph {
    pub doc: Json,
}

impl Graph {
    pub fn from_fixture(name: &str) -> Self {
        let text = read(&fixture(name).join("ro-crate-metadata.json"));
        Graph {
            doc: serde_json::from_str(&text).unwrap(),
        }
    }

    fn items(&mut self) -> &mut Vec<Json> {
        self.doc["@graph"].as_array_mut().unwrap()
    }

    pub fn ids(&self) -> Vec<String> {
        self.doc["@graph"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| e["@id"].as_str().unwrap().to_string())
            .collect()
    }

    pub fn entity(&mut self, id: &str) -> &mut serde_json::Map<String, Json> {
        self.items()
            .iter_mut()
            .find(|e| e["@id"] == id)
            .unwrap_or_else(|| panic!("no entity {id}"))
            .as_object_mut()
            .unwrap()
    }

    pub fn add(&mut self, entity: Json) -> &mut Self {
        self.items().push(entity);
        self
    }

    pub fn remove(&mut self, id: &str) -> &mut Self {
        self.items().retain(|e| e["@id"] != id);
        self
    }

    pub fn remove_where(&mut self, f: impl Fn(&Json) -> bool) -> &mut Self {
        self.items().retain(|e| !f(e));
        self
    }

    pub fn set(&mut self, id: &str, prop: &str, value: Json) -> &mut Self {
        self.entity(id).insert(prop.to_string(), value);
        self
    }

    pub fn unset(&mut self, id: &str, prop: &str) -> &mut Self {
        self.entity(id).remove(prop);
        self
    }

    fn values(&mut self, id: &str, prop: &str) -> Vec<Json> {
        match self.entity(id).remove(prop) {
            None => Vec::new(),
            Some(Json::Array(a)) => a,
            Some(v) => vec![v],
        }
    }

    pub fn push(&mut self, id: &str, prop: &str, value: Json) -> &mut Self {
        let mut vals = self.values(id, prop);
        vals.push(value);
        self.set(id, prop, Json::Array(vals))
    }

    pub fn push_ref(&mut self, id: &str, prop: &str, target: &str) -> &mut Self {
        self.push(id, prop, json!({ "@id": target }))
    }

    pub fn remove_ref(&mut self, id: &str, prop: &str, target: &str) -> &mut Self {
        let mut vals = self.values(id, prop);
        vals.retain(|v| v["@id"] != target);
        self.set(id, prop, Json::Array(vals))
    }

    pub fn remove_type(&mut self, id: &str, t: &str) -> &mut Self {
        let types: Vec<Json> = raw_types(&Json::Object(self.entity(id).clone()))
            .into_iter()
            .filter(|x| x != t)
            .map(Json::String)
            .collect();
        self.set(id, "@type", Json::Array(types))
    }

    pub fn to_doc(&self, source: Option<&Path>) -> CrateDocument {
        parse_crate(&self.doc.to_string(), source).expect("mutated crate parses")
    }
}

// ---- PROV-N well-formedness, written against the notation rather than
// the exporter ----

#[derive(Debug, Default)]
pub struct ProvnSummary {
    pub statements: BTreeMap<String, usize>,
    pub entities: BTreeSet<String>,
    pub agents: BTreeSet<String>,
    pub activities: BTreeSet<String>,
    pub lines: Vec<String>,
}

fn split_args(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut quoted = false;
    let mut cur = String::new();
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' if quoted => {
                cur.push(c);
                if let Some(n) = chars.next() {
                    cur.push(n);
                }
                continue;
            }
            '"' => quoted = !quoted,
            '[' if !quoted => depth += 1,
            ']' if !quoted => depth -= 1,
            ',' if !quoted && depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

/// Checks the document frame, prefix declarations, qualified names,
/// activity times, and that every identifier a relation mentions is
/// declared with the right kind.
pub fn check_provn(text: &str) -> Result<ProvnSummary, String> {
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if lines.first() != Some(&"document") || lines.last() != Some(&"endDocument") {
        return Err("missing document/endDocument frame".into());
    }
    let prefix_re = Regex::new(r"^prefix ([A-Za-z_][A-Za-z0-9_-]*) <([^>\s]+)>$").unwrap();
    let stmt_re = Regex::new(r"^([A-Za-z]+)\((.*)\)$").unwrap();
    let qname_re = Regex::new(r"^([A-Za-z_][A-Za-z0-9_-]*):((?:[A-Za-z0-9_-]|%[0-9A-F]{2})+)$").unwrap();
    let time_re =
        Regex::new(r"^-?\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?(Z|[+-]\d{2}:\d{2})$").unwrap();

    let mut prefixes = BTreeSet::new();
    let mut sum = ProvnSummary::default();
    let mut refs: Vec<(String, &'static str, String)> = Vec::new();
    for line in &lines[1..lines.len() - 1] {
        if let Some(c) = prefix_re.captures(line) {
            prefixes.insert(c[1].to_string());
            continue;
        }
        let c = stmt_re.captures(line).ok_or_else(|| format!("unreadable line {line:?}"))?;
        let kind = c[1].to_string();
        let args = split_args(&c[2]);
        let qname = |a: &str| -> Result<String, String> {
            let m = qname_re.captures(a).ok_or_else(|| format!("bad qualified name {a:?}"))?;
            if !prefixes.contains(&m[1]) {
                return Err(format!("undeclared prefix in {a:?}"));
            }
            Ok(a.to_string())
        };
        let need = |n: usize| {
            if args.len() < n {
                Err(format!("{kind} needs {n} arguments: {line}"))
            } else {
                Ok(())
            }
        };
        match kind.as_str() {
            "entity" => {
                need(1)?;
                sum.entities.insert(qname(&args[0])?);
            }
            "agent" => {
                need(1)?;
                sum.agents.insert(qname(&args[0])?);
            }
            "activity" => {
                need(1)?;
                sum.activities.insert(qname(&args[0])?);
                for t in args.iter().skip(1).take(2) {
                    if t != "-" && !time_re.is_match(t) {
                        return Err(format!("bad time {t:?}"));
                    }
                }
            }
            "used" => {
                need(2)?;
                refs.push((qname(&args[0])?, "activity", line.to_string()));
                refs.push((qname(&args[1])?, "entity", line.to_string()));
            }
            "wasGeneratedBy" => {
                need(2)?;
                refs.push((qname(&args[0])?, "entity", line.to_string()));
                refs.push((qname(&args[1])?, "activity", line.to_string()));
            }
            "wasAssociatedWith" => {
                need(3)?;
                refs.push((qname(&args[0])?, "activity", line.to_string()));
                if args[1] != "-" {
                    refs.push((qname(&args[1])?, "agent", line.to_string()));
                }
                if args[2] != "-" {
                    refs.push((qname(&args[2])?, "entity", line.to_string()));
                }
            }
            other => return Err(format!("unexpected statement {other}")),
        }
        *sum.statements.entry(kind).or_default() += 1;
        sum.lines.push(line.to_string());
    }
    for (id, kind, line) in refs {
        let declared = match kind {
            "activity" => &sum.activities,
            "agent" => &sum.agents,
            _ => &sum.entities,
        };
        if !declared.contains(&id) {
            return Err(format!("{id} used as {kind} but not declared: {line}"));
        }
    }
    Ok(sum)
}

/// Replaces every ISO date-time in `s` with a fixed token.
pub fn mask_timestamps(s: &str) -> String {
    Regex::new(r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?(Z|[+-]\d{2}:\d{2})")
        .unwrap()
        .replace_all(s, "<time>")
        .into_owned()
}

// ---- rule coverage: one mutation of the engine-built crate per code ----

pub const RULE_BASE: &str = "engine-demo";

pub struct RuleCase {
    pub code: wfrun::RuleCode,
    pub mutate: fn(&mut Graph),
}

pub fn rule_cases() -> Vec<RuleCase> {
    use wfrun::RuleCode::*;
    const WF: &str = "head_sort.json";
    let case = |code, mutate| RuleCase { code, mutate };
    vec![
        case(C1Descriptor, |g| {
            g.set("./", "@type", json!("CreativeWork"));
        }),
        case(C2ConformsTo, |g| {
            g.remove_ref("./", "conformsTo", "https://w3id.org/ro/wfrun/process/0.5");
        }),
        case(C3DanglingReference, |g| {
            g.push_ref("./", "hasPart", "missing.txt");
        }),
        case(C4ExternalReference, |g| {
            g.set("./", "license", json!({"@id": "https://spdx.org/licenses/MIT"}));
        }),
        case(C5PayloadMissing, |g| {
            g.add(json!({"@id": "ghost.txt", "@type": "File"}));
            g.push_ref("./", "hasPart", "ghost.txt");
        }),
        case(P1NoCreateAction, |g| {
            g.remove_where(|e| {
                raw_types(e).iter().any(|t| t.ends_with("Action"))
            });
        }),
        case(P2InstrumentType, |g| {
            g.set("#run-head", "instrument", json!({"@id": "#a-researcher"}));
        }),
        case(P3Agent, |g| {
            g.unset("#run-head", "agent");
        }),
        case(P4Time, |g| {
            g.set("#run-head", "endTime", json!("yesterday"));
        }),
        case(P4Missing, |g| {
            g.unset("#run-head", "endTime");
        }),
        case(P5ValueType, |g| {
            g.push("#run-head", "object", json!("a bare string"));
        }),
        case(P6CollectionMainEntity, |g| {
            g.add(json!({"@id": "#bundle", "@type": "Collection",
                "hasPart": [{"@id": "lines.txt"}], "mainEntity": {"@id": "sorted.txt"}}));
        }),
        case(P7ActionStatus, |g| {
            g.set("#run-head", "actionStatus", json!("PotentialActionStatus"));
        }),
        case(W1MainWorkflow, |g| {
            g.remove_type(WF, "SoftwareSourceCode");
        }),
        case(W2ProgrammingLanguage, |g| {
            g.set("#wfrun-plan-language", "@type", json!("CreativeWork"));
        }),
        case(W3NoWorkflowRun, |g| {
            g.set("#run-workflow", "instrument", json!({"@id": "#head"}));
        }),
        case(W4FormalParameter, |g| {
            g.unset("head_sort.json#lines", "additionalType");
        }),
        case(W5ExampleOfWork, |g| {
            g.remove_ref("lines.txt", "exampleOfWork", "head_sort.json#lines");
        }),
        case(W6WorkflowProfile, |g| {
            g.remove_ref("./", "conformsTo", "https://w3id.org/workflowhub/workflow-ro-crate/1.0");
        }),
        case(V1HasPart, |g| {
            g.remove_ref(WF, "hasPart", "#sort");
        }),
        case(V2Step, |g| {
            g.push_ref(WF, "step", "#head");
        }),
        case(V3ControlAction, |g| {
            g.set("#control-sort", "object", json!({"@id": "#run-head"}));
        }),
        case(V4NoOrganizeAction, |g| {
            g.remove("#run-organize");
        }),
        case(V4OrganizeAction, |g| {
            g.set("#run-organize", "result", json!({"@id": "#run-head"}));
        }),
        case(V4ExtraObject, |g| {
            g.push_ref("#run-organize", "object", "lines.txt");
        }),
        case(V5ParameterConnection, |g| {
            g.unset("#connection-2", "sourceParameter");
        }),
        case(V6ToolExampleOfWork, |g| {
            g.remove_ref("selection.txt", "exampleOfWork", "#sort/selection");
        }),
        case(AutoDefaulted, |g| {
            for iri in [
                "https://w3id.org/ro/wfrun/process/0.5",
                "https://w3id.org/ro/wfrun/workflow/0.5",
                "https://w3id.org/ro/wfrun/provenance/0.5",
            ] {
                g.remove_ref("./", "conformsTo", iri);
            }
        }),
    ]
}

fn rule_report(doc: &CrateDocument, code: wfrun::RuleCode) -> wfrun::ValidationReport {
    if code == wfrun::RuleCode::AutoDefaulted {
        wfrun::validate_auto(doc, true)
    } else {
        wfrun::validate(doc, code.profile(), true)
    }
}

/// Validates base and mutant at the code's own profile (auto mode for
/// `AUTO_DEFAULTED`) with payload checking, and requires every new issue to
/// carry exactly the target code at its catalogued severity.
pub fn check_rule_case(case: &RuleCase) -> Result<(), String> {
    let dir = fixture(RULE_BASE);
    let base = Graph::from_fixture(RULE_BASE).to_doc(Some(&dir));
    let mut g = Graph::from_fixture(RULE_BASE);
    (case.mutate)(&mut g);
    let mutant = g.to_doc(Some(&dir));
    let before = rule_report(&base, case.code);
    let after = rule_report(&mutant, case.code);
    let added: Vec<_> = after.issues.iter().filter(|i| !before.issues.contains(i)).collect();
    if added.is_empty() {
        return Err(format!("{}: mutation raised nothing", case.code.as_str()));
    }
    for i in &added {
        if i.code != case.code || i.severity != case.code.severity() {
            return Err(format!("{}: unexpected {i}", case.code.as_str()));
        }
    }
    let new_codes: BTreeSet<_> = after.codes().difference(&before.codes()).copied().collect();
    if !new_codes.iter().all(|c| *c == case.code) {
        return Err(format!("{}: new codes {new_codes:?}", case.code.as_str()));
    }
    Ok(())
}

// ---- generated crates for property checks ----

use proptest::prelude::*;

#[derive(Debug, Clone)]
pub struct ArbAction {
    pub organize: bool,
    pub instrument: Option<usize>,
    pub start: Option<u32>,
    pub end: Option<u32>,
    pub objects: Vec<usize>,
    pub results: Vec<usize>,
    pub literal: Option<i32>,
}

fn arb_action() -> impl Strategy<Value = ArbAction> {
    (
        prop::bool::weighted(0.15),
        prop::option::weighted(0.85, 0..3usize),
        prop::option::weighted(0.8, 0..100_000u32),
        prop::option::weighted(0.8, 0..100_000u32),
        prop::collection::vec(0..5usize, 0..4),
        prop::collection::vec(0..5usize, 0..3),
        prop::option::weighted(0.2, any::<i32>()),
    )
        .prop_map(|(organize, instrument, start, end, objects, results, literal)| ArbAction {
            organize,
            instrument,
            start,
            end,
            objects,
            results,
            literal,
        })
}

fn stamp(secs: u32) -> String {
    format!(
        "2024-02-{:02}T{:02}:{:02}:{:02}.{:06}+00:00",
        1 + secs / 86_400 % 28,
        secs / 3600 % 24,
        secs / 60 % 60,
        secs % 60,
        secs % 997
    )
}

/// Metadata JSON for a crate with the given actions, three tools and five
/// data files.
pub fn crate_json(actions: &[ArbAction]) -> String {
    let mut graph = vec![
        json!({"@id": "ro-crate-metadata.json", "@type": "CreativeWork", "about": {"@id": "./"}}),
        json!({"@id": "./", "@type": "Dataset",
               "conformsTo": {"@id": "https://w3id.org/ro/wfrun/process/0.5"}}),
    ];
    for t in 0..3 {
        graph.push(json!({"@id": format!("#tool-{t}"), "@type": "SoftwareApplication", "name": format!("tool {t}")}));
    }
    for f in 0..5 {
        graph.push(json!({"@id": format!("data/file-{f}.txt"), "@type": "File"}));
    }
    for (i, a) in actions.iter().enumerate() {
        let mut e = serde_json::Map::new();
        e.insert("@id".into(), json!(format!("#action-{i}")));
        e.insert("@type".into(), json!(if a.organize { "OrganizeAction" } else { "CreateAction" }));
        if let Some(t) = a.instrument {
            e.insert("instrument".into(), json!({"@id": format!("#tool-{t}")}));
        }
        if let Some(s) = a.start {
            e.insert("startTime".into(), json!(stamp(s)));
        }
        if let Some(s) = a.end {
            e.insert("endTime".into(), json!(stamp(s)));
        }
        let mut objects: Vec<Json> = a
            .objects
            .iter()
            .map(|f| json!({"@id": format!("data/file-{f}.txt")}))
            .collect();
        if let Some(n) = a.literal {
            objects.push(json!(n));
        }
        e.insert("object".into(), Json::Array(objects));
        e.insert(
            "result".into(),
            Json::Array(a.results.iter().map(|f| json!({"@id": format!("data/file-{f}.txt")})).collect()),
        );
        graph.push(Json::Object(e));
    }
    json!({"@context": "https://w3id.org/ro/crate/1.1/context", "@graph": graph}).to_string()
}

pub fn arb_crate() -> impl Strategy<Value = String> {
    prop::collection::vec(arb_action(), 0..7).prop_map(|a| crate_json(&a))
}
