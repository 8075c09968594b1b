//! Export of retrospective provenance as W3C PROV, serialized as PROV-N.
//!
//! Realized actions (`CreateAction`, `OrganizeAction`) become activities,
//! their instruments become plans, agents become PROV agents, and the
//! `object`/`result` members of each `CreateAction` become used and
//! generated entities. Control actions and parameter connections have no
//! PROV counterpart and are skipped.

use std::fmt::Write as _;

use indexmap::IndexMap;
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::Serialize;
use thiserror::Error;

use crate::model::{is_local_reference, CrateDocument, Entity, Value};
use crate::terms::{SCHEMA, WFRUN};
use crate::timestamp;

pub const PROV_NS: &str = "http://www.w3.org/ns/prov#";
/// Namespace for crate-local identifiers.
pub const CRATE_NS: &str = "arcp://name,ro-crate/";

const LOCAL_NAME: &AsciiSet = &NON_ALPHANUMERIC.remove(b'_').remove(b'-');

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProvError {
    #[error("action references missing entity {0}")]
    DanglingReference(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AgentKind {
    Person,
    Organization,
    SoftwareAgent,
    Agent,
}

impl AgentKind {
    fn of(entity: Option<&Entity>) -> Self {
        match entity {
            Some(e) if e.has_type("Person") => AgentKind::Person,
            Some(e) if e.has_type("Organization") => AgentKind::Organization,
            Some(e) if e.has_type("SoftwareApplication") => AgentKind::SoftwareAgent,
            _ => AgentKind::Agent,
        }
    }

    fn prov_type(self) -> Option<&'static str> {
        match self {
            AgentKind::Person => Some("prov:Person"),
            AgentKind::Organization => Some("prov:Organization"),
            AgentKind::SoftwareAgent => Some("prov:SoftwareAgent"),
            AgentKind::Agent => None,
        }
    }
}

/// Identifiers are crate ids; they are qualified only when rendered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ProvStatement {
    Entity {
        id: String,
        plan: bool,
        value: Option<String>,
    },
    Agent {
        id: String,
        kind: AgentKind,
    },
    Activity {
        id: String,
        action_type: String,
        start: Option<String>,
        end: Option<String>,
    },
    Used {
        activity: String,
        entity: String,
    },
    WasGeneratedBy {
        entity: String,
        activity: String,
    },
    /// Carries the qualified association's `prov:hadPlan`.
    WasAssociatedWith {
        activity: String,
        agent: Option<String>,
        plan: Option<String>,
    },
}

impl ProvStatement {
    fn rank(&self) -> u8 {
        match self {
            ProvStatement::Entity { .. } => 0,
            ProvStatement::Agent { .. } => 1,
            ProvStatement::Activity { .. } => 2,
            ProvStatement::WasAssociatedWith { .. } => 3,
            ProvStatement::Used { .. } => 4,
            ProvStatement::WasGeneratedBy { .. } => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProvDocument {
    pub prefixes: IndexMap<String, String>,
    pub statements: Vec<ProvStatement>,
}

impl ProvDocument {
    fn empty() -> Self {
        let prefixes = [("prov", PROV_NS), ("s", SCHEMA), ("wfrun", WFRUN), ("crate", CRATE_NS)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        ProvDocument {
            prefixes,
            statements: Vec::new(),
        }
    }

    pub fn activities(&self) -> usize {
        self.count(|s| matches!(s, ProvStatement::Activity { .. }))
    }

    pub fn used(&self) -> usize {
        self.count(|s| matches!(s, ProvStatement::Used { .. }))
    }

    pub fn generated(&self) -> usize {
        self.count(|s| matches!(s, ProvStatement::WasGeneratedBy { .. }))
    }

    fn count(&self, f: impl Fn(&ProvStatement) -> bool) -> usize {
        self.statements.iter().filter(|s| f(s)).count()
    }
}

#[derive(Default)]
struct Builder {
    entities: IndexMap<String, (bool, Option<String>)>,
    agents: IndexMap<String, AgentKind>,
    rest: Vec<ProvStatement>,
}

impl Builder {
    fn entity(&mut self, id: &str, plan: bool, value: Option<String>) {
        let slot = self.entities.entry(id.to_string()).or_insert((false, None));
        slot.0 |= plan;
        if slot.1.is_none() {
            slot.1 = value;
        }
    }
}

fn lookup<'a>(doc: &'a CrateDocument, id: &str) -> Result<Option<&'a Entity>, ProvError> {
    match doc.get(id) {
        Some(e) => Ok(Some(e)),
        None if is_local_reference(id) => Err(ProvError::DanglingReference(id.to_string())),
        None => Ok(None),
    }
}

/// Maps the realized actions of `doc` to PROV statements.
pub fn export_prov(doc: &CrateDocument) -> Result<ProvDocument, ProvError> {
    let mut b = Builder::default();
    let actions = doc
        .entities
        .values()
        .filter(|e| e.has_any_type(&["CreateAction", "OrganizeAction"]));
    for action in actions {
        let kind = if action.has_type("OrganizeAction") {
            "OrganizeAction"
        } else {
            "CreateAction"
        };
        let time = |p: &str| {
            action
                .first_string(p)
                .filter(|t| timestamp::parse(t).is_some())
        };
        b.rest.push(ProvStatement::Activity {
            id: action.id.clone(),
            action_type: kind.to_string(),
            start: time("startTime"),
            end: time("endTime"),
        });

        let plan = match action.refs("instrument").next() {
            Some(id) => {
                lookup(doc, id)?;
                b.entity(id, true, None);
                Some(id.to_string())
            }
            None => None,
        };
        let mut agents = Vec::new();
        for id in action.refs("agent") {
            let kind = AgentKind::of(lookup(doc, id)?);
            b.agents.entry(id.to_string()).or_insert(kind);
            agents.push(id.to_string());
        }
        if agents.is_empty() {
            if plan.is_some() {
                b.rest.push(ProvStatement::WasAssociatedWith {
                    activity: action.id.clone(),
                    agent: None,
                    plan,
                });
            }
        } else {
            for agent in agents {
                b.rest.push(ProvStatement::WasAssociatedWith {
                    activity: action.id.clone(),
                    agent: Some(agent),
                    plan: plan.clone(),
                });
            }
        }

        if kind != "CreateAction" {
            continue;
        }
        for (property, generated) in [("object", false), ("result", true)] {
            for (i, v) in action.values(property).iter().enumerate() {
                let id = match v {
                    Value::Reference(id) => {
                        lookup(doc, id)?;
                        b.entity(id, false, None);
                        id.clone()
                    }
                    literal => {
                        let id = format!("{}/{property}/{i}", action.id);
                        b.entity(&id, false, Some(literal.to_string()));
                        id
                    }
                };
                b.rest.push(if generated {
                    ProvStatement::WasGeneratedBy {
                        entity: id,
                        activity: action.id.clone(),
                    }
                } else {
                    ProvStatement::Used {
                        activity: action.id.clone(),
                        entity: id,
                    }
                });
            }
        }
    }

    let mut pd = ProvDocument::empty();
    pd.statements.extend(
        b.entities
            .into_iter()
            .map(|(id, (plan, value))| ProvStatement::Entity { id, plan, value }),
    );
    pd.statements.extend(
        b.agents
            .into_iter()
            .map(|(id, kind)| ProvStatement::Agent { id, kind }),
    );
    b.rest.sort_by_key(ProvStatement::rank);
    pd.statements.extend(b.rest);
    Ok(pd)
}

/// Qualified name for a crate id under the `crate` prefix.
pub fn qualified(id: &str) -> String {
    format!("crate:{}", utf8_percent_encode(id, LOCAL_NAME))
}

fn marker(id: &Option<String>) -> String {
    id.as_deref().map(qualified).unwrap_or_else(|| "-".to_string())
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn render_provn(pd: &ProvDocument) -> String {
    let mut out = String::from("document\n");
    for (prefix, iri) in &pd.prefixes {
        let _ = writeln!(out, "  prefix {prefix} <{iri}>");
    }
    for s in &pd.statements {
        let line = match s {
            ProvStatement::Entity { id, plan, value } => {
                let mut attrs = Vec::new();
                if *plan {
                    attrs.push("prov:type='prov:Plan'".to_string());
                }
                if let Some(v) = value {
                    attrs.push(format!("prov:value=\"{}\"", escape(v)));
                }
                if attrs.is_empty() {
                    format!("entity({})", qualified(id))
                } else {
                    format!("entity({}, [{}])", qualified(id), attrs.join(", "))
                }
            }
            ProvStatement::Agent { id, kind } => match kind.prov_type() {
                Some(t) => format!("agent({}, [prov:type='{t}'])", qualified(id)),
                None => format!("agent({})", qualified(id)),
            },
            ProvStatement::Activity {
                id,
                action_type,
                start,
                end,
            } => format!(
                "activity({}, {}, {}, [prov:type='s:{action_type}'])",
                qualified(id),
                start.as_deref().unwrap_or("-"),
                end.as_deref().unwrap_or("-"),
            ),
            ProvStatement::Used { activity, entity } => {
                format!("used({}, {}, -)", qualified(activity), qualified(entity))
            }
            ProvStatement::WasGeneratedBy { entity, activity } => {
                format!("wasGeneratedBy({}, {}, -)", qualified(entity), qualified(activity))
            }
            ProvStatement::WasAssociatedWith {
                activity,
                agent,
                plan,
            } => format!(
                "wasAssociatedWith({}, {}, {})",
                qualified(activity),
                marker(agent),
                marker(plan)
            ),
        };
        let _ = writeln!(out, "  {line}");
    }
    out.push_str("endDocument\n");
    out
}
