//! Per-action execution report.
//!
//! [`action_views`] resolves every `CreateAction` into an [`ActionView`]
//! (instrument, step, times, and inputs/outputs paired with the formal
//! parameters they realize); [`render_report`] prints them in the
//! `action:` / `instrument:` / `inputs:` text layout. [`dataflow_graph`]
//! recovers the implicit workflow formed by entities that one action
//! produces and another consumes.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::model::{CrateDocument, Entity, Value};
use crate::timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    WorkflowRun,
    ToolRun,
    Orchestration,
}

/// One input or output value of an action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResolvedParam {
    /// What the report shows: the `value` of a PropertyValue, the id of
    /// any other entity, or an inline literal verbatim.
    pub display: String,
    /// Entity id, or the literal text for inline values.
    pub value_id: String,
    /// The FormalParameter this value realizes, when linked.
    pub param_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActionView {
    pub id: String,
    pub kind: ActionKind,
    pub step_id: Option<String>,
    pub instrument_id: Option<String>,
    pub instrument_name: Option<String>,
    /// In the order the instrument declares them.
    pub instrument_types: Vec<String>,
    pub start_time: Option<String>,
    pub end_time: Option<String>,
    pub status: Option<String>,
    pub inputs: Vec<ResolvedParam>,
    pub outputs: Vec<ResolvedParam>,
}

/// One view per `CreateAction`, ordered by start time (actions without one
/// last), ties broken by id.
pub fn action_views(doc: &CrateDocument) -> Vec<ActionView> {
    let mut views: Vec<ActionView> = doc
        .entities_of_type("CreateAction")
        .map(|a| view_of(doc, a))
        .collect();
    views.sort_by(compare_views);
    views
}

fn compare_views(a: &ActionView, b: &ActionView) -> Ordering {
    start_key(a).cmp(&start_key(b)).then_with(|| a.id.cmp(&b.id))
}

fn start_key(v: &ActionView) -> (u8, Option<chrono::DateTime<chrono::FixedOffset>>, Option<&str>) {
    match v.start_time.as_deref() {
        Some(s) => match timestamp::parse(s) {
            Some(t) => (0, Some(t), None),
            None => (1, None, Some(s)),
        },
        None => (2, None, None),
    }
}

fn view_of(doc: &CrateDocument, action: &Entity) -> ActionView {
    let instrument_id = action.refs("instrument").next().map(str::to_string);
    let instrument = instrument_id.as_deref().and_then(|id| doc.get(id));
    let kind = if action.has_type("OrganizeAction") {
        ActionKind::Orchestration
    } else if instrument.is_some_and(|i| i.has_type("ComputationalWorkflow")) {
        ActionKind::WorkflowRun
    } else {
        ActionKind::ToolRun
    };
    let instrument_name = instrument_id.as_deref().map(|id| {
        instrument
            .and_then(|i| i.first_string("name"))
            .unwrap_or_else(|| last_segment(id).to_string())
    });
    let step_id = doc
        .entities_of_type("ControlAction")
        .find(|c| c.refs("object").any(|o| o == action.id))
        .and_then(|c| c.refs("instrument").next())
        .map(str::to_string);

    ActionView {
        id: action.id.clone(),
        kind,
        step_id,
        instrument_types: instrument
            .map(|i| i.types.iter().cloned().collect())
            .unwrap_or_default(),
        instrument_id,
        instrument_name,
        start_time: action.first_string("startTime"),
        end_time: action.first_string("endTime"),
        status: action.first_string("actionStatus"),
        inputs: resolve_params(doc, action.values("object"), instrument, "input"),
        outputs: resolve_params(doc, action.values("result"), instrument, "output"),
    }
}

fn last_segment(id: &str) -> &str {
    id.trim_end_matches('/').rsplit('/').next().unwrap_or(id)
}

/// Pairs values with the instrument's formal parameters: declared parameter
/// order first, then unlinked values in the order the action lists them.
fn resolve_params(
    doc: &CrateDocument,
    values: &[Value],
    instrument: Option<&Entity>,
    direction: &str,
) -> Vec<ResolvedParam> {
    let mut taken = vec![false; values.len()];
    let mut out = Vec::with_capacity(values.len());
    let params: Vec<&str> = instrument.map(|i| i.refs(direction).collect()).unwrap_or_default();
    for param in params {
        for (idx, v) in values.iter().enumerate() {
            if taken[idx] {
                continue;
            }
            let linked = v
                .as_reference()
                .and_then(|id| doc.get(id))
                .is_some_and(|e| e.refs("exampleOfWork").any(|p| p == param));
            if linked {
                taken[idx] = true;
                out.push(resolved(doc, v, Some(param)));
            }
        }
    }
    for (idx, v) in values.iter().enumerate() {
        if !taken[idx] {
            out.push(resolved(doc, v, None));
        }
    }
    out
}

fn resolved(doc: &CrateDocument, v: &Value, param: Option<&str>) -> ResolvedParam {
    let value_id = v.to_string();
    let display = match v.as_reference().and_then(|id| doc.get(id)) {
        Some(e) if e.has_type("PropertyValue") => {
            e.first_string("value").unwrap_or_else(|| value_id.clone())
        }
        _ => value_id.clone(),
    };
    ResolvedParam {
        display,
        value_id,
        param_id: param.map(str::to_string),
    }
}

/// Text report, one block per view.
pub fn render_report(views: &[ActionView]) -> String {
    let mut out = String::new();
    for v in views {
        let _ = writeln!(out, "action: {}", v.id);
        if let Some(step) = &v.step_id {
            let _ = writeln!(out, "  step: {step}");
        }
        if let Some(name) = &v.instrument_name {
            let types: Vec<String> = v.instrument_types.iter().map(|t| format!("'{t}'")).collect();
            let _ = writeln!(out, "  instrument: {name} ([{}])", types.join(", "));
        }
        if let Some(t) = &v.start_time {
            let _ = writeln!(out, "  started: {t}");
        }
        if let Some(t) = &v.end_time {
            let _ = writeln!(out, "  ended: {t}");
        }
        for (label, params) in [("inputs", &v.inputs), ("outputs", &v.outputs)] {
            let _ = writeln!(out, "  {label}:");
            for p in params {
                match &p.param_id {
                    Some(param) => {
                        let _ = writeln!(out, "    {} <- {param}", p.display);
                    }
                    None => {
                        let _ = writeln!(out, "    {}", p.display);
                    }
                }
            }
        }
    }
    out
}

/// `from` produced `via`, which `to` consumed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct DataflowEdge {
    pub from: String,
    pub via: String,
    pub to: String,
}

/// Edges between `CreateAction`s through shared result/object entities,
/// sorted by (from, via, to).
pub fn dataflow_graph(doc: &CrateDocument) -> Vec<DataflowEdge> {
    let actions: Vec<&Entity> = doc.entities_of_type("CreateAction").collect();
    let mut edges = BTreeSet::new();
    for producer in &actions {
        for via in producer.refs("result") {
            for consumer in &actions {
                if consumer.id != producer.id && consumer.refs("object").any(|o| o == via) {
                    edges.insert(DataflowEdge {
                        from: producer.id.clone(),
                        via: via.to_string(),
                        to: consumer.id.clone(),
                    });
                }
            }
        }
    }
    edges.into_iter().collect()
}

/// Dataflow edges whose consumer started before its producer ended.
pub fn timing_annotations(doc: &CrateDocument) -> Vec<String> {
    let time = |id: &str, prop: &str| {
        doc.get(id)
            .and_then(|a| a.values(prop).first())
            .and_then(Value::as_text)
            .and_then(timestamp::parse)
    };
    dataflow_graph(doc)
        .into_iter()
        .filter_map(|e| {
            let ended = time(&e.from, "endTime")?;
            let started = time(&e.to, "startTime")?;
            (ended > started).then(|| {
                format!(
                    "{} consumed {} before {} finished producing it",
                    e.to, e.via, e.from
                )
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_crate;

    fn head_sort() -> CrateDocument {
        parse_crate(
            r##"{"@context": "https://w3id.org/ro/crate/1.1/context", "@graph": [
              {"@id": "ro-crate-metadata.json", "about": {"@id": "./"}},
              {"@id": "./", "@type": "Dataset"},
              {"@id": "#head", "@type": "CreateAction", "instrument": {"@id": "#head-tool"},
               "object": {"@id": "lines.txt"}, "result": {"@id": "selection.txt"},
               "startTime": "2023-01-01T10:00:00+00:00", "endTime": "2023-01-01T10:00:05+00:00"},
              {"@id": "#sort", "@type": "CreateAction", "instrument": {"@id": "#sort-tool"},
               "object": {"@id": "selection.txt"}, "result": {"@id": "sorted_selection.txt"},
               "startTime": "2023-01-01T10:00:03+00:00"},
              {"@id": "#head-tool", "@type": "SoftwareApplication", "name": "head"},
              {"@id": "#sort-tool", "@type": "SoftwareApplication"},
              {"@id": "lines.txt", "@type": "File"},
              {"@id": "selection.txt", "@type": "File"},
              {"@id": "sorted_selection.txt", "@type": "File"}]}"##,
            None,
        )
        .unwrap()
    }

    #[test]
    fn head_sort_dataflow() {
        let doc = head_sort();
        let edges = dataflow_graph(&doc);
        assert_eq!(
            edges,
            vec![DataflowEdge {
                from: "#head".into(),
                via: "selection.txt".into(),
                to: "#sort".into()
            }]
        );
        let notes = timing_annotations(&doc);
        assert_eq!(notes.len(), 1, "{notes:?}");
    }

    #[test]
    fn names_and_fallbacks() {
        let views = action_views(&head_sort());
        assert_eq!(views[0].instrument_name.as_deref(), Some("head"));
        assert_eq!(views[1].instrument_name.as_deref(), Some("#sort-tool"));
        assert_eq!(last_segment("https://example.org/tools/extract.cwl"), "extract.cwl");
        assert_eq!(last_segment("wsi/test/"), "test");
    }

    #[test]
    fn missing_start_time_sorts_last() {
        let doc = parse_crate(
            r##"{"@context": "x", "@graph": [
              {"@id": "ro-crate-metadata.json", "about": {"@id": "./"}},
              {"@id": "./", "@type": "Dataset"},
              {"@id": "#a", "@type": "CreateAction"},
              {"@id": "#b", "@type": "CreateAction", "startTime": "2020-01-01T00:00:00Z"}]}"##,
            None,
        )
        .unwrap();
        let views = action_views(&doc);
        assert_eq!(views[0].id, "#b");
        assert_eq!(views[1].id, "#a");
        assert!(views[1].start_time.is_none() && views[1].end_time.is_none());
        let text = render_report(&views[1..]);
        assert_eq!(text, "action: #a\n  inputs:\n  outputs:\n");
    }

    #[test]
    fn empty_report() {
        assert_eq!(render_report(&[]), "");
    }

    #[test]
    fn literal_inputs_are_verbatim() {
        let doc = parse_crate(
            r##"{"@context": "x", "@graph": [
              {"@id": "ro-crate-metadata.json", "about": {"@id": "./"}},
              {"@id": "./", "@type": "Dataset"},
              {"@id": "#a", "@type": "CreateAction", "object": ["raw", 7]}]}"##,
            None,
        )
        .unwrap();
        let v = &action_views(&doc)[0];
        let shown: Vec<&str> = v.inputs.iter().map(|p| p.display.as_str()).collect();
        assert_eq!(shown, ["raw", "7"]);
        assert!(v.inputs.iter().all(|p| p.param_id.is_none()));
    }
}
