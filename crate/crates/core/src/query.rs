//! Triple expansion and basic graph-pattern matching with `OPTIONAL`.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{CrateDocument, Value};
use crate::terms::{canonical_type, TermTable, RDF_TYPE, XSD_DATE_TIME};
use crate::timestamp;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Term {
    Iri(String),
    Literal {
        text: String,
        datatype: Option<String>,
    },
}

impl Term {
    pub fn text(&self) -> &str {
        match self {
            Term::Iri(s) => s,
            Term::Literal { text, .. } => text,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.text())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: Term,
}

fn literal(v: &Value) -> Term {
    let text = v.to_string();
    let datatype = match v {
        Value::Text(s) if timestamp::parse(s).is_some() => Some(XSD_DATE_TIME.to_string()),
        _ => None,
    };
    Term::Literal { text, datatype }
}

/// Every type and property value as a triple, sorted.
pub fn expand_triples(doc: &CrateDocument) -> Vec<Triple> {
    let table = TermTable::pinned();
    let mut out = Vec::new();
    for e in doc.entities.values() {
        for t in &e.types {
            out.push(Triple {
                subject: e.id.clone(),
                predicate: RDF_TYPE.to_string(),
                object: Term::Iri(table.expand(canonical_type(t)).0),
            });
        }
        for (prop, values) in &e.properties {
            let predicate = table.expand(prop).0;
            for v in values {
                let object = match v {
                    Value::Reference(id) => Term::Iri(id.clone()),
                    other => literal(other),
                };
                out.push(Triple {
                    subject: e.id.clone(),
                    predicate: predicate.clone(),
                    object,
                });
            }
        }
    }
    out.sort();
    out
}

/// Property and type names the pinned term table does not define.
pub fn unknown_terms(doc: &CrateDocument) -> Vec<String> {
    let table = TermTable::pinned();
    let mut out: Vec<String> = doc
        .entities
        .values()
        .flat_map(|e| e.types.iter().chain(e.properties.keys()))
        .filter(|t| table.expand(canonical_type(t)).1)
        .cloned()
        .collect();
    out.sort();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternTerm {
    Var(String),
    Iri(String),
    Literal(String),
}

impl PatternTerm {
    pub fn var(name: &str) -> Self {
        PatternTerm::Var(name.to_string())
    }

    pub fn iri(iri: &str) -> Self {
        PatternTerm::Iri(iri.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub s: PatternTerm,
    pub p: PatternTerm,
    pub o: PatternTerm,
    pub optional: bool,
}

impl Pattern {
    pub fn new(s: PatternTerm, p: PatternTerm, o: PatternTerm) -> Self {
        Pattern { s, p, o, optional: false }
    }

    pub fn optional(mut self) -> Self {
        self.optional = true;
        self
    }

    fn vars(&self) -> impl Iterator<Item = &str> {
        [&self.s, &self.p, &self.o].into_iter().filter_map(|t| match t {
            PatternTerm::Var(v) => Some(v.as_str()),
            _ => None,
        })
    }
}

pub type Row = BTreeMap<String, Term>;

fn bind(term: &PatternTerm, value: &Term, row: &mut Row) -> bool {
    match term {
        PatternTerm::Var(name) => match row.get(name) {
            Some(bound) => bound == value,
            None => {
                row.insert(name.clone(), value.clone());
                true
            }
        },
        PatternTerm::Iri(iri) => matches!(value, Term::Iri(v) if v == iri),
        PatternTerm::Literal(text) => matches!(value, Term::Literal { text: t, .. } if t == text),
    }
}

fn extend(row: &Row, pattern: &Pattern, triples: &[Triple]) -> Vec<Row> {
    triples
        .iter()
        .filter_map(|t| {
            let mut next = row.clone();
            let subject = Term::Iri(t.subject.clone());
            let predicate = Term::Iri(t.predicate.clone());
            (bind(&pattern.s, &subject, &mut next)
                && bind(&pattern.p, &predicate, &mut next)
                && bind(&pattern.o, &t.object, &mut next))
            .then_some(next)
        })
        .collect()
}

/// Nested-loop join of the required patterns, then a left join of each
/// optional pattern in order. Rows are sorted by their bindings.
pub fn match_patterns(triples: &[Triple], patterns: &[Pattern]) -> Vec<Row> {
    let mut rows = vec![Row::new()];
    for p in patterns.iter().filter(|p| !p.optional) {
        rows = rows.iter().flat_map(|r| extend(r, p, triples)).collect();
    }
    for p in patterns.iter().filter(|p| p.optional) {
        rows = rows
            .iter()
            .flat_map(|r| {
                let ext = extend(r, p, triples);
                if ext.is_empty() {
                    vec![r.clone()]
                } else {
                    ext
                }
            })
            .collect();
    }
    if patterns.is_empty() {
        rows.clear();
    }
    rows.sort();
    rows
}

/// Variable names in order of first appearance.
pub fn variables(patterns: &[Pattern]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for v in patterns.iter().flat_map(Pattern::vars) {
        if !out.iter().any(|x| x == v) {
            out.push(v.to_string());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct ActionRow {
    pub action: String,
    pub instrument: String,
    pub start: Option<String>,
    pub end: Option<String>,
}

/// Every `CreateAction` with its instrument and optional start/end time.
pub fn builtin_actions_query(doc: &CrateDocument) -> Vec<ActionRow> {
    let table = TermTable::pinned();
    let schema = |t: &str| PatternTerm::Iri(table.iri(t).expect("pinned term"));
    let patterns = [
        Pattern::new(PatternTerm::var("action"), PatternTerm::iri(RDF_TYPE), schema("CreateAction")),
        Pattern::new(PatternTerm::var("action"), schema("instrument"), PatternTerm::var("instrument")),
        Pattern::new(PatternTerm::var("action"), schema("startTime"), PatternTerm::var("start")).optional(),
        Pattern::new(PatternTerm::var("action"), schema("endTime"), PatternTerm::var("end")).optional(),
    ];
    let get = |r: &Row, k: &str| r.get(k).map(|t| t.text().to_string());
    match_patterns(&expand_triples(doc), &patterns)
        .iter()
        .map(|r| ActionRow {
            action: get(r, "action").unwrap_or_default(),
            instrument: get(r, "instrument").unwrap_or_default(),
            start: get(r, "start"),
            end: get(r, "end"),
        })
        .collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatternSyntaxError {
    #[error("pattern {0:?} needs three terms")]
    Arity(String),
    #[error("cannot read term {0:?}")]
    Term(String),
}

fn split_terms(src: &str) -> Result<Vec<String>, PatternSyntaxError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let mut tok = String::new();
        let close = match c {
            '"' => Some('"'),
            '<' => Some('>'),
            _ => None,
        };
        if let Some(close) = close {
            tok.push(chars.next().unwrap_or(c));
            loop {
                match chars.next() {
                    Some(x) if x == close => {
                        tok.push(x);
                        break;
                    }
                    Some(x) => tok.push(x),
                    None => return Err(PatternSyntaxError::Term(tok)),
                }
            }
        } else {
            while let Some(&x) = chars.peek() {
                if x.is_whitespace() {
                    break;
                }
                tok.push(x);
                chars.next();
            }
        }
        out.push(tok);
    }
    Ok(out)
}

fn parse_term(tok: &str) -> Result<PatternTerm, PatternSyntaxError> {
    if let Some(v) = tok.strip_prefix('?').filter(|v| !v.is_empty()) {
        return Ok(PatternTerm::var(v));
    }
    if let Some(iri) = tok.strip_prefix('<').and_then(|t| t.strip_suffix('>')) {
        return Ok(PatternTerm::iri(iri));
    }
    if tok.len() >= 2 {
        if let Some(lit) = tok.strip_prefix('"').and_then(|t| t.strip_suffix('"')) {
            return Ok(PatternTerm::Literal(lit.to_string()));
        }
    }
    Err(PatternSyntaxError::Term(tok.to_string()))
}

/// Reads one pattern: three terms, optionally preceded by `OPTIONAL`.
pub fn parse_pattern(src: &str) -> Result<Pattern, PatternSyntaxError> {
    let mut toks = split_terms(src)?;
    let optional = toks.first().is_some_and(|t| t == "OPTIONAL");
    if optional {
        toks.remove(0);
    }
    if toks.len() != 3 {
        return Err(PatternSyntaxError::Arity(src.to_string()));
    }
    let p = Pattern::new(parse_term(&toks[0])?, parse_term(&toks[1])?, parse_term(&toks[2])?);
    Ok(if optional { p.optional() } else { p })
}

/// Header line of variable names, then one tab-separated line per row.
/// Unbound cells are empty.
pub fn rows_to_tsv(vars: &[String], rows: &[Row]) -> String {
    let mut out = vars.join("\t");
    out.push('\n');
    for r in rows {
        let cells: Vec<&str> = vars
            .iter()
            .map(|v| r.get(v).map(Term::text).unwrap_or(""))
            .collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}
