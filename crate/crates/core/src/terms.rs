//! Pinned vocabulary: the term names this toolkit understands and the
//! absolute IRIs they expand to.
//!
//! Crate contexts are never fetched. Every term that any operation reads or
//! writes is listed here, grouped by namespace.

use std::collections::BTreeMap;
use std::sync::OnceLock;

pub const SCHEMA: &str = "https://schema.org/";
pub const BIOSCHEMAS: &str = "https://bioschemas.org/";
pub const BIOSCHEMAS_PROPERTIES: &str = "https://bioschemas.org/properties/";
pub const WFRUN: &str = "https://w3id.org/ro/terms/workflow-run#";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const XSD_DATE_TIME: &str = "http://www.w3.org/2001/XMLSchema#dateTime";

/// Scheme used for terms that are not in the table.
pub const UNKNOWN_SCHEME: &str = "unknown:";

/// The RO-Crate shorthand `File` for `MediaObject`.
pub const FILE_ALIAS: (&str, &str) = ("File", "MediaObject");

const SCHEMA_TERMS: &[&str] = &[
    // classes
    "Action",
    "CreateAction",
    "ControlAction",
    "OrganizeAction",
    "Person",
    "Organization",
    "SoftwareApplication",
    "SoftwareSourceCode",
    "Dataset",
    "MediaObject",
    "PropertyValue",
    "Collection",
    "HowTo",
    "HowToStep",
    "ComputerLanguage",
    "CreativeWork",
    "CompletedActionStatus",
    "FailedActionStatus",
    // properties
    "instrument",
    "object",
    "result",
    "agent",
    "startTime",
    "endTime",
    "actionStatus",
    "error",
    "description",
    "subjectOf",
    "value",
    "hasPart",
    "mainEntity",
    "alternateName",
    "name",
    "contentSize",
    "encodingFormat",
    "exampleOfWork",
    "workExample",
    "step",
    "programmingLanguage",
    "conformsTo",
    "about",
    "additionalType",
    "version",
    "identifier",
    "url",
    "datePublished",
    "license",
    "position",
];

const BIOSCHEMAS_TYPES: &[&str] = &["ComputationalWorkflow", "FormalParameter"];

const BIOSCHEMAS_PROPERTY_TERMS: &[&str] = &["input", "output", "valueRequired"];

const WFRUN_TERMS: &[&str] = &[
    "ParameterConnection",
    "sourceParameter",
    "targetParameter",
    "connection",
];

const PREFIXES: &[(&str, &str)] = &[
    ("s", SCHEMA),
    ("schema", SCHEMA),
    ("bioschemas", BIOSCHEMAS),
    ("bsp", BIOSCHEMAS_PROPERTIES),
    ("wfrun", WFRUN),
];

/// Map from term name to absolute IRI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermTable {
    terms: BTreeMap<String, String>,
}

impl TermTable {
    /// The pinned table shared by every operation.
    pub fn pinned() -> &'static TermTable {
        static TABLE: OnceLock<TermTable> = OnceLock::new();
        TABLE.get_or_init(TermTable::build)
    }

    fn build() -> Self {
        let mut terms = BTreeMap::new();
        let groups: [(&str, &[&str]); 4] = [
            (SCHEMA, SCHEMA_TERMS),
            (BIOSCHEMAS, BIOSCHEMAS_TYPES),
            (BIOSCHEMAS_PROPERTIES, BIOSCHEMAS_PROPERTY_TERMS),
            (WFRUN, WFRUN_TERMS),
        ];
        for (ns, names) in groups {
            for name in names {
                let prev = terms.insert(name.to_string(), format!("{ns}{name}"));
                debug_assert!(prev.is_none(), "term {name} listed twice");
            }
        }
        terms.insert(FILE_ALIAS.0.to_string(), format!("{SCHEMA}{}", FILE_ALIAS.1));
        TermTable { terms }
    }

    /// Absolute IRI for a term name, honoring compact `prefix:name` forms
    /// and passing absolute IRIs through.
    pub fn iri(&self, term: &str) -> Option<String> {
        if let Some(iri) = self.terms.get(term) {
            return Some(iri.clone());
        }
        if let Some((prefix, local)) = term.split_once(':') {
            if let Some((_, ns)) = PREFIXES.iter().find(|(p, _)| *p == prefix) {
                return Some(format!("{ns}{local}"));
            }
            if crate::model::is_absolute_iri(term) {
                return Some(term.to_string());
            }
        }
        None
    }

    /// Like [`TermTable::iri`], but unknown terms expand under the
    /// `unknown:` scheme. The flag is true when the term was unknown.
    pub fn expand(&self, term: &str) -> (String, bool) {
        match self.iri(term) {
            Some(iri) => (iri, false),
            None => (format!("{UNKNOWN_SCHEME}{term}"), true),
        }
    }

    /// Term name for an IRI, preferring the canonical name over the `File`
    /// alias.
    pub fn term_for(&self, iri: &str) -> Option<&str> {
        self.terms
            .iter()
            .filter(|(_, v)| v.as_str() == iri)
            .map(|(k, _)| k.as_str())
            .find(|k| *k != FILE_ALIAS.0)
    }

    /// Whether two type names denote the same class (`File` and
    /// `MediaObject` are interchangeable).
    pub fn same_type(&self, a: &str, b: &str) -> bool {
        a == b || canonical_type(a) == canonical_type(b)
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.contains_key(term)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.terms.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// `File` → `MediaObject`; everything else unchanged.
pub fn canonical_type(name: &str) -> &str {
    if name == FILE_ALIAS.0 {
        FILE_ALIAS.1
    } else {
        name
    }
}
