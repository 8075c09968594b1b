//! The flattened entity graph of a crate metadata file.
//!
//! A [`CrateDocument`] is read from the UTF-8 text of an
//! `ro-crate-metadata.json` file. Only flattened graphs are accepted: every
//! property value is a literal or an `{"@id": ...}` reference. Contexts are
//! recorded verbatim and never fetched; term meaning comes from
//! [`crate::terms::TermTable`].

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use indexmap::{IndexMap, IndexSet};
use serde_json::{Map, Number, Value as Json};

use crate::terms::canonical_type;

/// Id of the metadata descriptor entity.
pub const METADATA_DESCRIPTOR_ID: &str = "ro-crate-metadata.json";

/// File name of the metadata file inside a crate directory.
pub const METADATA_FILE_NAME: &str = "ro-crate-metadata.json";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("document has no @graph array")]
    MissingGraph,
    #[error("document has no @context")]
    MissingContext,
    #[error("duplicate entity id {0:?}")]
    DuplicateEntityId(String),
    #[error("@graph member {0} has no string @id")]
    EntityWithoutId(usize),
    #[error("@graph member {0} is not an object")]
    InvalidGraphMember(usize),
    #[error("no metadata descriptor entity ({METADATA_DESCRIPTOR_ID})")]
    MissingMetadataDescriptor,
    #[error("metadata descriptor `about` does not reference exactly one entity in the graph")]
    MissingRootEntity,
    #[error("entity {entity:?} property {property:?} holds a nested entity; only flattened graphs are accepted")]
    NestedEntity { entity: String, property: String },
    #[error("entity {entity:?} property {property:?} holds an unsupported value")]
    UnsupportedValue { entity: String, property: String },
}

/// One property value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Text(String),
    Integer(i64),
    /// Non-integer (or out of range) JSON number, kept in its textual form.
    Decimal(String),
    Boolean(bool),
    /// Id of another node, from `{"@id": ...}`.
    Reference(String),
}

impl Value {
    pub fn reference(id: impl Into<String>) -> Self {
        Value::Reference(id.into())
    }

    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    pub fn as_reference(&self) -> Option<&str> {
        match self {
            Value::Reference(id) => Some(id),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_literal(&self) -> bool {
        !matches!(self, Value::Reference(_))
    }

    fn to_json(&self) -> Json {
        match self {
            Value::Text(s) => Json::String(s.clone()),
            Value::Integer(i) => Json::Number((*i).into()),
            Value::Decimal(d) => d
                .parse::<Number>()
                .map(Json::Number)
                .unwrap_or_else(|_| Json::String(d.clone())),
            Value::Boolean(b) => Json::Bool(*b),
            Value::Reference(id) => {
                let mut m = Map::new();
                m.insert("@id".into(), Json::String(id.clone()));
                Json::Object(m)
            }
        }
    }
}

/// Shows literals verbatim and references as their id.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) | Value::Decimal(s) | Value::Reference(s) => f.write_str(s),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Boolean(b) => write!(f, "{b}"),
        }
    }
}

/// One node of the flattened graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: String,
    pub types: IndexSet<String>,
    pub properties: IndexMap<String, Vec<Value>>,
}

impl Entity {
    pub fn new(id: impl Into<String>) -> Self {
        Entity {
            id: id.into(),
            types: IndexSet::new(),
            properties: IndexMap::new(),
        }
    }

    pub fn with_type(mut self, t: impl Into<String>) -> Self {
        self.types.insert(t.into());
        self
    }

    pub fn with_types<I, S>(mut self, types: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.types.extend(types.into_iter().map(Into::into));
        self
    }

    /// Appends a value to a property.
    pub fn with(mut self, property: &str, value: Value) -> Self {
        self.push(property, value);
        self
    }

    pub fn with_text(self, property: &str, text: impl Into<String>) -> Self {
        self.with(property, Value::Text(text.into()))
    }

    pub fn with_ref(self, property: &str, id: impl Into<String>) -> Self {
        self.with(property, Value::Reference(id.into()))
    }

    /// Adds references to a property; the property is created (possibly
    /// empty) even when `ids` yields nothing.
    pub fn with_refs<I, S>(mut self, property: &str, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let list = self.properties.entry(property.to_string()).or_default();
        list.extend(ids.into_iter().map(|id| Value::Reference(id.into())));
        self
    }

    pub fn push(&mut self, property: &str, value: Value) {
        self.properties
            .entry(property.to_string())
            .or_default()
            .push(value);
    }

    /// Type check honoring the `File` / `MediaObject` alias.
    pub fn has_type(&self, t: &str) -> bool {
        let wanted = canonical_type(t);
        self.types.iter().any(|x| canonical_type(x) == wanted)
    }

    pub fn has_any_type(&self, types: &[&str]) -> bool {
        types.iter().any(|t| self.has_type(t))
    }

    pub fn values(&self, property: &str) -> &[Value] {
        self.properties
            .get(property)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn has(&self, property: &str) -> bool {
        self.properties.contains_key(property)
    }

    /// Reference ids held by a property, in order.
    pub fn refs<'a>(&'a self, property: &str) -> impl Iterator<Item = &'a str> + 'a {
        self.values(property).iter().filter_map(Value::as_reference)
    }

    /// First value of a property rendered as text.
    pub fn first_string(&self, property: &str) -> Option<String> {
        self.values(property).first().map(ToString::to_string)
    }

    fn to_json(&self) -> Json {
        let mut m = Map::new();
        m.insert("@id".into(), Json::String(self.id.clone()));
        match self.types.len() {
            0 => {}
            1 => {
                m.insert("@type".into(), Json::String(self.types[0].clone()));
            }
            _ => {
                let arr = self.types.iter().cloned().map(Json::String).collect();
                m.insert("@type".into(), Json::Array(arr));
            }
        }
        for (k, vals) in &self.properties {
            let v = if vals.len() == 1 {
                vals[0].to_json()
            } else {
                Json::Array(vals.iter().map(Value::to_json).collect())
            };
            m.insert(k.clone(), v);
        }
        Json::Object(m)
    }
}

/// One member of `@context`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContextRef {
    Iri(String),
    Inline(Map<String, Json>),
}

/// A parsed crate metadata file.
#[derive(Debug, Clone, PartialEq)]
pub struct CrateDocument {
    pub context: Vec<ContextRef>,
    pub entities: IndexMap<String, Entity>,
    pub source_path: Option<PathBuf>,
}

/// Default context written by generated crates.
pub const RO_CRATE_CONTEXT: &str = "https://w3id.org/ro/crate/1.1/context";

impl CrateDocument {
    /// Empty document with the given context; callers add the descriptor,
    /// root and other entities.
    pub fn new(context: Vec<ContextRef>) -> Self {
        CrateDocument {
            context,
            entities: IndexMap::new(),
            source_path: None,
        }
    }

    /// Adds an entity, refusing duplicate ids.
    pub fn insert(&mut self, entity: Entity) -> Result<(), ParseError> {
        if self.entities.contains_key(&entity.id) {
            return Err(ParseError::DuplicateEntityId(entity.id));
        }
        self.entities.insert(entity.id.clone(), entity);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    /// The entity a reference points to, or `None` when it is not in the
    /// graph (external IRIs legitimately resolve to nothing).
    pub fn resolve(&self, reference: &str) -> Option<&Entity> {
        self.entities.get(reference)
    }

    pub fn descriptor(&self) -> Option<&Entity> {
        self.get(METADATA_DESCRIPTOR_ID)
    }

    /// Id of the root data entity, from the descriptor's `about`.
    pub fn root_id(&self) -> Option<&str> {
        let mut about = self.descriptor()?.refs("about");
        let first = about.next()?;
        match about.next() {
            None => Some(first),
            Some(_) => None,
        }
    }

    pub fn root(&self) -> Option<&Entity> {
        self.root_id().and_then(|id| self.get(id))
    }

    /// Entities carrying a type, in document order.
    pub fn entities_of_type<'a>(&'a self, t: &'a str) -> impl Iterator<Item = &'a Entity> + 'a {
        self.entities.values().filter(move |e| e.has_type(t))
    }

    /// Same ids, type sets, and property multimaps.
    pub fn is_isomorphic(&self, other: &CrateDocument) -> bool {
        if self.entities.len() != other.entities.len() {
            return false;
        }
        self.entities.values().all(|a| match other.get(&a.id) {
            Some(b) => canonical_entity(a) == canonical_entity(b),
            None => false,
        })
    }
}

type CanonicalEntity<'a> = (
    BTreeSet<&'a str>,
    BTreeSet<(&'a str, Vec<&'a Value>)>,
);

fn canonical_entity(e: &Entity) -> CanonicalEntity<'_> {
    let types = e.types.iter().map(String::as_str).collect();
    let props = e
        .properties
        .iter()
        .map(|(k, vs)| {
            let mut sorted: Vec<&Value> = vs.iter().collect();
            sorted.sort();
            (k.as_str(), sorted)
        })
        .collect();
    (types, props)
}

/// True for ids with a URI scheme (`https:`, `urn:`, ...). Relative paths
/// and `#fragments` are local.
pub fn is_absolute_iri(id: &str) -> bool {
    let Some(colon) = id.find(':') else {
        return false;
    };
    let scheme = &id[..colon];
    let mut chars = scheme.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
}

pub fn is_local_reference(id: &str) -> bool {
    !is_absolute_iri(id)
}

/// Parses the text of a metadata file.
pub fn parse_crate(text: &str, source_path: Option<&Path>) -> Result<CrateDocument, ParseError> {
    let json: Json =
        serde_json::from_str(text).map_err(|e| ParseError::MalformedJson(e.to_string()))?;
    let Json::Object(mut top) = json else {
        return Err(ParseError::MalformedJson("top level is not an object".into()));
    };
    let context = match top.remove("@context") {
        None => return Err(ParseError::MissingContext),
        Some(c) => parse_context(c)?,
    };
    let graph = match top.remove("@graph") {
        Some(Json::Array(members)) => members,
        _ => return Err(ParseError::MissingGraph),
    };

    let mut doc = CrateDocument::new(context);
    doc.source_path = source_path.map(Path::to_path_buf);
    for (index, member) in graph.into_iter().enumerate() {
        let Json::Object(obj) = member else {
            return Err(ParseError::InvalidGraphMember(index));
        };
        let entity = parse_entity(index, obj)?;
        doc.insert(entity)?;
    }

    let descriptor = doc
        .descriptor()
        .ok_or(ParseError::MissingMetadataDescriptor)?;
    let about: Vec<&Value> = descriptor.values("about").iter().collect();
    match about.as_slice() {
        [Value::Reference(id)] if doc.get(id).is_some() => {}
        _ => return Err(ParseError::MissingRootEntity),
    }
    Ok(doc)
}

/// Reads `<dir>/ro-crate-metadata.json`. A path to the metadata file itself
/// is also accepted.
pub fn read_crate_dir(path: &Path) -> Result<CrateDocument, ReadError> {
    let (dir, file) = if path.is_dir() {
        (path.to_path_buf(), path.join(METADATA_FILE_NAME))
    } else {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (dir, path.to_path_buf())
    };
    let text = std::fs::read_to_string(&file).map_err(|e| ReadError::Io(file.clone(), e))?;
    Ok(parse_crate(&text, Some(&dir))?)
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error("cannot read {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

fn parse_context(c: Json) -> Result<Vec<ContextRef>, ParseError> {
    let one = |j: Json| match j {
        Json::String(s) => Ok(ContextRef::Iri(s)),
        Json::Object(m) => Ok(ContextRef::Inline(m)),
        _ => Err(ParseError::MalformedJson("unsupported @context member".into())),
    };
    match c {
        Json::Array(items) => items.into_iter().map(one).collect(),
        other => Ok(vec![one(other)?]),
    }
}

fn parse_entity(index: usize, mut obj: Map<String, Json>) -> Result<Entity, ParseError> {
    let id = match obj.shift_remove("@id") {
        Some(Json::String(id)) => id,
        _ => return Err(ParseError::EntityWithoutId(index)),
    };
    let mut entity = Entity::new(id);
    match obj.shift_remove("@type") {
        None => {}
        Some(Json::String(t)) => {
            entity.types.insert(t);
        }
        Some(Json::Array(ts)) => {
            for t in ts {
                match t {
                    Json::String(t) => {
                        entity.types.insert(t);
                    }
                    _ => {
                        return Err(ParseError::UnsupportedValue {
                            entity: entity.id,
                            property: "@type".into(),
                        })
                    }
                }
            }
        }
        Some(_) => {
            return Err(ParseError::UnsupportedValue {
                entity: entity.id,
                property: "@type".into(),
            })
        }
    }
    for (key, raw) in obj {
        let values = match raw {
            Json::Array(items) => items
                .into_iter()
                .map(|v| parse_value(&entity.id, &key, v))
                .collect::<Result<Vec<_>, _>>()?,
            single => vec![parse_value(&entity.id, &key, single)?],
        };
        entity.properties.insert(key, values);
    }
    Ok(entity)
}

fn parse_value(entity: &str, property: &str, v: Json) -> Result<Value, ParseError> {
    let unsupported = || ParseError::UnsupportedValue {
        entity: entity.to_string(),
        property: property.to_string(),
    };
    match v {
        Json::String(s) => Ok(Value::Text(s)),
        Json::Bool(b) => Ok(Value::Boolean(b)),
        Json::Number(n) => Ok(match n.as_i64() {
            Some(i) => Value::Integer(i),
            None => Value::Decimal(n.to_string()),
        }),
        Json::Object(m) => match (m.len(), m.get("@id")) {
            (1, Some(Json::String(id))) => Ok(Value::Reference(id.clone())),
            _ => Err(ParseError::NestedEntity {
                entity: entity.to_string(),
                property: property.to_string(),
            }),
        },
        Json::Null | Json::Array(_) => Err(unsupported()),
    }
}

/// Deterministic text of a document: `@context` then `@graph`, descriptor
/// first, root second, other entities in insertion order, two-space
/// indentation, single values unwrapped.
pub fn serialize_crate(doc: &CrateDocument) -> String {
    let mut top = Map::new();
    let ctx: Vec<Json> = doc
        .context
        .iter()
        .map(|c| match c {
            ContextRef::Iri(s) => Json::String(s.clone()),
            ContextRef::Inline(m) => Json::Object(m.clone()),
        })
        .collect();
    let ctx = if ctx.len() == 1 {
        ctx.into_iter().next().unwrap()
    } else {
        Json::Array(ctx)
    };
    top.insert("@context".into(), ctx);

    let root_id = doc.root_id();
    let mut graph = Vec::with_capacity(doc.entities.len());
    if let Some(d) = doc.descriptor() {
        graph.push(d.to_json());
    }
    if let Some(r) = doc.root() {
        graph.push(r.to_json());
    }
    for e in doc.entities.values() {
        if e.id == METADATA_DESCRIPTOR_ID || Some(e.id.as_str()) == root_id {
            continue;
        }
        graph.push(e.to_json());
    }
    top.insert("@graph".into(), Json::Array(graph));
    let mut out = serde_json::to_string_pretty(&Json::Object(top)).expect("JSON values always serialize");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wrap(graph: &str) -> String {
        format!(
            r##"{{"@context": "https://w3id.org/ro/crate/1.1/context", "@graph": [
              {{"@id": "ro-crate-metadata.json", "@type": "CreativeWork", "about": {{"@id": "./"}}}},
              {{"@id": "./", "@type": "Dataset"}}{graph}]}}"##
        )
    }

    #[test]
    fn empty_graph_has_no_descriptor() {
        let err = parse_crate(r##"{"@context": "x", "@graph": []}"##, None).unwrap_err();
        assert_eq!(err, ParseError::MissingMetadataDescriptor);
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let text = wrap(r##", {"@id": "#x"}, {"@id": "#x", "name": "again"}"##);
        assert_eq!(
            parse_crate(&text, None).unwrap_err(),
            ParseError::DuplicateEntityId("#x".into())
        );
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(
            parse_crate("{not json", None),
            Err(ParseError::MalformedJson(_))
        ));
        assert_eq!(
            parse_crate(r##"{"@context": "x"}"##, None).unwrap_err(),
            ParseError::MissingGraph
        );
        assert_eq!(
            parse_crate(r##"{"@graph": []}"##, None).unwrap_err(),
            ParseError::MissingContext
        );
        assert_eq!(
            parse_crate(&wrap(r##", {"name": "anon"}"##), None).unwrap_err(),
            ParseError::EntityWithoutId(2)
        );
        let no_root = r##"{"@context": "x", "@graph": [
            {"@id": "ro-crate-metadata.json", "about": {"@id": "./"}}]}"##;
        assert_eq!(parse_crate(no_root, None).unwrap_err(), ParseError::MissingRootEntity);
    }

    #[test]
    fn nested_entities_are_rejected() {
        let text = wrap(r##", {"@id": "#a", "agent": {"@id": "#p", "@type": "Person"}}"##);
        assert_eq!(
            parse_crate(&text, None).unwrap_err(),
            ParseError::NestedEntity {
                entity: "#a".into(),
                property: "agent".into()
            }
        );
        let text = wrap(r##", {"@id": "#a", "name": null}"##);
        assert!(matches!(
            parse_crate(&text, None),
            Err(ParseError::UnsupportedValue { .. })
        ));
    }

    #[test]
    fn values_are_normalized() {
        let text = wrap(
            r##", {"@id": "#a", "@type": "CreateAction", "n": 3, "d": 1.5, "b": true,
                 "object": [{"@id": "x"}, "lit"]}"##,
        );
        let doc = parse_crate(&text, None).unwrap();
        let a = doc.get("#a").unwrap();
        assert_eq!(a.types.len(), 1);
        assert!(!a.has("@id") && !a.has("@type"));
        assert_eq!(a.values("n"), &[Value::Integer(3)]);
        assert_eq!(a.values("d"), &[Value::Decimal("1.5".into())]);
        assert_eq!(a.values("b"), &[Value::Boolean(true)]);
        assert_eq!(
            a.values("object"),
            &[Value::reference("x"), Value::text("lit")]
        );
    }

    #[test]
    fn resolve_root_and_external() {
        let doc = parse_crate(&wrap(""), None).unwrap();
        assert_eq!(doc.resolve("./").unwrap().id, "./");
        assert!(doc.resolve("https://example.org/elsewhere").is_none());
    }

    #[test]
    fn scalar_unwrapping_and_ordering() {
        let mut doc = CrateDocument::new(vec![ContextRef::Iri(RO_CRATE_CONTEXT.into())]);
        doc.insert(Entity::new("#act").with_type("CreateAction")).unwrap();
        doc.insert(Entity::new("./").with_type("Dataset")).unwrap();
        doc.insert(
            Entity::new(METADATA_DESCRIPTOR_ID)
                .with_type("CreativeWork")
                .with_ref("about", "./"),
        )
        .unwrap();
        let out = serialize_crate(&doc);
        assert!(out.contains(r##""@type": "CreateAction""##));
        let d = out.find(METADATA_DESCRIPTOR_ID).unwrap();
        let r = out.find(r##""@id": "./""##).unwrap();
        let a = out.find("#act").unwrap();
        assert!(d < r && r < a);
        assert!(out.starts_with("{\n  \"@context\""));
    }

    #[test]
    fn absolute_iris() {
        assert!(is_absolute_iri("https://w3id.org/ro/wfrun/process/0.5"));
        assert!(is_absolute_iri("urn:uuid:1234"));
        assert!(!is_absolute_iri("#train_script:ROCRATE-PUB-1"));
        assert!(!is_absolute_iri("predictions.cwl#slide"));
        assert!(!is_absolute_iri("model/weights/a:b"));
        assert!(!is_absolute_iri("./"));
    }
}
