//! Toolkit for Workflow Run RO-Crates: metadata packages that record how a
//! computation was run, at three nested levels of detail (Process, Workflow
//! and Provenance Run Crate).
//!
//! - [`model`] parses and serializes the flattened `ro-crate-metadata.json`
//!   graph.
//! - [`validate`] checks a crate against the run profiles.
//! - [`report`] renders the per-action execution report and the implicit
//!   dataflow between actions.
//! - [`prov`] exports retrospective provenance as PROV-N.
//! - [`query`] expands a crate into triples and matches basic graph patterns.
//! - [`engine`] runs a small declarative plan and emits a Provenance Run
//!   Crate describing the run.

pub mod engine;
pub mod model;
pub mod profile;
pub mod prov;
pub mod query;
pub mod report;
pub mod terms;
pub mod timestamp;
pub mod validate;

pub use model::{parse_crate, read_crate_dir, serialize_crate, CrateDocument, Entity, ParseError, Value};
pub use profile::{declared_profiles, ProfileId};
pub use validate::{validate, validate_auto, RuleCode, Severity, ValidationIssue, ValidationReport};
