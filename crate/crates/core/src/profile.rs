//! Profile identifiers and `conformsTo` inspection.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::CrateDocument;

pub const PROFILE_VERSION: &str = "0.5";
pub const WORKFLOW_RO_CRATE_PROFILE: &str = "https://w3id.org/workflowhub/workflow-ro-crate/1.0";
pub const WORKFLOW_RO_CRATE_PREFIX: &str = "https://w3id.org/workflowhub/workflow-ro-crate/";
pub const RO_CRATE_SPEC: &str = "https://w3id.org/ro/crate/1.1";

/// The three nested run profiles, ordered from least to most detailed.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum ProfileId {
    Process,
    Workflow,
    Provenance,
}

impl ProfileId {
    pub const ALL: [ProfileId; 3] = [ProfileId::Process, ProfileId::Workflow, ProfileId::Provenance];

    pub fn version(self) -> &'static str {
        PROFILE_VERSION
    }

    /// IRI without the version segment.
    pub fn iri_prefix(self) -> &'static str {
        match self {
            ProfileId::Process => "https://w3id.org/ro/wfrun/process/",
            ProfileId::Workflow => "https://w3id.org/ro/wfrun/workflow/",
            ProfileId::Provenance => "https://w3id.org/ro/wfrun/provenance/",
        }
    }

    pub fn iri(self) -> &'static str {
        match self {
            ProfileId::Process => "https://w3id.org/ro/wfrun/process/0.5",
            ProfileId::Workflow => "https://w3id.org/ro/wfrun/workflow/0.5",
            ProfileId::Provenance => "https://w3id.org/ro/wfrun/provenance/0.5",
        }
    }

    /// Other profile IRIs a conforming crate also claims.
    pub fn companions(self) -> &'static [&'static str] {
        match self {
            ProfileId::Process => &[],
            ProfileId::Workflow | ProfileId::Provenance => &[WORKFLOW_RO_CRATE_PROFILE],
        }
    }

    /// This profile and every profile it inherits, least detailed first.
    pub fn lineage(self) -> &'static [ProfileId] {
        match self {
            ProfileId::Process => &ProfileId::ALL[..1],
            ProfileId::Workflow => &ProfileId::ALL[..2],
            ProfileId::Provenance => &ProfileId::ALL[..],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProfileId::Process => "process",
            ProfileId::Workflow => "workflow",
            ProfileId::Provenance => "provenance",
        }
    }

    /// Matches a `conformsTo` IRI; the flag is true when the version
    /// segment differs from the pinned one.
    pub fn match_iri(iri: &str) -> Option<(ProfileId, bool)> {
        ProfileId::ALL.into_iter().find_map(|p| {
            let rest = iri.strip_prefix(p.iri_prefix())?;
            let version = rest.trim_end_matches('/');
            if version.is_empty() || version.contains('/') {
                return None;
            }
            Some((p, version != PROFILE_VERSION))
        })
    }
}

impl fmt::Display for ProfileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProfileId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "process" => Ok(ProfileId::Process),
            "workflow" => Ok(ProfileId::Workflow),
            "provenance" => Ok(ProfileId::Provenance),
            other => Err(format!("unknown profile {other:?}")),
        }
    }
}

/// Where a `conformsTo` declaration was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DeclarationSite {
    Root,
    Descriptor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeclaredProfile {
    pub profile: ProfileId,
    pub iri: String,
    pub version_mismatch: bool,
    pub site: DeclarationSite,
}

/// Every run-profile declaration on the root entity and the metadata
/// descriptor, ordered by profile then site.
pub fn declarations(doc: &CrateDocument) -> Vec<DeclaredProfile> {
    let sites = [
        (DeclarationSite::Root, doc.root()),
        (DeclarationSite::Descriptor, doc.descriptor()),
    ];
    let mut out: Vec<DeclaredProfile> = sites
        .into_iter()
        .filter_map(|(site, e)| e.map(|e| (site, e)))
        .flat_map(|(site, e)| {
            e.values("conformsTo")
                .iter()
                .filter_map(|v| v.as_reference().or_else(|| v.as_text()))
                .filter_map(move |iri| {
                    let (profile, version_mismatch) = ProfileId::match_iri(iri)?;
                    Some(DeclaredProfile {
                        profile,
                        iri: iri.to_string(),
                        version_mismatch,
                        site,
                    })
                })
        })
        .collect();
    out.sort_by(|a, b| (a.profile, a.site, &a.iri).cmp(&(b.profile, b.site, &b.iri)));
    out.dedup();
    out
}

/// The set of run profiles a crate declares.
pub fn declared_profiles(doc: &CrateDocument) -> std::collections::BTreeSet<ProfileId> {
    declarations(doc).into_iter().map(|d| d.profile).collect()
}

/// All `conformsTo` IRIs on root and descriptor.
pub fn conforms_to_iris(doc: &CrateDocument) -> Vec<&str> {
    [doc.root(), doc.descriptor()]
        .into_iter()
        .flatten()
        .flat_map(|e| {
            e.values("conformsTo")
                .iter()
                .filter_map(|v| v.as_reference().or_else(|| v.as_text()))
        })
        .collect()
}
