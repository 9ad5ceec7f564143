use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SkillsError;
use crate::canon;

/// The sample taxonomy bundled with the crate (30 computing skills).
pub const SAMPLE_TAXONOMY_TSV: &str = include_str!("../../data/onet_sample.tsv");

/// Alias table that ships with the sample taxonomy (`alias<TAB>canonical name`).
pub const SAMPLE_ALIASES_TSV: &str = include_str!("../../data/aliases.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillKind {
    Dwa,
    Task,
    Ability,
}

impl FromStr for SkillKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dwa" => Ok(SkillKind::Dwa),
            "task" => Ok(SkillKind::Task),
            "ability" => Ok(SkillKind::Ability),
            other => Err(format!("unknown skill kind {other:?}")),
        }
    }
}

impl fmt::Display for SkillKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkillKind::Dwa => "dwa",
            SkillKind::Task => "task",
            SkillKind::Ability => "ability",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillDescriptor {
    pub skill_id: String,
    pub name: String,
    pub descriptor_text: String,
    pub kind: SkillKind,
}

/// Ordered skill list; position defines the index space of a [`super::SkillVector`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillTaxonomy {
    id: String,
    skills: Vec<SkillDescriptor>,
}

impl SkillTaxonomy {
    pub fn new(skills: Vec<SkillDescriptor>) -> Result<Self, SkillsError> {
        if skills.is_empty() {
            return Err(SkillsError::EmptyTaxonomy);
        }
        let mut seen = HashSet::new();
        for s in &skills {
            if !seen.insert(s.skill_id.as_str()) {
                return Err(SkillsError::DuplicateSkillId(s.skill_id.clone()));
            }
        }
        // The identifier commits to ids, names and descriptors in order.
        let digest = canon::canonical_digest(&skills).expect("descriptors serialize");
        let id = format!("tax-{}", &digest.to_hex()[..16]);
        Ok(Self { id, skills })
    }

    /// Parses `skill_id<TAB>kind<TAB>name<TAB>descriptor` lines. Blank lines
    /// and lines starting with `#` are skipped.
    pub fn from_tsv(text: &str) -> Result<Self, SkillsError> {
        let mut skills = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| SkillsError::TaxonomyParse { line: i + 1, reason };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(bad(format!("expected 4 tab-separated fields, got {}", cols.len())));
            }
            if cols.iter().any(|c| c.trim().is_empty()) {
                return Err(bad("empty field".into()));
            }
            skills.push(SkillDescriptor {
                skill_id: cols[0].trim().to_string(),
                kind: cols[1].parse().map_err(bad)?,
                name: cols[2].trim().to_string(),
                descriptor_text: cols[3].trim().to_string(),
            });
        }
        Self::new(skills)
    }

    pub fn sample() -> Self {
        Self::from_tsv(SAMPLE_TAXONOMY_TSV).expect("bundled taxonomy is valid")
    }

    pub fn to_tsv(&self) -> String {
        self.skills
            .iter()
            .map(|s| format!("{}\t{}\t{}\t{}\n", s.skill_id, s.kind, s.name, s.descriptor_text))
            .collect()
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    pub fn skills(&self) -> &[SkillDescriptor] {
        &self.skills
    }

    pub fn get(&self, skill_id: &str) -> Option<&SkillDescriptor> {
        self.skills.iter().find(|s| s.skill_id == skill_id)
    }

    pub fn index_of(&self, skill_id: &str) -> Option<usize> {
        self.skills.iter().position(|s| s.skill_id == skill_id)
    }
}
