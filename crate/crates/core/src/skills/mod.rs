//! Skill extraction: pedagogical filtering, embedding, taxonomy alignment,
//! per-course skill vectors and grade/level personalization.
//!
//! A course's vector holds, for every taxonomy skill, the maximum cosine
//! similarity between the skill descriptor and any retained syllabus
//! sentence. The holder's vector is the sum of course vectors, each scaled
//! by the course's grade weight and level weight.

mod embed;
mod filter;
mod taxonomy;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{dot, tokenize, EmbeddingProvider, HashingEmbedder, RemoteEmbedder, DEFAULT_DIMENSION};
pub use filter::{filter_pedagogical, is_pedagogical, split_sentences};
pub use taxonomy::{
    SkillDescriptor, SkillKind, SkillTaxonomy, SAMPLE_ALIASES_TSV, SAMPLE_TAXONOMY_TSV,
};

#[derive(Debug, Error, PartialEq)]
pub enum SkillsError {
    #[error("no usable evidence sentences")]
    NoEvidence,
    #[error("taxonomy is empty")]
    EmptyTaxonomy,
    #[error("duplicate skill id {0:?}")]
    DuplicateSkillId(String),
    #[error("taxonomy line {line}: {reason}")]
    TaxonomyParse { line: usize, reason: String },
    #[error("k = {k} outside 1..={m}")]
    BadK { k: usize, m: usize },
    #[error("no weight configured for {0}")]
    UnknownWeightKey(String),
    #[error("negative weight for {0}")]
    NegativeWeight(String),
    #[error("skill vectors are not aligned to one taxonomy")]
    MisalignedVectors,
    #[error("text has no embeddable tokens")]
    EmptyText,
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
}

/// One completed course as seen by the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseRecord {
    pub course_id: String,
    pub title: String,
    pub level: u32,
    pub grade: String,
    pub syllabus_sentences: Vec<String>,
}

/// Institutional transcript document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub institution: String,
    pub student_name: String,
    pub courses: Vec<TranscriptEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub course_id: String,
    pub title: String,
    pub level: u32,
    pub grade: String,
}

/// A syllabus or learning-outcome document for one course.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Syllabus {
    pub course_id: String,
    pub text: String,
}

/// Joins transcript rows with their syllabi. Courses without any syllabus
/// text get an empty sentence list.
pub fn assemble_courses(transcript: &Transcript, syllabi: &[Syllabus]) -> Vec<CourseRecord> {
    transcript
        .courses
        .iter()
        .map(|c| CourseRecord {
            course_id: c.course_id.clone(),
            title: c.title.clone(),
            level: c.level,
            grade: c.grade.clone(),
            syllabus_sentences: syllabi
                .iter()
                .filter(|s| s.course_id == c.course_id)
                .flat_map(|s| split_sentences(&s.text))
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillVector {
    pub taxonomy_ref: String,
    pub values: Vec<f64>,
}

impl SkillVector {
    pub fn zeros(taxonomy: &SkillTaxonomy) -> Self {
        Self {
            taxonomy_ref: taxonomy.id().to_string(),
            values: vec![0.0; taxonomy.len()],
        }
    }
}

/// Grade and level weights. Level keys are band lower bounds: a course at
/// level L uses the weight of the greatest band ≤ L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub grade_weights: BTreeMap<String, f64>,
    pub level_weights: BTreeMap<u32, f64>,
    /// Extension factors; accepted and bound into the policy, unused by scoring.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extensions: BTreeMap<String, f64>,
}

impl Default for WeightConfig {
    fn default() -> Self {
        let grade_weights = [
            ("A", 1.0),
            ("A-", 0.95),
            ("B+", 0.9),
            ("B", 0.8),
            ("B-", 0.7),
            ("C", 0.5),
            ("D", 0.3),
            ("F", 0.0),
        ]
        .into_iter()
        .map(|(g, w)| (g.to_string(), w))
        .collect();
        let level_weights = [(100, 0.8), (200, 0.9), (300, 1.0), (400, 1.2)].into();
        Self {
            grade_weights,
            level_weights,
            extensions: BTreeMap::new(),
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<(), SkillsError> {
        for (g, w) in &self.grade_weights {
            if w.is_nan() || *w < 0.0 {
                return Err(SkillsError::NegativeWeight(format!("grade {g}")));
            }
        }
        for (l, w) in &self.level_weights {
            if w.is_nan() || *w < 0.0 {
                return Err(SkillsError::NegativeWeight(format!("level {l}")));
            }
        }
        Ok(())
    }

    pub fn grade_weight(&self, grade: &str) -> Result<f64, SkillsError> {
        // Accept the typographic minus some registrars emit.
        let key = grade.trim().replace('−', "-").to_uppercase();
        self.grade_weights
            .get(&key)
            .copied()
            .ok_or_else(|| SkillsError::UnknownWeightKey(format!("grade {grade:?}")))
    }

    pub fn level_weight(&self, level: u32) -> Result<f64, SkillsError> {
        self.level_weights
            .range(..=level)
            .next_back()
            .map(|(_, w)| *w)
            .ok_or_else(|| SkillsError::UnknownWeightKey(format!("level {level}")))
    }
}

/// Descriptor embeddings for a taxonomy, computed once.
#[derive(Debug, Clone)]
pub struct EmbeddedTaxonomy<'t> {
    taxonomy: &'t SkillTaxonomy,
    vectors: Vec<Vec<f64>>,
}

impl<'t> EmbeddedTaxonomy<'t> {
    pub fn new(
        taxonomy: &'t SkillTaxonomy,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Self, SkillsError> {
        let vectors = taxonomy
            .skills()
            .iter()
            .map(|s| provider.embed(&s.descriptor_text))
            .collect::<Result<_, _>>()?;
        Ok(Self { taxonomy, vectors })
    }

    pub fn taxonomy(&self) -> &'t SkillTaxonomy {
        self.taxonomy
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }
}

/// Maximum cosine similarity between a skill embedding and any sentence
/// embedding. All inputs must be unit-normalized.
pub fn score_skill(sentences: &[Vec<f64>], skill: &[f64]) -> Result<f64, SkillsError> {
    sentences
        .iter()
        .map(|s| dot(s, skill).clamp(-1.0, 1.0))
        .max_by(f64::total_cmp)
        .ok_or(SkillsError::NoEvidence)
}

/// Skill vector of one course over the retained syllabus sentences.
pub fn course_vector(
    course: &CourseRecord,
    taxonomy: &EmbeddedTaxonomy<'_>,
    provider: &dyn EmbeddingProvider,
) -> Result<SkillVector, SkillsError> {
    let retained = filter_pedagogical(&course.syllabus_sentences);
    let mut sentence_vecs = Vec::with_capacity(retained.len());
    for s in &retained {
        match provider.embed(s) {
            Ok(v) => sentence_vecs.push(v),
            // Sentences made only of stop words carry nothing to score.
            Err(SkillsError::EmptyText) => {}
            Err(e) => return Err(e),
        }
    }
    if sentence_vecs.is_empty() {
        return Err(SkillsError::NoEvidence);
    }
    let values = taxonomy
        .vectors()
        .iter()
        .map(|skill| score_skill(&sentence_vecs, skill))
        .collect::<Result<_, _>>()?;
    Ok(SkillVector {
        taxonomy_ref: taxonomy.taxonomy().id().to_string(),
        values,
    })
}

/// Weighted sum of course vectors.
pub fn personalize(
    courses: &[CourseRecord],
    vectors: &[SkillVector],
    weights: &WeightConfig,
) -> Result<SkillVector, SkillsError> {
    weights.validate()?;
    if courses.len() != vectors.len() {
        return Err(SkillsError::MisalignedVectors);
    }
    let first = vectors.first().ok_or(SkillsError::NoEvidence)?;
    let m = first.values.len();
    let mut total = vec![0.0; m];
    for (course, v) in courses.iter().zip(vectors) {
        if v.values.len() != m || v.taxonomy_ref != first.taxonomy_ref {
            return Err(SkillsError::MisalignedVectors);
        }
        let w = weights.grade_weight(&course.grade)? * weights.level_weight(course.level)?;
        for (acc, x) in total.iter_mut().zip(&v.values) {
            *acc += x * w;
        }
    }
    Ok(SkillVector {
        taxonomy_ref: first.taxonomy_ref.clone(),
        values: total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSkill {
    pub skill_id: String,
    pub score: f64,
}

/// The `k` highest-scoring skills, descending, ties by ascending skill id.
pub fn top_k(
    v: &SkillVector,
    taxonomy: &SkillTaxonomy,
    k: usize,
) -> Result<Vec<RankedSkill>, SkillsError> {
    let m = taxonomy.len();
    if v.values.len() != m || v.taxonomy_ref != taxonomy.id() {
        return Err(SkillsError::MisalignedVectors);
    }
    if k == 0 || k > m {
        return Err(SkillsError::BadK { k, m });
    }
    let mut ranked: Vec<RankedSkill> = taxonomy
        .skills()
        .iter()
        .zip(&v.values)
        .map(|(s, score)| RankedSkill {
            skill_id: s.skill_id.clone(),
            score: *score,
        })
        .collect();
    ranked.sort_by(|a, b| match b.score.total_cmp(&a.score) {
        Ordering::Equal => a.skill_id.cmp(&b.skill_id),
        o => o,
    });
    ranked.truncate(k);
    Ok(ranked)
}

/// Full pipeline: filter, embed and score every course that has evidence,
/// then personalize. Courses whose syllabi yield no sentences are skipped.
pub fn holder_vector(
    courses: &[CourseRecord],
    taxonomy: &EmbeddedTaxonomy<'_>,
    provider: &dyn EmbeddingProvider,
    weights: &WeightConfig,
) -> Result<SkillVector, SkillsError> {
    let mut kept = Vec::new();
    let mut vectors = Vec::new();
    for course in courses {
        match course_vector(course, taxonomy, provider) {
            Ok(v) => {
                kept.push(course.clone());
                vectors.push(v);
            }
            Err(SkillsError::NoEvidence) => continue,
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(SkillsError::NoEvidence);
    }
    personalize(&kept, &vectors, weights)
}
