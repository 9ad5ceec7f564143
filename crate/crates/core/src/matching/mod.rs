//! Verifier-side skills-only matching.
//!
//! Two metrics are computed over the candidate's attested skill names:
//! binary overlap `|S ∩ R| / |R|` and semantic similarity, the mean over
//! required skills of the best cosine against any candidate skill. The
//! decision is `score ≥ τ`, with the score chosen by a [`Combiner`].

mod audit;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::skills::{dot, EmbeddingProvider, SkillTaxonomy, SkillsError, SAMPLE_ALIASES_TSV};

pub use audit::{
    estimate_boi, flip_probability_audit, plugin_mutual_information, AuditMatcher, BoiEstimate,
    BoiReport, BernoulliInstitution, FlipAudit, InstitutionBump, NonSkillProfile, RandomProfileEdits, SkillOnly,
    TrialRecord, ZEditGenerator,
};

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("job requires no skills")]
    EmptyRequirement,
    #[error("candidate has no skills")]
    NoCandidateSkills,
    #[error("threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error("matching input was not taken from a verified presentation")]
    UnverifiedInput,
    #[error("trials must be at least 1")]
    BadTrials,
    #[error("no skill-vector samples supplied")]
    NoSamples,
    #[error("skill claims do not belong to the expected taxonomy")]
    TaxonomyMismatch,
    #[error("alias table line {0} is malformed")]
    AliasParse(usize),
    #[error(transparent)]
    Embedding(#[from] SkillsError),
}

/// Canonicalizes skill names for set comparison: lowercase, trim, collapse
/// whitespace, unify dashes, then resolve aliases.
#[derive(Debug, Clone, Default)]
pub struct SkillNormalizer {
    aliases: BTreeMap<String, String>,
}

impl SkillNormalizer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Normalizer for the bundled taxonomy and alias table.
    pub fn sample() -> Self {
        let mut n = Self::from_alias_tsv(SAMPLE_ALIASES_TSV).expect("bundled aliases are valid");
        n.register_taxonomy(&SkillTaxonomy::sample());
        n
    }

    /// Reads `alias<TAB>canonical` lines.
    pub fn from_alias_tsv(text: &str) -> Result<Self, MatchError> {
        let mut n = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (alias, canonical) = line.split_once('\t').ok_or(MatchError::AliasParse(i + 1))?;
            n.aliases.insert(basic_normalize(alias), basic_normalize(canonical));
        }
        Ok(n)
    }

    /// Adds parenthetical aliases for every taxonomy name:
    /// "version control (git)" also answers to "version control" and "git".
    pub fn register_taxonomy(&mut self, taxonomy: &SkillTaxonomy) {
        for s in taxonomy.skills() {
            self.register_name(&s.name);
        }
    }

    pub fn register_name(&mut self, name: &str) {
        let full = basic_normalize(name);
        if let Some((outer, rest)) = full.split_once('(') {
            if let Some(inner) = rest.strip_suffix(')') {
                for alias in [outer.trim(), inner.trim()] {
                    if !alias.is_empty() && alias != full {
                        self.aliases.entry(alias.to_string()).or_insert_with(|| full.clone());
                    }
                }
            }
        }
    }

    pub fn normalize(&self, name: &str) -> String {
        let basic = basic_normalize(name);
        self.aliases.get(&basic).cloned().unwrap_or(basic)
    }

    pub fn normalize_set<S: AsRef<str>>(&self, names: &[S]) -> BTreeSet<String> {
        names.iter().map(|n| self.normalize(n.as_ref())).collect()
    }
}

fn basic_normalize(name: &str) -> String {
    name.to_lowercase()
        .replace(['–', '—', '‐', '‑'], "-")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRequirement {
    pub job_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub required_skills: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub descriptor_texts: BTreeMap<String, String>,
    pub threshold: f64,
}

impl JobRequirement {
    pub fn new<S: Into<String>>(
        job_id: impl Into<String>,
        required: impl IntoIterator<Item = S>,
        threshold: f64,
    ) -> Self {
        Self {
            job_id: job_id.into(),
            title: None,
            required_skills: required.into_iter().map(Into::into).collect(),
            descriptor_texts: BTreeMap::new(),
            threshold,
        }
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        if self.required_skills.is_empty() {
            return Err(MatchError::EmptyRequirement);
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(MatchError::BadThreshold(self.threshold));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "k")]
pub enum OverlapMode {
    Full,
    TopK(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub value: f64,
    pub matched: Vec<String>,
    pub missing: Vec<String>,
    pub mode: OverlapMode,
}

impl Overlap {
    pub fn numerator(&self) -> usize {
        self.matched.len()
    }

    pub fn denominator(&self) -> usize {
        self.matched.len() + self.missing.len()
    }
}

/// `|S ∩ R| / |R|` over normalized names.
pub fn binary_overlap<S: AsRef<str>>(
    candidate_skills: &[S],
    job: &JobRequirement,
    normalizer: &SkillNormalizer,
) -> Result<Overlap, MatchError> {
    overlap_with_mode(candidate_skills, job, normalizer, OverlapMode::Full)
}

/// Overlap restricted to the `k` highest-scoring candidate skills.
pub fn overlap_at_k(
    ranked: &[ClaimedSkill],
    k: usize,
    job: &JobRequirement,
    normalizer: &SkillNormalizer,
) -> Result<Overlap, MatchError> {
    let mut sorted: Vec<&ClaimedSkill> = ranked.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.name.cmp(&b.name)));
    let top: Vec<&str> = sorted.iter().take(k).map(|c| c.name.as_str()).collect();
    overlap_with_mode(&top, job, normalizer, OverlapMode::TopK(k))
}

fn overlap_with_mode<S: AsRef<str>>(
    candidate_skills: &[S],
    job: &JobRequirement,
    normalizer: &SkillNormalizer,
    mode: OverlapMode,
) -> Result<Overlap, MatchError> {
    let required = normalizer.normalize_set(&job.required_skills.iter().collect::<Vec<_>>());
    if required.is_empty() {
        return Err(MatchError::EmptyRequirement);
    }
    let have = normalizer.normalize_set(candidate_skills);
    let (matched, missing): (Vec<String>, Vec<String>) =
        required.into_iter().partition(|r| have.contains(r));
    let value = matched.len() as f64 / (matched.len() + missing.len()) as f64;
    Ok(Overlap {
        value,
        matched,
        missing,
        mode,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedSkill {
    pub name: String,
    pub vector: Vec<f64>,
}

/// Embeds skill names (or their descriptor text, when one is supplied).
pub fn embed_skills<S: AsRef<str>>(
    names: &[S],
    provider: &dyn EmbeddingProvider,
    descriptor_texts: &BTreeMap<String, String>,
) -> Result<Vec<EmbeddedSkill>, MatchError> {
    names
        .iter()
        .map(|n| {
            let name = n.as_ref();
            let text = descriptor_texts.get(name).map_or(name, String::as_str);
            Ok(EmbeddedSkill {
                name: name.to_string(),
                vector: provider.embed(text)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillMatch {
    pub candidate: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemSim {
    pub mean: f64,
    pub per_skill: BTreeMap<String, SkillMatch>,
}

/// Mean over required skills of the maximum cosine against any candidate
/// skill. Ties pick the lexicographically smallest candidate name.
pub fn sem_sim(candidates: &[EmbeddedSkill], required: &[EmbeddedSkill]) -> Result<SemSim, MatchError> {
    if required.is_empty() {
        return Err(MatchError::EmptyRequirement);
    }
    if candidates.is_empty() {
        return Err(MatchError::NoCandidateSkills);
    }
    let mut per_skill = BTreeMap::new();
    let mut total = 0.0;
    for r in required {
        let mut best: Option<SkillMatch> = None;
        for c in candidates {
            let sim = dot(&r.vector, &c.vector).clamp(-1.0, 1.0);
            let better = match &best {
                None => true,
                Some(b) => sim > b.similarity || (sim == b.similarity && c.name < b.candidate),
            };
            if better {
                best = Some(SkillMatch {
                    candidate: c.name.clone(),
                    similarity: sim,
                });
            }
        }
        let best = best.expect("candidates is non-empty");
        total += best.similarity;
        per_skill.insert(r.name.clone(), best);
    }
    Ok(SemSim {
        mean: total / required.len() as f64,
        per_skill,
    })
}

/// How overlap and semantic similarity fold into the decision score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Combiner {
    #[default]
    SemSim,
    Overlap,
    Mix { overlap_weight: f64 },
}

impl Combiner {
    pub fn combine(&self, overlap: f64, sem_sim: f64) -> f64 {
        match *self {
            Combiner::SemSim => sem_sim,
            Combiner::Overlap => overlap,
            Combiner::Mix { overlap_weight } => {
                overlap_weight * overlap + (1.0 - overlap_weight) * sem_sim
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimedSkill {
    pub name: String,
    pub score: f64,
}

/// Skill claims handed to the matcher. Only the verification path can mark
/// them attested; [`SkillMatcher::decide`] refuses anything else.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillClaims {
    skills: Vec<ClaimedSkill>,
    attested: bool,
}

impl SkillClaims {
    /// Claims of unknown origin, usable for scoring experiments and audits.
    pub fn unverified(skills: Vec<ClaimedSkill>) -> Self {
        Self {
            skills,
            attested: false,
        }
    }

    pub(crate) fn attested(skills: Vec<ClaimedSkill>) -> Self {
        Self {
            skills,
            attested: true,
        }
    }

    pub fn is_attested(&self) -> bool {
        self.attested
    }

    pub fn skills(&self) -> &[ClaimedSkill] {
        &self.skills
    }

    pub fn names(&self) -> Vec<&str> {
        self.skills.iter().map(|s| s.name.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub job_id: String,
    pub overlap: Overlap,
    pub sem_sim: f64,
    pub per_skill: BTreeMap<String, SkillMatch>,
    pub score: f64,
    pub threshold: f64,
    pub decision: bool,
}

/// The shipped skills-only matcher. Its inputs are skill claims and a job;
/// there is no parameter through which non-skill fields could enter.
pub struct SkillMatcher<'a> {
    provider: &'a dyn EmbeddingProvider,
    normalizer: &'a SkillNormalizer,
    combiner: Combiner,
}

impl<'a> SkillMatcher<'a> {
    pub fn new(
        provider: &'a dyn EmbeddingProvider,
        normalizer: &'a SkillNormalizer,
        combiner: Combiner,
    ) -> Self {
        Self {
            provider,
            normalizer,
            combiner,
        }
    }

    pub fn combiner(&self) -> Combiner {
        self.combiner
    }

    /// Overlap, semantic similarity and combined score, without the
    /// verified-input gate.
    pub fn evaluate(
        &self,
        skills: &[ClaimedSkill],
        job: &JobRequirement,
    ) -> Result<(Overlap, SemSim, f64), MatchError> {
        job.validate()?;
        let names: Vec<&str> = skills.iter().map(|s| s.name.as_str()).collect();
        let overlap = binary_overlap(&names, job, self.normalizer)?;
        let candidates = embed_skills(&names, self.provider, &BTreeMap::new())?;
        let required: Vec<&String> = job.required_skills.iter().collect();
        let required = embed_skills(&required, self.provider, &job.descriptor_texts)?;
        let sem = sem_sim(&candidates, &required)?;
        let score = self.combiner.combine(overlap.value, sem.mean);
        Ok((overlap, sem, score))
    }

    pub fn decide(&self, claims: &SkillClaims, job: &JobRequirement) -> Result<MatchResult, MatchError> {
        if !claims.is_attested() {
            return Err(MatchError::UnverifiedInput);
        }
        let (overlap, sem, score) = self.evaluate(claims.skills(), job)?;
        Ok(MatchResult {
            job_id: job.job_id.clone(),
            overlap,
            sem_sim: sem.mean,
            per_skill: sem.per_skill,
            score,
            threshold: job.threshold,
            decision: decide_threshold(score, job.threshold),
        })
    }
}

/// `score ≥ τ`, inclusive at the boundary.
pub fn decide_threshold(score: f64, threshold: f64) -> bool {
    score >= threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skills::HashingEmbedder;

    fn claims(names: &[&str]) -> Vec<ClaimedSkill> {
        names
            .iter()
            .map(|n| ClaimedSkill {
                name: n.to_string(),
                score: 1.0,
            })
            .collect()
    }

    #[test]
    fn normalizer_resolves_aliases_and_parentheticals() {
        let n = SkillNormalizer::sample();
        assert_eq!(n.normalize("  Version   Control (Git) "), "version control (git)");
        assert_eq!(n.normalize("Git"), "version control (git)");
        assert_eq!(n.normalize("version control"), "version control (git)");
        assert_eq!(n.normalize("Object–Oriented Programming"), "object-oriented programming");
        assert_eq!(n.normalize("OOP"), "object-oriented programming");
        assert_eq!(n.normalize("Rust"), "rust");
    }

    #[test]
    fn identical_sets_overlap_fully() {
        let job = JobRequirement::new("j", ["Java", "SQL"], 0.5);
        let o = binary_overlap(&["sql", "JAVA"], &job, &SkillNormalizer::new()).unwrap();
        assert_eq!(o.value, 1.0);
        assert_eq!((o.numerator(), o.denominator()), (2, 2));
    }

    #[test]
    fn empty_requirement_is_rejected() {
        let job = JobRequirement::new("j", Vec::<String>::new(), 0.5);
        assert_eq!(
            binary_overlap(&["x"], &job, &SkillNormalizer::new()),
            Err(MatchError::EmptyRequirement)
        );
    }

    #[test]
    fn overlap_at_k_uses_only_top_skills() {
        let job = JobRequirement::new("j", ["a", "b", "c", "d"], 0.5);
        let ranked = vec![
            ClaimedSkill { name: "a".into(), score: 0.9 },
            ClaimedSkill { name: "z".into(), score: 0.8 },
            ClaimedSkill { name: "b".into(), score: 0.1 },
        ];
        let o = overlap_at_k(&ranked, 2, &job, &SkillNormalizer::new()).unwrap();
        assert_eq!(o.value, 0.25);
        assert_eq!(o.mode, OverlapMode::TopK(2));
    }

    #[test]
    fn sem_sim_of_verbatim_candidates_is_one() {
        let e = HashingEmbedder::default();
        let names = ["Java", "SQL", "Algorithms"];
        let c = embed_skills(&names, &e, &BTreeMap::new()).unwrap();
        let s = sem_sim(&c, &c).unwrap();
        assert!((s.mean - 1.0).abs() < 1e-12);
        for (k, m) in &s.per_skill {
            assert_eq!(&m.candidate, k);
        }
    }

    #[test]
    fn sem_sim_needs_candidates() {
        let e = HashingEmbedder::default();
        let r = embed_skills(&["Java"], &e, &BTreeMap::new()).unwrap();
        assert_eq!(sem_sim(&[], &r), Err(MatchError::NoCandidateSkills));
    }

    #[test]
    fn sem_sim_ties_pick_smallest_name() {
        let r = [EmbeddedSkill { name: "r".into(), vector: vec![1.0, 0.0] }];
        let c = [
            EmbeddedSkill { name: "b".into(), vector: vec![1.0, 0.0] },
            EmbeddedSkill { name: "a".into(), vector: vec![1.0, 0.0] },
        ];
        assert_eq!(sem_sim(&c, &r).unwrap().per_skill["r"].candidate, "a");
    }

    #[test]
    fn decision_is_inclusive_and_gated() {
        assert!(decide_threshold(0.75, 0.75));
        assert!(!decide_threshold(0.0, 0.1));
        let e = HashingEmbedder::default();
        let n = SkillNormalizer::new();
        let m = SkillMatcher::new(&e, &n, Combiner::Overlap);
        let job = JobRequirement::new("j", ["Java", "SQL"], 0.5);
        let unverified = SkillClaims::unverified(claims(&["Java"]));
        assert_eq!(m.decide(&unverified, &job), Err(MatchError::UnverifiedInput));
        let attested = SkillClaims::attested(claims(&["Java"]));
        let r = m.decide(&attested, &job).unwrap();
        assert_eq!(r.score, 0.5);
        assert!(r.decision);
    }

    #[test]
    fn combiners() {
        assert_eq!(Combiner::SemSim.combine(0.2, 0.9), 0.9);
        assert_eq!(Combiner::Overlap.combine(0.2, 0.9), 0.2);
        let mix = Combiner::Mix { overlap_weight: 0.5 }.combine(0.2, 0.8);
        assert!((mix - 0.5).abs() < 1e-12);
    }

    #[test]
    fn job_threshold_is_validated() {
        let job = JobRequirement::new("j", ["x"], 1.5);
        assert_eq!(job.validate(), Err(MatchError::BadThreshold(1.5)));
    }
}
