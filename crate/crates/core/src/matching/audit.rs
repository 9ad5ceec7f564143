//! Bias-opportunity audits.
//!
//! Both audits hold the skill input fixed and draw two independent
//! non-skill profiles per trial. [`estimate_boi`] averages the squared score
//! difference; [`flip_probability_audit`] counts decision flips. Every trial
//! runs on its own ChaCha stream derived from `(seed, trial)`.

use std::collections::BTreeMap;
use std::hash::Hash;
use std::io::{self, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{decide_threshold, MatchError};

/// Non-skill résumé fields (name, institution, dates, free text).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonSkillProfile {
    pub fields: BTreeMap<String, String>,
}

impl NonSkillProfile {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }
}

/// A scoring function under audit: `h(v, z)`.
pub trait AuditMatcher<V>: Sync {
    fn id(&self) -> String;
    fn score(&self, v: &V, z: &NonSkillProfile) -> f64;
}

/// Adapter for matchers that are skill-only by type: the wrapped function
/// receives `v` and nothing else.
pub struct SkillOnly<F> {
    id: String,
    f: F,
}

impl<F> SkillOnly<F> {
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

impl<V, F: Fn(&V) -> f64 + Sync> AuditMatcher<V> for SkillOnly<F> {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn score(&self, v: &V, _z: &NonSkillProfile) -> f64 {
        (self.f)(v)
    }
}

pub trait ZEditGenerator: Sync {
    fn sample(&self, rng: &mut dyn RngCore) -> NonSkillProfile;
}

/// Randomized résumé edits over names, institutions, dates and free text.
#[derive(Debug, Clone, Default)]
pub struct RandomProfileEdits;

const NAMES: &[&str] = &[
    "Alex Kim", "Maria Garcia", "Jamal Wright", "Wei Zhang", "Priya Patel", "Olga Ivanova",
    "Samuel Okafor", "Hannah Cohen", "Diego Alvarez", "Aiko Tanaka",
];
const INSTITUTIONS: &[&str] = &[
    "State University", "Ivy College", "Community College", "Tech Institute", "Online Academy",
    "Regional University",
];
const FREE_TEXT: &[&str] = &[
    "Volunteer at local shelter",
    "Captain of the chess club",
    "Enjoys hiking and photography",
    "Fluent in three languages",
    "",
];

impl ZEditGenerator for RandomProfileEdits {
    fn sample(&self, rng: &mut dyn RngCore) -> NonSkillProfile {
        let mut pick = |items: &[&str]| items[rng.gen_range(0..items.len())].to_string();
        let name = pick(NAMES);
        let institution = pick(INSTITUTIONS);
        let free_text = pick(FREE_TEXT);
        let year: u32 = rng.gen_range(1990..2026);
        let month: u32 = rng.gen_range(1..13);
        NonSkillProfile {
            fields: [
                ("name".to_string(), name),
                ("institution".to_string(), institution),
                ("graduation_date".to_string(), format!("{year}-{month:02}")),
                ("free_text".to_string(), free_text),
            ]
            .into(),
        }
    }
}

/// `institution = flagged` with probability `p`, otherwise `other`.
#[derive(Debug, Clone)]
pub struct BernoulliInstitution {
    pub p: f64,
    pub flagged: String,
    pub other: String,
}

impl BernoulliInstitution {
    pub fn new(p: f64, flagged: &str, other: &str) -> Self {
        Self {
            p,
            flagged: flagged.to_string(),
            other: other.to_string(),
        }
    }
}

impl ZEditGenerator for BernoulliInstitution {
    fn sample(&self, rng: &mut dyn RngCore) -> NonSkillProfile {
        let inst = if rng.gen_bool(self.p) { &self.flagged } else { &self.other };
        NonSkillProfile {
            fields: [("institution".to_string(), inst.clone())].into(),
        }
    }
}

/// Deliberately biased matcher for calibrating the audits: the skill score
/// plus `bump` whenever `institution` equals `flagged`.
#[derive(Debug, Clone)]
pub struct InstitutionBump {
    pub bump: f64,
    pub flagged: String,
}

impl InstitutionBump {
    pub fn new(bump: f64, flagged: &str) -> Self {
        Self {
            bump,
            flagged: flagged.to_string(),
        }
    }
}

impl AuditMatcher<f64> for InstitutionBump {
    fn id(&self) -> String {
        format!("institution-bump({})", self.bump)
    }

    fn score(&self, v: &f64, z: &NonSkillProfile) -> f64 {
        v + if z.get("institution") == Some(self.flagged.as_str()) {
            self.bump
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub sample: usize,
    pub score_z: f64,
    pub score_z_prime: f64,
    pub squared_diff: f64,
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoiEstimate {
    pub value: f64,
    pub trials: usize,
    pub matcher_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoiReport {
    pub estimate: BoiEstimate,
    /// Monte-Carlo standard error of `estimate.value`.
    pub std_error: f64,
    pub seed: u64,
    pub log: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipAudit {
    pub rate: f64,
    pub flips: usize,
    pub trials: usize,
    pub threshold: f64,
    pub matcher_id: String,
    pub seed: u64,
    pub log: Vec<TrialRecord>,
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn run_trials<V>(
    matcher: &dyn AuditMatcher<V>,
    v_samples: &[V],
    edits: &dyn ZEditGenerator,
    threshold: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<TrialRecord>, MatchError> {
    if trials == 0 {
        return Err(MatchError::BadTrials);
    }
    if v_samples.is_empty() {
        return Err(MatchError::NoSamples);
    }
    Ok((0..trials)
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let sample = rng.gen_range(0..v_samples.len());
            let v = &v_samples[sample];
            let z = edits.sample(&mut rng);
            let z_prime = edits.sample(&mut rng);
            let score_z = matcher.score(v, &z);
            let score_z_prime = matcher.score(v, &z_prime);
            let diff = score_z - score_z_prime;
            TrialRecord {
                trial,
                sample,
                score_z,
                score_z_prime,
                squared_diff: diff * diff,
                flipped: decide_threshold(score_z, threshold)
                    != decide_threshold(score_z_prime, threshold),
            }
        })
        .collect())
}

/// Monte-Carlo estimate of `E_v E_{z,z'} [(h(v,z) − h(v,z'))²]`.
pub fn estimate_boi<V>(
    matcher: &dyn AuditMatcher<V>,
    v_samples: &[V],
    edits: &dyn ZEditGenerator,
    trials: usize,
    seed: u64,
) -> Result<BoiReport, MatchError> {
    let log = run_trials(matcher, v_samples, edits, f64::NEG_INFINITY, trials, seed)?;
    let n = log.len() as f64;
    let mean = log.iter().map(|t| t.squared_diff).sum::<f64>() / n;
    let var = if log.len() > 1 {
        log.iter().map(|t| (t.squared_diff - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(BoiReport {
        estimate: BoiEstimate {
            value: mean,
            trials,
            matcher_id: matcher.id(),
        },
        std_error: (var / n).sqrt(),
        seed,
        log,
    })
}

/// Fraction of trials whose decision differs between `z` and `z'`.
pub fn flip_probability_audit<V>(
    matcher: &dyn AuditMatcher<V>,
    v_samples: &[V],
    edits: &dyn ZEditGenerator,
    threshold: f64,
    trials: usize,
    seed: u64,
) -> Result<FlipAudit, MatchError> {
    let log = run_trials(matcher, v_samples, edits, threshold, trials, seed)?;
    let flips = log.iter().filter(|t| t.flipped).count();
    Ok(FlipAudit {
        rate: flips as f64 / trials as f64,
        flips,
        trials,
        threshold,
        matcher_id: matcher.id(),
        seed,
        log,
    })
}

impl BoiReport {
    /// One JSON line per trial followed by a summary line.
    pub fn write_log(&self, mut w: impl Write) -> io::Result<()> {
        for t in &self.log {
            writeln!(w, "{}", serde_json::to_string(t)?)?;
        }
        let summary = serde_json::json!({
            "summary": "boi",
            "matcher_id": self.estimate.matcher_id,
            "trials": self.estimate.trials,
            "value": self.estimate.value,
            "std_error": self.std_error,
            "seed": self.seed,
        });
        writeln!(w, "{summary}")
    }
}

impl FlipAudit {
    pub fn write_log(&self, mut w: impl Write) -> io::Result<()> {
        for t in &self.log {
            writeln!(w, "{}", serde_json::to_string(t)?)?;
        }
        let summary = serde_json::json!({
            "summary": "flip",
            "matcher_id": self.matcher_id,
            "trials": self.trials,
            "flips": self.flips,
            "rate": self.rate,
            "threshold": self.threshold,
            "seed": self.seed,
        });
        writeln!(w, "{summary}")
    }
}

/// Plug-in estimate of I(A; B) in bits from paired observations.
pub fn plugin_mutual_information<A: Ord + Hash + Clone, B: Ord + Hash + Clone>(
    pairs: &[(A, B)],
) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let mut joint: BTreeMap<(A, B), f64> = BTreeMap::new();
    let mut pa: BTreeMap<A, f64> = BTreeMap::new();
    let mut pb: BTreeMap<B, f64> = BTreeMap::new();
    for (a, b) in pairs {
        *joint.entry((a.clone(), b.clone())).or_default() += 1.0;
        *pa.entry(a.clone()).or_default() += 1.0;
        *pb.entry(b.clone()).or_default() += 1.0;
    }
    joint
        .iter()
        .map(|((a, b), c)| {
            let p = c / n;
            p * (p / ((pa[a] / n) * (pb[b] / n))).log2()
        })
        .sum::<f64>()
        .max(0.0)
}
