//! Estimate how much non-skill profile fields move a matcher's score. The
//! shipped matcher cannot see them; a matcher with an institution bump can.

use ler_core::fixtures;
use ler_core::matching::{
    estimate_boi, flip_probability_audit, BernoulliInstitution, ClaimedSkill, Combiner, InstitutionBump,
    RandomProfileEdits, SkillMatcher, SkillNormalizer, SkillOnly,
};
use ler_core::skills::{HashingEmbedder, DEFAULT_DIMENSION};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let provider = HashingEmbedder::new(DEFAULT_DIMENSION);
    let normalizer = SkillNormalizer::sample();
    let matcher = SkillMatcher::new(&provider, &normalizer, Combiner::default());
    let job = fixtures::java_job();
    let shipped = SkillOnly::new("skill-only", |v: &Vec<ClaimedSkill>| matcher.evaluate(v, &job).unwrap().2);
    let samples = vec![fixtures::CANDIDATE_SKILLS
        .iter()
        .map(|s| ClaimedSkill { name: s.to_string(), score: 1.0 })
        .collect::<Vec<_>>()];

    let boi = estimate_boi(&shipped, &samples, &RandomProfileEdits, 2_000, 7)?;
    let flips = flip_probability_audit(&shipped, &samples, &RandomProfileEdits, job.threshold, 2_000, 7)?;
    println!("skill-only:       boi = {}, flip rate = {}", boi.estimate.value, flips.rate);

    let biased = estimate_boi(&InstitutionBump::new(0.1, "X"), &[0.5], &BernoulliInstitution::new(0.5, "X", "Y"), 2_000, 7)?;
    println!(
        "institution bump: boi = {:.5} ± {:.5} (exact 0.005)",
        biased.estimate.value, biased.std_error
    );
    Ok(())
}
