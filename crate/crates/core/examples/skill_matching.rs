//! Score a skill set against two job postings with the skills-only matcher.

use ler_core::fixtures;
use ler_core::matching::{ClaimedSkill, Combiner, SkillMatcher, SkillNormalizer};
use ler_core::skills::{HashingEmbedder, DEFAULT_DIMENSION};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let provider = HashingEmbedder::new(DEFAULT_DIMENSION);
    let normalizer = SkillNormalizer::sample();
    let matcher = SkillMatcher::new(&provider, &normalizer, Combiner::default());
    let skills: Vec<ClaimedSkill> = fixtures::CANDIDATE_SKILLS
        .iter()
        .map(|s| ClaimedSkill { name: s.to_string(), score: 1.0 })
        .collect();

    for job in [fixtures::java_job(), fixtures::csharp_job()] {
        let (overlap, sem, score) = matcher.evaluate(&skills, &job)?;
        println!("{}", job.job_id);
        println!("  overlap  {}/{} = {:.2}", overlap.numerator(), overlap.denominator(), overlap.value);
        println!("  missing  {:?}", overlap.missing);
        println!("  sem_sim  {:.4}", sem.mean);
        println!("  score    {:.4} (threshold {})", score, job.threshold);
    }
    Ok(())
}
