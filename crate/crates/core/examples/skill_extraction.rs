//! Extract a ranked skill profile from a transcript and its syllabi, without
//! any credential machinery.

use ler_core::fixtures;
use ler_core::skills::{
    assemble_courses, holder_vector, top_k, EmbeddedTaxonomy, HashingEmbedder, SkillTaxonomy, WeightConfig,
    DEFAULT_DIMENSION,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let taxonomy = SkillTaxonomy::sample();
    let provider = HashingEmbedder::new(DEFAULT_DIMENSION);
    let courses = assemble_courses(&fixtures::transcript(), &fixtures::syllabi());
    let embedded = EmbeddedTaxonomy::new(&taxonomy, &provider)?;
    let vector = holder_vector(&courses, &embedded, &provider, &WeightConfig::default())?;

    println!("{} courses, {} taxonomy skills", courses.len(), taxonomy.len());
    for (rank, s) in top_k(&vector, &taxonomy, 10)?.iter().enumerate() {
        println!("{:>2}. {:<28} {:.4}", rank + 1, taxonomy.get(&s.skill_id).unwrap().name, s.score);
    }
    Ok(())
}
