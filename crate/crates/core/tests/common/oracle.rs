//! Brute-force references for the extraction and matching arithmetic. Only
//! embeddings and the sentence filter come from the library; every max, sum
//! and weight lookup is recomputed here.

use std::collections::BTreeMap;

use ler_core::fixtures;
use ler_core::skills::{filter_pedagogical, split_sentences, EmbeddingProvider, SkillTaxonomy};

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Grade and level factors written out by hand from the documented defaults.
pub fn default_grade_weight(grade: &str) -> f64 {
    match grade {
        "A" => 1.0,
        "A-" => 0.95,
        "B+" => 0.9,
        "B" => 0.8,
        "B-" => 0.7,
        "C" => 0.5,
        "D" => 0.3,
        "F" => 0.0,
        g => panic!("no oracle weight for {g}"),
    }
}

pub fn default_level_weight(level: u32) -> f64 {
    if level >= 400 {
        1.2
    } else if level >= 300 {
        1.0
    } else if level >= 200 {
        0.9
    } else {
        0.8
    }
}

/// `max_j cos(sentence_j, skill)` over every pair.
pub fn max_cosine(sentences: &[Vec<f64>], skill: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for s in sentences {
        let c = cosine(s, skill);
        if c > best {
            best = c;
        }
    }
    best
}

/// Per-course raw vectors for the fixture, keyed by course id.
pub fn fixture_course_vectors(
    provider: &dyn EmbeddingProvider,
    taxonomy: &SkillTaxonomy,
) -> BTreeMap<String, Vec<f64>> {
    let skills: Vec<Vec<f64>> = taxonomy
        .skills()
        .iter()
        .map(|s| provider.embed(&s.descriptor_text).unwrap())
        .collect();
    fixtures::syllabi()
        .iter()
        .map(|syl| {
            let sentences: Vec<Vec<f64>> = filter_pedagogical(&split_sentences(&syl.text))
                .iter()
                .filter_map(|s| provider.embed(s).ok())
                .collect();
            let v = skills.iter().map(|k| max_cosine(&sentences, k)).collect();
            (syl.course_id.clone(), v)
        })
        .collect()
}

/// `Σ_c v_c · w_grd(c) · w_lvl(c)` over the fixture transcript.
pub fn fixture_holder_vector(provider: &dyn EmbeddingProvider, taxonomy: &SkillTaxonomy) -> Vec<f64> {
    let per_course = fixture_course_vectors(provider, taxonomy);
    let mut total = vec![0.0; taxonomy.len()];
    for c in fixtures::transcript().courses {
        let w = default_grade_weight(&c.grade) * default_level_weight(c.level);
        for (i, x) in per_course[&c.course_id].iter().enumerate() {
            total[i] += x * w;
        }
    }
    total
}

/// Mean over required names of the best cosine against any candidate name.
pub fn sem_sim(provider: &dyn EmbeddingProvider, candidates: &[&str], required: &[&str]) -> f64 {
    let c: Vec<Vec<f64>> = candidates.iter().map(|n| provider.embed(n).unwrap()).collect();
    let mut sum = 0.0;
    for r in required {
        sum += max_cosine(&c, &provider.embed(r).unwrap());
    }
    sum / required.len() as f64
}
