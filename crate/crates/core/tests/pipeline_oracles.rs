mod common;

use std::collections::BTreeMap;

use common::oracle;
use ler_core::canon::{self, Digest};
use ler_core::enclave::{commit_inputs, provenance_digest};
use ler_core::fixtures;
use ler_core::matching::{binary_overlap, embed_skills, sem_sim, Combiner, SkillNormalizer};
use ler_core::skills::{
    assemble_courses, course_vector, holder_vector, personalize, score_skill, top_k, CourseRecord,
    EmbeddedTaxonomy, EmbeddingProvider, HashingEmbedder, SkillTaxonomy, SkillVector, WeightConfig,
    DEFAULT_DIMENSION,
};

const TOL: f64 = 1e-9;

fn provider() -> HashingEmbedder {
    HashingEmbedder::new(DEFAULT_DIMENSION)
}

fn hex(d: Digest) -> String {
    d.to_hex()
}

// Reference digests computed with Python's hashlib.
#[test]
fn input_commitment_vectors() {
    let zero = commit_inputs(b"", b"", &[0u8; 16]).unwrap();
    assert_eq!(hex(zero.h_inputs), "d2803921d0986a43bbee90743c32213da506e28153d0bc44c87a5a7c57552bc9");
    let salt: Vec<u8> = (0u8..16).collect();
    let c = commit_inputs(b"transcript-bytes", b"syllabus-bytes", &salt).unwrap();
    assert_eq!(hex(c.h_inputs), "a39f934457ad03231c032673acb2232debf219e619967bc108ce4bbf8edf6efe");
    assert_eq!(
        hex(canon::sha256(b"")),
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    );
}

#[test]
fn provenance_vector() {
    let d = provenance_digest(&Digest([0x11; 32]), &Digest([0x22; 32]), &Digest([0x33; 32]), 1_700_000_000);
    assert_eq!(hex(d), "63e4fccccfa7add7234b8ad7091f7d17798cc249a4a9e8f1264b7b844497da77");
}

#[test]
fn five_sentences_by_three_skills_equals_pairwise_max() {
    let p = provider();
    let sentences = [
        "Implement linked lists and hash tables.",
        "Write SQL queries over relational tables.",
        "Explain process scheduling in operating systems.",
        "Analyze sorting algorithms and their complexity.",
        "Develop Python scripts for data cleaning.",
    ];
    let skills = ["Data structures such as lists and trees.", "Relational databases and SQL.", "Graph algorithms."];
    let sv: Vec<Vec<f64>> = sentences.iter().map(|s| p.embed(s).unwrap()).collect();
    for k in skills {
        let kv = p.embed(k).unwrap();
        let got = score_skill(&sv, &kv).unwrap();
        assert!((got - oracle::max_cosine(&sv, &kv)).abs() <= TOL);
    }
}

#[test]
fn course_vectors_match_max_cosine_oracle() {
    let p = provider();
    let tax = SkillTaxonomy::sample();
    let et = EmbeddedTaxonomy::new(&tax, &p).unwrap();
    let reference = oracle::fixture_course_vectors(&p, &tax);
    for course in assemble_courses(&fixtures::transcript(), &fixtures::syllabi()) {
        let got = course_vector(&course, &et, &p).unwrap();
        let want = &reference[&course.course_id];
        for (g, w) in got.values.iter().zip(want) {
            assert!((g - w).abs() <= TOL, "{}: {g} vs {w}", course.course_id);
        }
    }
}

#[test]
fn holder_vector_matches_weighted_sum_oracle() {
    let p = provider();
    let tax = SkillTaxonomy::sample();
    let et = EmbeddedTaxonomy::new(&tax, &p).unwrap();
    let courses = assemble_courses(&fixtures::transcript(), &fixtures::syllabi());
    let got = holder_vector(&courses, &et, &p, &WeightConfig::default()).unwrap();
    let want = oracle::fixture_holder_vector(&p, &tax);
    let worst = got.values.iter().zip(&want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    assert!(worst <= TOL, "max deviation {worst}");
}

fn course(grade: &str, level: u32) -> CourseRecord {
    CourseRecord {
        course_id: format!("{grade}{level}"),
        title: String::new(),
        level,
        grade: grade.into(),
        syllabus_sentences: vec![],
    }
}

// Weights {A: 1.0, B: 0.8} × {100: 0.8, 400: 1.2}. Worked by hand:
// (A,100) 0.8, (B,400) 0.96, (A,400) 1.2
// entry 0: 1.0·0.8 + 0.2·0.96 + 0.3·1.2 = 1.352
// entry 1: 0.5·0.8 + 0.4·0.96 + 0.9·1.2 = 1.864
#[test]
fn three_course_personalization_matches_hand_computation() {
    let weights = WeightConfig {
        grade_weights: [("A".to_string(), 1.0), ("B".to_string(), 0.8)].into(),
        level_weights: [(100, 0.8), (400, 1.2)].into(),
        extensions: BTreeMap::new(),
    };
    let courses = [course("A", 100), course("B", 400), course("A", 400)];
    let vecs: Vec<SkillVector> = [[1.0, 0.5], [0.2, 0.4], [0.3, 0.9]]
        .iter()
        .map(|v| SkillVector {
            taxonomy_ref: "t".into(),
            values: v.to_vec(),
        })
        .collect();
    let got = personalize(&courses, &vecs, &weights).unwrap();
    assert!((got.values[0] - 1.352).abs() <= TOL);
    assert!((got.values[1] - 1.864).abs() <= TOL);
}

#[test]
fn top_k_is_a_prefix_of_the_full_sort() {
    let p = provider();
    let tax = SkillTaxonomy::sample();
    let values = oracle::fixture_holder_vector(&p, &tax);
    let mut order: Vec<(String, f64)> = tax.skills().iter().map(|s| s.skill_id.clone()).zip(values.iter().copied()).collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let v = SkillVector {
        taxonomy_ref: tax.id().to_string(),
        values,
    };
    for k in [1, 5, 10, tax.len()] {
        let got: Vec<String> = top_k(&v, &tax, k).unwrap().into_iter().map(|r| r.skill_id).collect();
        let want: Vec<String> = order[..k].iter().map(|x| x.0.clone()).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn four_required_by_six_candidates_sem_sim() {
    let p = provider();
    let candidates = ["Java", "Python", "SQL", "Linear Algebra", "Computer Networks", "Statistics"];
    let required = ["Java", "Relational SQL databases", "Machine Learning", "Networks"];
    let c = embed_skills(&candidates, &p, &BTreeMap::new()).unwrap();
    let r = embed_skills(&required, &p, &BTreeMap::new()).unwrap();
    let got = sem_sim(&c, &r).unwrap();
    assert!((got.mean - oracle::sem_sim(&p, &candidates, &required)).abs() <= TOL);
    assert!((got.per_skill["Java"].similarity - 1.0).abs() <= 1e-6);
}

#[test]
fn java_overlap_decides_true_at_three_quarters() {
    let job = fixtures::java_job();
    let n = SkillNormalizer::sample();
    let o = binary_overlap(&fixtures::CANDIDATE_SKILLS, &job, &n).unwrap();
    assert_eq!((o.numerator(), o.denominator()), (8, 10));
    let s = Combiner::Overlap.combine(o.value, 0.0);
    assert!(s >= 0.75);
}

#[test]
fn derived_credential_scores_equal_the_oracle() {
    let w = common::world(31);
    let tax = &w.taxonomy;
    let want = oracle::fixture_holder_vector(w.provider.as_ref(), tax);
    let vc = w.holder.wallet.current_derivative(common::T0).unwrap();
    let mut seen = 0;
    for c in &vc.claims {
        if let Some(id) = c.key.strip_prefix("skill.") {
            let i = tax.index_of(id).unwrap();
            assert!((c.value.as_f64().unwrap() - want[i]).abs() <= TOL);
            seen += 1;
        }
    }
    assert_eq!(seen, 10);
}
