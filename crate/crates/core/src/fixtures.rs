//! Bundled sample corpus: one computing transcript with syllabi, two job
//! roles and a hand-labelled filter set.

use serde::Deserialize;

use crate::matching::JobRequirement;
use crate::skills::{Syllabus, Transcript};

pub const TRANSCRIPT_JSON: &str = include_str!("../data/fixtures/transcript.json");
pub const JAVA_JOB_JSON: &str = include_str!("../data/fixtures/jobs/java_developer.json");
pub const CSHARP_JOB_JSON: &str = include_str!("../data/fixtures/jobs/csharp_developer.json");
pub const FILTER_GOLDEN_JSON: &str = include_str!("../data/fixtures/filter_golden.json");

const SYLLABI: &[(&str, &str)] = &[
    ("CS101", include_str!("../data/fixtures/syllabi/CS101.txt")),
    ("CS150", include_str!("../data/fixtures/syllabi/CS150.txt")),
    ("CS201", include_str!("../data/fixtures/syllabi/CS201.txt")),
    ("CS220", include_str!("../data/fixtures/syllabi/CS220.txt")),
    ("CS240", include_str!("../data/fixtures/syllabi/CS240.txt")),
    ("CS310", include_str!("../data/fixtures/syllabi/CS310.txt")),
    ("CS330", include_str!("../data/fixtures/syllabi/CS330.txt")),
    ("CS350", include_str!("../data/fixtures/syllabi/CS350.txt")),
    ("CS360", include_str!("../data/fixtures/syllabi/CS360.txt")),
];

/// Skill names the fixture student holds, as listed on the résumé side.
pub const CANDIDATE_SKILLS: [&str; 10] = [
    "Java",
    "Object-Oriented Programming",
    "Data Structures",
    "Algorithms",
    "SQL",
    "Software Engineering",
    "Version Control (Git)",
    "Operating Systems",
    "Python",
    "C++",
];

pub fn transcript() -> Transcript {
    serde_json::from_str(TRANSCRIPT_JSON).expect("bundled transcript parses")
}

pub fn syllabi() -> Vec<Syllabus> {
    SYLLABI
        .iter()
        .map(|(id, text)| Syllabus {
            course_id: id.to_string(),
            text: text.to_string(),
        })
        .collect()
}

pub fn java_job() -> JobRequirement {
    serde_json::from_str(JAVA_JOB_JSON).expect("bundled job parses")
}

pub fn csharp_job() -> JobRequirement {
    serde_json::from_str(CSHARP_JOB_JSON).expect("bundled job parses")
}

#[derive(Debug, Clone, Deserialize)]
pub struct FilterGolden {
    pub sentences: Vec<String>,
    pub retained: Vec<String>,
}

pub fn filter_golden() -> FilterGolden {
    serde_json::from_str(FILTER_GOLDEN_JSON).expect("bundled golden file parses")
}
