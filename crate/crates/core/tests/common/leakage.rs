//! Raw-input window scans over enclave outputs.

use std::collections::HashSet;

use ler_core::canon;
use ler_core::enclave::{DerivationInputs, DerivationPolicy, DerivationRequest, Enclave};
use ler_core::fixtures;
use ler_core::identity::KeyPair;
use ler_core::skills::{SkillTaxonomy, Syllabus, Transcript};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{provider, T0};

pub const MIN_WINDOW: usize = 8;
pub const MAX_WINDOW: usize = 64;

/// Every byte string a derivation over `transcript` and `syllabi` receives.
pub fn raw_inputs(transcript: &Transcript, syllabi: &[Syllabus]) -> Vec<Vec<u8>> {
    let mut raw = vec![
        canon::to_canonical(transcript).unwrap(),
        serde_json::to_vec_pretty(transcript).unwrap(),
    ];
    for s in syllabi {
        raw.push(s.text.as_bytes().to_vec());
        raw.push(canon::to_canonical(s).unwrap());
    }
    raw
}

/// Input corpora: the full fixture, each course alone, and the fixture
/// under another student name.
pub fn corpora() -> Vec<(Transcript, Vec<Syllabus>)> {
    let t = fixtures::transcript();
    let s = fixtures::syllabi();
    let mut out = vec![(t.clone(), s.clone())];
    for one in &s {
        let mut sub = t.clone();
        sub.courses.retain(|c| c.course_id == one.course_id);
        out.push((sub, vec![one.clone()]));
    }
    let mut renamed = t;
    renamed.student_name = "Riley Quinn-Castellanos".into();
    out.push((renamed, s));
    out
}

/// Everything an enclave emits for one derivation: the credential, the
/// session evidence, a re-attestation and the sealed session blobs.
pub fn outputs(enclave: &Enclave, transcript: &Transcript, syllabi: &[Syllabus], seed: u64) -> Vec<Vec<u8>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let taxonomy = SkillTaxonomy::sample();
    let holder = KeyPair::from_seed([7; 32]);
    let did = holder.did("ler");
    let inputs = DerivationInputs::new(transcript.clone(), syllabi.to_vec());
    let policy = DerivationPolicy::new(&taxonomy, enclave.provider());
    let mut session = enclave.open_session(policy, &mut rng).unwrap();
    let request = DerivationRequest {
        inputs: &inputs,
        taxonomy: &taxonomy,
        holder_did: &did,
        holder_keys: &holder,
        verifier_nonce: b"confidentiality",
        status_ref: ler_core::credential::StatusRef {
            locator: "status/test".into(),
            index: 0,
        },
        now: T0,
    };
    let (vc, ev) = enclave.derive_skill_credential(&mut session, &request, &mut rng).unwrap();
    let again = enclave.reattest(session.derivation_id(), b"later", T0 + 1).unwrap();
    let mut out = vec![
        canon::to_canonical(&vc).unwrap(),
        canon::to_canonical(&ev).unwrap(),
        canon::to_canonical(&again).unwrap(),
    ];
    let store = enclave.sealed_store();
    out.extend(store.labels().iter().filter_map(|l| store.export(l)));
    out
}

/// Raw windows of width `w` found in `haystack`.
pub fn hits(haystack: &[u8], raw: &[Vec<u8>], w: usize) -> Vec<String> {
    let needles: HashSet<&[u8]> = raw.iter().flat_map(|r| r.windows(w)).collect();
    haystack
        .windows(w)
        .filter(|x| needles.contains(x))
        .map(|x| String::from_utf8_lossy(x).into_owned())
        .collect()
}

pub struct ScanReport {
    pub corpora: usize,
    pub output_bytes: usize,
    pub leaks: Vec<(usize, String)>,
}

/// Scans every corpus at every window width in `MIN_WINDOW..=MAX_WINDOW`.
pub fn scan_fixture_corpus() -> ScanReport {
    let enclave = Enclave::new(provider());
    let mut output_bytes = 0;
    let mut leaks = Vec::new();
    let corpora = corpora();
    for (i, (t, s)) in corpora.iter().enumerate() {
        let raw = raw_inputs(t, s);
        for out in outputs(&enclave, t, s, i as u64) {
            output_bytes += out.len();
            for w in MIN_WINDOW..=MAX_WINDOW {
                leaks.extend(hits(&out, &raw, w).into_iter().map(|h| (w, h)));
            }
        }
    }
    ScanReport {
        corpora: corpora.len(),
        output_bytes,
        leaks,
    }
}
