//! Random single-bit tampering of credentials, presentations and attestation
//! evidence, each checked against the reject reason its field implies.

use std::collections::BTreeMap;

use ler_core::credential::{
    self, CredentialClass, DisclosurePolicy, PresentationRequest, RejectReason,
    VerifiableCredential, VerifiablePresentation,
};
use ler_core::enclave::{verify_attestation, AttestationEvidence};
use ler_core::identity::DidDocument;
use ler_core::protocol::VerifierPolicy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::mutation::{flip_bit, leaves, path_string, top_key, Path};
use super::{world, T0};

pub const NOW: u64 = T0 + 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Target {
    Credential,
    /// Network adversary: no keys.
    PresentationInTransit,
    /// Malicious holder: re-signs the presentation after tampering.
    PresentationResigned,
    Evidence,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Accepted,
    Undecodable,
    Rejected(RejectReason),
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub target: Target,
    pub path: String,
    pub expected: RejectReason,
    pub verdict: Verdict,
}

impl Trial {
    /// Rejected, and for decodable inputs with the expected reason.
    pub fn correct(&self) -> bool {
        match &self.verdict {
            Verdict::Accepted => false,
            Verdict::Undecodable => true,
            Verdict::Rejected(r) => *r == self.expected,
        }
    }
}

pub struct Corpus {
    pub credentials: Vec<(VerifiableCredential, DidDocument)>,
    /// Presentation, issuer document, holder document, nonce.
    pub presentations: Vec<(VerifiablePresentation, DidDocument, DidDocument, Vec<u8>)>,
    pub evidence: AttestationEvidence,
    pub holder_keys: ler_core::identity::KeyPair,
    pub policy: VerifierPolicy,
}

pub fn corpus(seed: u64) -> Corpus {
    let mut w = world(seed);
    let holder_doc = w.holder.doc.clone();
    let issuer_doc = w.issuer.doc.clone();
    let request = PresentationRequest::claims(["taxonomy", "skill.*"]);
    let challenge = w.verifier.challenge(request, None, NOW, &mut w.rng);
    let derivative_vp = w.holder.respond(&challenge, &w.enclave, NOW).unwrap();
    let evidence = derivative_vp.attestation.clone().unwrap();

    let institutional = w.holder.wallet.by_class(CredentialClass::Institutional)[0].clone();
    let derivative = w.holder.wallet.current_derivative(NOW).unwrap().clone();
    let nonce = b"institutional-nonce".to_vec();
    let institutional_vp = credential::present(
        &institutional,
        &DisclosurePolicy::permissive("all"),
        &PresentationRequest::claims(["gpa", "institution", "course.*"]),
        &w.holder.keys,
        &nonce,
        w.issuer.staple(institutional.id(), NOW).unwrap(),
        None,
        NOW,
    )
    .unwrap();

    Corpus {
        credentials: vec![
            (institutional, issuer_doc.clone()),
            (derivative, holder_doc.clone()),
        ],
        presentations: vec![
            (derivative_vp, holder_doc.clone(), holder_doc.clone(), challenge.nonce.clone()),
            (institutional_vp, issuer_doc, holder_doc, nonce),
        ],
        evidence,
        holder_keys: w.holder.keys.clone(),
        policy: w.verifier.policy.clone(),
    }
}

fn tamper<T: Serialize + DeserializeOwned>(
    item: &T,
    rng: &mut ChaCha20Rng,
    eligible: impl Fn(&Path) -> bool,
) -> (String, Path, Option<T>) {
    let value = serde_json::to_value(item).unwrap();
    let paths: Vec<Path> = leaves(&value).into_iter().filter(|p| eligible(p)).collect();
    let path = paths[rng.gen_range(0..paths.len())].clone();
    let mut mutated = value.clone();
    flip_bit(&mut mutated, &path, rng);
    assert_ne!(mutated, value);
    let decoded = serde_json::from_value::<T>(mutated).ok();
    (path_string(&path), path, decoded)
}

fn verdict(r: Result<(), RejectReason>) -> Verdict {
    match r {
        Ok(()) => Verdict::Accepted,
        Err(e) => Verdict::Rejected(e),
    }
}

// Fields the holder legitimately chooses; a re-signed change to them is not a
// forgery.
fn holder_chosen(path: &Path) -> bool {
    matches!(top_key(path), "created_at" | "predicate_results" | "holder_signature")
}

fn expected_after_resign(path: &Path) -> RejectReason {
    let second = match path.get(1) {
        Some(super::mutation::Seg::Key(k)) => k.as_str(),
        _ => "",
    };
    match top_key(path) {
        "credential" if second == "subject_did" => RejectReason::BadHolderSig,
        "credential" | "issuer_signature" => RejectReason::BadIssuerSig,
        "revealed" => RejectReason::DigestMismatch,
        "nonce" => RejectReason::BadNonce,
        "holder_did" => RejectReason::BadHolderSig,
        "stapled_status" => RejectReason::BadStatusSig,
        "attestation" => RejectReason::BadAttestation,
        other => panic!("no expectation for {other}"),
    }
}

pub fn run(corpus: &Corpus, trials: usize, seed: u64) -> Vec<Trial> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let policy = &corpus.policy;
    let anchor = *policy.enclave_keys.iter().next().unwrap();
    (0..trials)
        .map(|_| {
            let target = match rng.gen_range(0..4) {
                0 => Target::Credential,
                1 => Target::PresentationInTransit,
                2 => Target::PresentationResigned,
                _ => Target::Evidence,
            };
            match target {
                Target::Credential => {
                    let (vc, doc) = &corpus.credentials[rng.gen_range(0..corpus.credentials.len())];
                    let (name, path, decoded) = tamper(vc, &mut rng, |_| true);
                    let expected = if top_key(&path) == "claims" {
                        RejectReason::DigestMismatch
                    } else {
                        RejectReason::BadIssuerSig
                    };
                    let verdict = decoded.map_or(Verdict::Undecodable, |vc| verdict(vc.verify(doc)));
                    Trial { target, path: name, expected, verdict }
                }
                Target::PresentationInTransit | Target::PresentationResigned => {
                    let idx = rng.gen_range(0..corpus.presentations.len());
                    let (vp, issuer_doc, holder_doc, nonce) = &corpus.presentations[idx];
                    let resign = target == Target::PresentationResigned;
                    let (name, path, decoded) =
                        tamper(vp, &mut rng, |p| !resign || !holder_chosen(p));
                    let expected = if resign {
                        expected_after_resign(&path)
                    } else {
                        RejectReason::BadHolderSig
                    };
                    let verdict = decoded.map_or(Verdict::Undecodable, |mut vp| {
                        if resign {
                            vp.sign(&corpus.holder_keys).unwrap();
                        }
                        verdict(
                            credential::verify(&vp, issuer_doc, holder_doc, policy, Some(nonce), NOW)
                                .map(|_| ()),
                        )
                    });
                    Trial { target, path: name, expected, verdict }
                }
                Target::Evidence => {
                    let (name, _, decoded) = tamper(&corpus.evidence, &mut rng, |_| true);
                    let verdict = decoded.map_or(Verdict::Undecodable, |ev| {
                        verdict(verify_attestation(
                            &ev,
                            &anchor,
                            &corpus.evidence.n_v,
                            &policy.measurement_allowlist,
                            &policy.expected_policy_digest,
                            NOW,
                            policy.attestation_max_age,
                        ))
                    });
                    Trial { target, path: name, expected: RejectReason::BadAttestation, verdict }
                }
            }
        })
        .collect()
}

/// Count of trials per target, and of those handled correctly.
pub fn tally(trials: &[Trial]) -> BTreeMap<Target, (usize, usize)> {
    let mut out = BTreeMap::new();
    for t in trials {
        let e = out.entry(t.target).or_insert((0, 0));
        e.0 += 1;
        e.1 += t.correct() as usize;
    }
    out
}
