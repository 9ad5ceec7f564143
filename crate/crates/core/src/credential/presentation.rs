//! Selective-disclosure presentations and the verifier acceptance rule.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    Claim, ClaimValue, CredentialBody, CredentialClass, CredentialError, CredentialStatus,
    RejectReason, StatusSnippet, VerifiableCredential,
};
use crate::canon::{self, hex_bytes, CanonError, Digest};
use crate::clock::Timestamp;
use crate::enclave::{self, AttestationEvidence, Provenance};
use crate::identity::{Did, DidDocument, KeyPair, Signature};
use crate::matching::{ClaimedSkill, MatchError, SkillClaims};
use crate::protocol::VerifierPolicy;
use crate::skills::SkillTaxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
            Comparator::Le => "<=",
            Comparator::Lt => "<",
            Comparator::Eq => "==",
            Comparator::Ne => "!=",
        })
    }
}

impl std::str::FromStr for Comparator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            ">=" => Comparator::Ge,
            ">" => Comparator::Gt,
            "<=" => Comparator::Le,
            "<" => Comparator::Lt,
            "==" | "=" => Comparator::Eq,
            "!=" => Comparator::Ne,
            _ => return Err(format!("unknown comparator {s:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub key: String,
    pub comparator: Comparator,
    pub bound: ClaimValue,
}

impl Predicate {
    pub fn new(key: &str, comparator: Comparator, bound: impl Into<ClaimValue>) -> Self {
        Self {
            key: key.to_string(),
            comparator,
            bound: bound.into(),
        }
    }

    /// `None` when the value and bound are not comparable.
    pub fn evaluate(&self, value: &ClaimValue) -> Option<bool> {
        use Comparator::*;
        if let (Some(v), Some(b)) = (value.as_f64(), self.bound.as_f64()) {
            return Some(match self.comparator {
                Ge => v >= b,
                Gt => v > b,
                Le => v <= b,
                Lt => v < b,
                Eq => v == b,
                Ne => v != b,
            });
        }
        match (value.as_str(), self.bound.as_str(), self.comparator) {
            (Some(v), Some(b), Eq) => Some(v == b),
            (Some(v), Some(b), Ne) => Some(v != b),
            _ => None,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.key, self.comparator, self.bound)
    }
}

/// Holder rules for what a presentation may reveal. Entries of
/// `allowed_claims` ending in `.*` match any key with that prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisclosurePolicy {
    pub policy_id: String,
    pub allowed_claims: BTreeSet<String>,
    #[serde(default)]
    pub allowed_predicates: Vec<Predicate>,
    pub default_deny: bool,
}

impl DisclosurePolicy {
    pub fn deny_by_default<S: Into<String>>(
        policy_id: &str,
        allowed_claims: impl IntoIterator<Item = S>,
        allowed_predicates: Vec<Predicate>,
    ) -> Self {
        Self {
            policy_id: policy_id.to_string(),
            allowed_claims: allowed_claims.into_iter().map(Into::into).collect(),
            allowed_predicates,
            default_deny: true,
        }
    }

    pub fn permissive(policy_id: &str) -> Self {
        Self {
            policy_id: policy_id.to_string(),
            allowed_claims: BTreeSet::new(),
            allowed_predicates: Vec::new(),
            default_deny: false,
        }
    }

    pub fn allows_claim(&self, key: &str) -> bool {
        !self.default_deny || self.allowed_claims.iter().any(|a| key_matches(a, key))
    }

    /// A predicate is allowed when listed verbatim, or when its key could be
    /// revealed outright anyway.
    pub fn allows_predicate(&self, p: &Predicate) -> bool {
        self.allows_claim(&p.key) || self.allowed_predicates.contains(p)
    }
}

/// Claims and predicates a verifier asks for.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PresentationRequest {
    pub claims: BTreeSet<String>,
    #[serde(default)]
    pub predicates: Vec<Predicate>,
}

impl PresentationRequest {
    pub fn claims<S: Into<String>>(keys: impl IntoIterator<Item = S>) -> Self {
        Self {
            claims: keys.into_iter().map(Into::into).collect(),
            predicates: Vec::new(),
        }
    }

    pub fn with_predicate(mut self, p: Predicate) -> Self {
        self.predicates.push(p);
        self
    }

    /// Entries ending in `.*` request every key under that prefix.
    pub fn wants(&self, key: &str) -> bool {
        self.claims.iter().any(|r| key_matches(r, key))
    }
}

fn key_matches(pattern: &str, key: &str) -> bool {
    match pattern.strip_suffix(".*") {
        Some(prefix) => key
            .strip_prefix(prefix)
            .is_some_and(|rest| rest.starts_with('.')),
        None => pattern == key,
    }
}

/// Holder-asserted predicate outcome. Trusted under the honest-but-curious
/// model; the value itself is not disclosed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateResult {
    pub predicate: Predicate,
    pub result: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StapledStatus {
    pub snippet: StatusSnippet,
    pub signature: Signature,
}

#[derive(Serialize)]
struct PresentationBody<'a> {
    credential: &'a CredentialBody,
    issuer_signature: &'a Signature,
    revealed: &'a [Claim],
    predicate_results: &'a [PredicateResult],
    #[serde(with = "hex_bytes")]
    nonce: &'a Vec<u8>,
    created_at: Timestamp,
    holder_did: &'a Did,
    stapled_status: &'a StapledStatus,
    attestation: &'a Option<AttestationEvidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiablePresentation {
    pub credential: CredentialBody,
    pub issuer_signature: Signature,
    pub revealed: Vec<Claim>,
    pub predicate_results: Vec<PredicateResult>,
    #[serde(with = "hex_bytes")]
    pub nonce: Vec<u8>,
    pub created_at: Timestamp,
    pub holder_did: Did,
    pub stapled_status: StapledStatus,
    pub attestation: Option<AttestationEvidence>,
    pub holder_signature: Signature,
}

impl VerifiablePresentation {
    pub fn signing_message(&self) -> Result<Vec<u8>, CanonError> {
        let body = PresentationBody {
            credential: &self.credential,
            issuer_signature: &self.issuer_signature,
            revealed: &self.revealed,
            predicate_results: &self.predicate_results,
            nonce: &self.nonce,
            created_at: self.created_at,
            holder_did: &self.holder_did,
            stapled_status: &self.stapled_status,
            attestation: &self.attestation,
        };
        let mut msg = b"vp".to_vec();
        msg.extend(canon::to_canonical(&body)?);
        Ok(msg)
    }

    /// Re-signs after modification. Only the holder can do this meaningfully.
    pub fn sign(&mut self, holder_keys: &KeyPair) -> Result<(), CanonError> {
        self.holder_signature = holder_keys.sign(&self.signing_message()?);
        Ok(())
    }

    pub fn revealed_keys(&self) -> Vec<&str> {
        self.revealed.iter().map(|c| c.key.as_str()).collect()
    }
}

/// Builds a presentation revealing `requested ∩ allowed`. Salts of
/// unrevealed claims never leave the credential.
#[allow(clippy::too_many_arguments)]
pub fn present(
    credential: &VerifiableCredential,
    policy: &DisclosurePolicy,
    requested: &PresentationRequest,
    holder_keys: &KeyPair,
    nonce: &[u8],
    status: StapledStatus,
    attestation: Option<AttestationEvidence>,
    now: Timestamp,
) -> Result<VerifiablePresentation, CredentialError> {
    if credential.body.is_expired(now) {
        return Err(CredentialError::Expired);
    }
    let holder_did = credential.body.subject_did.clone();
    if !holder_did.is_derived_from(&holder_keys.public_key()) {
        return Err(CredentialError::Unauthorized);
    }
    let revealed: Vec<Claim> = credential
        .claims
        .iter()
        .filter(|c| requested.wants(&c.key) && policy.allows_claim(&c.key))
        .cloned()
        .collect();
    let predicate_results: Vec<PredicateResult> = requested
        .predicates
        .iter()
        .filter(|p| policy.allows_predicate(p))
        .filter_map(|p| {
            let claim = credential.claim(&p.key)?;
            Some(PredicateResult {
                predicate: p.clone(),
                result: p.evaluate(&claim.value)?,
            })
        })
        .collect();
    if revealed.is_empty() && predicate_results.is_empty() {
        return Err(CredentialError::EmptyDisclosure);
    }
    let mut vp = VerifiablePresentation {
        credential: credential.body.clone(),
        issuer_signature: credential.signature,
        revealed,
        predicate_results,
        nonce: nonce.to_vec(),
        created_at: now,
        holder_did,
        stapled_status: status,
        attestation,
        holder_signature: Signature([0; 64]),
    };
    vp.sign(holder_keys)?;
    Ok(vp)
}

/// What a verifier learns from an accepted presentation.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifiedPresentation {
    pub credential_id: String,
    pub credential_class: CredentialClass,
    pub issuer_did: Did,
    pub subject_did: Did,
    pub revealed: BTreeMap<String, ClaimValue>,
    pub predicates: Vec<PredicateResult>,
    pub provenance: Option<Provenance>,
    pub measurement: Option<Digest>,
}

impl VerifiedPresentation {
    /// Skill claims (`skill.<id>` keys) of an attested derivative
    /// credential, named through `taxonomy`. This is the only way to obtain
    /// input the shipped matcher accepts.
    pub fn skill_claims(&self, taxonomy: &SkillTaxonomy) -> Result<SkillClaims, MatchError> {
        if self.credential_class != CredentialClass::Derivative || self.measurement.is_none() {
            return Err(MatchError::UnverifiedInput);
        }
        if let Some(t) = self.revealed.get("taxonomy") {
            if t.as_str() != Some(taxonomy.id()) {
                return Err(MatchError::TaxonomyMismatch);
            }
        }
        let mut skills = Vec::new();
        for (key, value) in &self.revealed {
            let Some(id) = key.strip_prefix("skill.") else {
                continue;
            };
            let descriptor = taxonomy.get(id).ok_or(MatchError::TaxonomyMismatch)?;
            skills.push(ClaimedSkill {
                name: descriptor.name.clone(),
                score: value.as_f64().unwrap_or(0.0),
            });
        }
        if skills.is_empty() {
            return Err(MatchError::NoCandidateSkills);
        }
        Ok(SkillClaims::attested(skills))
    }
}

/// The verifier acceptance rule. Checks run in a fixed order and the first
/// failure decides the reason.
pub fn verify(
    vp: &VerifiablePresentation,
    issuer_doc: &DidDocument,
    holder_doc: &DidDocument,
    policy: &VerifierPolicy,
    expected_nonce: Option<&[u8]>,
    now: Timestamp,
) -> Result<VerifiedPresentation, RejectReason> {
    let body = &vp.credential;

    let holder_ok = holder_doc.did == vp.holder_did
        && vp.holder_did == body.subject_did
        && vp
            .signing_message()
            .is_ok_and(|m| holder_doc.verify(&m, &vp.holder_signature));
    if !holder_ok {
        return Err(RejectReason::BadHolderSig);
    }

    if !body.verify_signature(issuer_doc, &vp.issuer_signature) {
        return Err(RejectReason::BadIssuerSig);
    }

    let mut keys = BTreeSet::new();
    for claim in &vp.revealed {
        let in_list = claim
            .digest()
            .is_ok_and(|d| body.claim_digests.contains(&d));
        if !in_list || !keys.insert(claim.key.as_str()) {
            return Err(RejectReason::DigestMismatch);
        }
    }

    if vp.nonce.is_empty() || expected_nonce != Some(vp.nonce.as_slice()) {
        return Err(RejectReason::BadNonce);
    }

    if body.is_expired(now) {
        return Err(RejectReason::Expired);
    }

    let snippet = &vp.stapled_status.snippet;
    let status_ok = snippet.credential_id == body.id
        && snippet.owner_did == body.issuer_did
        && snippet.locator == body.status_ref.locator
        && snippet.verify(issuer_doc, &vp.stapled_status.signature);
    if !status_ok {
        return Err(RejectReason::BadStatusSig);
    }
    // Boundary inclusive; a snippet from the future is not fresh either.
    if snippet.issued_at > now || now - snippet.issued_at > policy.freshness_window {
        return Err(RejectReason::StaleStatus);
    }
    if snippet.status != CredentialStatus::Valid {
        return Err(RejectReason::Revoked);
    }

    let measurement = match (&vp.attestation, body.credential_class) {
        (None, CredentialClass::Derivative) => return Err(RejectReason::MissingAttestation),
        (None, _) => None,
        (Some(ev), _) => {
            let signed_by_anchor = policy
                .enclave_keys
                .iter()
                .any(|pk| ev.verify_signature(pk));
            if !signed_by_anchor {
                return Err(RejectReason::BadAttestation);
            }
            enclave::check_attestation_claims(
                ev,
                &vp.nonce,
                &policy.measurement_allowlist,
                &policy.expected_policy_digest,
                now,
                policy.attestation_max_age,
            )?;
            Some(ev.m_e)
        }
    };

    match (&body.provenance, &vp.attestation) {
        (Some(prov), Some(ev)) => {
            if !prov.matches_evidence(ev) {
                return Err(RejectReason::ProvenanceMismatch);
            }
        }
        (Some(_), None) => return Err(RejectReason::MissingAttestation),
        (None, _) => {}
    }
    if !body.class_consistent() {
        return Err(RejectReason::ProvenanceMismatch);
    }

    Ok(VerifiedPresentation {
        credential_id: body.id.clone(),
        credential_class: body.credential_class,
        issuer_did: body.issuer_did.clone(),
        subject_did: body.subject_did.clone(),
        revealed: vp
            .revealed
            .iter()
            .map(|c| (c.key.clone(), c.value.clone()))
            .collect(),
        predicates: vp.predicate_results.clone(),
        provenance: body.provenance.clone(),
        measurement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::credential::{issue, IssueRequest, ListKind, StatusList};
    use crate::identity::{gen_did, DEFAULT_METHOD};

    struct World {
        uni: KeyPair,
        uni_doc: DidDocument,
        alice: KeyPair,
        alice_doc: DidDocument,
        list: StatusList,
        vc: VerifiableCredential,
    }

    fn world() -> World {
        let uni = KeyPair::from_seed([1; 32]);
        let alice = KeyPair::from_seed([2; 32]);
        let uni_doc = gen_did(uni.public_key().as_bytes(), DEFAULT_METHOD, Default::default())
            .unwrap()
            .1;
        let alice_doc = gen_did(alice.public_key().as_bytes(), DEFAULT_METHOD, Default::default())
            .unwrap()
            .1;
        let mut list =
            StatusList::new(&uni, &uni_doc.did, ListKind::Institutional, "status/uni", 0).unwrap();
        let vc = issue(
            &uni,
            &uni_doc.did,
            IssueRequest {
                subject_did: alice_doc.did.clone(),
                claims: vec![
                    ("grade".into(), "A".into()),
                    ("ssn".into(), "123-45-6789".into()),
                    ("gpa".into(), ClaimValue::Real(3.5)),
                ],
                class: CredentialClass::Institutional,
                provenance: None,
                lifetime: Some(10_000),
                status_ref: list.next_ref(),
            },
            1000,
        )
        .unwrap();
        list.register(&vc, &uni, 1000).unwrap();
        World {
            uni,
            uni_doc,
            alice,
            alice_doc,
            list,
            vc,
        }
    }

    fn grade_only() -> DisclosurePolicy {
        DisclosurePolicy::deny_by_default(
            "grade-only",
            ["grade"],
            vec![Predicate::new("gpa", Comparator::Ge, 3.0)],
        )
    }

    #[test]
    fn reveals_only_the_policy_intersection() {
        let w = world();
        let status = w.list.staple(w.vc.id(), &w.uni, 1100).unwrap();
        let req = PresentationRequest::claims(["grade", "ssn"]);
        let vp = present(&w.vc, &grade_only(), &req, &w.alice, b"n1", status, None, 1100).unwrap();
        assert_eq!(vp.revealed_keys(), vec!["grade"]);
    }

    #[test]
    fn nothing_allowed_is_empty_disclosure() {
        let w = world();
        let status = w.list.staple(w.vc.id(), &w.uni, 1100).unwrap();
        let req = PresentationRequest::claims(["ssn"]);
        assert!(matches!(
            present(&w.vc, &grade_only(), &req, &w.alice, b"n1", status, None, 1100),
            Err(CredentialError::EmptyDisclosure)
        ));
    }

    #[test]
    fn predicate_hides_the_value() {
        let w = world();
        let status = w.list.staple(w.vc.id(), &w.uni, 1100).unwrap();
        let req = PresentationRequest::default().with_predicate(Predicate::new("gpa", Comparator::Ge, 3.0));
        let vp = present(&w.vc, &grade_only(), &req, &w.alice, b"n1", status, None, 1100).unwrap();
        assert_eq!(vp.predicate_results.len(), 1);
        assert!(vp.predicate_results[0].result);
        let text = canon::to_canonical_string(&vp).unwrap();
        assert!(!text.contains("3.5"));
        let policy = VerifierPolicy::default();
        let ok = verify(&vp, &w.uni_doc, &w.alice_doc, &policy, Some(b"n1"), 1100).unwrap();
        assert!(ok.revealed.is_empty());
    }

    #[test]
    fn honest_round_trip_accepts_and_tampering_rejects() {
        let w = world();
        let status = w.list.staple(w.vc.id(), &w.uni, 1100).unwrap();
        let req = PresentationRequest::claims(["grade"]);
        let vp = present(&w.vc, &grade_only(), &req, &w.alice, b"n1", status, None, 1100).unwrap();
        let policy = VerifierPolicy::default();
        let ok = verify(&vp, &w.uni_doc, &w.alice_doc, &policy, Some(b"n1"), 1100).unwrap();
        assert_eq!(ok.revealed["grade"], ClaimValue::Text("A".into()));

        let mut bad = vp.clone();
        bad.revealed[0].value = "B".into();
        bad.sign(&w.alice).unwrap();
        assert_eq!(
            verify(&bad, &w.uni_doc, &w.alice_doc, &policy, Some(b"n1"), 1100),
            Err(RejectReason::DigestMismatch)
        );
        assert_eq!(
            verify(&vp, &w.uni_doc, &w.alice_doc, &policy, Some(b"n2"), 1100),
            Err(RejectReason::BadNonce)
        );
    }

    #[test]
    fn expired_credential_cannot_be_presented() {
        let w = world();
        let status = w.list.staple(w.vc.id(), &w.uni, 1100).unwrap();
        let req = PresentationRequest::claims(["grade"]);
        assert!(matches!(
            present(&w.vc, &grade_only(), &req, &w.alice, b"n", status, None, 20_000),
            Err(CredentialError::Expired)
        ));
    }

    #[test]
    fn wildcard_policy_matches_prefix_only() {
        let p = DisclosurePolicy::deny_by_default("skills", ["skill.*"], vec![]);
        assert!(p.allows_claim("skill.cs-01"));
        assert!(!p.allows_claim("skills"));
        assert!(!p.allows_claim("skillset.x"));
        assert!(DisclosurePolicy::permissive("all").allows_claim("ssn"));
    }

    #[test]
    fn revoked_status_rejects() {
        let mut w = world();
        w.list.revoke(w.vc.id(), &w.uni, 1050).unwrap();
        let status = w.list.staple(w.vc.id(), &w.uni, 1100).unwrap();
        let req = PresentationRequest::claims(["grade"]);
        let vp = present(&w.vc, &grade_only(), &req, &w.alice, b"n1", status, None, 1100).unwrap();
        assert_eq!(
            verify(&vp, &w.uni_doc, &w.alice_doc, &VerifierPolicy::default(), Some(b"n1"), 1100),
            Err(RejectReason::Revoked)
        );
    }
}
