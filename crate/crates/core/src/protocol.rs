//! Issuer, holder and verifier actors and the six-step exchange.
//!
//! 1. issuer delivers a transcript credential to the holder's wallet
//! 2. the enclave derives an attested skill credential
//! 3. the verifier issues a challenge nonce
//! 4. the holder presents selectively, stapling status and fresh evidence
//! 5. the verifier runs the acceptance rule
//! 6. the verifier matches on attested skills and releases the decision

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canon::{self, hex_bytes, CanonError, Digest};
use crate::clock::Timestamp;
use crate::credential::{
    self, ClaimValue, CredentialClass, CredentialError, DisclosurePolicy, IssueRequest, ListKind,
    PresentationRequest, RejectReason, StapledStatus, StatusList, VerifiableCredential,
    VerifiablePresentation, VerifiedPresentation,
};
use crate::enclave::{
    self, DerivationInputs, DerivationPolicy, DerivationRequest, Enclave, EnclaveError,
    SourceCredential,
};
use crate::identity::{gen_did, Did, DidDocument, DidRegistry, IdentityError, KeyPair, PublicKey};
use crate::matching::{
    Combiner, JobRequirement, MatchError, MatchResult, SkillMatcher, SkillNormalizer,
};
use crate::skills::{EmbeddingProvider, SkillTaxonomy, Syllabus, Transcript};

pub const DEFAULT_FRESHNESS_WINDOW: u64 = 300;
pub const DEFAULT_NONCE_TTL: u64 = 300;
pub const DEFAULT_ATTESTATION_MAX_AGE: u64 = 300;
pub const VERIFIER_CODE_ID: &str = "ler-verifier-enclave";

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("presentation rejected: {0}")]
    Rejected(RejectReason),
    #[error("message dropped in transit")]
    Dropped,
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session step cannot move from {from} to {to}")]
    StepOrder { from: u8, to: u8 },
    #[error("wallet holds no {0}")]
    NoCredential(&'static str),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("invalid verifier policy: {0}")]
    InvalidPolicy(&'static str),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Credential(#[from] CredentialError),
    #[error(transparent)]
    Enclave(#[from] EnclaveError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Canon(#[from] CanonError),
}

impl From<RejectReason> for ProtocolError {
    fn from(r: RejectReason) -> Self {
        ProtocolError::Rejected(r)
    }
}

/// How much of the match outcome the verifier releases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReleaseMode {
    #[default]
    DecisionOnly,
    DecisionAndScore,
    Full,
}

/// Verifier acceptance configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierPolicy {
    pub measurement_allowlist: BTreeSet<Digest>,
    /// Attestation public keys accepted as the enclave root of trust.
    pub enclave_keys: BTreeSet<PublicKey>,
    /// Maximum age Δ of stapled status, seconds. Inclusive.
    pub freshness_window: u64,
    pub threshold: f64,
    pub expected_policy_digest: Digest,
    pub nonce_ttl: u64,
    pub attestation_max_age: u64,
    pub release: ReleaseMode,
}

impl Default for VerifierPolicy {
    fn default() -> Self {
        Self {
            measurement_allowlist: BTreeSet::new(),
            enclave_keys: BTreeSet::new(),
            freshness_window: DEFAULT_FRESHNESS_WINDOW,
            threshold: 0.5,
            expected_policy_digest: Digest::default(),
            nonce_ttl: DEFAULT_NONCE_TTL,
            attestation_max_age: DEFAULT_ATTESTATION_MAX_AGE,
            release: ReleaseMode::default(),
        }
    }
}

impl VerifierPolicy {
    /// Policy that accepts derivations from `enclave` under `derivation`.
    pub fn trusting(enclave: &Enclave, derivation: &DerivationPolicy) -> Result<Self, CanonError> {
        Ok(Self {
            measurement_allowlist: [enclave.measurement()].into(),
            enclave_keys: [enclave.attestation_public_key()].into(),
            expected_policy_digest: derivation.digest()?,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.freshness_window == 0 {
            return Err(ProtocolError::InvalidPolicy("freshness window must be positive"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ProtocolError::InvalidPolicy("threshold must lie in [0, 1]"));
        }
        if self.nonce_ttl == 0 {
            return Err(ProtocolError::InvalidPolicy("nonce ttl must be positive"));
        }
        Ok(())
    }
}

/// A verifier challenge. The nonce is single-use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Challenge {
    pub session_id: String,
    #[serde(with = "hex_bytes")]
    pub nonce: Vec<u8>,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
    pub verifier_did: Did,
    pub request: PresentationRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job_id: Option<String>,
}

#[derive(Debug, Clone)]
struct Outstanding {
    session_id: String,
    expires_at: Timestamp,
}

/// Outstanding nonces. Each is consumed by the first presentation that
/// names it, whatever that presentation's fate.
#[derive(Debug, Default)]
pub struct NonceRegistry {
    outstanding: Mutex<HashMap<Vec<u8>, Outstanding>>,
}

impl NonceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn issue<R: RngCore + CryptoRng>(
        &self,
        session_id: &str,
        now: Timestamp,
        ttl: u64,
        rng: &mut R,
    ) -> (Vec<u8>, Timestamp) {
        let mut nonce = vec![0u8; 32];
        rng.fill_bytes(&mut nonce);
        let expires_at = now.saturating_add(ttl);
        let mut map = self.outstanding.lock().expect("nonce registry lock");
        map.retain(|_, o| o.expires_at >= now);
        map.insert(
            nonce.clone(),
            Outstanding {
                session_id: session_id.to_string(),
                expires_at,
            },
        );
        (nonce, expires_at)
    }

    /// Removes `nonce` and returns its session if it was outstanding and
    /// unexpired.
    pub fn take(&self, nonce: &[u8], now: Timestamp) -> Option<String> {
        let mut map = self.outstanding.lock().expect("nonce registry lock");
        let o = map.remove(nonce)?;
        (now <= o.expires_at).then_some(o.session_id)
    }

    pub fn outstanding(&self) -> usize {
        self.outstanding.lock().expect("nonce registry lock").len()
    }
}

/// Canonical message envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub session_id: String,
    pub step: u8,
    pub payload: Value,
    pub sender_did: Did,
}

impl Envelope {
    pub fn new<T: Serialize>(session_id: &str, step: u8, payload: &T, sender: &Did) -> Result<Self, CanonError> {
        // Round-trip through canonical bytes so payloads carry no floats that
        // fail to canonicalize.
        let bytes = canon::to_canonical(payload)?;
        Ok(Self {
            session_id: session_id.to_string(),
            step,
            payload: serde_json::from_slice(&bytes)?,
            sender_did: sender.clone(),
        })
    }

    pub fn to_canonical(&self) -> Result<Vec<u8>, CanonError> {
        canon::to_canonical(self)
    }

    pub fn decode<T: for<'de> Deserialize<'de>>(&self) -> Result<T, ProtocolError> {
        serde_json::from_value(self.payload.clone()).map_err(|e| ProtocolError::Malformed(e.to_string()))
    }
}

/// Fault injected by [`InProcessTransport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    Drop,
    /// Deliver twice.
    Replay,
    /// Alter one string leaf of the payload.
    Mutate,
}

pub trait Transport: Send + Sync {
    /// Envelopes that arrive for one sent envelope.
    fn deliver(&self, envelope: Envelope) -> Vec<Envelope>;
}

/// Loopback transport with a fault hook. Faults apply to every message
/// until cleared.
#[derive(Debug, Default)]
pub struct InProcessTransport {
    fault: Mutex<Fault>,
    log: Mutex<Vec<Envelope>>,
}

impl InProcessTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fault(fault: Fault) -> Self {
        let t = Self::default();
        t.set_fault(fault);
        t
    }

    pub fn set_fault(&self, fault: Fault) {
        *self.fault.lock().expect("transport lock") = fault;
    }

    pub fn sent(&self) -> Vec<Envelope> {
        self.log.lock().expect("transport lock").clone()
    }
}

impl Transport for InProcessTransport {
    fn deliver(&self, envelope: Envelope) -> Vec<Envelope> {
        self.log.lock().expect("transport lock").push(envelope.clone());
        match *self.fault.lock().expect("transport lock") {
            Fault::None => vec![envelope],
            Fault::Drop => vec![],
            Fault::Replay => vec![envelope.clone(), envelope],
            Fault::Mutate => {
                let mut e = envelope;
                mutate_value(&mut e.payload);
                vec![e]
            }
        }
    }
}

// Changes the last string leaf in depth-first order. Hex digits are swapped
// for another hex digit so encodings still parse.
fn mutate_value(v: &mut Value) -> bool {
    match v {
        Value::Object(map) => map.values_mut().rev().any(mutate_value),
        Value::Array(items) => items.iter_mut().rev().any(mutate_value),
        Value::String(s) if !s.is_empty() => {
            let mut chars: Vec<char> = s.chars().collect();
            let last = chars.len() - 1;
            chars[last] = match chars[last] {
                '0' => '1',
                c if c.is_ascii_hexdigit() => '0',
                'z' => 'y',
                _ => 'z',
            };
            *s = chars.into_iter().collect();
            true
        }
        _ => false,
    }
}

/// Protocol session with monotone step counter.
#[derive(Debug, Clone)]
pub struct Session {
    pub session_id: String,
    pub step: u8,
    pub outstanding_nonce: Option<(Vec<u8>, Timestamp)>,
    pub transcript: Vec<Envelope>,
}

impl Session {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            step: 0,
            outstanding_nonce: None,
            transcript: Vec::new(),
        }
    }

    pub fn advance(&mut self, to: u8) -> Result<(), ProtocolError> {
        if to <= self.step || to > 6 {
            return Err(ProtocolError::StepOrder { from: self.step, to });
        }
        self.step = to;
        Ok(())
    }

    pub fn record(&mut self, envelope: &Envelope) {
        self.transcript.push(envelope.clone());
    }
}

/// Holder-side credential store.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Wallet {
    pub credentials: BTreeMap<String, VerifiableCredential>,
    /// Raw transcripts backing institutional credentials, by credential id.
    #[serde(default)]
    pub transcripts: BTreeMap<String, Transcript>,
    /// Enclave derivation id of each derivative credential.
    #[serde(default)]
    pub derivations: BTreeMap<String, String>,
    #[serde(default)]
    pub policies: BTreeMap<String, DisclosurePolicy>,
    #[serde(default)]
    pub derivative_status: Option<StatusList>,
}

impl Wallet {
    /// Adds a credential; returns false if its id was already held.
    pub fn insert(&mut self, vc: VerifiableCredential) -> bool {
        if self.credentials.contains_key(vc.id()) {
            return false;
        }
        self.credentials.insert(vc.id().to_string(), vc);
        true
    }

    pub fn by_class(&self, class: CredentialClass) -> Vec<&VerifiableCredential> {
        let mut out: Vec<&VerifiableCredential> =
            self.credentials.values().filter(|c| c.class() == class).collect();
        out.sort_by(|a, b| b.body.issued_at.cmp(&a.body.issued_at).then_with(|| a.id().cmp(b.id())));
        out
    }

    /// Most recent unexpired derivative credential that is not revoked on
    /// the wallet's own list.
    pub fn current_derivative(&self, now: Timestamp) -> Option<&VerifiableCredential> {
        self.by_class(CredentialClass::Derivative).into_iter().find(|c| {
            !c.body.is_expired(now)
                && self
                    .derivative_status
                    .as_ref()
                    .and_then(|l| l.status(c.id()).ok())
                    .is_some_and(|s| s.is_valid())
        })
    }

    /// Policy for `class`: one named after the class if present, otherwise
    /// the built-in default.
    pub fn policy_for(&self, class: CredentialClass) -> DisclosurePolicy {
        self.policies
            .get(&class.to_string())
            .cloned()
            .unwrap_or_else(|| default_policy(class))
    }
}

/// Skill credentials disclose skills and the taxonomy id; institutional ones
/// disclose nothing unless the holder says so.
pub fn default_policy(class: CredentialClass) -> DisclosurePolicy {
    match class {
        CredentialClass::Derivative => {
            DisclosurePolicy::deny_by_default("derivative", ["taxonomy", "skill.*"], vec![])
        }
        _ => DisclosurePolicy::deny_by_default(&class.to_string(), Vec::<String>::new(), vec![]),
    }
}

fn grade_points(grade: &str) -> Option<f64> {
    Some(match grade.trim().replace('−', "-").to_uppercase().as_str() {
        "A+" | "A" => 4.0,
        "A-" => 3.7,
        "B+" => 3.3,
        "B" => 3.0,
        "B-" => 2.7,
        "C+" => 2.3,
        "C" => 2.0,
        "C-" => 1.7,
        "D" => 1.0,
        "F" => 0.0,
        _ => return None,
    })
}

/// Unweighted four-point GPA over letter grades, to two decimals.
pub fn gpa(transcript: &Transcript) -> Option<f64> {
    let points: Vec<f64> = transcript.courses.iter().filter_map(|c| grade_points(&c.grade)).collect();
    if points.is_empty() {
        return None;
    }
    let mean = points.iter().sum::<f64>() / points.len() as f64;
    Some((mean * 100.0).round() / 100.0)
}

/// Claims of an institutional transcript credential.
pub fn transcript_claims(transcript: &Transcript) -> Result<Vec<(String, ClaimValue)>, CanonError> {
    let mut claims = vec![
        ("student_name".to_string(), ClaimValue::Text(transcript.student_name.clone())),
        ("institution".to_string(), ClaimValue::Text(transcript.institution.clone())),
        (
            "transcript_digest".to_string(),
            ClaimValue::Text(enclave::transcript_digest(transcript)?.to_hex()),
        ),
    ];
    if let Some(g) = gpa(transcript) {
        claims.push(("gpa".to_string(), ClaimValue::Real(g)));
    }
    for c in &transcript.courses {
        claims.push((format!("course.{}", c.course_id), ClaimValue::Text(c.grade.clone())));
    }
    Ok(claims)
}

/// Payload of step 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssuanceDelivery {
    pub credential: VerifiableCredential,
    pub transcript: Transcript,
}

pub struct Issuer {
    pub keys: KeyPair,
    pub doc: DidDocument,
    pub status_list: StatusList,
}

impl Issuer {
    /// Creates the issuer DID, registers it and opens an institutional list.
    pub fn new(keys: KeyPair, registry: &DidRegistry, now: Timestamp) -> Result<Self, ProtocolError> {
        let (did, doc) = gen_did(keys.public_key().as_bytes(), crate::identity::DEFAULT_METHOD, BTreeMap::new())?;
        registry.register(doc.clone())?;
        let status_list = StatusList::new(
            &keys,
            &did,
            ListKind::Institutional,
            format!("status/{}", did.identifier()),
            now,
        )?;
        Ok(Self {
            keys,
            doc,
            status_list,
        })
    }

    pub fn did(&self) -> &Did {
        &self.doc.did
    }

    pub fn issue_transcript<R: RngCore + CryptoRng>(
        &mut self,
        holder: &Did,
        transcript: &Transcript,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<VerifiableCredential, ProtocolError> {
        let vc = credential::issue_with_rng(
            &self.keys,
            &self.doc.did,
            IssueRequest {
                subject_did: holder.clone(),
                claims: transcript_claims(transcript)?,
                class: CredentialClass::Institutional,
                provenance: None,
                lifetime: None,
                status_ref: self.status_list.next_ref(),
            },
            now,
            rng,
        )?;
        self.status_list.register(&vc, &self.keys, now)?;
        Ok(vc)
    }

    pub fn staple(&self, credential_id: &str, now: Timestamp) -> Result<StapledStatus, ProtocolError> {
        Ok(self.status_list.staple(credential_id, &self.keys, now)?)
    }

    pub fn revoke(&mut self, credential_id: &str, now: Timestamp) -> Result<(), ProtocolError> {
        Ok(self.status_list.revoke(credential_id, &self.keys, now)?)
    }
}

pub struct Holder {
    pub keys: KeyPair,
    pub doc: DidDocument,
    pub wallet: Wallet,
}

impl Holder {
    pub fn new(keys: KeyPair, registry: &DidRegistry) -> Result<Self, ProtocolError> {
        let (_, doc) = gen_did(keys.public_key().as_bytes(), crate::identity::DEFAULT_METHOD, BTreeMap::new())?;
        registry.register(doc.clone())?;
        Ok(Self {
            keys,
            doc,
            wallet: Wallet::default(),
        })
    }

    pub fn did(&self) -> &Did {
        &self.doc.did
    }

    /// Checks a step-1 delivery and stores it. Returns whether the wallet
    /// gained a credential; a rejected delivery leaves the wallet untouched.
    pub fn accept_issuance(&mut self, envelope: &Envelope, registry: &DidRegistry) -> Result<bool, ProtocolError> {
        let delivery: IssuanceDelivery = envelope.decode()?;
        let vc = delivery.credential;
        let issuer_doc = registry.resolve(&vc.body.issuer_did)?;
        vc.verify(&issuer_doc)?;
        if vc.body.subject_did != self.doc.did {
            return Err(ProtocolError::Malformed("credential is for another subject".into()));
        }
        let expected = enclave::transcript_digest(&delivery.transcript)?.to_hex();
        if vc.claim("transcript_digest").and_then(|c| c.value.as_str()) != Some(expected.as_str()) {
            return Err(ProtocolError::Rejected(RejectReason::DigestMismatch));
        }
        let id = vc.id().to_string();
        let added = self.wallet.insert(vc);
        if added {
            self.wallet.transcripts.insert(id, delivery.transcript);
        }
        Ok(added)
    }

    fn derivative_list(&mut self, now: Timestamp) -> Result<&mut StatusList, ProtocolError> {
        if self.wallet.derivative_status.is_none() {
            let locator = format!("status/{}/derivative", self.doc.did.identifier());
            self.wallet.derivative_status = Some(StatusList::new(
                &self.keys,
                &self.doc.did,
                ListKind::Derivative,
                locator,
                now,
            )?);
        }
        Ok(self.wallet.derivative_status.as_mut().expect("created above"))
    }

    /// Runs one enclave derivation over `inputs`, lists the result on the
    /// holder's derivative status list and stores it. Returns its id.
    pub fn derive<R: RngCore + CryptoRng>(
        &mut self,
        enclave: &Enclave,
        inputs: &DerivationInputs,
        taxonomy: &SkillTaxonomy,
        policy: DerivationPolicy,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<String, ProtocolError> {
        let holder_did = self.did().clone();
        let keys = self.keys.clone();
        let status_ref = self.derivative_list(now)?.next_ref();
        let mut session = enclave.open_session(policy, rng)?;
        let request = DerivationRequest {
            inputs,
            taxonomy,
            holder_did: &holder_did,
            holder_keys: &keys,
            verifier_nonce: b"derivation",
            status_ref,
            now,
        };
        let (vc, _evidence) = enclave.derive_skill_credential(&mut session, &request, rng)?;
        self.derivative_list(now)?.register(&vc, &keys, now)?;
        let id = vc.id().to_string();
        self.wallet.derivations.insert(id.clone(), session.derivation_id().to_string());
        self.wallet.insert(vc);
        Ok(id)
    }

    /// Builds the step-4 presentation for `challenge` from the current
    /// derivative credential, with freshly stapled status and evidence.
    pub fn respond(
        &self,
        challenge: &Challenge,
        enclave: &Enclave,
        now: Timestamp,
    ) -> Result<VerifiablePresentation, ProtocolError> {
        let vc = self
            .wallet
            .current_derivative(now)
            .ok_or(ProtocolError::NoCredential("current derivative credential"))?;
        let derivation_id = self
            .wallet
            .derivations
            .get(vc.id())
            .ok_or(ProtocolError::NoCredential("derivation record"))?;
        let list = self
            .wallet
            .derivative_status
            .as_ref()
            .ok_or(ProtocolError::NoCredential("derivative status list"))?;
        let status = list.staple(vc.id(), &self.keys, now)?;
        let evidence = enclave.reattest(derivation_id, &challenge.nonce, now)?;
        let policy = self.wallet.policy_for(CredentialClass::Derivative);
        Ok(credential::present(
            vc,
            &policy,
            &challenge.request,
            &self.keys,
            &challenge.nonce,
            status,
            Some(evidence),
            now,
        )?)
    }
}

/// Step-6 output, trimmed to the verifier's release mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierResponse {
    pub session_id: String,
    pub decision: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<MatchResult>,
    /// Measurement of the verifier-side enclave that ran the match.
    pub verifier_measurement: Digest,
}

pub struct Verifier {
    pub keys: KeyPair,
    pub doc: DidDocument,
    pub policy: VerifierPolicy,
    pub nonces: NonceRegistry,
    pub taxonomy: SkillTaxonomy,
    pub provider: Arc<dyn EmbeddingProvider>,
    pub normalizer: SkillNormalizer,
    pub combiner: Combiner,
    sessions: Mutex<HashMap<String, Session>>,
    measurement: Digest,
}

impl Verifier {
    pub fn new(
        keys: KeyPair,
        registry: &DidRegistry,
        policy: VerifierPolicy,
        taxonomy: SkillTaxonomy,
        provider: Arc<dyn EmbeddingProvider>,
    ) -> Result<Self, ProtocolError> {
        policy.validate()?;
        let (_, doc) = gen_did(keys.public_key().as_bytes(), crate::identity::DEFAULT_METHOD, BTreeMap::new())?;
        registry.register(doc.clone())?;
        let bundle = canon::to_canonical(&serde_json::json!({
            "embedding_provider": provider.id(),
            "taxonomy": taxonomy.id(),
        }))?;
        let measurement = enclave::measure(VERIFIER_CODE_ID, &bundle, enclave::ENCLAVE_VERSION);
        let mut normalizer = SkillNormalizer::sample();
        normalizer.register_taxonomy(&taxonomy);
        Ok(Self {
            keys,
            doc,
            policy,
            nonces: NonceRegistry::new(),
            taxonomy,
            provider,
            normalizer,
            combiner: Combiner::default(),
            sessions: Mutex::new(HashMap::new()),
            measurement,
        })
    }

    pub fn did(&self) -> &Did {
        &self.doc.did
    }

    pub fn measurement(&self) -> Digest {
        self.measurement
    }

    /// Step 3: a fresh single-use nonce bound to a new session.
    pub fn challenge<R: RngCore + CryptoRng>(
        &self,
        request: PresentationRequest,
        job_id: Option<String>,
        now: Timestamp,
        rng: &mut R,
    ) -> Challenge {
        let session_id = credential::random_id(rng);
        let (nonce, expires_at) = self.nonces.issue(&session_id, now, self.policy.nonce_ttl, rng);
        let mut session = Session::new(&session_id);
        session.step = 3;
        session.outstanding_nonce = Some((nonce.clone(), now));
        self.sessions.lock().expect("session lock").insert(session_id.clone(), session);
        Challenge {
            session_id,
            nonce,
            issued_at: now,
            expires_at,
            verifier_did: self.doc.did.clone(),
            request,
            job_id,
        }
    }

    /// Step 5: the acceptance rule. Consumes the nonce the presentation
    /// names.
    pub fn verify_presentation(
        &self,
        vp: &VerifiablePresentation,
        registry: &DidRegistry,
        now: Timestamp,
    ) -> Result<(String, VerifiedPresentation), ProtocolError> {
        let session_id = self.nonces.take(&vp.nonce, now);
        let issuer_doc = registry
            .resolve(&vp.credential.issuer_did)
            .map_err(|_| RejectReason::BadIssuerSig)?;
        let holder_doc = registry
            .resolve(&vp.holder_did)
            .map_err(|_| RejectReason::BadHolderSig)?;
        let expected = session_id.as_ref().map(|_| vp.nonce.as_slice());
        let verified = credential::verify(vp, &issuer_doc, &holder_doc, &self.policy, expected, now)?;
        let session_id = session_id.expect("nonce accepted only when outstanding");
        if let Some(s) = self.sessions.lock().expect("session lock").get_mut(&session_id) {
            s.advance(5)?;
            s.outstanding_nonce = None;
        }
        Ok((session_id, verified))
    }

    /// Step 6: skills-only match inside the verifier enclave, released per
    /// policy.
    pub fn match_job(
        &self,
        session_id: &str,
        verified: &VerifiedPresentation,
        job: &JobRequirement,
    ) -> Result<VerifierResponse, ProtocolError> {
        let claims = verified.skill_claims(&self.taxonomy)?;
        let matcher = SkillMatcher::new(self.provider.as_ref(), &self.normalizer, self.combiner);
        let result = matcher.decide(&claims, job)?;
        if let Some(s) = self.sessions.lock().expect("session lock").get_mut(session_id) {
            s.advance(6)?;
        }
        let (score, full) = match self.policy.release {
            ReleaseMode::DecisionOnly => (None, None),
            ReleaseMode::DecisionAndScore => (Some(result.score), None),
            ReleaseMode::Full => (Some(result.score), Some(result.clone())),
        };
        Ok(VerifierResponse {
            session_id: session_id.to_string(),
            decision: result.decision,
            score,
            result: full,
            verifier_measurement: self.measurement,
        })
    }

    pub fn session(&self, session_id: &str) -> Option<Session> {
        self.sessions.lock().expect("session lock").get(session_id).cloned()
    }
}

/// Step 1 over `transport`. Returns the number of credentials the wallet
/// gained (0 for duplicates).
pub fn run_issuance<R: RngCore + CryptoRng>(
    issuer: &mut Issuer,
    holder: &mut Holder,
    record: &Transcript,
    registry: &DidRegistry,
    transport: &dyn Transport,
    now: Timestamp,
    rng: &mut R,
) -> Result<usize, ProtocolError> {
    let vc = issuer.issue_transcript(holder.did(), record, now, rng)?;
    let session_id = credential::random_id(rng);
    let envelope = Envelope::new(
        &session_id,
        1,
        &IssuanceDelivery {
            credential: vc,
            transcript: record.clone(),
        },
        issuer.did(),
    )?;
    let delivered = transport.deliver(envelope);
    if delivered.is_empty() {
        return Err(ProtocolError::Dropped);
    }
    let mut added = 0;
    for e in &delivered {
        if holder.accept_issuance(e, registry)? {
            added += 1;
        }
    }
    Ok(added)
}

/// Step 2: derives a skill credential from the wallet's newest transcript
/// credential and `syllabi`. Returns the new credential id.
#[allow(clippy::too_many_arguments)]
pub fn run_derivation<R: RngCore + CryptoRng>(
    holder: &mut Holder,
    enclave: &Enclave,
    syllabi: &[Syllabus],
    taxonomy: &SkillTaxonomy,
    policy: DerivationPolicy,
    registry: &DidRegistry,
    now: Timestamp,
    rng: &mut R,
) -> Result<String, ProtocolError> {
    let source = holder
        .wallet
        .by_class(CredentialClass::Institutional)
        .into_iter()
        .find(|c| holder.wallet.transcripts.contains_key(c.id()))
        .cloned()
        .ok_or(ProtocolError::NoCredential("institutional transcript credential"))?;
    let transcript = holder.wallet.transcripts[source.id()].clone();
    let issuer_doc = registry.resolve(&source.body.issuer_did)?;
    let inputs = DerivationInputs {
        transcript,
        syllabi: syllabi.to_vec(),
        source: Some(SourceCredential {
            credential: source,
            issuer_doc,
        }),
    };
    holder.derive(enclave, &inputs, taxonomy, policy, now, rng)
}

/// What the verifier asks for in steps 3 to 6.
#[derive(Debug, Clone)]
pub struct VerificationRequest {
    pub request: PresentationRequest,
    pub job: JobRequirement,
}

impl VerificationRequest {
    /// Asks for every skill claim plus the taxonomy id.
    pub fn skills_for(job: JobRequirement) -> Self {
        Self {
            request: PresentationRequest::claims(["taxonomy", "skill.*"]),
            job,
        }
    }
}

/// Steps 3 to 6. Every delivered copy of the presentation is processed;
/// the outcome for the last one is returned, so a replayed presentation
/// surfaces as `BadNonce`.
#[allow(clippy::too_many_arguments)]
pub fn run_verification<R: RngCore + CryptoRng>(
    holder: &Holder,
    verifier: &Verifier,
    request: &VerificationRequest,
    enclave: &Enclave,
    registry: &DidRegistry,
    transport: &dyn Transport,
    now: Timestamp,
    rng: &mut R,
) -> Result<VerifierResponse, ProtocolError> {
    let challenge = verifier.challenge(request.request.clone(), Some(request.job.job_id.clone()), now, rng);
    let sent = Envelope::new(&challenge.session_id, 3, &challenge, verifier.did())?;
    let mut last = Err(ProtocolError::Dropped);
    for e in transport.deliver(sent) {
        let challenge: Challenge = e.decode()?;
        let vp = holder.respond(&challenge, enclave, now)?;
        let reply = Envelope::new(&challenge.session_id, 4, &vp, holder.did())?;
        for r in transport.deliver(reply) {
            last = r.decode::<VerifiablePresentation>().and_then(|vp| {
                let (sid, verified) = verifier.verify_presentation(&vp, registry, now)?;
                verifier.match_job(&sid, &verified, &request.job)
            });
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn nonce_is_single_use_and_expires() {
        let reg = NonceRegistry::new();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (n, exp) = reg.issue("s", 100, 10, &mut rng);
        assert_eq!(exp, 110);
        assert_eq!(reg.take(&n, 105).as_deref(), Some("s"));
        assert_eq!(reg.take(&n, 105), None);
        let (m, _) = reg.issue("t", 100, 10, &mut rng);
        assert_eq!(reg.take(&m, 111), None);
    }

    #[test]
    fn session_steps_only_move_forward() {
        let mut s = Session::new("x");
        s.advance(1).unwrap();
        s.advance(3).unwrap();
        assert!(matches!(s.advance(3), Err(ProtocolError::StepOrder { .. })));
        assert!(matches!(s.advance(7), Err(ProtocolError::StepOrder { .. })));
    }

    #[test]
    fn policy_bounds_are_validated() {
        let mut p = VerifierPolicy::default();
        p.validate().unwrap();
        p.freshness_window = 0;
        assert!(p.validate().is_err());
        let p = VerifierPolicy {
            threshold: 1.5,
            ..VerifierPolicy::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn transport_faults() {
        let did = KeyPair::from_seed([1; 32]).did("ler");
        let env = Envelope::new("s", 1, &serde_json::json!({"a": "ff", "b": ["x"]}), &did).unwrap();
        assert_eq!(InProcessTransport::new().deliver(env.clone()).len(), 1);
        assert!(InProcessTransport::with_fault(Fault::Drop).deliver(env.clone()).is_empty());
        assert_eq!(InProcessTransport::with_fault(Fault::Replay).deliver(env.clone()).len(), 2);
        let m = InProcessTransport::with_fault(Fault::Mutate).deliver(env.clone());
        assert_ne!(m[0].payload, env.payload);
        assert_eq!(m[0].payload["a"], "ff");
    }

    #[test]
    fn gpa_on_four_point_scale() {
        let t = Transcript {
            institution: "U".into(),
            student_name: "S".into(),
            courses: ["A", "B", "C+"]
                .iter()
                .map(|g| crate::skills::TranscriptEntry {
                    course_id: "c".into(),
                    title: "t".into(),
                    level: 100,
                    grade: g.to_string(),
                })
                .collect(),
        };
        assert_eq!(gpa(&t), Some(3.1));
    }
}
