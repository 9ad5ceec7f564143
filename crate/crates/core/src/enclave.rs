//! Software-simulated trusted execution environment.
//!
//! The enclave owns an attestation key (the stand-in root of trust) and a
//! sealing key. It runs the skill pipeline over raw transcripts and syllabi
//! and lets only digests, the derivative credential and attestation
//! evidence out, all through [`Enclave::egress`].
//!
//! Domain-separated digests:
//!
//! ```text
//! H_inputs = H("inputs" ∥ salt ∥ H(transcript) ∥ H(syllabus))
//! σ_TEE    = Sign(K_TEE, "att" ∥ m_e ∥ H_inputs ∥ H_policy ∥ n_V ∥ u64be(t))
//! H_prov   = H("prov" ∥ m_e ∥ H_inputs ∥ H_policy ∥ u64be(t))
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon::{self, hex_bytes, CanonError, Digest};
use crate::clock::Timestamp;
use crate::credential::{
    self, ClaimValue, CredentialClass, CredentialError, IssueRequest, RejectReason, StatusRef,
    VerifiableCredential,
};
use crate::fsutil::write_atomic;
use crate::identity::{Did, DidDocument, KeyPair, PublicKey, Signature};
use crate::matching::Combiner;
use crate::skills::{
    self, EmbeddedTaxonomy, EmbeddingProvider, SkillTaxonomy, SkillVector, SkillsError,
    Syllabus, Transcript, WeightConfig,
};

pub const SALT_LEN: usize = 16;
pub const CODE_ID: &str = "ler-skill-enclave";
pub const ENCLAVE_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Version tag of the sentence filter rules, bound into the policy digest.
pub const FILTER_VERSION: &str = "outcome-rules-1";
/// Smallest output window checked by the egress guard.
pub const EGRESS_WINDOW: usize = 8;

#[derive(Debug, Error)]
pub enum EnclaveError {
    #[error("salt must be {SALT_LEN} octets, got {0}")]
    BadSalt(usize),
    #[error("session has no committed inputs")]
    SessionNotReady,
    #[error("taxonomy is empty")]
    EmptyTaxonomy,
    #[error("no usable evidence sentences")]
    NoEvidence,
    #[error("derivation policy mismatch: {0}")]
    PolicyMismatch(String),
    #[error("source credential rejected: {0}")]
    SourceMismatch(String),
    #[error("output would leak raw input bytes")]
    EgressViolation,
    #[error("sealed blob {0:?} cannot be opened by this enclave instance")]
    UnsealFailed(String),
    #[error("no sealed session for derivation {0:?}")]
    UnknownDerivation(String),
    #[error(transparent)]
    Skills(SkillsError),
    #[error(transparent)]
    Canon(#[from] CanonError),
    #[error(transparent)]
    Credential(#[from] Box<CredentialError>),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed enclave state: {0}")]
    State(String),
}

impl From<SkillsError> for EnclaveError {
    fn from(e: SkillsError) -> Self {
        match e {
            SkillsError::EmptyTaxonomy => EnclaveError::EmptyTaxonomy,
            SkillsError::NoEvidence => EnclaveError::NoEvidence,
            other => EnclaveError::Skills(other),
        }
    }
}

impl From<CredentialError> for EnclaveError {
    fn from(e: CredentialError) -> Self {
        EnclaveError::Credential(Box::new(e))
    }
}

/// `H(u32be(|code_id|) ∥ code_id ∥ H(bundle) ∥ u32be(|version|) ∥ version)`
pub fn measure(code_id: &str, model_bundle: &[u8], version: &str) -> Digest {
    let bundle = canon::sha256(model_bundle);
    canon::sha256_concat(&[
        &(code_id.len() as u32).to_be_bytes(),
        code_id.as_bytes(),
        bundle.as_bytes(),
        &(version.len() as u32).to_be_bytes(),
        version.as_bytes(),
    ])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputCommitment {
    #[serde(with = "hex_bytes")]
    pub salt: [u8; SALT_LEN],
    pub h_inputs: Digest,
}

pub fn commit_inputs(
    transcript: &[u8],
    syllabus: &[u8],
    salt: &[u8],
) -> Result<InputCommitment, EnclaveError> {
    let salt: [u8; SALT_LEN] = salt.try_into().map_err(|_| EnclaveError::BadSalt(salt.len()))?;
    Ok(InputCommitment {
        salt,
        h_inputs: commit_digests(&salt, &canon::sha256(transcript), &canon::sha256(syllabus)),
    })
}

/// H_inputs from already-digested documents.
pub fn commit_digests(salt: &[u8; SALT_LEN], h_transcript: &Digest, h_syllabus: &Digest) -> Digest {
    canon::sha256_concat(&[b"inputs", salt, h_transcript.as_bytes(), h_syllabus.as_bytes()])
}

/// Digest of an evidence set: the document digest for one document,
/// otherwise the digest of the sorted per-document digests concatenated.
pub fn evidence_set_digest<D: AsRef<[u8]>>(docs: &[D]) -> Digest {
    if let [one] = docs {
        return canon::sha256(one.as_ref());
    }
    let mut digests: Vec<Digest> = docs.iter().map(|d| canon::sha256(d.as_ref())).collect();
    digests.sort();
    let parts: Vec<&[u8]> = digests.iter().map(|d| d.as_bytes().as_slice()).collect();
    canon::sha256_concat(&parts)
}

pub fn attestation_message(
    m_e: &Digest,
    h_inputs: &Digest,
    h_policy: &Digest,
    n_v: &[u8],
    t: Timestamp,
) -> Vec<u8> {
    let mut msg = Vec::with_capacity(3 + 96 + n_v.len() + 8);
    msg.extend_from_slice(b"att");
    msg.extend_from_slice(m_e.as_bytes());
    msg.extend_from_slice(h_inputs.as_bytes());
    msg.extend_from_slice(h_policy.as_bytes());
    msg.extend_from_slice(n_v);
    msg.extend_from_slice(&t.to_be_bytes());
    msg
}

pub fn provenance_digest(m_e: &Digest, h_inputs: &Digest, h_policy: &Digest, t: Timestamp) -> Digest {
    canon::sha256_concat(&[
        b"prov",
        m_e.as_bytes(),
        h_inputs.as_bytes(),
        h_policy.as_bytes(),
        &t.to_be_bytes(),
    ])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationEvidence {
    pub m_e: Digest,
    pub h_inputs: Digest,
    pub h_policy: Digest,
    #[serde(with = "hex_bytes")]
    pub n_v: Vec<u8>,
    pub t: Timestamp,
    pub sigma_tee: Signature,
}

impl AttestationEvidence {
    pub fn signing_message(&self) -> Vec<u8> {
        attestation_message(&self.m_e, &self.h_inputs, &self.h_policy, &self.n_v, self.t)
    }

    pub fn verify_signature(&self, enclave_pk: &PublicKey) -> bool {
        enclave_pk.verify(&self.signing_message(), &self.sigma_tee)
    }
}

/// Accepts iff the signature verifies, the nonce matches, `m_e` is
/// allowlisted, the policy digest is the expected one and
/// `now − t ≤ max_age`.
pub fn verify_attestation(
    evidence: &AttestationEvidence,
    enclave_pk: &PublicKey,
    expected_nonce: &[u8],
    allowlist: &BTreeSet<Digest>,
    expected_policy_digest: &Digest,
    now: Timestamp,
    max_age: u64,
) -> Result<(), RejectReason> {
    if !evidence.verify_signature(enclave_pk) {
        return Err(RejectReason::BadAttestation);
    }
    check_attestation_claims(evidence, expected_nonce, allowlist, expected_policy_digest, now, max_age)
}

pub(crate) fn check_attestation_claims(
    evidence: &AttestationEvidence,
    expected_nonce: &[u8],
    allowlist: &BTreeSet<Digest>,
    expected_policy_digest: &Digest,
    now: Timestamp,
    max_age: u64,
) -> Result<(), RejectReason> {
    if evidence.n_v != expected_nonce {
        return Err(RejectReason::BadNonce);
    }
    if !allowlist.contains(&evidence.m_e) {
        return Err(RejectReason::MeasurementNotAllowlisted);
    }
    if evidence.h_policy != *expected_policy_digest {
        return Err(RejectReason::PolicyMismatch);
    }
    if evidence.t > now || now - evidence.t > max_age {
        return Err(RejectReason::StaleAttestation);
    }
    Ok(())
}

/// Provenance record embedded in a derivative credential.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// `[H(transcript), H(syllabus set)]`
    pub inputs: Vec<Digest>,
    pub code: Digest,
    pub policy: Digest,
    pub time: Timestamp,
    pub derivation_id: String,
    pub h_prov: Digest,
}

impl Provenance {
    /// Verifier-side recomputation of `h_prov` from the attested `h_inputs`.
    pub fn matches_evidence(&self, evidence: &AttestationEvidence) -> bool {
        self.code == evidence.m_e
            && self.policy == evidence.h_policy
            && self.h_prov
                == provenance_digest(&evidence.m_e, &evidence.h_inputs, &evidence.h_policy, self.time)
    }
}

/// Everything that shapes a derivation, digested into H_policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivationPolicy {
    pub taxonomy_id: String,
    pub embedding_provider: String,
    pub weights: WeightConfig,
    pub top_k: usize,
    /// Skills must score strictly above this to become claims.
    pub min_claim_score: f64,
    pub combiner: Combiner,
    pub filter_version: String,
    /// Lifetime of derivative credentials, in seconds.
    pub credential_lifetime: u64,
}

impl DerivationPolicy {
    pub fn new(taxonomy: &SkillTaxonomy, provider: &dyn EmbeddingProvider) -> Self {
        Self {
            taxonomy_id: taxonomy.id().to_string(),
            embedding_provider: provider.id(),
            weights: WeightConfig::default(),
            top_k: 10,
            min_claim_score: 0.0,
            combiner: Combiner::default(),
            filter_version: FILTER_VERSION.to_string(),
            credential_lifetime: 86_400,
        }
    }

    /// H_policy = H(canon(policy))
    pub fn digest(&self) -> Result<Digest, CanonError> {
        canon::canonical_digest(self)
    }
}

/// The code+model bundle whose digest feeds the measurement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelBundle {
    pub code_id: String,
    pub bytes: Vec<u8>,
    pub version: String,
}

impl ModelBundle {
    /// Bundle describing the reference pipeline behind `provider`.
    pub fn for_provider(provider: &dyn EmbeddingProvider) -> Self {
        let descriptor = serde_json::json!({
            "embedding_provider": provider.id(),
            "dimension": provider.dimension(),
            "filter_version": FILTER_VERSION,
        });
        Self {
            code_id: CODE_ID.to_string(),
            bytes: canon::to_canonical(&descriptor).expect("static descriptor"),
            version: ENCLAVE_VERSION.to_string(),
        }
    }

    pub fn measurement(&self) -> Digest {
        measure(&self.code_id, &self.bytes, &self.version)
    }
}

/// Authenticated encryption under a per-instance key. Blobs sealed by one
/// instance do not open under another.
pub struct SealedStore {
    cipher: ChaCha20Poly1305,
    blobs: Mutex<BTreeMap<String, Vec<u8>>>,
    dir: Option<PathBuf>,
}

impl std::fmt::Debug for SealedStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SealedStore").field("dir", &self.dir).finish_non_exhaustive()
    }
}

impl SealedStore {
    pub fn new(key: [u8; 32]) -> Self {
        Self {
            cipher: ChaCha20Poly1305::new(Key::from_slice(&key)),
            blobs: Mutex::new(BTreeMap::new()),
            dir: None,
        }
    }

    /// Store persisted under `dir`, one file per label.
    pub fn open(key: [u8; 32], dir: impl AsRef<Path>) -> Result<Self, EnclaveError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut blobs = BTreeMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("sealed") {
                continue;
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let label = hex::decode(stem)
                .ok()
                .and_then(|b| String::from_utf8(b).ok())
                .ok_or_else(|| EnclaveError::State(format!("bad sealed file name {stem}")))?;
            blobs.insert(label, fs::read(&path)?);
        }
        Ok(Self {
            cipher: ChaCha20Poly1305::new(Key::from_slice(&key)),
            blobs: Mutex::new(blobs),
            dir: Some(dir),
        })
    }

    pub fn seal(&self, label: &str, plaintext: &[u8]) -> Result<(), EnclaveError> {
        let mut nonce = [0u8; 12];
        rand::rngs::OsRng.fill_bytes(&mut nonce);
        let ct = self
            .cipher
            .encrypt(Nonce::from_slice(&nonce), Payload { msg: plaintext, aad: label.as_bytes() })
            .map_err(|_| EnclaveError::State("encryption failed".into()))?;
        let mut blob = nonce.to_vec();
        blob.extend(ct);
        self.import(label, blob)
    }

    pub fn unseal(&self, label: &str) -> Result<Vec<u8>, EnclaveError> {
        let blob = self
            .export(label)
            .ok_or_else(|| EnclaveError::UnknownDerivation(label.to_string()))?;
        self.unseal_blob(label, &blob)
    }

    pub fn unseal_blob(&self, label: &str, blob: &[u8]) -> Result<Vec<u8>, EnclaveError> {
        if blob.len() < 12 {
            return Err(EnclaveError::UnsealFailed(label.to_string()));
        }
        let (nonce, ct) = blob.split_at(12);
        self.cipher
            .decrypt(Nonce::from_slice(nonce), Payload { msg: ct, aad: label.as_bytes() })
            .map_err(|_| EnclaveError::UnsealFailed(label.to_string()))
    }

    /// The opaque sealed blob, as it would sit on untrusted storage.
    pub fn export(&self, label: &str) -> Option<Vec<u8>> {
        self.blobs.lock().expect("sealed store lock").get(label).cloned()
    }

    pub fn import(&self, label: &str, blob: Vec<u8>) -> Result<(), EnclaveError> {
        if let Some(dir) = &self.dir {
            write_atomic(&dir.join(format!("{}.sealed", hex::encode(label))), &blob)?;
        }
        self.blobs
            .lock()
            .expect("sealed store lock")
            .insert(label.to_string(), blob);
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        self.blobs.lock().expect("sealed store lock").keys().cloned().collect()
    }
}

/// Instance secrets: attestation signing key and sealing key.
#[derive(Clone, Serialize, Deserialize)]
pub struct EnclaveSecrets {
    pub attestation_key: KeyPair,
    #[serde(with = "hex_bytes")]
    pub seal_key: [u8; 32],
}

impl EnclaveSecrets {
    pub fn generate() -> Self {
        let mut seal_key = [0u8; 32];
        rand::rngs::OsRng.fill_bytes(&mut seal_key);
        Self {
            attestation_key: KeyPair::generate(),
            seal_key,
        }
    }
}

/// A transcript-backed institutional credential the enclave checks before
/// trusting the transcript it was handed.
#[derive(Debug, Clone)]
pub struct SourceCredential {
    pub credential: VerifiableCredential,
    pub issuer_doc: DidDocument,
}

/// Raw evidence for one derivation. Never leaves the enclave.
#[derive(Debug, Clone)]
pub struct DerivationInputs {
    pub transcript: Transcript,
    pub syllabi: Vec<Syllabus>,
    pub source: Option<SourceCredential>,
}

impl DerivationInputs {
    pub fn new(transcript: Transcript, syllabi: Vec<Syllabus>) -> Self {
        Self {
            transcript,
            syllabi,
            source: None,
        }
    }

    pub fn transcript_bytes(&self) -> Result<Vec<u8>, CanonError> {
        canon::to_canonical(&self.transcript)
    }

    pub fn syllabus_documents(&self) -> Result<Vec<Vec<u8>>, CanonError> {
        self.syllabi.iter().map(canon::to_canonical).collect()
    }

    /// `[H(transcript), H(syllabus set)]`
    pub fn input_digests(&self) -> Result<[Digest; 2], CanonError> {
        Ok([
            canon::sha256(&self.transcript_bytes()?),
            evidence_set_digest(&self.syllabus_documents()?),
        ])
    }

    /// Byte strings the egress guard must never let out.
    fn raw_material(&self) -> Result<Vec<Vec<u8>>, CanonError> {
        let mut raw = vec![self.transcript_bytes()?];
        raw.extend(self.syllabus_documents()?);
        raw.extend(self.syllabi.iter().map(|s| s.text.as_bytes().to_vec()));
        Ok(raw)
    }
}

/// Digest of the canonical transcript, as carried in the institutional
/// credential's `transcript_digest` claim.
pub fn transcript_digest(transcript: &Transcript) -> Result<Digest, CanonError> {
    canon::canonical_digest(transcript)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SessionRecord {
    derivation_id: String,
    commitment: InputCommitment,
    h_policy: Digest,
    inputs: Vec<Digest>,
    time: Option<Timestamp>,
}

/// One derivation from input commitment to egress.
#[derive(Debug)]
pub struct DerivationSession {
    derivation_id: String,
    policy: DerivationPolicy,
    h_policy: Digest,
    state: Option<SessionRecord>,
}

impl DerivationSession {
    pub fn derivation_id(&self) -> &str {
        &self.derivation_id
    }

    pub fn policy(&self) -> &DerivationPolicy {
        &self.policy
    }

    pub fn policy_digest(&self) -> Digest {
        self.h_policy
    }

    pub fn commitment(&self) -> Option<&InputCommitment> {
        self.state.as_ref().map(|s| &s.commitment)
    }
}

/// Per-call parameters of [`Enclave::derive_skill_credential`].
pub struct DerivationRequest<'a> {
    pub inputs: &'a DerivationInputs,
    pub taxonomy: &'a SkillTaxonomy,
    pub holder_did: &'a Did,
    /// The key that signs the derivative credential; held by the session for
    /// the duration of the call.
    pub holder_keys: &'a KeyPair,
    pub verifier_nonce: &'a [u8],
    pub status_ref: StatusRef,
    pub now: Timestamp,
}

pub struct Enclave {
    bundle: ModelBundle,
    measurement: Digest,
    attestation_key: KeyPair,
    store: SealedStore,
    provider: Arc<dyn EmbeddingProvider>,
}

impl std::fmt::Debug for Enclave {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Enclave")
            .field("measurement", &self.measurement)
            .field("provider", &self.provider.id())
            .finish_non_exhaustive()
    }
}

impl Enclave {
    /// Fresh instance with random secrets and the reference bundle.
    pub fn new(provider: Arc<dyn EmbeddingProvider>) -> Self {
        let bundle = ModelBundle::for_provider(provider.as_ref());
        Self::with_secrets(EnclaveSecrets::generate(), bundle, provider, None)
            .expect("in-memory enclave")
    }

    pub fn with_secrets(
        secrets: EnclaveSecrets,
        bundle: ModelBundle,
        provider: Arc<dyn EmbeddingProvider>,
        state_dir: Option<&Path>,
    ) -> Result<Self, EnclaveError> {
        let store = match state_dir {
            Some(dir) => SealedStore::open(secrets.seal_key, dir)?,
            None => SealedStore::new(secrets.seal_key),
        };
        Ok(Self {
            measurement: bundle.measurement(),
            bundle,
            attestation_key: secrets.attestation_key,
            store,
            provider,
        })
    }

    pub fn measurement(&self) -> Digest {
        self.measurement
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    /// The trust anchor verifiers pin.
    pub fn attestation_public_key(&self) -> PublicKey {
        self.attestation_key.public_key()
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    pub fn sealed_store(&self) -> &SealedStore {
        &self.store
    }

    pub fn open_session<R: RngCore + CryptoRng>(
        &self,
        policy: DerivationPolicy,
        rng: &mut R,
    ) -> Result<DerivationSession, EnclaveError> {
        if policy.embedding_provider != self.provider.id() {
            return Err(EnclaveError::PolicyMismatch(format!(
                "policy names provider {:?}, enclave runs {:?}",
                policy.embedding_provider,
                self.provider.id()
            )));
        }
        if policy.top_k == 0 {
            return Err(EnclaveError::PolicyMismatch("top_k must be at least 1".into()));
        }
        policy.weights.validate()?;
        let h_policy = policy.digest()?;
        Ok(DerivationSession {
            derivation_id: credential::random_id(rng),
            policy,
            h_policy,
            state: None,
        })
    }

    /// Draws the per-session salt and commits to the inputs.
    pub fn commit<R: RngCore + CryptoRng>(
        &self,
        session: &mut DerivationSession,
        inputs: &DerivationInputs,
        rng: &mut R,
    ) -> Result<InputCommitment, EnclaveError> {
        let [h_t, h_s] = inputs.input_digests()?;
        let mut salt = [0u8; SALT_LEN];
        rng.fill_bytes(&mut salt);
        let commitment = InputCommitment {
            salt,
            h_inputs: commit_digests(&salt, &h_t, &h_s),
        };
        session.state = Some(SessionRecord {
            derivation_id: session.derivation_id.clone(),
            commitment: commitment.clone(),
            h_policy: session.h_policy,
            inputs: vec![h_t, h_s],
            time: None,
        });
        Ok(commitment)
    }

    pub fn attest(
        &self,
        session: &DerivationSession,
        verifier_nonce: &[u8],
        now: Timestamp,
    ) -> Result<AttestationEvidence, EnclaveError> {
        let state = session.state.as_ref().ok_or(EnclaveError::SessionNotReady)?;
        Ok(self.sign_evidence(state.commitment.h_inputs, state.h_policy, verifier_nonce, now))
    }

    fn sign_evidence(
        &self,
        h_inputs: Digest,
        h_policy: Digest,
        n_v: &[u8],
        t: Timestamp,
    ) -> AttestationEvidence {
        let msg = attestation_message(&self.measurement, &h_inputs, &h_policy, n_v, t);
        AttestationEvidence {
            m_e: self.measurement,
            h_inputs,
            h_policy,
            n_v: n_v.to_vec(),
            t,
            sigma_tee: self.attestation_key.sign(&msg),
        }
    }

    /// Fresh evidence for a finished derivation, bound to a new verifier
    /// nonce. The sealed session supplies the original `h_inputs`.
    pub fn reattest(
        &self,
        derivation_id: &str,
        verifier_nonce: &[u8],
        now: Timestamp,
    ) -> Result<AttestationEvidence, EnclaveError> {
        let record = self.load_session(derivation_id)?;
        Ok(self.sign_evidence(record.commitment.h_inputs, record.h_policy, verifier_nonce, now))
    }

    fn session_label(derivation_id: &str) -> String {
        format!("session/{derivation_id}")
    }

    fn load_session(&self, derivation_id: &str) -> Result<SessionRecord, EnclaveError> {
        let label = Self::session_label(derivation_id);
        if self.store.export(&label).is_none() {
            return Err(EnclaveError::UnknownDerivation(derivation_id.to_string()));
        }
        let bytes = self.store.unseal(&label)?;
        serde_json::from_slice(&bytes).map_err(|e| EnclaveError::State(e.to_string()))
    }

    /// Runs filter → embed → score → weight inside the session and emits a
    /// holder-signed derivative credential plus attestation evidence.
    pub fn derive_skill_credential<R: RngCore + CryptoRng>(
        &self,
        session: &mut DerivationSession,
        request: &DerivationRequest<'_>,
        rng: &mut R,
    ) -> Result<(VerifiableCredential, AttestationEvidence), EnclaveError> {
        let inputs = request.inputs;
        let policy = session.policy.clone();
        if request.taxonomy.is_empty() {
            return Err(EnclaveError::EmptyTaxonomy);
        }
        if policy.taxonomy_id != request.taxonomy.id() {
            return Err(EnclaveError::PolicyMismatch(format!(
                "policy names taxonomy {}, got {}",
                policy.taxonomy_id,
                request.taxonomy.id()
            )));
        }
        if !request.holder_did.is_derived_from(&request.holder_keys.public_key()) {
            return Err(EnclaveError::PolicyMismatch("holder keys do not match holder DID".into()));
        }
        if let Some(source) = &inputs.source {
            check_source(source, &inputs.transcript, request.holder_did)?;
        }
        if inputs.transcript.courses.is_empty() {
            return Err(EnclaveError::NoEvidence);
        }

        let vector = self.skill_vector(inputs, request.taxonomy, &policy.weights)?;
        let k = policy.top_k.min(request.taxonomy.len());
        let ranked = skills::top_k(&vector, request.taxonomy, k)?;
        let mut claims = vec![(
            "taxonomy".to_string(),
            ClaimValue::Text(request.taxonomy.id().to_string()),
        )];
        claims.extend(
            ranked
                .into_iter()
                .filter(|r| r.score > policy.min_claim_score)
                .map(|r| (format!("skill.{}", r.skill_id), ClaimValue::Real(r.score))),
        );
        if claims.len() == 1 {
            return Err(EnclaveError::NoEvidence);
        }

        if session.state.is_none() {
            self.commit(session, inputs, rng)?;
        }
        let state = session.state.as_mut().expect("committed above");
        if state.inputs != inputs.input_digests()? {
            return Err(EnclaveError::SourceMismatch(
                "inputs differ from the session commitment".into(),
            ));
        }
        state.time = Some(request.now);
        let h_inputs = state.commitment.h_inputs;
        let provenance = Provenance {
            inputs: state.inputs.clone(),
            code: self.measurement,
            policy: session.h_policy,
            time: request.now,
            derivation_id: session.derivation_id.clone(),
            h_prov: provenance_digest(&self.measurement, &h_inputs, &session.h_policy, request.now),
        };
        let vc = credential::issue_with_rng(
            request.holder_keys,
            request.holder_did,
            IssueRequest {
                subject_did: request.holder_did.clone(),
                claims,
                class: CredentialClass::Derivative,
                provenance: Some(provenance),
                lifetime: Some(policy.credential_lifetime),
                status_ref: request.status_ref.clone(),
            },
            request.now,
            rng,
        )?;
        let evidence = self.sign_evidence(h_inputs, session.h_policy, request.verifier_nonce, request.now);

        let raw = inputs.raw_material()?;
        let vc = self.egress(&raw, vc)?;
        let evidence = self.egress(&raw, evidence)?;

        let record = serde_json::to_vec(session.state.as_ref().expect("committed"))
            .map_err(CanonError::from)?;
        self.store
            .seal(&Self::session_label(&session.derivation_id), &record)?;
        Ok((vc, evidence))
    }

    /// Personalized skill vector of the inputs. Stays inside the enclave.
    fn skill_vector(
        &self,
        inputs: &DerivationInputs,
        taxonomy: &SkillTaxonomy,
        weights: &WeightConfig,
    ) -> Result<SkillVector, EnclaveError> {
        let courses = skills::assemble_courses(&inputs.transcript, &inputs.syllabi);
        let embedded = EmbeddedTaxonomy::new(taxonomy, self.provider.as_ref())?;
        Ok(skills::holder_vector(&courses, &embedded, self.provider.as_ref(), weights)?)
    }

    /// The single exit point. Refuses any output whose canonical form
    /// contains an [`EGRESS_WINDOW`]-byte window of raw input.
    pub fn egress<T: Serialize>(&self, raw: &[Vec<u8>], output: T) -> Result<T, EnclaveError> {
        let bytes = canon::to_canonical(&output)?;
        if contains_any_window(&bytes, raw, EGRESS_WINDOW) {
            return Err(EnclaveError::EgressViolation);
        }
        Ok(output)
    }
}

fn check_source(source: &SourceCredential, transcript: &Transcript, holder: &Did) -> Result<(), EnclaveError> {
    let vc = &source.credential;
    vc.verify(&source.issuer_doc)
        .map_err(|r| EnclaveError::SourceMismatch(r.to_string()))?;
    if vc.body.subject_did != *holder {
        return Err(EnclaveError::SourceMismatch("credential subject is not the holder".into()));
    }
    let expected = transcript_digest(transcript)?.to_hex();
    match vc.claim("transcript_digest").and_then(|c| c.value.as_str()) {
        Some(d) if d == expected => Ok(()),
        _ => Err(EnclaveError::SourceMismatch(
            "transcript does not match the credential's digest".into(),
        )),
    }
}

/// True if any `window`-byte slice of any `raw` input occurs in `haystack`.
pub fn contains_any_window(haystack: &[u8], raw: &[Vec<u8>], window: usize) -> bool {
    let needles: HashSet<&[u8]> = raw
        .iter()
        .filter(|r| r.len() >= window)
        .flat_map(|r| r.windows(window))
        .collect();
    !needles.is_empty() && haystack.windows(window).any(|w| needles.contains(w))
}
