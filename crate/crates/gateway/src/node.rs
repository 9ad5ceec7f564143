//! File-backed issuer, holder and verifier nodes sharing one data directory
//! layout. The HTTP service and the CLI both drive these.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use ler_core::canon::{self, Digest};
use ler_core::clock::Timestamp;
use ler_core::credential::{
    self, ClaimValue, CredentialClass, DisclosurePolicy, Predicate, PresentationRequest,
    StapledStatus, StatusList, VerifiableCredential, VerifiablePresentation,
};
use ler_core::enclave::{
    DerivationInputs, DerivationPolicy, Enclave, EnclaveSecrets, ModelBundle, SourceCredential,
};
use ler_core::fsutil::write_atomic;
use ler_core::identity::{gen_did, Did, DidDocument, DidRegistry, KeyPair, PublicKey, DEFAULT_METHOD};
use ler_core::matching::JobRequirement;
use ler_core::protocol::{
    Challenge, Envelope, Holder, IssuanceDelivery, Issuer, Verifier, VerifierPolicy,
    VerifierResponse,
};
use ler_core::skills::{EmbeddingProvider, Syllabus, Transcript};
use rand::{CryptoRng, RngCore};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::store::{PendingRequest, WalletState, WalletStore};
use crate::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Issuer,
    Holder,
    Verifier,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Issuer => "issuer",
            Role::Holder => "holder",
            Role::Verifier => "verifier",
        }
    }
}

/// Where each node keeps its state under the data directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub data_dir: PathBuf,
    pub registry_dir: PathBuf,
    key_overrides: BTreeMap<&'static str, PathBuf>,
}

impl Layout {
    pub fn new(config: &Config) -> Self {
        let mut key_overrides = BTreeMap::new();
        for (role, p) in [
            (Role::Issuer, &config.issuer_key),
            (Role::Holder, &config.holder_key),
            (Role::Verifier, &config.verifier_key),
        ] {
            if let Some(p) = p {
                key_overrides.insert(role.as_str(), p.clone());
            }
        }
        Self {
            data_dir: config.data_dir.clone(),
            registry_dir: config.registry_dir(),
            key_overrides,
        }
    }

    pub fn key_path(&self, role: Role) -> PathBuf {
        self.key_overrides
            .get(role.as_str())
            .cloned()
            .unwrap_or_else(|| self.data_dir.join("keys").join(format!("{}.json", role.as_str())))
    }

    pub fn issuer_status(&self) -> PathBuf {
        self.data_dir.join("issuer").join("status.json")
    }

    pub fn wallet(&self) -> PathBuf {
        self.data_dir.join("holder").join("wallet.json")
    }

    pub fn enclave_secrets(&self) -> PathBuf {
        self.data_dir.join("enclave").join("secrets.json")
    }

    pub fn enclave_state(&self) -> PathBuf {
        self.data_dir.join("enclave").join("sealed")
    }

    pub fn challenges(&self) -> PathBuf {
        self.data_dir.join("verifier").join("challenges.json")
    }

    pub fn credentials_dir(&self) -> PathBuf {
        self.data_dir.join("credentials")
    }

    /// Existing key for `role`, or a fresh one written in its place.
    /// `force` always replaces.
    pub fn keygen(&self, role: Role, force: bool) -> Result<KeyPair, GatewayError> {
        let path = self.key_path(role);
        if !force && path.exists() {
            return self.load_key(role);
        }
        let keys = KeyPair::generate();
        save_json(&path, &keys)?;
        Ok(keys)
    }

    pub fn load_key(&self, role: Role) -> Result<KeyPair, GatewayError> {
        let path = self.key_path(role);
        if !path.exists() {
            return Err(GatewayError::NotFound(format!(
                "{} key at {}; run `ler keygen --role {}`",
                role.as_str(),
                path.display(),
                role.as_str()
            )));
        }
        load_json(&path)
    }

    pub fn registry(&self) -> Result<Registry, GatewayError> {
        Registry::open(&self.registry_dir)
    }

    /// The local enclave instance. Secrets are created on first use.
    pub fn enclave(&self, provider: Arc<dyn EmbeddingProvider>) -> Result<Enclave, GatewayError> {
        let path = self.enclave_secrets();
        let secrets = if path.exists() {
            load_json(&path)?
        } else {
            let s = EnclaveSecrets::generate();
            save_json(&path, &s)?;
            s
        };
        let bundle = ModelBundle::for_provider(provider.as_ref());
        Ok(Enclave::with_secrets(secrets, bundle, provider, Some(&self.enclave_state()))?)
    }
}

pub(crate) fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, GatewayError> {
    let bytes = fs::read(path).map_err(|e| GatewayError::NotFound(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| GatewayError::Malformed(format!("{}: {e}", path.display())))
}

pub(crate) fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), GatewayError> {
    write_atomic(path, &canon::to_canonical(value)?)?;
    Ok(())
}

/// DID documents on disk. Lookups that miss reload the directory, so
/// documents registered by another process become visible.
#[derive(Debug)]
pub struct Registry {
    dir: PathBuf,
    inner: DidRegistry,
}

impl Registry {
    pub fn open(dir: &Path) -> Result<Self, GatewayError> {
        Ok(Self {
            dir: dir.to_path_buf(),
            inner: DidRegistry::open(dir)?,
        })
    }

    pub fn inner(&self) -> &DidRegistry {
        &self.inner
    }

    pub fn resolve(&self, did: &Did) -> Result<DidDocument, GatewayError> {
        match self.inner.resolve(did) {
            Ok(doc) => Ok(doc),
            Err(_) => {
                let doc = DidRegistry::open(&self.dir)?
                    .resolve(did)
                    .map_err(|_| GatewayError::NotFound(did.to_string()))?;
                let _ = self.inner.register(doc.clone());
                Ok(doc)
            }
        }
    }

    /// Registers the document for `keys` and returns it.
    pub fn register_key(&self, keys: &KeyPair) -> Result<DidDocument, GatewayError> {
        let (_, doc) = gen_did(keys.public_key().as_bytes(), DEFAULT_METHOD, BTreeMap::new())?;
        self.inner.register(doc.clone())?;
        Ok(doc)
    }
}

/// What an issuer hands a holder: the credential, the raw record behind it
/// and a freshly stapled status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssuanceBundle {
    pub credential: VerifiableCredential,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<Transcript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<StapledStatus>,
}

pub struct IssuerNode {
    registry: Arc<Registry>,
    issuer: Mutex<Issuer>,
    status_path: PathBuf,
}

impl IssuerNode {
    pub fn open(layout: &Layout, registry: Arc<Registry>, now: Timestamp) -> Result<Self, GatewayError> {
        let keys = layout.load_key(Role::Issuer)?;
        let mut issuer = Issuer::new(keys, registry.inner(), now)?;
        let status_path = layout.issuer_status();
        if status_path.exists() {
            let list: StatusList = load_json(&status_path)?;
            if list.owner_did != *issuer.did() || !list.verify_signature() {
                return Err(GatewayError::Store(format!(
                    "{} is not a valid list for {}",
                    status_path.display(),
                    issuer.did()
                )));
            }
            issuer.status_list = list;
        } else {
            save_json(&status_path, &issuer.status_list)?;
        }
        Ok(Self {
            registry,
            issuer: Mutex::new(issuer),
            status_path,
        })
    }

    pub fn did(&self) -> Did {
        self.issuer.lock().expect("issuer lock").did().clone()
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn issue<R: RngCore + CryptoRng>(
        &self,
        holder: &Did,
        transcript: &Transcript,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<IssuanceBundle, GatewayError> {
        self.registry.resolve(holder)?;
        let mut issuer = self.issuer.lock().expect("issuer lock");
        let credential = issuer.issue_transcript(holder, transcript, now, rng)?;
        save_json(&self.status_path, &issuer.status_list)?;
        let status = issuer.staple(credential.id(), now)?;
        Ok(IssuanceBundle {
            credential,
            transcript: Some(transcript.clone()),
            status: Some(status),
        })
    }

    /// Issues an institutional credential over arbitrary claims.
    pub fn issue_claims<R: RngCore + CryptoRng>(
        &self,
        holder: &Did,
        claims: Vec<(String, ClaimValue)>,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<IssuanceBundle, GatewayError> {
        self.registry.resolve(holder)?;
        let mut issuer = self.issuer.lock().expect("issuer lock");
        let request = credential::IssueRequest {
            subject_did: holder.clone(),
            claims,
            class: CredentialClass::Institutional,
            provenance: None,
            lifetime: None,
            status_ref: issuer.status_list.next_ref(),
        };
        let credential = credential::issue_with_rng(&issuer.keys, &issuer.doc.did, request, now, rng)?;
        let keys = issuer.keys.clone();
        issuer.status_list.register(&credential, &keys, now)?;
        save_json(&self.status_path, &issuer.status_list)?;
        let status = issuer.staple(credential.id(), now)?;
        Ok(IssuanceBundle {
            credential,
            transcript: None,
            status: Some(status),
        })
    }

    pub fn status_list(&self) -> StatusList {
        self.issuer.lock().expect("issuer lock").status_list.clone()
    }

    pub fn staple(&self, credential_id: &str, now: Timestamp) -> Result<StapledStatus, GatewayError> {
        Ok(self.issuer.lock().expect("issuer lock").staple(credential_id, now)?)
    }

    pub fn revoke(&self, credential_id: &str, now: Timestamp) -> Result<(), GatewayError> {
        let mut issuer = self.issuer.lock().expect("issuer lock");
        issuer.revoke(credential_id, now)?;
        save_json(&self.status_path, &issuer.status_list)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredentialSummary {
    pub id: String,
    pub class: CredentialClass,
    pub issuer_did: Did,
    pub issued_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expires_at: Option<Timestamp>,
    pub claim_keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimView {
    pub key: String,
    /// The chosen credential carries this claim.
    pub available: bool,
    /// The holder's policy lets it be revealed.
    pub permitted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateView {
    pub predicate: Predicate,
    pub permitted: bool,
}

/// A pending request as the holder sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestView {
    pub request_id: String,
    pub verifier_did: Did,
    pub credential_id: String,
    pub credential_class: CredentialClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job_id: Option<String>,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
    pub claims: Vec<ClaimView>,
    pub predicates: Vec<PredicateView>,
}

pub struct HolderNode {
    keys: KeyPair,
    doc: DidDocument,
    registry: Arc<Registry>,
    store: WalletStore,
    enclave: Enclave,
    taxonomy: ler_core::skills::SkillTaxonomy,
    policy: DerivationPolicy,
}

impl HolderNode {
    pub fn open(config: &Config, layout: &Layout, registry: Arc<Registry>) -> Result<Self, GatewayError> {
        let keys = layout.load_key(Role::Holder)?;
        let doc = registry.register_key(&keys)?;
        let provider = config.provider();
        let taxonomy = config.taxonomy()?;
        let policy = config.derivation_policy(&taxonomy, provider.as_ref());
        Ok(Self {
            enclave: layout.enclave(provider)?,
            store: WalletStore::open(layout.wallet())?,
            keys,
            doc,
            registry,
            taxonomy,
            policy,
        })
    }

    pub fn did(&self) -> &Did {
        &self.doc.did
    }

    pub fn enclave(&self) -> &Enclave {
        &self.enclave
    }

    pub fn store(&self) -> &WalletStore {
        &self.store
    }

    fn holder(&self, state: &WalletState) -> Holder {
        Holder {
            keys: self.keys.clone(),
            doc: self.doc.clone(),
            wallet: state.wallet.clone(),
        }
    }

    /// Checks and stores an issued credential. Returns whether it was new.
    pub fn import(&self, bundle: &IssuanceBundle) -> Result<bool, GatewayError> {
        let vc = &bundle.credential;
        let issuer_doc = self.registry.resolve(&vc.body.issuer_did)?;
        self.store.update(|state| {
            let added = match &bundle.transcript {
                Some(transcript) => {
                    let delivery = IssuanceDelivery {
                        credential: vc.clone(),
                        transcript: transcript.clone(),
                    };
                    let envelope = Envelope::new(vc.id(), 1, &delivery, &vc.body.issuer_did)?;
                    let mut holder = self.holder(state);
                    let added = holder.accept_issuance(&envelope, self.registry.inner())?;
                    state.wallet = holder.wallet;
                    added
                }
                None => {
                    vc.verify(&issuer_doc)?;
                    if vc.body.subject_did != self.doc.did {
                        return Err(GatewayError::Malformed("credential is for another subject".into()));
                    }
                    state.wallet.insert(vc.clone())
                }
            };
            if let Some(status) = &bundle.status {
                let s = &status.snippet;
                if s.credential_id != vc.id() || !s.verify(&issuer_doc, &status.signature) {
                    return Err(GatewayError::Malformed("stapled status does not verify".into()));
                }
                state.staples.insert(vc.id().to_string(), status.clone());
            }
            Ok(added)
        })
    }

    /// Runs an enclave derivation. When the wallet holds an institutional
    /// credential for `transcript`, it is handed to the enclave as the source.
    pub fn derive<R: RngCore + CryptoRng>(
        &self,
        transcript: Transcript,
        syllabi: Vec<Syllabus>,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<VerifiableCredential, GatewayError> {
        let snapshot = self.store.snapshot();
        let source = snapshot
            .wallet
            .by_class(CredentialClass::Institutional)
            .into_iter()
            .find(|c| snapshot.wallet.transcripts.get(c.id()) == Some(&transcript))
            .cloned();
        let source = match source {
            Some(credential) => Some(SourceCredential {
                issuer_doc: self.registry.resolve(&credential.body.issuer_did)?,
                credential,
            }),
            None => None,
        };
        let inputs = DerivationInputs {
            transcript,
            syllabi,
            source,
        };
        self.store.update(|state| {
            let mut holder = self.holder(state);
            let id = holder.derive(&self.enclave, &inputs, &self.taxonomy, self.policy.clone(), now, rng)?;
            state.wallet = holder.wallet;
            Ok(state.wallet.credentials[&id].clone())
        })
    }

    /// Revokes a derivative credential on the holder's own list.
    pub fn revoke_derivative(&self, credential_id: &str, now: Timestamp) -> Result<(), GatewayError> {
        self.store.update(|state| {
            let list = state
                .wallet
                .derivative_status
                .as_mut()
                .ok_or_else(|| GatewayError::NotFound("derivative status list".into()))?;
            list.revoke(credential_id, &self.keys, now)?;
            Ok(())
        })
    }

    pub fn inventory(&self) -> Vec<CredentialSummary> {
        let state = self.store.snapshot();
        let mut out: Vec<CredentialSummary> = state
            .wallet
            .credentials
            .values()
            .map(|c| CredentialSummary {
                id: c.id().to_string(),
                class: c.class(),
                issuer_did: c.body.issuer_did.clone(),
                issued_at: c.body.issued_at,
                expires_at: c.body.expires_at,
                claim_keys: c.claims.iter().map(|k| k.key.clone()).collect(),
            })
            .collect();
        out.sort_by(|a, b| b.issued_at.cmp(&a.issued_at).then_with(|| a.id.cmp(&b.id)));
        out
    }

    pub fn set_policy(&self, class: CredentialClass, policy: DisclosurePolicy) -> Result<(), GatewayError> {
        self.store.update(|state| {
            state.wallet.policies.insert(class.to_string(), policy);
            Ok(())
        })
    }

    /// Credential best covering `request`: most requested keys present,
    /// newest first on ties. Derivatives count only if currently valid.
    fn choose(state: &WalletState, request: &PresentationRequest, now: Timestamp) -> Option<String> {
        let current = state.wallet.current_derivative(now).map(|c| c.id().to_string());
        state
            .wallet
            .credentials
            .values()
            .filter(|c| !c.body.is_expired(now))
            .filter(|c| c.class() != CredentialClass::Derivative || current.as_deref() == Some(c.id()))
            .map(|c| {
                let cover = c.claims.iter().filter(|k| request.wants(&k.key)).count()
                    + request.predicates.iter().filter(|p| c.claim(&p.key).is_some()).count();
                (cover, c.body.issued_at, c.id())
            })
            .filter(|(cover, _, _)| *cover > 0)
            .max_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(b.2.cmp(a.2)))
            .map(|(_, _, id)| id.to_string())
    }

    /// Queues a verifier challenge for the holder's decision.
    pub fn receive(&self, challenge: Challenge, now: Timestamp) -> Result<PendingRequest, GatewayError> {
        if challenge.nonce.is_empty() {
            return Err(GatewayError::Malformed("challenge without nonce".into()));
        }
        self.store.update(|state| {
            let request_id = challenge.session_id.clone();
            if let Some(p) = state.pending.get(&request_id) {
                return Ok(p.clone());
            }
            if state.presentations.contains_key(&request_id) || state.denied.contains(&request_id) {
                return Err(GatewayError::Conflict(format!("request {request_id} already answered")));
            }
            let credential_id = Self::choose(state, &challenge.request, now)
                .ok_or_else(|| GatewayError::NotFound("no credential covers the request".into()))?;
            let pending = PendingRequest {
                request_id: request_id.clone(),
                challenge,
                received_at: now,
                credential_id,
            };
            state.pending.insert(request_id, pending.clone());
            Ok(pending)
        })
    }

    fn view(state: &WalletState, p: &PendingRequest) -> Option<RequestView> {
        let vc = state.wallet.credentials.get(&p.credential_id)?;
        let policy = state.wallet.policy_for(vc.class());
        let request = &p.challenge.request;
        let mut claims: Vec<ClaimView> = vc
            .claims
            .iter()
            .filter(|c| request.wants(&c.key))
            .map(|c| ClaimView {
                key: c.key.clone(),
                available: true,
                permitted: policy.allows_claim(&c.key),
            })
            .collect();
        for key in &request.claims {
            if !key.ends_with(".*") && vc.claim(key).is_none() {
                claims.push(ClaimView {
                    key: key.clone(),
                    available: false,
                    permitted: false,
                });
            }
        }
        claims.sort_by(|a, b| a.key.cmp(&b.key));
        let predicates = request
            .predicates
            .iter()
            .map(|pr| PredicateView {
                predicate: pr.clone(),
                permitted: vc.claim(&pr.key).is_some() && policy.allows_predicate(pr),
            })
            .collect();
        Some(RequestView {
            request_id: p.request_id.clone(),
            verifier_did: p.challenge.verifier_did.clone(),
            credential_id: p.credential_id.clone(),
            credential_class: vc.class(),
            job_id: p.challenge.job_id.clone(),
            issued_at: p.challenge.issued_at,
            expires_at: p.challenge.expires_at,
            claims,
            predicates,
        })
    }

    pub fn requests(&self) -> Vec<RequestView> {
        let state = self.store.snapshot();
        state.pending.values().filter_map(|p| Self::view(&state, p)).collect()
    }

    /// Builds and stores the presentation for `request_id`, revealing
    /// exactly `claims`. Each must be available and permitted. Approving an
    /// already approved request returns the stored presentation.
    pub fn approve(
        &self,
        request_id: &str,
        claims: &BTreeSet<String>,
        now: Timestamp,
    ) -> Result<VerifiablePresentation, GatewayError> {
        self.store.update(|state| {
            if let Some(vp) = state.presentations.get(request_id) {
                return Ok(vp.clone());
            }
            if state.denied.contains(request_id) {
                return Err(GatewayError::Conflict(format!("request {request_id} was denied")));
            }
            let pending = state
                .pending
                .get(request_id)
                .cloned()
                .ok_or_else(|| GatewayError::NotFound(format!("request {request_id}")))?;
            let view = Self::view(state, &pending)
                .ok_or_else(|| GatewayError::NotFound(pending.credential_id.clone()))?;
            let permitted: BTreeSet<&str> = view
                .claims
                .iter()
                .filter(|c| c.available && c.permitted)
                .map(|c| c.key.as_str())
                .collect();
            if let Some(bad) = claims.iter().find(|k| !permitted.contains(k.as_str())) {
                return Err(GatewayError::NotPermitted(bad.clone()));
            }
            let request = PresentationRequest {
                claims: claims.clone(),
                predicates: view
                    .predicates
                    .iter()
                    .filter(|p| p.permitted)
                    .map(|p| p.predicate.clone())
                    .collect(),
            };
            let vp = self.build(state, &pending.credential_id, &request, &pending.challenge.nonce, now)?;
            state.pending.remove(request_id);
            state.presentations.insert(request_id.to_string(), vp.clone());
            Ok(vp)
        })
    }

    pub fn deny(&self, request_id: &str) -> Result<(), GatewayError> {
        self.store.update(|state| {
            if state.presentations.contains_key(request_id) {
                return Err(GatewayError::Conflict(format!("request {request_id} was approved")));
            }
            if state.pending.remove(request_id).is_none() && !state.denied.contains(request_id) {
                return Err(GatewayError::NotFound(format!("request {request_id}")));
            }
            state.denied.insert(request_id.to_string());
            Ok(())
        })
    }

    /// Answers `challenge` directly under the wallet's policies, without
    /// queueing it.
    pub fn present(
        &self,
        challenge: &Challenge,
        credential_id: Option<&str>,
        now: Timestamp,
    ) -> Result<VerifiablePresentation, GatewayError> {
        let state = self.store.snapshot();
        let id = match credential_id {
            Some(id) => id.to_string(),
            None => Self::choose(&state, &challenge.request, now)
                .ok_or_else(|| GatewayError::NotFound("no credential covers the request".into()))?,
        };
        self.build(&state, &id, &challenge.request, &challenge.nonce, now)
    }

    fn build(
        &self,
        state: &WalletState,
        credential_id: &str,
        request: &PresentationRequest,
        nonce: &[u8],
        now: Timestamp,
    ) -> Result<VerifiablePresentation, GatewayError> {
        let vc = state
            .wallet
            .credentials
            .get(credential_id)
            .ok_or_else(|| GatewayError::NotFound(format!("credential {credential_id}")))?;
        let (status, evidence) = match vc.class() {
            CredentialClass::Derivative => {
                let list = state
                    .wallet
                    .derivative_status
                    .as_ref()
                    .ok_or_else(|| GatewayError::NotFound("derivative status list".into()))?;
                let derivation = state
                    .wallet
                    .derivations
                    .get(credential_id)
                    .ok_or_else(|| GatewayError::NotFound(format!("derivation record for {credential_id}")))?;
                (
                    list.staple(credential_id, &self.keys, now)?,
                    Some(self.enclave.reattest(derivation, nonce, now)?),
                )
            }
            _ => {
                let status = state.staples.get(credential_id).cloned().ok_or_else(|| {
                    GatewayError::Conflict(format!("no stapled status for {credential_id}; re-import from the issuer"))
                })?;
                (status, None)
            }
        };
        let policy = state.wallet.policy_for(vc.class());
        Ok(credential::present(vc, &policy, request, &self.keys, nonce, status, evidence, now)?)
    }
}

/// A challenge the verifier has handed out and not yet seen answered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutstandingChallenge {
    pub challenge: Challenge,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job: Option<JobRequirement>,
}

/// Result of a presentation the verifier accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentOutcome {
    pub session_id: String,
    pub credential_id: String,
    pub credential_class: CredentialClass,
    pub revealed: BTreeMap<String, ClaimValue>,
    /// Present when a job was attached and the credential carries skills.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<VerifierResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allowlist {
    pub measurements: BTreeSet<Digest>,
    pub enclave_keys: BTreeSet<PublicKey>,
    pub policy_digest: Digest,
    pub verifier_measurement: Digest,
}

pub struct VerifierNode {
    verifier: Verifier,
    registry: Arc<Registry>,
    challenges: Mutex<BTreeMap<String, OutstandingChallenge>>,
    path: PathBuf,
}

fn read_hex_lines(path: &Path) -> Result<Vec<Vec<u8>>, GatewayError> {
    fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| hex::decode(l).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display()))))
        .collect()
}

impl VerifierNode {
    /// Trusts the measurements in the configured allowlist (the local
    /// enclave build when none is given) and the configured attestation
    /// keys (the local enclave instance when none are given).
    pub fn open(config: &Config, layout: &Layout, registry: Arc<Registry>) -> Result<Self, GatewayError> {
        let keys = layout.load_key(Role::Verifier)?;
        let provider = config.provider();
        let taxonomy = config.taxonomy()?;
        let measurement_allowlist = match &config.allowlist {
            Some(p) => read_hex_lines(p)?
                .iter()
                .map(|b| {
                    <[u8; 32]>::try_from(b.as_slice())
                        .map(Digest)
                        .map_err(|_| GatewayError::Config("allowlist entries are 32-byte hex".into()))
                })
                .collect::<Result<_, _>>()?,
            None => [ModelBundle::for_provider(provider.as_ref()).measurement()].into(),
        };
        let enclave_keys = match &config.trust_anchor {
            Some(p) => read_hex_lines(p)?
                .iter()
                .map(|b| PublicKey::from_slice(b).map_err(GatewayError::from))
                .collect::<Result<_, _>>()?,
            None => [layout.enclave(provider.clone())?.attestation_public_key()].into(),
        };
        let policy = VerifierPolicy {
            measurement_allowlist,
            enclave_keys,
            freshness_window: config.freshness_window,
            threshold: config.threshold,
            expected_policy_digest: config.derivation_policy(&taxonomy, provider.as_ref()).digest()?,
            nonce_ttl: config.nonce_ttl,
            attestation_max_age: config.attestation_max_age,
            release: config.release,
        };
        let mut verifier = Verifier::new(keys, registry.inner(), policy, taxonomy, provider)?;
        verifier.combiner = config.combiner;
        let path = layout.challenges();
        let challenges = if path.exists() { load_json(&path)? } else { BTreeMap::new() };
        Ok(Self {
            verifier,
            registry,
            challenges: Mutex::new(challenges),
            path,
        })
    }

    pub fn did(&self) -> &Did {
        self.verifier.did()
    }

    pub fn policy(&self) -> &VerifierPolicy {
        &self.verifier.policy
    }

    pub fn allowlist(&self) -> Allowlist {
        let p = &self.verifier.policy;
        Allowlist {
            measurements: p.measurement_allowlist.clone(),
            enclave_keys: p.enclave_keys.clone(),
            policy_digest: p.expected_policy_digest,
            verifier_measurement: self.verifier.measurement(),
        }
    }

    /// Issues a single-use nonce. Expired entries are dropped on the way.
    pub fn challenge<R: RngCore + CryptoRng>(
        &self,
        request: PresentationRequest,
        job: Option<JobRequirement>,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<Challenge, GatewayError> {
        if let Some(job) = &job {
            job.validate()?;
        }
        let mut nonce = vec![0u8; 32];
        rng.fill_bytes(&mut nonce);
        let challenge = Challenge {
            session_id: credential::random_id(rng),
            nonce,
            issued_at: now,
            expires_at: now + self.verifier.policy.nonce_ttl,
            verifier_did: self.did().clone(),
            request,
            job_id: job.as_ref().map(|j| j.job_id.clone()),
        };
        let mut log = self.challenges.lock().expect("challenge lock");
        let mut next = log.clone();
        next.retain(|_, c| c.challenge.expires_at >= now);
        next.insert(
            hex::encode(&challenge.nonce),
            OutstandingChallenge {
                challenge: challenge.clone(),
                job,
            },
        );
        save_json(&self.path, &next)?;
        *log = next;
        Ok(challenge)
    }

    /// Runs the acceptance rule, consuming the named nonce whatever the
    /// outcome, then matches against the challenge's job (or `job`).
    pub fn verify(
        &self,
        vp: &VerifiablePresentation,
        job: Option<&JobRequirement>,
        now: Timestamp,
    ) -> Result<PresentOutcome, GatewayError> {
        let outstanding = {
            let mut log = self.challenges.lock().expect("challenge lock");
            let key = hex::encode(&vp.nonce);
            let mut next = log.clone();
            let taken = next.remove(&key);
            if taken.is_some() {
                save_json(&self.path, &next)?;
                *log = next;
            }
            taken.filter(|c| now <= c.challenge.expires_at)
        };
        let issuer_doc = self
            .registry
            .resolve(&vp.credential.issuer_did)
            .map_err(|_| credential::RejectReason::BadIssuerSig)?;
        let holder_doc = self
            .registry
            .resolve(&vp.holder_did)
            .map_err(|_| credential::RejectReason::BadHolderSig)?;
        let expected = outstanding.as_ref().map(|c| c.challenge.nonce.as_slice());
        let verified = credential::verify(vp, &issuer_doc, &holder_doc, &self.verifier.policy, expected, now)?;
        let outstanding = outstanding.expect("nonce accepted only when outstanding");
        let session_id = outstanding.challenge.session_id.clone();
        let job = job.or(outstanding.job.as_ref());
        let response = match job {
            Some(job) if verified.credential_class == CredentialClass::Derivative => {
                Some(self.verifier.match_job(&session_id, &verified, job)?)
            }
            _ => None,
        };
        Ok(PresentOutcome {
            session_id,
            credential_id: verified.credential_id.clone(),
            credential_class: verified.credential_class,
            revealed: verified.revealed.clone(),
            response,
        })
    }
}

/// Syllabus documents in `dir`: one text file per course, named after the
/// course id.
pub fn read_syllabi(dir: &Path) -> Result<Vec<Syllabus>, GatewayError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        let Some(course_id) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if course_id.starts_with('.') {
            continue;
        }
        out.push(Syllabus {
            course_id: course_id.to_string(),
            text: fs::read_to_string(&path)?,
        });
    }
    out.sort_by(|a, b| a.course_id.cmp(&b.course_id));
    if out.is_empty() {
        return Err(GatewayError::NotFound(format!("no syllabi in {}", dir.display())));
    }
    Ok(out)
}
