use rand::{CryptoRng, RngCore};

use super::{CredentialClass, CredentialError, StatusList, VerifiableCredential};
use crate::clock::Timestamp;
use crate::enclave::{DerivationInputs, DerivationPolicy, DerivationRequest, Enclave};
use crate::identity::KeyPair;
use crate::skills::SkillTaxonomy;

/// What a corrected derivation needs besides the corrected inputs.
pub struct DisputeContext<'a> {
    pub enclave: &'a Enclave,
    pub policy: DerivationPolicy,
    pub taxonomy: &'a SkillTaxonomy,
    pub holder_keys: &'a KeyPair,
    /// Derivative status list holding `old`; the corrected credential is
    /// listed here and `old` is revoked in place.
    pub status_list: &'a mut StatusList,
    pub now: Timestamp,
}

/// Derives a corrected credential in a fresh session and revokes `old`.
/// The revoked entry stays in the list.
pub fn reissue_on_dispute<R: RngCore + CryptoRng>(
    old: &VerifiableCredential,
    corrected: &DerivationInputs,
    ctx: DisputeContext<'_>,
    rng: &mut R,
) -> Result<(VerifiableCredential, StatusList), CredentialError> {
    if old.class() != CredentialClass::Derivative {
        return Err(CredentialError::NotDerivative);
    }
    let holder_did = old.body.subject_did.clone();
    let mut session = ctx.enclave.open_session(ctx.policy, rng)?;
    let request = DerivationRequest {
        inputs: corrected,
        taxonomy: ctx.taxonomy,
        holder_did: &holder_did,
        holder_keys: ctx.holder_keys,
        verifier_nonce: old.id().as_bytes(),
        status_ref: ctx.status_list.next_ref(),
        now: ctx.now,
    };
    let (new, _evidence) = ctx.enclave.derive_skill_credential(&mut session, &request, rng)?;
    ctx.status_list.register(&new, ctx.holder_keys, ctx.now)?;
    ctx.status_list.revoke(old.id(), ctx.holder_keys, ctx.now)?;
    Ok((new, ctx.status_list.clone()))
}
