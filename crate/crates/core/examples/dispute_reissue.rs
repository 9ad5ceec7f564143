//! A grade was recorded wrongly. The holder derives a corrected skill
//! credential; the old one is revoked on the holder's derivative list.

use std::sync::Arc;

use ler_core::credential::{reissue_on_dispute, CredentialStatus, DisputeContext};
use ler_core::enclave::{DerivationInputs, DerivationPolicy, Enclave};
use ler_core::fixtures;
use ler_core::identity::{DidRegistry, KeyPair};
use ler_core::protocol::Holder;
use ler_core::skills::{HashingEmbedder, SkillTaxonomy, DEFAULT_DIMENSION};
use rand::rngs::OsRng;

const NOW: u64 = 1_700_000_000;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let registry = DidRegistry::in_memory();
    let provider = Arc::new(HashingEmbedder::new(DEFAULT_DIMENSION));
    let taxonomy = SkillTaxonomy::sample();
    let enclave = Enclave::new(provider.clone());
    let policy = DerivationPolicy::new(&taxonomy, provider.as_ref());
    let mut holder = Holder::new(KeyPair::generate(), &registry)?;

    let mut transcript = fixtures::transcript();
    transcript.courses[0].grade = "C".into();
    let old_id = holder.derive(&enclave, &DerivationInputs::new(transcript.clone(), fixtures::syllabi()), &taxonomy, policy.clone(), NOW, &mut OsRng)?;
    let old = holder.wallet.credentials[&old_id].clone();

    transcript.courses[0].grade = "A".into();
    let keys = holder.keys.clone();
    let list = holder.wallet.derivative_status.as_mut().unwrap();
    let (new, list) = reissue_on_dispute(
        &old,
        &DerivationInputs::new(transcript, fixtures::syllabi()),
        DisputeContext { enclave: &enclave, policy, taxonomy: &taxonomy, holder_keys: &keys, status_list: list, now: NOW + 3600 },
        &mut OsRng,
    )?;

    let status = |id: &str| list.status(id).unwrap_or(CredentialStatus::RevokedUnknown);
    println!("old {} -> {:?}", old.id(), status(old.id()));
    println!("new {} -> {:?}", new.id(), status(new.id()));
    let first = |vc: &ler_core::credential::VerifiableCredential| {
        vc.claims.iter().find(|c| c.key.starts_with("skill.")).map(|c| (c.key.clone(), c.value.clone()))
    };
    println!("top claim before: {:?}", first(&old));
    println!("top claim after:  {:?}", first(&new));
    Ok(())
}
