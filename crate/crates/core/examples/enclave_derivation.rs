//! Derive a skill credential inside the simulated enclave and check that
//! its provenance matches a fresh attestation.

use std::sync::Arc;

use ler_core::enclave::{DerivationPolicy, Enclave};
use ler_core::fixtures;
use ler_core::identity::{DidRegistry, KeyPair};
use ler_core::protocol::{run_derivation, run_issuance, Holder, InProcessTransport, Issuer};
use ler_core::skills::{HashingEmbedder, SkillTaxonomy, DEFAULT_DIMENSION};
use rand::rngs::OsRng;

const NOW: u64 = 1_700_000_000;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let registry = DidRegistry::in_memory();
    let provider = Arc::new(HashingEmbedder::new(DEFAULT_DIMENSION));
    let taxonomy = SkillTaxonomy::sample();
    let enclave = Enclave::new(provider.clone());
    let policy = DerivationPolicy::new(&taxonomy, provider.as_ref());

    let mut issuer = Issuer::new(KeyPair::generate(), &registry, NOW)?;
    let mut holder = Holder::new(KeyPair::generate(), &registry)?;
    run_issuance(&mut issuer, &mut holder, &fixtures::transcript(), &registry, &InProcessTransport::new(), NOW, &mut OsRng)?;
    let id = run_derivation(&mut holder, &enclave, &fixtures::syllabi(), &taxonomy, policy, &registry, NOW, &mut OsRng)?;

    let vc = &holder.wallet.credentials[&id];
    let prov = vc.body.provenance.as_ref().unwrap();
    println!("credential:  {id}");
    println!("measurement: {}", enclave.measurement());
    for c in vc.claims.iter().filter(|c| c.key.starts_with("skill.")) {
        println!("  {:<40} {}", c.key, c.value.as_f64().unwrap_or_default());
    }

    let evidence = enclave.reattest(&holder.wallet.derivations[&id], b"verifier-nonce", NOW + 30)?;
    println!("evidence signature ok: {}", evidence.verify_signature(&enclave.attestation_public_key()));
    println!("provenance matches:    {}", prov.matches_evidence(&evidence));
    println!("sealed labels:         {:?}", enclave.sealed_store().labels());
    Ok(())
}
