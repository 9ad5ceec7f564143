//! Issuance, derivation and verification against a job posting, with the
//! verifier releasing the full match result.

use std::sync::Arc;

use ler_core::enclave::{DerivationPolicy, Enclave};
use ler_core::fixtures;
use ler_core::identity::{DidRegistry, KeyPair};
use ler_core::protocol::{
    run_derivation, run_issuance, run_verification, Holder, InProcessTransport, Issuer, ReleaseMode, VerificationRequest,
    Verifier, VerifierPolicy,
};
use ler_core::skills::{EmbeddingProvider, HashingEmbedder, SkillTaxonomy, DEFAULT_DIMENSION};
use rand::rngs::OsRng;

const NOW: u64 = 1_700_000_000;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let registry = DidRegistry::in_memory();
    let provider: Arc<dyn EmbeddingProvider> = Arc::new(HashingEmbedder::new(DEFAULT_DIMENSION));
    let taxonomy = SkillTaxonomy::sample();
    let enclave = Enclave::new(provider.clone());
    let policy = DerivationPolicy::new(&taxonomy, provider.as_ref());
    let transport = InProcessTransport::new();

    let mut issuer = Issuer::new(KeyPair::generate(), &registry, NOW)?;
    let mut holder = Holder::new(KeyPair::generate(), &registry)?;
    let mut vpolicy = VerifierPolicy::trusting(&enclave, &policy)?;
    vpolicy.release = ReleaseMode::Full;
    let verifier = Verifier::new(KeyPair::generate(), &registry, vpolicy, taxonomy.clone(), provider.clone())?;

    run_issuance(&mut issuer, &mut holder, &fixtures::transcript(), &registry, &transport, NOW, &mut OsRng)?;
    run_derivation(&mut holder, &enclave, &fixtures::syllabi(), &taxonomy, policy, &registry, NOW, &mut OsRng)?;

    for job in [fixtures::java_job(), fixtures::csharp_job()] {
        let resp = run_verification(&holder, &verifier, &VerificationRequest::skills_for(job.clone()), &enclave, &registry, &transport, NOW + 60, &mut OsRng)?;
        let result = resp.result.as_ref().unwrap();
        println!(
            "{:<18} decision={} score={:.4} overlap={}/{}",
            job.job_id,
            resp.decision,
            result.score,
            result.overlap.numerator(),
            result.overlap.denominator()
        );
    }
    Ok(())
}
