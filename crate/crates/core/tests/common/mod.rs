#![allow(dead_code)]

pub mod forgery;
pub mod leakage;
pub mod mutation;
pub mod oracle;

use std::sync::Arc;

use ler_core::enclave::{DerivationPolicy, Enclave};
use ler_core::fixtures;
use ler_core::identity::{DidRegistry, KeyPair};
use ler_core::protocol::{
    run_derivation, run_issuance, Holder, InProcessTransport, Issuer, Verifier, VerifierPolicy,
};
use ler_core::skills::{EmbeddingProvider, HashingEmbedder, SkillTaxonomy, DEFAULT_DIMENSION};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const T0: u64 = 1_700_000_000;

pub struct World {
    pub registry: DidRegistry,
    pub issuer: Issuer,
    pub holder: Holder,
    pub enclave: Enclave,
    pub verifier: Verifier,
    pub taxonomy: SkillTaxonomy,
    pub provider: Arc<dyn EmbeddingProvider>,
    pub policy: DerivationPolicy,
    pub transport: InProcessTransport,
    pub rng: ChaCha20Rng,
}

pub fn provider() -> Arc<dyn EmbeddingProvider> {
    Arc::new(HashingEmbedder::new(DEFAULT_DIMENSION))
}

/// Issuer, holder and verifier set up with the fixture transcript issued and
/// a skill credential derived at `T0`.
pub fn world(seed: u64) -> World {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let registry = DidRegistry::in_memory();
    let provider = provider();
    let taxonomy = SkillTaxonomy::sample();
    let enclave = Enclave::new(provider.clone());
    let policy = DerivationPolicy::new(&taxonomy, provider.as_ref());
    let mut issuer = Issuer::new(KeyPair::from_seed([1; 32]), &registry, T0).unwrap();
    let mut holder = Holder::new(KeyPair::from_seed([2; 32]), &registry).unwrap();
    let vpolicy = VerifierPolicy::trusting(&enclave, &policy).unwrap();
    let verifier = Verifier::new(
        KeyPair::from_seed([3; 32]),
        &registry,
        vpolicy,
        taxonomy.clone(),
        provider.clone(),
    )
    .unwrap();
    let transport = InProcessTransport::new();
    run_issuance(
        &mut issuer,
        &mut holder,
        &fixtures::transcript(),
        &registry,
        &transport,
        T0,
        &mut rng,
    )
    .unwrap();
    run_derivation(
        &mut holder,
        &enclave,
        &fixtures::syllabi(),
        &taxonomy,
        policy.clone(),
        &registry,
        T0,
        &mut rng,
    )
    .unwrap();
    World {
        registry,
        issuer,
        holder,
        enclave,
        verifier,
        taxonomy,
        provider,
        policy,
        transport,
        rng,
    }
}
