//! Create a DID, prove control of it, rotate its key and resolve the update.

use std::collections::BTreeMap;

use ler_core::identity::{gen_did, prove_control, verify_control, DidRegistry, KeyPair, DEFAULT_METHOD};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let registry = DidRegistry::in_memory();
    let keys = KeyPair::generate();
    let (did, doc) = gen_did(keys.public_key().as_bytes(), DEFAULT_METHOD, BTreeMap::new())?;
    registry.register(doc.clone())?;
    println!("did:       {did}");

    let sig = prove_control(&keys, b"login-challenge-42")?;
    println!("control:   {}", verify_control(&registry.resolve(&did)?, b"login-challenge-42", &sig));

    let next = KeyPair::generate();
    registry.update(doc.rotated(next.public_key()))?;
    let resolved = registry.resolve(&did)?;
    println!("version:   {}", resolved.version);
    println!("old key:   {}", verify_control(&resolved, b"c", &prove_control(&keys, b"c")?));
    println!("new key:   {}", verify_control(&resolved, b"c", &prove_control(&next, b"c")?));
    Ok(())
}
