//! An institution issues a transcript credential; the holder presents it to
//! a verifier, then the institution revokes it and the same check fails.

use ler_core::credential::{self, PresentationRequest};
use ler_core::fixtures;
use ler_core::identity::{DidRegistry, KeyPair};
use ler_core::protocol::{run_issuance, Holder, InProcessTransport, Issuer, VerifierPolicy};
use rand::rngs::OsRng;

const NOW: u64 = 1_700_000_000;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let registry = DidRegistry::in_memory();
    let mut issuer = Issuer::new(KeyPair::generate(), &registry, NOW)?;
    let mut holder = Holder::new(KeyPair::generate(), &registry)?;
    run_issuance(&mut issuer, &mut holder, &fixtures::transcript(), &registry, &InProcessTransport::new(), NOW, &mut OsRng)?;

    let vc = holder.wallet.credentials.values().next().unwrap().clone();
    println!("issued {} with {} claims", vc.id(), vc.claims.len());

    let request = PresentationRequest::claims(["gpa", "institution"]);
    let policy = ler_core::credential::DisclosurePolicy::permissive("demo");
    let check = |now: u64, status| -> Result<_, Box<dyn std::error::Error>> {
        let vp = credential::present(&vc, &policy, &request, &holder.keys, b"nonce-1", status, None, now)?;
        let issuer_doc = registry.resolve(&vc.body.issuer_did)?;
        Ok(credential::verify(&vp, &issuer_doc, &holder.doc, &VerifierPolicy::default(), Some(b"nonce-1"), now))
    };

    match check(NOW + 60, issuer.staple(vc.id(), NOW + 60)?)? {
        Ok(v) => println!("accepted: {:?}", v.revealed),
        Err(r) => println!("rejected: {r:?}"),
    }

    issuer.revoke(vc.id(), NOW + 120)?;
    match check(NOW + 180, issuer.staple(vc.id(), NOW + 180)?)? {
        Ok(_) => println!("accepted after revocation (unexpected)"),
        Err(r) => println!("after revocation: {r:?}"),
    }
    Ok(())
}
