//! Issuer, holder wallet and verifier nodes sharing one data directory. The
//! verifier asks for `grade` and `ssn`; the wallet shows what its policy
//! permits, the holder approves `grade` only, and the verifier accepts.

use std::collections::BTreeSet;
use std::sync::Arc;

use ler_core::credential::{ClaimValue, CredentialClass, DisclosurePolicy, PresentationRequest};
use ler_gateway::node::Role;
use ler_gateway::{Config, HolderNode, IssuerNode, Layout, VerifierNode};
use rand::rngs::OsRng;

const NOW: u64 = 1_700_000_000;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let config = Config { data_dir: dir.path().join("data"), ..Config::default() };
    let layout = Layout::new(&config);
    for role in [Role::Issuer, Role::Holder, Role::Verifier] {
        layout.keygen(role, false)?;
    }
    let registry = Arc::new(layout.registry()?);
    let issuer = IssuerNode::open(&layout, registry.clone(), NOW)?;
    let holder = HolderNode::open(&config, &layout, registry.clone())?;
    let verifier = VerifierNode::open(&config, &layout, registry)?;

    let claims = vec![
        ("grade".to_string(), ClaimValue::Text("A".into())),
        ("ssn".to_string(), ClaimValue::Text("123-45-6789".into())),
    ];
    holder.import(&issuer.issue_claims(holder.did(), claims, NOW, &mut OsRng)?)?;
    holder.set_policy(
        CredentialClass::Institutional,
        DisclosurePolicy::deny_by_default("institutional", ["grade"], vec![]),
    )?;

    let challenge = verifier.challenge(PresentationRequest::claims(["grade", "ssn"]), None, NOW, &mut OsRng)?;
    let pending = holder.receive(challenge, NOW)?;
    for view in holder.requests() {
        for c in &view.claims {
            println!("{:<6} available={} permitted={}", c.key, c.available, c.permitted);
        }
    }

    let denied = holder.approve(&pending.request_id, &BTreeSet::from(["ssn".to_string()]), NOW);
    println!("approve ssn:   {}", denied.map(|_| "ok".to_string()).unwrap_or_else(|e| e.to_string()));
    let vp = holder.approve(&pending.request_id, &BTreeSet::from(["grade".to_string()]), NOW)?;
    let outcome = verifier.verify(&vp, None, NOW + 5)?;
    println!("verifier saw:  {:?}", outcome.revealed);
    Ok(())
}
