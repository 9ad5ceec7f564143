//! A verifier asks for `grade` and `ssn`. The holder's policy allows only
//! `grade` plus a `gpa >= 3.0` predicate, so `ssn` and the raw GPA stay hidden.

use ler_core::credential::{
    self, issue, ClaimValue, Comparator, CredentialClass, DisclosurePolicy, IssueRequest, ListKind, Predicate,
    PresentationRequest, StatusList,
};
use ler_core::identity::{DidRegistry, KeyPair};
use ler_core::protocol::{Holder, VerifierPolicy};

const NOW: u64 = 1_700_000_000;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let registry = DidRegistry::in_memory();
    let uni = KeyPair::generate();
    let uni_did = uni.did("ler");
    registry.register(ler_core::identity::gen_did(uni.public_key().as_bytes(), "ler", Default::default())?.1)?;
    let alice = Holder::new(KeyPair::generate(), &registry)?;

    let mut list = StatusList::new(&uni, &uni_did, ListKind::Institutional, "status/uni", NOW)?;
    let vc = issue(
        &uni,
        &uni_did,
        IssueRequest {
            subject_did: alice.did().clone(),
            claims: vec![
                ("grade".into(), "A".into()),
                ("ssn".into(), "123-45-6789".into()),
                ("gpa".into(), ClaimValue::Real(3.6)),
            ],
            class: CredentialClass::Institutional,
            provenance: None,
            lifetime: None,
            status_ref: list.next_ref(),
        },
        NOW,
    )?;
    list.register(&vc, &uni, NOW)?;

    let policy = DisclosurePolicy::deny_by_default("grade-only", ["grade"], vec![Predicate::new("gpa", Comparator::Ge, 3.0)]);
    let request = PresentationRequest::claims(["grade", "ssn"]).with_predicate(Predicate::new("gpa", Comparator::Ge, 3.0));
    let vp = credential::present(&vc, &policy, &request, &alice.keys, b"n", list.staple(vc.id(), &uni, NOW)?, None, NOW)?;

    let verified = credential::verify(&vp, &registry.resolve(&uni_did)?, &alice.doc, &VerifierPolicy::default(), Some(b"n"), NOW)?;
    println!("revealed:   {:?}", verified.revealed);
    for p in &verified.predicates {
        println!("predicate:  {} {:?} {:?} -> {}", p.predicate.key, p.predicate.comparator, p.predicate.bound, p.result);
    }
    let wire = serde_json::to_string(&vp)?;
    println!("ssn on the wire: {}", wire.contains("123-45-6789"));
    Ok(())
}
