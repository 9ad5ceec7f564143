mod common;

use common::leakage::{hits, scan_fixture_corpus};
use common::{provider, world, T0};
use ler_core::enclave::{
    Enclave, EnclaveError, EnclaveSecrets, ModelBundle, SealedStore,
};
use ler_core::fixtures;

#[test]
fn no_raw_window_in_any_enclave_output() {
    let report = scan_fixture_corpus();
    assert!(report.corpora >= 10);
    assert!(report.output_bytes > 10_000);
    assert!(report.leaks.is_empty(), "{:?}", &report.leaks[..report.leaks.len().min(5)]);
}

#[test]
fn scanner_detects_a_planted_leak() {
    let raw = vec![b"Jordan Avery took CS101".to_vec()];
    assert_eq!(hits(b"{\"name\":\"Jordan Avery\"}", &raw, 8).len(), 5);
}

#[test]
fn sealed_blob_does_not_unseal_under_a_foreign_key() {
    let w = world(21);
    let store = w.enclave.sealed_store();
    let labels = store.labels();
    assert!(!labels.is_empty());
    let foreign = Enclave::with_secrets(
        EnclaveSecrets::generate(),
        ModelBundle::for_provider(w.provider.as_ref()),
        provider(),
        None,
    )
    .unwrap();
    assert_eq!(foreign.measurement(), w.enclave.measurement());
    for label in &labels {
        let blob = store.export(label).unwrap();
        assert!(matches!(
            foreign.sealed_store().unseal_blob(label, &blob),
            Err(EnclaveError::UnsealFailed(_))
        ));
        foreign.sealed_store().import(label, blob.clone()).unwrap();
        assert!(foreign.sealed_store().unseal(label).is_err());
        assert!(store.unseal(label).is_ok());
    }
    let derivation_id = w.holder.wallet.derivations.values().next().unwrap();
    assert!(foreign.reattest(derivation_id, b"n", T0).is_err());
}

#[test]
fn blob_moved_to_another_label_fails() {
    let store = SealedStore::new([5; 32]);
    store.seal("a", b"secret").unwrap();
    let blob = store.export("a").unwrap();
    assert!(matches!(store.unseal_blob("b", &blob), Err(EnclaveError::UnsealFailed(_))));
}

#[test]
fn credential_claims_do_not_depend_on_the_student_name() {
    let corpora = common::leakage::corpora();
    let enclave = Enclave::new(provider());
    let claims = |i: usize| {
        let (t, s) = &corpora[i];
        let out = common::leakage::outputs(&enclave, t, s, 0);
        let vc: ler_core::credential::VerifiableCredential = serde_json::from_slice(&out[0]).unwrap();
        vc.claims.iter().map(|c| (c.key.clone(), c.value.to_string())).collect::<Vec<_>>()
    };
    let last = corpora.len() - 1;
    assert_ne!(corpora[0].0.student_name, corpora[last].0.student_name);
    assert_eq!(claims(0), claims(last));
    assert_eq!(corpora[0].1, fixtures::syllabi());
}
