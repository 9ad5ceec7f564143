use ler_core::credential::DisclosurePolicy;
use ler_gateway::WalletStore;
use proptest::prelude::*;

fn key() -> impl Strategy<Value = String> {
    "[a-z]{1,8}(\\.[a-z]{1,6})?(\\.\\*)?"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn persisted_state_reloads_byte_identical(
        policies in proptest::collection::btree_map("[a-z_]{1,12}", proptest::collection::vec(key(), 0..5), 0..4),
        denied in proptest::collection::btree_set("[a-z0-9-]{1,20}", 0..6),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let store = WalletStore::open(dir.path().join("wallet.json")).unwrap();
        store.update(|s| {
            for (class, keys) in &policies {
                s.wallet.policies.insert(class.clone(), DisclosurePolicy::deny_by_default(class, keys.clone(), vec![]));
            }
            s.denied = denied.clone();
            Ok(())
        }).unwrap();
        let reloaded = WalletStore::open(store.path()).unwrap();
        prop_assert_eq!(reloaded.snapshot(), store.snapshot());
        prop_assert_eq!(reloaded.to_canonical().unwrap(), std::fs::read(store.path()).unwrap());
    }
}
