mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tnnc_core::format::{encode_blob, load_model, save_model, FormatError, ModelManifest};
use tnnc_core::interpreter::forward_flat;
use tnnc_core::WeightStore;

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn save_then_load_is_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_chain(&mut rng, 6);
        let w = WeightStore::random(&g, seed);
        let (text, blob) = save_model(&g, &w).unwrap();
        let (g2, w2) = load_model(&text, &blob).unwrap();
        prop_assert_eq!(g2.layers(), g.layers());
        prop_assert_eq!(g2.input_shape(), g.input_shape());
        prop_assert_eq!(w2.flatten(), w.flatten());
        let (text2, blob2) = save_model(&g2, &w2).unwrap();
        prop_assert_eq!(&text2, &text);
        prop_assert_eq!(&blob2, &blob);
        let x = vec![0.25f32; g.input_shape().element_count()];
        prop_assert_eq!(forward_flat(&g, &w, &x).unwrap(), forward_flat(&g2, &w2, &x).unwrap());
        prop_assert!(ModelManifest::parse(&text).is_ok());
    }

    #[test]
    fn corrupted_blobs_are_rejected(seed in any::<u64>(), flip in any::<prop::sample::Index>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_chain(&mut rng, 4);
        let w = WeightStore::random(&g, seed);
        let (text, mut blob) = save_model(&g, &w).unwrap();
        prop_assume!(!blob.is_empty());
        let i = flip.index(blob.len());
        blob[i] ^= 0x01;
        prop_assert!(load_model(&text, &blob).is_err());
        let (_, good) = save_model(&g, &w).unwrap();
        prop_assert!(load_model(&text, &good[..good.len() - 4]).is_err());
    }
}

#[test]
fn non_finite_weights_are_rejected() {
    let (g, w) = tnnc_core::zoo::bundled("cnn-lstm").unwrap();
    let (text, _) = save_model(&g, &w).unwrap();
    let mut values = w.flatten();
    values[3] = f32::NAN;
    let mut manifest = ModelManifest::parse(&text).unwrap();
    manifest.sha256 = None;
    let r = load_model(&manifest.to_canonical_string(), &encode_blob(&values));
    assert!(matches!(r, Err(FormatError::NonFiniteWeight { .. })), "{r:?}");
}
