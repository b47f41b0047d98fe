use mpgvae::checkpoint::{decode, encode};
use mpgvae::config_file::{model_config_text, parse_config, parse_model_config};
use mpgvae_core::{Model, ModelConfig};
use proptest::prelude::*;

fn widths() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..6, 1..4)
}

fn model_config() -> impl Strategy<Value = ModelConfig> {
    (widths(), widths(), 1usize..5, 1usize..5, 1usize..4, any::<bool>()).prop_map(
        |(encoder_widths, decoder_widths, half, latent_dim, set2set_steps, conditional)| ModelConfig {
            encoder_widths,
            decoder_widths,
            graph_width: 2 * half,
            latent_dim,
            set2set_steps,
            conditional,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn model_config_text_round_trips(c in model_config()) {
        prop_assert_eq!(parse_model_config(&model_config_text(&c)).unwrap(), c);
    }

    #[test]
    fn checkpoints_round_trip_and_reject_truncation(c in model_config(), seed in 0u64..100, epoch in 0usize..1000, cut in any::<prop::sample::Index>()) {
        let m = Model::<f32>::new(c.clone(), seed).unwrap();
        let bytes = encode(&m, epoch);
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(back.epoch, epoch);
        prop_assert_eq!(back.float_bytes, 4);
        prop_assert_eq!(&back.config, &c);
        prop_assert_eq!(back.model::<f32>().unwrap(), m);

        let n = cut.index(bytes.len());
        prop_assert!(decode(&bytes[..n]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        prop_assert!(decode(&longer).is_err());
    }

    #[test]
    fn decode_is_total(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode(&bytes);
        let mut framed = b"MPGV1".to_vec();
        framed.extend_from_slice(&bytes);
        let _ = decode(&framed);
    }

    #[test]
    fn config_parser_is_total(text in "([a-z_]{0,16}( ?= ?[-0-9a-z.,\\[\\]]{0,12})?( #.*)?\n){0,6}") {
        let _ = parse_config(&text);
    }
}
