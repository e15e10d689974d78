//! Archive and config round-trips over randomized inputs.

use proptest::prelude::*;
use spkver::archive::{decode_features, encode_features};
use spkver::config::{render_synth_spec, synth_spec, KeyValues};
use spkver_core::synth::{generate, SynthSpec};

fn spec(n_speakers: usize, utts: usize, frames: usize, spread: f64, seed: u64) -> SynthSpec {
    SynthSpec {
        n_speakers,
        utts_per_speaker: utts,
        frames_per_utt: frames,
        speaker_spread: spread,
        seed,
        ..SynthSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_archive_round_trips(n in 1usize..6, utts in 1usize..4, frames in 1usize..60, seed in 0u64..1000) {
        let data = generate(&spec(n, utts, frames, 0.5, seed)).unwrap();
        let bytes = encode_features(&data).unwrap();
        let back = decode_features(&bytes, "mem").unwrap();
        prop_assert_eq!(encode_features(&back).unwrap(), bytes);
        for (a, b) in data.iter().zip(&back) {
            prop_assert_eq!(&a.utterance_id, &b.utterance_id);
            prop_assert_eq!(&a.speaker_id, &b.speaker_id);
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert_eq!(*x as f32 as f64, *y);
            }
        }
    }

    #[test]
    fn synth_spec_renders_and_parses_back(n in 1usize..500, utts in 1usize..30, frames in 1usize..5000,
                                          spread in 0.01f64..5.0, seed in any::<u64>()) {
        let s = spec(n, utts, frames, spread, seed);
        let mut kv = KeyValues::parse(&render_synth_spec(&s), "rendered").unwrap();
        prop_assert_eq!(synth_spec(&mut kv, "", 0).unwrap(), s);
    }
}
