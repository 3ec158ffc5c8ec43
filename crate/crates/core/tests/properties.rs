use hse_core::aec::{process_aec, replay_echo_estimate, KalmanConfig};
use hse_core::pipeline::InputSet;
use hse_core::{istft, stft, AudioSignal, FrameConfig};
use proptest::prelude::*;

fn signal(len: std::ops::Range<usize>) -> impl Strategy<Value = AudioSignal> {
    prop::collection::vec(-1.0f64..1.0, len).prop_map(|v| AudioSignal::new(v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stft_roundtrip_interior(x in signal(1024..6000)) {
        let cfg = FrameConfig::enhancement();
        let y = istft(&stft(&x, &cfg).unwrap()).unwrap();
        prop_assert_eq!(y.len(), x.len());
        prop_assert!(y.max_abs_diff(&x, 256..x.len() - 256) < 1e-10);
    }

    #[test]
    fn stft_is_linear(a in signal(2048..2049), b in signal(2048..2049), g in -3.0f64..3.0) {
        let cfg = FrameConfig::enhancement();
        let sum = stft(&a.add(&b.scaled(g)).unwrap(), &cfg).unwrap();
        let sa = stft(&a, &cfg).unwrap();
        let sb = stft(&b, &cfg).unwrap();
        for ((fs, fa), fb) in sum.frames().iter().zip(sa.frames()).zip(sb.frames()) {
            for ((s, a), b) in fs.iter().zip(fa).zip(fb) {
                prop_assert!((s - (a + b * g)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn aec_output_is_mic_minus_estimate(x in signal(1000..3000), g in 0.1f64..1.0) {
        let cfg = KalmanConfig::default();
        let y = x.scaled(g);
        let out = process_aec(&x, &y, &cfg).unwrap();
        prop_assert_eq!(out.trace.len(), x.len().div_ceil(cfg.shift));
        let recon = out.e.add(&out.d_hat).unwrap();
        prop_assert!(recon.max_abs_diff(&y, 0..y.len()) < 1e-12);
        let replay = replay_echo_estimate(&x, &out.trace, &cfg).unwrap();
        prop_assert_eq!(replay, out.d_hat);
    }

    #[test]
    fn input_set_display_parses_back(bits in 0u8..8) {
        let set = InputSet::all_e_sets()[bits as usize];
        let back: InputSet = set.to_string().parse().unwrap();
        prop_assert_eq!(back, set);
    }
}
