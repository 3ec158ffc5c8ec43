use std::path::Path;

use hse_core::aec::process_aec;
use hse_core::enhance::{ExchangeFile, OutputMode, StreamLabel};
use hse_core::pipeline::{
    enhance_signal, evaluate_utterance, export_features, net_output, oracle_net_output, OracleKind,
    PipelineConfig, SystemRun,
};
use hse_core::sim::{build_dataset, load_meta, load_mixture, parse_manifest, Condition};
use hse_core::{stft, Layout};

const MANIFEST: &str = r#"{"id":"full","far_end":{"synth":"speech","seconds":2.0},"near_end":{"synth":"speech","seconds":2.0},"noise":{"synth":"white","seconds":2.0},"ser_db":0,"snr_db":10,"seed":11}
{"id":"echo","far_end":{"synth":"speech","seconds":2.0},"near_end":{"synth":"speech","seconds":2.0},"ser_db":0,"snr_db":"inf","seed":12,"condition":"echo_only"}
{"id":"noise","far_end":{"synth":"speech","seconds":2.0},"near_end":{"synth":"speech","seconds":2.0},"noise":{"synth":"babble","seconds":2.0},"ser_db":0,"snr_db":8,"seed":13,"condition":"noise_only"}"#;

fn render(dir: &Path) {
    let entries = parse_manifest(MANIFEST).unwrap();
    let summary = build_dataset(&entries, 0, dir, dir);
    assert!(summary.failures.is_empty(), "{:?}", summary.failures);
    assert_eq!(summary.written.len(), 3);
}

#[test]
fn dataset_through_both_stages() {
    let dir = tempfile::tempdir().unwrap();
    render(dir.path());
    let cfg = PipelineConfig::default();
    let frame = cfg.frame_config().unwrap();
    for id in ["full", "echo", "noise"] {
        let mix_dir = dir.path().join(id);
        let meta = load_meta(&mix_dir).unwrap();
        let b = load_mixture(&mix_dir).unwrap();
        let aec = process_aec(&b.x, &b.y, &cfg.kalman).unwrap();

        let trace = ExchangeFile::from_frames(Layout::OneSided, StreamLabel::W, &aec.trace).unwrap();
        let trace = ExchangeFile::from_bytes(&trace.to_bytes()).unwrap();
        assert_eq!(trace.n_frames, b.len().div_ceil(cfg.kalman.shift));
        let w = trace.frames64(StreamLabel::W).unwrap();

        let feats = export_features(&b.y, &b.x, &aec.d_hat, &aec.e, cfg.input_set, &frame).unwrap();
        assert_eq!(feats.labels(), vec![StreamLabel::E]);

        let net = oracle_net_output(OracleKind::Wiener, OutputMode::OutM, &aec.e, &b.s_mic, &frame).unwrap();
        let net_file = ExchangeFile::from_spectrograms(&[(StreamLabel::M, &net)]).unwrap();
        let e_spec = stft(&aec.e, &frame).unwrap();
        let net = net_output(&net_file, OutputMode::OutM, &e_spec).unwrap();
        let out = enhance_signal(&aec.e, &net, OutputMode::OutM, &frame).unwrap();
        assert_eq!(out.len(), b.len());

        let run = SystemRun {
            e: &aec.e,
            w_trace: &w,
            net: &net,
            output: &out,
        };
        let (m, _) = evaluate_utterance(id, meta.condition, &b, run, &cfg).unwrap();
        assert!(m.is_ok(), "{id}: {:?}", m.error);
        match meta.condition {
            Condition::Full => {
                assert!(m.erle_bb.is_some() && m.dsnr_bb.is_some());
                assert!(m.erle_echo_only.is_none());
            }
            Condition::EchoOnly => {
                assert!(b.s_mic.is_silent() && b.n_mic.is_silent());
                assert!(m.erle_echo_only.unwrap().db > 0.0);
            }
            Condition::NoiseOnly => {
                assert!(b.d.is_silent() && b.s_mic.is_silent());
                assert!(m.dsnr_noise_only.unwrap() > 0.0);
            }
            Condition::SpeechOnly => unreachable!(),
        }
    }
}

#[test]
fn network_output_shape_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    render(dir.path());
    let b = load_mixture(&dir.path().join("full")).unwrap();
    let cfg = PipelineConfig::default();
    let frame = cfg.frame_config().unwrap();
    let e_spec = stft(&b.y, &frame).unwrap();
    let short = stft(&b.y.resized(b.len() - 2048), &frame).unwrap();
    let file = ExchangeFile::from_spectrograms(&[(StreamLabel::M, &short)]).unwrap();
    assert!(net_output(&file, OutputMode::OutM, &e_spec).is_err());
    let file = ExchangeFile::from_spectrograms(&[(StreamLabel::Shat, &e_spec)]).unwrap();
    assert!(net_output(&file, OutputMode::OutM, &e_spec).is_err());
    assert!(net_output(&file, OutputMode::OutE, &e_spec).is_ok());
}

#[test]
fn rendering_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    render(a.path());
    render(b.path());
    for id in ["full", "echo", "noise"] {
        for f in ["x.wav", "y.wav", "d.wav", "s.wav", "n.wav", "meta.json"] {
            let fa = std::fs::read(a.path().join(id).join(f)).unwrap();
            let fb = std::fs::read(b.path().join(id).join(f)).unwrap();
            assert_eq!(fa, fb, "{id}/{f}");
        }
    }
}
