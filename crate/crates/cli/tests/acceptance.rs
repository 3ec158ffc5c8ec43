//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Every reference value is computed here, independently of the
//! library code under test.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use hse_core::aec::process_aec;
use hse_core::dsp::{istft, stft, AudioSignal, FrameConfig};
use hse_core::enhance::{apply_complex_mask, OutputMode, MASK_EPSILON};
use hse_core::eval::{
    blackbox_separate, delta_snr, erle, postfilter_gain_from_run, replay_output, OperatorTrace,
    DEFAULT_GAIN_CAP, ERLE_ACTIVITY_DB,
};
use hse_core::pipeline::{enhance_signal, oracle_net_output, OracleKind};
use hse_core::sim::{
    image_method_rir, mix_scenario, sources, EchoScenario, MixtureBundle, NonlinearityParams,
    RoomSpec,
};
use hse_core::KalmanConfig;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const FS: f64 = 16000.0;

/// Segmental ERLE of the final second of the 10 s convergence run, frozen
/// from the first run verified against the time-domain convolution oracle.
const FROZEN_FINAL_ERLE_DB: f64 = 39.046;
/// Kalman-only ERLE_BB reported for nonlinear double-talk conditions.
const REFERENCE_KALMAN_ERLE_BB_DB: f64 = 5.00;

fn uniform_unit_power(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let a = 3f64.sqrt();
    (0..len).map(|_| rng.random_range(-a..a)).collect()
}

fn sig(v: Vec<f64>) -> AudioSignal {
    AudioSignal::new(v).unwrap()
}

fn room(t60: f64, rir_len: usize) -> RoomSpec {
    RoomSpec {
        dimensions: [5.0, 4.0, 3.0],
        source_pos: [1.5, 1.2, 1.4],
        mic_pos: [3.2, 2.6, 1.5],
        t60,
        rir_len,
    }
}

/// Direct-form `y[n] = Σ h[k] x[n-k]`, truncated to the input length.
fn convolve_oracle(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| (0..h.len().min(n + 1)).map(|k| h[k] * x[n - k]).sum())
        .collect()
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn db(num: f64, den: f64) -> f64 {
    10.0 * (num / den).log10()
}

fn stft_reconstruction() -> Outcome {
    let start = Instant::now();
    let cfg = FrameConfig::enhancement();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = sig((0..48000).map(|_| rng.random_range(-1.0..1.0)).collect());
        let y = istft(&stft(&x, &cfg).unwrap()).unwrap();
        worst = worst.max(y.max_abs_diff(&x, 256..x.len() - 256));
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("max interior deviation {worst:.2e}, {secs:.2} s for 100 signals");
    if worst < 1e-10 && secs < 5.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Mean over 256-sample segments of `10·log10(Σd²/Σe²)`.
fn segmental_erle(d: &[f64], e: &[f64]) -> f64 {
    let segs: Vec<f64> = d.chunks(256).zip(e.chunks(256)).map(|(a, b)| db(energy(a), energy(b))).collect();
    segs.iter().sum::<f64>() / segs.len() as f64
}

fn fdakf_convergence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = image_method_rir(&room(0.2, 512)).unwrap();
    let x = uniform_unit_power(10 * 16000, &mut rng);
    let d = convolve_oracle(&x, &h);
    let out = process_aec(&sig(x), &sig(d.clone()), &KalmanConfig::default()).unwrap();
    let tail = d.len() - 16000;
    let e = &out.e.samples()[tail..];
    let err: Vec<f64> = d[tail..].iter().zip(out.d_hat.samples()[tail..].iter()).map(|(a, b)| a - b).collect();
    let seg = segmental_erle(&d[tail..], e);
    let consistent = e.iter().zip(&err).all(|(a, b)| (a - b).abs() < 1e-12);
    let detail = format!("final-second segmental ERLE {seg:.3} dB (frozen {FROZEN_FINAL_ERLE_DB:.3} dB)");
    if seg >= 25.0 && consistent && (seg - FROZEN_FINAL_ERLE_DB).abs() <= 0.1 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Corpus-mean ERLE_BB of the echo canceller alone (transparent
/// postfilter) on nonlinear double-talk mixtures at SER 3.5 dB, SNR 10 dB.
fn kalman_erle_bb() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let frame = FrameConfig::enhancement();
    let cfg = KalmanConfig::default();
    let n = 12;
    let mut total = 0.0;
    for i in 0..n {
        let len = 4 * 16000;
        let noise = if i % 2 == 0 {
            sources::white_noise(len, &mut rng)
        } else {
            sources::babble(len, &mut rng)
        };
        let scn = EchoScenario {
            far_end: sig(sources::speech_like(len, &mut rng)),
            near_end: sig(sources::speech_like(len, &mut rng)),
            noise: sig(noise),
            room: RoomSpec::random(&mut rng, 0.2, 512).unwrap(),
            nl: NonlinearityParams::default(),
            ser_db: 3.5,
            snr_db: 10.0,
            seed: i,
        };
        let b = mix_scenario(&scn).unwrap();
        let aec = process_aec(&b.x, &b.y, &cfg).unwrap();
        let net = oracle_net_output(OracleKind::Identity, OutputMode::OutM, &aec.e, &b.s_mic, &frame).unwrap();
        let e_spec = stft(&aec.e, &frame).unwrap();
        let trace = OperatorTrace {
            w: aec.trace.clone(),
            g: postfilter_gain_from_run(&e_spec, &net, OutputMode::OutM, DEFAULT_GAIN_CAP).unwrap(),
            mode: OutputMode::OutM,
        };
        let comps = blackbox_separate(&trace, &b, &cfg, &frame).unwrap();
        total += erle(&b.d, &comps.d_tilde, ERLE_ACTIVITY_DB).unwrap().db;
    }
    let mean = total / n as f64;
    let detail = format!(
        "mean ERLE_BB {mean:.2} dB over {n} mixtures (reference {REFERENCE_KALMAN_ERLE_BB_DB:.2} ± 3 dB)"
    );
    if (mean - REFERENCE_KALMAN_ERLE_BB_DB).abs() <= 3.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn zero_excitation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = KalmanConfig::default();
    let len = 3 * 16000 + 123;
    let y = sig(uniform_unit_power(len, &mut rng));
    let x = sig(uniform_unit_power(len, &mut rng));
    let a = process_aec(&AudioSignal::zeros(len), &y, &cfg).unwrap();
    let b = process_aec(&x, &AudioSignal::zeros(len), &cfg).unwrap();
    let e_is_y = a.e.samples().iter().zip(y.samples()).all(|(p, q)| p.to_bits() == q.to_bits());
    let e_is_zero = b.e.samples().iter().all(|v| *v == 0.0);
    let detail = format!("x≡0 ⇒ e≡y: {e_is_y}; y≡0 ⇒ e≡0: {e_is_zero}");
    if e_is_y && e_is_zero {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn log_uniform(rng: &mut ChaCha8Rng) -> Complex64 {
    let mag = 10f64.powf(rng.random_range(-8.0..6.0));
    Complex64::from_polar(mag, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
}

fn mask_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 1_000_000;
    let chunk = 1000;
    let mut violations = 0;
    for _ in 0..n / chunk {
        let e: Vec<Complex64> = (0..chunk).map(|_| log_uniform(&mut rng)).collect();
        let m: Vec<Complex64> = (0..chunk).map(|_| log_uniform(&mut rng)).collect();
        let s = apply_complex_mask(&e, &m, MASK_EPSILON).unwrap();
        violations += s.iter().zip(&e).filter(|(s, e)| s.norm() > e.norm()).count();
    }
    let mut worst_gain = 0.0f64;
    let mut worst_phase = 0.0f64;
    for _ in 0..1000 {
        let e = log_uniform(&mut rng);
        let m = Complex64::from_polar(rng.random_range(100.0..1e6), rng.random_range(-3.0..3.0));
        let s = apply_complex_mask(&[e], &[m], MASK_EPSILON).unwrap()[0];
        worst_gain = worst_gain.max((s.norm() / e.norm() - 1.0).abs());
        let dphi = (s / e).arg() - m.arg();
        worst_phase = worst_phase.max(dphi.sin().abs());
    }
    let detail = format!(
        "{violations} violations in {n} pairs; large-|M| gain error {worst_gain:.1e}, phase error {worst_phase:.1e}"
    );
    if violations == 0 && worst_gain <= 1e-8 && worst_phase <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Frames of 256 samples within 40 dB of the loudest frame of `s`.
fn activity_oracle(s: &[f64]) -> Vec<bool> {
    let e: Vec<f64> = s.chunks(256).map(energy).collect();
    let peak = e.iter().cloned().fold(0.0, f64::max);
    e.iter().map(|&v| v > 0.0 && v >= peak * 1e-4).collect()
}

fn active_ratio_db(s: &[f64], other: &[f64]) -> f64 {
    let act = activity_oracle(s);
    let pick = |x: &[f64]| -> f64 {
        x.chunks(256).zip(&act).filter(|(_, a)| **a).map(|(c, _)| energy(c)).sum()
    };
    db(pick(s), pick(other))
}

fn mixer_levels() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let len = 32000;
    let far = sig(sources::speech_like(len, &mut rng));
    let near = sig(sources::speech_like(len, &mut rng));
    let noise = sig(sources::white_noise(len, &mut rng));
    let base = EchoScenario {
        far_end: far,
        near_end: near,
        noise,
        room: room(0.2, 512),
        nl: NonlinearityParams::default(),
        ser_db: 0.0,
        snr_db: 0.0,
        seed: 0,
    };
    let mut worst = 0.0f64;
    let mut cases = 0;
    for ser in -6..=6 {
        for snr in 8..=14 {
            let scn = EchoScenario {
                ser_db: ser as f64,
                snr_db: snr as f64,
                ..base.clone()
            };
            let b = mix_scenario(&scn).unwrap();
            let s = b.s_mic.samples();
            worst = worst
                .max((active_ratio_db(s, b.d.samples()) - ser as f64).abs())
                .max((active_ratio_db(s, b.n_mic.samples()) - snr as f64).abs());
            cases += 1;
        }
    }
    let inf = f64::INFINITY;
    let mut sentinels = true;
    for (ser, snr) in [(inf, 10.0), (3.0, inf), (inf, inf)] {
        let b = mix_scenario(&EchoScenario {
            ser_db: ser,
            snr_db: snr,
            ..base.clone()
        })
        .unwrap();
        let zero = |x: &AudioSignal| x.samples().iter().all(|v| *v == 0.0);
        sentinels &= zero(&b.d) == ser.is_infinite() && zero(&b.n_mic) == snr.is_infinite();
    }
    let detail = format!("{cases} SER/SNR pairs, max level error {worst:.2e} dB; ∞ sentinels exact: {sentinels}");
    if worst <= 1e-6 && sentinels {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// T60 from a straight-line fit of the Schroeder decay between −5 and −35 dB.
fn schroeder_t60(h: &[f64]) -> f64 {
    let mut edc = vec![0.0; h.len()];
    let mut acc = 0.0;
    for i in (0..h.len()).rev() {
        acc += h[i] * h[i];
        edc[i] = acc;
    }
    let pts: Vec<(f64, f64)> = edc
        .iter()
        .enumerate()
        .map(|(i, &v)| (i as f64 / FS, 10.0 * (v / edc[0]).log10()))
        .filter(|(_, l)| (-35.0..=-5.0).contains(l))
        .collect();
    let n = pts.len() as f64;
    let (mt, ml) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    -60.0 / (cov / var)
}

fn rir_t60() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for t60 in [0.2, 0.3, 0.4] {
        let h = image_method_rir(&room(t60, (t60 * FS).round() as usize)).unwrap();
        let est = schroeder_t60(&h);
        let rel = (est - t60) / t60;
        ok &= rel.abs() <= 0.2;
        parts.push(format!("{t60:.1} s → {est:.3} s ({:+.1}%)", 100.0 * rel));
    }
    let detail = parts.join(", ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_mixture(rng: &mut ChaCha8Rng, i: u64) -> MixtureBundle {
    let len = 3 * 16000;
    let ser = [-6.0, -3.0, 0.0, 3.5, 6.0][i as usize % 5];
    let snr = [8.0, 10.0, 12.0, 14.0][i as usize % 4];
    mix_scenario(&EchoScenario {
        far_end: sig(sources::speech_like(len, rng)),
        near_end: sig(sources::speech_like(len, rng)),
        noise: sig(sources::babble(len, rng)),
        room: RoomSpec::random(rng, 0.2, 512).unwrap(),
        nl: NonlinearityParams::default(),
        ser_db: ser,
        snr_db: snr,
        seed: i,
    })
    .unwrap()
}

fn blackbox_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let frame = FrameConfig::enhancement();
    let cfg = KalmanConfig::default();
    let mut worst_sum = 0.0f64;
    let mut worst_single = 0.0f64;
    for i in 0..20 {
        let b = random_mixture(&mut rng, i);
        let aec = process_aec(&b.x, &b.y, &cfg).unwrap();
        let silent = AudioSignal::zeros(b.len());
        for mode in [OutputMode::OutE, OutputMode::OutM] {
            let net = oracle_net_output(OracleKind::Wiener, mode, &aec.e, &b.s_mic, &frame).unwrap();
            let output = enhance_signal(&aec.e, &net, mode, &frame).unwrap();
            let e_spec = stft(&aec.e, &frame).unwrap();
            let trace = OperatorTrace {
                w: aec.trace.clone(),
                g: postfilter_gain_from_run(&e_spec, &net, mode, DEFAULT_GAIN_CAP).unwrap(),
                mode,
            };
            let comps = blackbox_separate(&trace, &b, &cfg, &frame).unwrap();
            let sum = comps.sum().unwrap();
            worst_sum = worst_sum.max(sum.max_abs_diff(&output, 0..output.len()));

            let d_only = replay_output(&trace, &b.d, &b.x, &cfg, &frame).unwrap();
            let s_only = replay_output(&trace, &b.s_mic, &silent, &cfg, &frame).unwrap();
            let n_only = replay_output(&trace, &b.n_mic, &silent, &cfg, &frame).unwrap();
            let singles = d_only.add(&s_only).unwrap().add(&n_only).unwrap();
            worst_single = worst_single.max(singles.max_abs_diff(&output, 0..output.len()));
        }
    }
    let detail = format!(
        "20 mixtures × OutE/OutM: |d̃+ñ+s̃ − ŝ| ≤ {worst_sum:.2e}, single-component runs ≤ {worst_single:.2e}"
    );
    if worst_sum < 1e-6 && worst_single < 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = sig(uniform_unit_power(16000, &mut rng));
    let s = sig(sources::speech_like(16000, &mut rng));
    let n = sig(uniform_unit_power(16000, &mut rng));
    let erle_err = (erle(&d, &d.scaled(0.1), ERLE_ACTIVITY_DB).unwrap().db - 20.0).abs();
    let dsnr_err = (delta_snr(&s, &n, &s, &n.scaled(0.5)).unwrap() - 10.0 * 4f64.log10()).abs();
    let detail = format!("erle error {erle_err:.1e} dB, ΔSNR error {dsnr_err:.1e} dB");
    if erle_err <= 1e-9 && dsnr_err <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const DETERMINISM_MANIFEST: &str = r#"{"id":"u0","far_end":{"synth":"speech","seconds":3.0},"near_end":{"synth":"speech","seconds":3.0},"noise":{"synth":"babble","seconds":3.0},"ser_db":3.5,"snr_db":10}
{"id":"u1","far_end":{"synth":"speech","seconds":3.0},"near_end":{"synth":"speech","seconds":3.0},"noise":{"synth":"white","seconds":3.0},"ser_db":"random","snr_db":"random"}
{"id":"u2","far_end":{"synth":"white","seconds":3.0},"near_end":{"synth":"speech","seconds":3.0},"ser_db":0,"snr_db":"inf","condition":"echo_only"}
"#;

fn pipeline_report(dir: &Path, workers: &str) -> Result<Vec<u8>, String> {
    let manifest = dir.join("m.jsonl");
    fs::write(&manifest, DETERMINISM_MANIFEST).map_err(|e| e.to_string())?;
    let ds = dir.join("ds");
    let report = dir.join("report.json");
    let (m, ds_s, r) = (manifest.to_str().unwrap(), ds.to_str().unwrap(), report.to_str().unwrap());
    let steps: [&[&str]; 5] = [
        &["simulate", "--manifest", m, "--out", ds_s],
        &["aec", "--data", ds_s],
        &["oracle", "--data", ds_s, "--kind", "wiener"],
        &["enhance", "--data", ds_s],
        &["eval", "--data", ds_s, "--report", r],
    ];
    for step in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_hse"))
            .args(["--seed", "42", "--workers", workers])
            .args(step)
            .env_remove("HSE_PESQ")
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{} failed: {}", step[0], String::from_utf8_lossy(&out.stderr)));
        }
    }
    fs::read(&report).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ra = pipeline_report(a.path(), "1")?;
    let rb = pipeline_report(b.path(), "4")?;
    let detail = format!("two runs (1 and 4 workers), reports of {} and {} bytes", ra.len(), rb.len());
    if ra == rb {
        Ok(detail + ", byte-identical")
    } else {
        Err(detail + ", differ")
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("STFT reconstruction", stft_reconstruction),
        ("FDAKF convergence", fdakf_convergence),
        ("Kalman ERLE_BB under double talk", kalman_erle_bb),
        ("Zero-excitation identities", zero_excitation),
        ("Mask bound", mask_bound),
        ("Mixer level accuracy", mixer_levels),
        ("RIR T60 fidelity", rir_t60),
        ("Black-box separation exactness", blackbox_exactness),
        ("Metric oracles", metric_oracles),
        ("Determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(d) => println!("PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
