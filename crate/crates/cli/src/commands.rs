use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use hse_core::aec::process_aec;
use hse_core::dsp::{read_wav, write_wav, AudioSignal};
use hse_core::enhance::{ExchangeFile, OutputMode, StreamLabel};
use hse_core::eval::{CorpusSummary, MetricsReport, UtteranceMetrics, PESQ_ENV};
use hse_core::pipeline::{
    enhance_signal, evaluate_utterance, export_features as features_of, net_output,
    oracle_net_output, InputSet, OracleKind, PipelineConfig, SystemRun,
};
use hse_core::sim::{build_dataset, load_meta, load_mixture, parse_manifest, Condition, META_FILE};
use hse_core::{stft, Layout, Spectrogram};

use crate::{files, CliError, Command, DataArgs, GlobalArgs, Outcome};

pub(crate) fn dispatch(global: &GlobalArgs, command: Command) -> Result<Outcome, CliError> {
    let mut cfg = load_config(global.config.as_deref())?;
    match command {
        Command::Simulate { manifest, out } => simulate(&manifest, &out, global.seed),
        Command::Aec { data } => aec(&data, &cfg),
        Command::ExportFeatures { data, inputs } => {
            if let Some(s) = inputs {
                cfg.input_set = parse_input_set(&s)?;
            }
            export_features(&data, &cfg)
        }
        Command::Oracle { data, kind, mode } => {
            set_mode(&mut cfg, mode)?;
            oracle(&data, &cfg, parse_oracle(&kind)?)
        }
        Command::Enhance { data, mode, net } => {
            set_mode(&mut cfg, mode)?;
            enhance(&data, &cfg, &net)
        }
        Command::Eval {
            data,
            mode,
            net,
            pesq,
            report,
        } => {
            set_mode(&mut cfg, mode)?;
            cfg.pesq_tool = pesq_tool(pesq, &cfg);
            let report = report.unwrap_or_else(|| data.work_dir().join(files::REPORT));
            eval(&data, &cfg, &net, &report)
        }
        Command::Ablate {
            data,
            mode,
            sets,
            net_root,
            oracle,
            pesq,
            report,
        } => {
            set_mode(&mut cfg, mode)?;
            cfg.pesq_tool = pesq_tool(pesq, &cfg);
            let sets = parse_set_list(&sets)?;
            let oracle = oracle.as_deref().map(parse_oracle).transpose()?;
            let net_root = net_root.unwrap_or_else(|| data.work_dir().join("ablate"));
            let report = report.unwrap_or_else(|| data.work_dir().join("ablation.json"));
            let (table, outcome) = ablate(&data, &cfg, &sets, NetSource { root: &net_root, oracle }, &report)?;
            print!("{}", table.to_table());
            Ok(outcome)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    PipelineConfig::from_json(&text)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn set_mode(cfg: &mut PipelineConfig, mode: Option<String>) -> Result<(), CliError> {
    if let Some(m) = mode {
        cfg.mode = m.parse::<OutputMode>().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn parse_input_set(s: &str) -> Result<InputSet, CliError> {
    s.parse().map_err(|e: hse_core::Error| CliError::Usage(e.to_string()))
}

fn parse_oracle(s: &str) -> Result<OracleKind, CliError> {
    s.parse().map_err(|e: hse_core::Error| CliError::Usage(e.to_string()))
}

/// Input sets in the order given; `all` expands to every set containing E.
pub(crate) fn parse_set_list(items: &[String]) -> Result<Vec<InputSet>, CliError> {
    if items.is_empty() {
        return Err(CliError::Usage("no input sets given".into()));
    }
    let mut sets = Vec::new();
    for item in items {
        if item.eq_ignore_ascii_case("all") {
            sets.extend(InputSet::all_e_sets());
        } else {
            sets.push(parse_input_set(item)?);
        }
    }
    Ok(sets)
}

fn pesq_tool(flag: Option<PathBuf>, cfg: &PipelineConfig) -> Option<PathBuf> {
    flag.or_else(|| cfg.pesq_tool.clone()).or_else(|| {
        std::env::var_os(PESQ_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    })
}

/// Sorted names of the mixture directories under `data`.
fn mixture_ids(data: &Path) -> Result<Vec<String>, CliError> {
    let entries = fs::read_dir(data)
        .with_context(|| format!("cannot read dataset {}", data.display()))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.with_context(|| format!("cannot read dataset {}", data.display()))?;
        if entry.path().join(META_FILE).is_file() {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    if ids.is_empty() {
        return Err(CliError::Data(anyhow::anyhow!("no mixtures found in {}", data.display())));
    }
    ids.sort();
    Ok(ids)
}

fn batch<T, F>(ids: &[String], f: F) -> Vec<anyhow::Result<T>>
where
    T: Send,
    F: Fn(&str) -> anyhow::Result<T> + Sync,
{
    ids.par_iter()
        .map(|id| f(id).with_context(|| format!("mixture {id}")))
        .collect()
}

fn finish<T>(results: Vec<anyhow::Result<T>>) -> Result<Outcome, CliError> {
    let total = results.len();
    let mut errors: Vec<anyhow::Error> = results.into_iter().filter_map(Result::err).collect();
    for e in &errors {
        eprintln!("error: {e:#}");
    }
    match errors.len() {
        0 => Ok(Outcome::Success),
        n if n == total => Err(CliError::Data(errors.remove(0))),
        failed => Ok(Outcome::Partial { failed, total }),
    }
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn read_spxc(path: &Path) -> anyhow::Result<ExchangeFile> {
    Ok(ExchangeFile::read(path)?)
}

fn read_trace(path: &Path) -> anyhow::Result<Vec<Vec<num_complex::Complex64>>> {
    let file = read_spxc(path)?;
    file.expect_labels(&[StreamLabel::W])
        .with_context(|| path.display().to_string())?;
    Ok(file.frames64(StreamLabel::W)?)
}

fn same_len(what: &str, path: &Path, sig: &AudioSignal, expected: usize) -> anyhow::Result<()> {
    if sig.len() != expected {
        bail!("{}: {what} has {} samples, expected {expected}", path.display(), sig.len());
    }
    Ok(())
}

pub fn simulate(manifest: &Path, out: &Path, seed: u64) -> Result<Outcome, CliError> {
    let text = fs::read_to_string(manifest)
        .with_context(|| format!("cannot read manifest {}", manifest.display()))?;
    let entries = parse_manifest(&text).map_err(|e| CliError::Data(anyhow::anyhow!("{}: {e}", manifest.display())))?;
    if entries.is_empty() {
        return Err(CliError::Data(anyhow::anyhow!("{}: manifest is empty", manifest.display())));
    }
    ensure_dir(out)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let summary = build_dataset(&entries, seed, base, out);
    for (id, err) in &summary.failures {
        eprintln!("error: {id}: {err}");
    }
    println!("wrote {} mixtures to {}", summary.written.len(), out.display());
    let total = entries.len();
    match summary.failures.len() {
        0 => Ok(Outcome::Success),
        n if n == total => Err(CliError::Data(anyhow::anyhow!("no mixture could be rendered"))),
        failed => Ok(Outcome::Partial { failed, total }),
    }
}

pub fn aec(data: &DataArgs, cfg: &PipelineConfig) -> Result<Outcome, CliError> {
    let ids = mixture_ids(&data.data)?;
    let work = data.work_dir();
    let results = batch(&ids, |id| {
        let mix = load_mixture(&data.data.join(id))?;
        let out = process_aec(&mix.x, &mix.y, &cfg.kalman)?;
        let dir = work.join(id);
        ensure_dir(&dir)?;
        write_wav(dir.join(files::E), &out.e)?;
        write_wav(dir.join(files::DHAT), &out.d_hat)?;
        ExchangeFile::from_frames(Layout::OneSided, StreamLabel::W, &out.trace)?
            .write(dir.join(files::TRACE))?;
        Ok(())
    });
    finish(results)
}

pub fn export_features(data: &DataArgs, cfg: &PipelineConfig) -> Result<Outcome, CliError> {
    let ids = mixture_ids(&data.data)?;
    let frame = cfg.frame_config()?;
    let work = data.work_dir();
    let results = batch(&ids, |id| {
        let mix = load_mixture(&data.data.join(id))?;
        let dir = work.join(id);
        let e = read_wav(dir.join(files::E))?;
        let d_hat = read_wav(dir.join(files::DHAT))?;
        same_len("AEC output", &dir.join(files::E), &e, mix.len())?;
        same_len("echo estimate", &dir.join(files::DHAT), &d_hat, mix.len())?;
        features_of(&mix.y, &mix.x, &d_hat, &e, cfg.input_set, &frame)?.write(dir.join(files::FEATURES))?;
        Ok(())
    });
    finish(results)
}

pub fn oracle(data: &DataArgs, cfg: &PipelineConfig, kind: OracleKind) -> Result<Outcome, CliError> {
    let ids = mixture_ids(&data.data)?;
    let frame = cfg.frame_config()?;
    let work = data.work_dir();
    let results = batch(&ids, |id| {
        let mix = load_mixture(&data.data.join(id))?;
        let dir = work.join(id);
        let e = read_wav(dir.join(files::E))?;
        same_len("AEC output", &dir.join(files::E), &e, mix.len())?;
        let net = oracle_net_output(kind, cfg.mode, &e, &mix.s_mic, &frame)?;
        ExchangeFile::from_spectrograms(&[(cfg.mode.net_label(), &net)])?.write(dir.join(files::NET))?;
        Ok(())
    });
    finish(results)
}

/// AEC output of one mixture and the network output read against it.
fn load_second_stage(
    dir: &Path,
    net_path: &Path,
    cfg: &PipelineConfig,
) -> anyhow::Result<(AudioSignal, Spectrogram)> {
    let e = read_wav(dir.join(files::E))?;
    let e_spec = stft(&e, &cfg.frame_config()?)?;
    let net = net_output(&read_spxc(net_path)?, cfg.mode, &e_spec)
        .with_context(|| net_path.display().to_string())?;
    Ok((e, net))
}

pub fn enhance(data: &DataArgs, cfg: &PipelineConfig, net_name: &str) -> Result<Outcome, CliError> {
    let ids = mixture_ids(&data.data)?;
    let frame = cfg.frame_config()?;
    let work = data.work_dir();
    let results = batch(&ids, |id| {
        let dir = work.join(id);
        let (e, net) = load_second_stage(&dir, &dir.join(net_name), cfg)?;
        let out = enhance_signal(&e, &net, cfg.mode, &frame)?;
        write_wav(dir.join(files::ENHANCED), &out)?;
        Ok(())
    });
    finish(results)
}

fn eval_one(
    data: &Path,
    dir: &Path,
    id: &str,
    cfg: &PipelineConfig,
    net_path: &Path,
    output: Option<&AudioSignal>,
) -> anyhow::Result<(UtteranceMetrics, Vec<String>)> {
    let mix_dir = data.join(id);
    let meta = load_meta(&mix_dir)?;
    let mix = load_mixture(&mix_dir)?;
    let w = read_trace(&dir.join(files::TRACE))?;
    let (e, net) = load_second_stage(dir, net_path, cfg)?;
    same_len("AEC output", &dir.join(files::E), &e, mix.len())?;
    let owned;
    let output = match output {
        Some(o) => o,
        None => {
            let path = dir.join(files::ENHANCED);
            owned = read_wav(&path)?;
            same_len("enhanced output", &path, &owned, mix.len())?;
            &owned
        }
    };
    let run = SystemRun {
        e: &e,
        w_trace: &w,
        net: &net,
        output,
    };
    Ok(evaluate_utterance(id, meta.condition, &mix, run, cfg)?)
}

fn condition_of(data: &Path, id: &str) -> Condition {
    load_meta(&data.join(id)).map(|m| m.condition).unwrap_or_default()
}

fn collect_report(
    data: &Path,
    ids: &[String],
    cfg: &PipelineConfig,
    results: Vec<anyhow::Result<(UtteranceMetrics, Vec<String>)>>,
) -> MetricsReport {
    let mut utterances = Vec::with_capacity(ids.len());
    let mut warnings = Vec::new();
    for (id, r) in ids.iter().zip(results) {
        match r {
            Ok((m, w)) => {
                utterances.push(m);
                warnings.extend(w);
            }
            Err(e) => utterances.push(UtteranceMetrics::failed(id.clone(), condition_of(data, id), format!("{e:#}"))),
        }
    }
    MetricsReport::new(cfg.mode.to_string(), cfg.input_set.to_string(), utterances, warnings)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn report_outcome(report: &MetricsReport) -> Outcome {
    for u in &report.utterances {
        if let Some(e) = &u.error {
            eprintln!("error: {}: {e}", u.id);
        }
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    match report.summary.failed {
        0 => Outcome::Success,
        failed => Outcome::Partial {
            failed,
            total: report.summary.utterances,
        },
    }
}

pub fn eval(data: &DataArgs, cfg: &PipelineConfig, net_name: &str, report_path: &Path) -> Result<Outcome, CliError> {
    let ids = mixture_ids(&data.data)?;
    let work = data.work_dir();
    let results: Vec<_> = ids
        .par_iter()
        .map(|id| {
            let dir = work.join(id);
            eval_one(&data.data, &dir, id, cfg, &dir.join(net_name), None)
        })
        .collect();
    let report = collect_report(&data.data, &ids, cfg, results);
    write_json(report_path, &report)?;
    let s = &report.summary;
    println!(
        "{} utterances, {} failed; ERLE_BB {} dB, dSNR_BB {} dB, PESQ {}",
        s.utterances,
        s.failed,
        fmt_opt(s.erle_bb),
        fmt_opt(s.dsnr_bb),
        fmt_opt(s.pesq_full)
    );
    Ok(report_outcome(&report))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.2}"))
}

/// Where `ablate` gets its network outputs.
#[derive(Clone, Copy, Debug)]
pub struct NetSource<'a> {
    pub root: &'a Path,
    pub oracle: Option<OracleKind>,
}

/// Directory name of an input set, e.g. `Y_Dhat_E`.
pub fn set_dir_name(set: InputSet) -> String {
    set.to_string().replace(',', "_")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblateRow {
    pub input_set: String,
    pub summary: CorpusSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblateReport {
    pub mode: String,
    pub rows: Vec<AblateRow>,
}

impl AblateReport {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<14} {:>8} {:>10} {:>10} {:>8}\n",
            format!("inputs ({})", self.mode),
            "PESQ",
            "ERLE_BB",
            "dSNR_BB",
            "failed"
        );
        for r in &self.rows {
            out += &format!(
                "{:<14} {:>8} {:>10} {:>10} {:>8}\n",
                r.input_set,
                fmt_opt(r.summary.pesq_full),
                fmt_opt(r.summary.erle_bb),
                fmt_opt(r.summary.dsnr_bb),
                r.summary.failed
            );
        }
        out
    }
}

pub fn ablate(
    data: &DataArgs,
    cfg: &PipelineConfig,
    sets: &[InputSet],
    source: NetSource<'_>,
    report_path: &Path,
) -> Result<(AblateReport, Outcome), CliError> {
    if sets.is_empty() {
        return Err(CliError::Usage("no input sets given".into()));
    }
    let ids = mixture_ids(&data.data)?;
    let work = data.work_dir();
    let frame = cfg.frame_config()?;
    let mut rows = Vec::with_capacity(sets.len());
    let (mut failed, mut total) = (0, 0);
    for &set in sets {
        let set_cfg = PipelineConfig {
            input_set: set,
            ..cfg.clone()
        };
        let set_dir = source.root.join(set_dir_name(set));
        let results: Vec<_> = ids
            .par_iter()
            .map(|id| {
                let dir = work.join(id);
                let net_path = match source.oracle {
                    Some(kind) => {
                        let mix = load_mixture(&data.data.join(id))?;
                        let e = read_wav(dir.join(files::E))?;
                        let net = oracle_net_output(kind, cfg.mode, &e, &mix.s_mic, &frame)?;
                        let path = set_dir.join(id).join(files::NET);
                        ensure_dir(path.parent().expect("has parent"))?;
                        ExchangeFile::from_spectrograms(&[(cfg.mode.net_label(), &net)])?.write(&path)?;
                        path
                    }
                    None => set_dir.join(id).join(files::NET),
                };
                let (e, net) = load_second_stage(&dir, &net_path, &set_cfg)?;
                let out = enhance_signal(&e, &net, cfg.mode, &frame)?;
                eval_one(&data.data, &dir, id, &set_cfg, &net_path, Some(&out))
            })
            .collect();
        let report = collect_report(&data.data, &ids, &set_cfg, results);
        if let Outcome::Partial { failed: f, .. } = report_outcome(&report) {
            failed += f;
        }
        total += report.summary.utterances;
        rows.push(AblateRow {
            input_set: set.to_string(),
            summary: report.summary,
        });
    }
    let report = AblateReport {
        mode: cfg.mode.to_string(),
        rows,
    };
    write_json(report_path, &report)?;
    let outcome = match failed {
        0 => Outcome::Success,
        f if f == total => return Err(CliError::Data(anyhow::anyhow!("every utterance failed"))),
        f => Outcome::Partial { failed: f, total },
    };
    Ok((report, outcome))
}
