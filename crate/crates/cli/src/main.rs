//! `kws`: command-line front end for the keyword spotting pipeline.

mod config;

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use kws_core::align::{align_keyword, chop_keyword, read_cpst, AlignmentSpan};
use kws_core::frontend::{load_wav, write_fmat, write_wav, Featurizer, WavEncoding};
use kws_core::model::{load_checkpoint, reference_sweep, save_checkpoint, write_sweep_csv};
use kws_core::streameval::{
    det_curve, detect, stream_scores, write_report_csv, GroundTruth, ScoredStream,
};
use kws_core::train::{
    augmented_epoch, load_training_data, mine_hard_negatives, read_manifest, train, write_manifest,
    write_metrics_csv, ExampleLabel, ManifestRecord, RecordKind,
};

use config::CliConfig;

/// Marks errors caused by how the command was invoked rather than by data.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "kws", version = concat!(env!("CARGO_PKG_VERSION"), " (", env!("KWS_BUILD_ID"), ")"))]
#[command(about = "Small-footprint keyword spotting: features, training, alignment and evaluation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// JSON configuration file; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice (training and augmentation).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output path (file or directory, depending on the command).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// WAV to FMAT features.
    Featurize { input: PathBuf },
    /// Keyword spans from CPST posterior files, as JSONL.
    Align {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Cut keyword clips out of recordings using a spans JSONL file.
    Chop { spans: PathBuf },
    /// Write one epoch of augmented training features.
    Augment {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        snr_low: Option<f64>,
        #[arg(long)]
        snr_high: Option<f64>,
        #[arg(long, default_value_t = 0)]
        epoch: usize,
    },
    /// Train a model from a manifest.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        snr_low: Option<f64>,
        #[arg(long)]
        snr_high: Option<f64>,
    },
    /// Collect high-scoring windows from keyword-free audio as negatives.
    Mine {
        /// Manifest of keyword-free recordings to scan.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Windows scoring at or above this become negatives.
        #[arg(long)]
        threshold: Option<f64>,
        /// Most windows taken per file.
        #[arg(long, default_value_t = 10)]
        cap: usize,
    },
    /// FRR / false alarms per hour over an evaluation manifest.
    Eval {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Stream a recording and print detections as JSONL.
    Detect {
        input: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Parameter and MAC counts for the reference architecture grid, as CSV.
    Sweep,
    /// Write the synthetic toy corpus.
    Synth,
}

/// Joins the error chain, skipping causes whose text is already shown.
fn error_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let mut cfg = match &g.config {
        Some(p) => CliConfig::load(p).map_err(|e| usage(format!("{e:#}")))?,
        None => CliConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.set_seed(seed);
    }
    if let Some(n) = g.workers {
        if n == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    cfg.validate()
        .map_err(|e| usage(format!("invalid configuration: {e}")))?;

    match cli.command {
        Command::Featurize { input } => featurize(&cfg, &input, g.out),
        Command::Align { inputs, alpha } => {
            if let Some(a) = alpha {
                cfg.align.alpha = a;
                cfg.align.validate().map_err(|e| usage(e.to_string()))?;
            }
            align(&cfg, &inputs, g.out)
        }
        Command::Chop { spans } => chop(&cfg, &spans, g.out),
        Command::Augment {
            manifest,
            snr_low,
            snr_high,
            epoch,
        } => {
            cfg.set_snr(snr_low, snr_high)
                .map_err(|e| usage(e.to_string()))?;
            augment(&cfg, manifest, g.out, epoch)
        }
        Command::Train {
            manifest,
            init,
            metrics,
            snr_low,
            snr_high,
        } => {
            cfg.set_snr(snr_low, snr_high)
                .map_err(|e| usage(e.to_string()))?;
            train_cmd(&cfg, manifest, init, metrics, g.out)
        }
        Command::Mine {
            manifest,
            checkpoint,
            threshold,
            cap,
        } => mine(&cfg, &manifest, checkpoint, threshold, cap, g.out),
        Command::Eval {
            manifest,
            checkpoint,
        } => eval(&cfg, manifest, checkpoint, g.out),
        Command::Detect {
            input,
            checkpoint,
            threshold,
        } => detect_cmd(&cfg, &input, checkpoint, threshold, g.out),
        Command::Sweep => sweep(g.out),
        Command::Synth => {
            let dir = g.out.unwrap_or_else(|| cfg.paths.toy_dir.clone());
            kws_core::synth::write_toy_corpus(&dir, cfg.train.seed)?;
            println!("{}", dir.display());
            Ok(())
        }
    }
}

/// Opens `path` for writing, or stdout when absent.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            ))
        }
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_jsonl<T: Serialize>(out: &mut dyn Write, items: &[T]) -> Result<()> {
    for it in items {
        serde_json::to_writer(&mut *out, it)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn featurize(cfg: &CliConfig, input: &Path, out: Option<PathBuf>) -> Result<()> {
    let clip = load_wav(input).with_context(|| format!("reading {}", input.display()))?;
    let fm = Featurizer::new(&cfg.feature)?.featurize(&clip)?;
    let out = out.unwrap_or_else(|| input.with_extension("fmat"));
    write_fmat(&out, &fm)?;
    println!("{} {}x{}", out.display(), fm.n_mels, fm.n_frames);
    Ok(())
}

#[derive(Debug, Serialize, serde::Deserialize)]
struct SpanLine {
    path: PathBuf,
    begin_s: f64,
    end_s: f64,
    ordered: bool,
}

fn align(cfg: &CliConfig, inputs: &[PathBuf], out: Option<PathBuf>) -> Result<()> {
    if inputs.is_empty() {
        return Err(usage("align needs at least one CPST file"));
    }
    let mut lines = Vec::new();
    for p in inputs {
        let post = read_cpst(p).with_context(|| format!("reading {}", p.display()))?;
        let span: AlignmentSpan =
            align_keyword(&post.smoothed(cfg.align.smooth_window)?, &cfg.align)?;
        if !span.ordered {
            log::warn!("{}: alignment ends before it begins", p.display());
        }
        lines.push(SpanLine {
            path: p.with_extension("wav"),
            begin_s: span.begin_s,
            end_s: span.end_s,
            ordered: span.ordered,
        });
    }
    write_jsonl(&mut *output(out.as_deref())?, &lines)
}

fn chop(cfg: &CliConfig, spans: &Path, out: Option<PathBuf>) -> Result<()> {
    let dir = out.unwrap_or_else(|| PathBuf::from("chopped"));
    std::fs::create_dir_all(&dir)?;
    let text =
        std::fs::read_to_string(spans).with_context(|| format!("reading {}", spans.display()))?;
    let base = spans.parent().unwrap_or(Path::new(""));
    let mut records = Vec::new();
    let mut skipped = 0;
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let s: SpanLine =
            serde_json::from_str(line).with_context(|| format!("spans line {}", i + 1))?;
        let audio = if s.path.is_relative() {
            base.join(&s.path)
        } else {
            s.path.clone()
        };
        let span = AlignmentSpan {
            begin_frame: 0,
            end_frame: 0,
            begin_s: s.begin_s,
            end_s: s.end_s,
            ordered: s.ordered,
        };
        let clip = load_wav(&audio).with_context(|| format!("reading {}", audio.display()))?;
        let cut = match chop_keyword(&clip, &span, cfg.align.pad_s) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("{}: {e}", audio.display());
                skipped += 1;
                continue;
            }
        };
        let stem = audio.file_stem().and_then(|s| s.to_str()).unwrap_or("clip");
        let name = format!("{i:05}_{stem}.wav");
        write_wav(dir.join(&name), &cut, WavEncoding::Pcm16)?;
        let lead = s.begin_s - (s.begin_s - cfg.align.pad_s).max(0.0);
        let mut rec = ManifestRecord::example(name, ExampleLabel::Positive);
        rec.span_s = Some([lead, lead + (s.end_s - s.begin_s)]);
        records.push(rec);
    }
    write_manifest(
        &records,
        BufWriter::new(File::create(dir.join("chopped.jsonl"))?),
    )?;
    eprintln!(
        "{} clips written, {skipped} unordered spans skipped",
        records.len()
    );
    Ok(())
}

fn augment(
    cfg: &CliConfig,
    manifest: Option<PathBuf>,
    out: Option<PathBuf>,
    epoch: usize,
) -> Result<()> {
    let manifest = manifest.unwrap_or_else(|| cfg.paths.train_manifest.clone());
    let records =
        read_manifest(&manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let data = load_training_data(&records, &cfg.feature)?;
    if data.noise.is_empty() {
        log::warn!("no noise entries in the manifest; only jitter is applied");
    }
    let examples = augmented_epoch(&data, &cfg.model, &cfg.feature, &cfg.augment, epoch)?;
    let dir = out.unwrap_or_else(|| PathBuf::from("features"));
    std::fs::create_dir_all(&dir)?;
    #[derive(Serialize)]
    struct Line {
        path: String,
        label: u8,
    }
    let mut lines = Vec::with_capacity(examples.len());
    for (i, ex) in examples.iter().enumerate() {
        let name = format!("ex_{i:05}.fmat");
        write_fmat(dir.join(&name), &ex.features)?;
        lines.push(Line {
            path: name,
            label: ex.label,
        });
    }
    write_jsonl(
        &mut BufWriter::new(File::create(dir.join("labels.jsonl"))?),
        &lines,
    )?;
    eprintln!("{} augmented examples in {}", lines.len(), dir.display());
    Ok(())
}

fn train_cmd(
    cfg: &CliConfig,
    manifest: Option<PathBuf>,
    init: Option<PathBuf>,
    metrics: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let manifest = manifest.unwrap_or_else(|| cfg.paths.train_manifest.clone());
    let records = read_manifest(&manifest).with_context(|| {
        format!(
            "reading {} (run `kws synth` for the toy corpus)",
            manifest.display()
        )
    })?;
    let init = init.map(load_checkpoint).transpose()?;
    let outcome = train(
        &records,
        &cfg.model,
        &cfg.feature,
        &cfg.train,
        &cfg.augment,
        init.as_ref(),
    )?;
    let ckpt_path = out.unwrap_or_else(|| cfg.paths.checkpoint.clone());
    if let Some(dir) = ckpt_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_checkpoint(&outcome.checkpoint, &ckpt_path)?;
    let metrics = metrics.unwrap_or_else(|| cfg.paths.metrics.clone());
    let fresh = std::fs::metadata(&metrics)
        .map(|m| m.len() == 0)
        .unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics)?;
    write_metrics_csv(&outcome.log, file, fresh)?;
    eprintln!(
        "saved {} (best epoch {}, {} steps); metrics appended to {}",
        ckpt_path.display(),
        outcome.best_epoch,
        outcome.steps,
        metrics.display()
    );
    Ok(())
}

fn mine(
    cfg: &CliConfig,
    manifest: &Path,
    checkpoint: Option<PathBuf>,
    threshold: Option<f64>,
    cap: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint.as_ref().unwrap_or(&cfg.paths.checkpoint))?;
    let records = read_manifest(manifest)?;
    let corpus: Vec<PathBuf> = records
        .iter()
        .filter(|r| r.kind == RecordKind::Example && r.label != Some(ExampleLabel::Positive))
        .map(|r| r.path.clone())
        .collect();
    let tau = threshold.unwrap_or(cfg.stream.threshold);
    let fz = Featurizer::new(&ckpt.feature_cfg)?;
    let report = mine_hard_negatives(&ckpt, &fz, &corpus, &cfg.stream, tau, cap)?;
    write_manifest(&report.additions, output(out.as_deref())?)?;
    eprintln!(
        "{} windows mined from {} files; {} files skipped",
        report.additions.len(),
        corpus.len(),
        report.skipped.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalSummary {
    frr_at_1_fa_per_hour: f64,
    frr_at_0_5_fa_per_hour: f64,
    accuracy_at_0_5_fa_per_hour: f64,
    keywords: usize,
    negative_hours: f64,
    operating_points: usize,
}

fn eval(
    cfg: &CliConfig,
    manifest: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let manifest = manifest.unwrap_or_else(|| cfg.paths.eval_manifest.clone());
    let records =
        read_manifest(&manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let ckpt = load_checkpoint(checkpoint.as_ref().unwrap_or(&cfg.paths.checkpoint))?;
    let fz = Featurizer::new(&ckpt.feature_cfg)?;
    let mut streams = Vec::new();
    for r in records.iter().filter(|r| r.kind == RecordKind::Example) {
        let clip = load_wav(&r.path).with_context(|| format!("reading {}", r.path.display()))?;
        let spans = r.keyword_spans();
        let negative = r.label == Some(ExampleLabel::Negative) && spans.is_empty();
        streams.push(ScoredStream {
            scores: stream_scores(&clip, &ckpt, &fz, &cfg.stream)?,
            truth: GroundTruth {
                keyword_spans: spans,
                negative_audio_s: if negative { clip.duration_s() } else { 0.0 },
            },
        });
    }
    let report = det_curve(&streams, &cfg.stream, &[1.0, 0.5])?;
    let csv_path = out.unwrap_or_else(|| PathBuf::from("eval.csv"));
    write_report_csv(&report, output(Some(&csv_path))?)?;
    let summary = EvalSummary {
        frr_at_1_fa_per_hour: report.targets[0].frr_percent,
        frr_at_0_5_fa_per_hour: report.targets[1].frr_percent,
        accuracy_at_0_5_fa_per_hour: report.targets[1].accuracy_percent,
        keywords: streams.iter().map(|s| s.truth.keyword_spans.len()).sum(),
        negative_hours: streams
            .iter()
            .map(|s| s.truth.negative_audio_s)
            .sum::<f64>()
            / 3600.0,
        operating_points: report.points.len(),
    };
    let json = serde_json::to_string_pretty(&summary)?;
    std::fs::write(csv_path.with_extension("json"), &json)?;
    println!("{json}");
    Ok(())
}

fn detect_cmd(
    cfg: &CliConfig,
    input: &Path,
    checkpoint: Option<PathBuf>,
    threshold: Option<f64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint.as_ref().unwrap_or(&cfg.paths.checkpoint))?;
    let clip = load_wav(input).with_context(|| format!("reading {}", input.display()))?;
    let fz = Featurizer::new(&ckpt.feature_cfg)?;
    let scores = stream_scores(&clip, &ckpt, &fz, &cfg.stream)?;
    let th = threshold.unwrap_or(cfg.stream.threshold);
    if !(0.0..=1.0).contains(&th) {
        return Err(usage(format!("threshold {th} outside [0, 1]")));
    }
    let events = detect(&scores, th, cfg.stream.refractory_s);
    write_jsonl(&mut *output(out.as_deref())?, &events)
}

fn sweep(out: Option<PathBuf>) -> Result<()> {
    let rows = reference_sweep();
    let mut w = output(out.as_deref())?;
    write_sweep_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}
