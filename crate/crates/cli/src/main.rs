//! Command-line front end for the spectropose pipeline.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spectropose::baselines::ablation_table;
use spectropose::eval::{export_attention, robustness_sweep, NoiseSpec};
use spectropose::model::{checkpoint_from_bytes, checkpoint_to_bytes};
use spectropose::pose::{
    interpolate_missing, normalize_global, parse_keypoint_frame, sequence_from_text,
    sequence_to_text, Label, PoseSequence,
};
use spectropose::spectral::{
    build_schedule, extract_features, features_to_binary, features_to_text, search_c, BinSchedule,
    DEFAULT_C, DEFAULT_CUTOFF_HZ, DEFAULT_N_FFT, DEFAULT_REF_FPS,
};
use spectropose::synth::{generate, SynthSpec};
use spectropose::train::{build_adjacency, loocv, predict, train, TrainConfig};
use spectropose::{AttnVariant, Error, SpectralFeatures, FORMAT_VERSIONS};

fn long_version() -> &'static str {
    static VERSION: std::sync::OnceLock<String> = std::sync::OnceLock::new();
    VERSION.get_or_init(|| {
        let formats: Vec<String> = FORMAT_VERSIONS
            .iter()
            .map(|(name, v)| format!("{name} {v}"))
            .collect();
        format!("{}\nformats: {}", env!("CARGO_PKG_VERSION"), formats.join(", "))
    })
}

#[derive(Parser)]
#[command(name = "spectropose", version, about = "Frequency-domain skeletal movement classification")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Exponential bin-width growth parameter
    #[arg(long, default_value_t = DEFAULT_C)]
    c: f64,
    #[arg(long = "cutoff-hz", default_value_t = DEFAULT_CUTOFF_HZ)]
    cutoff_hz: f64,
    #[arg(long = "n-fft", default_value_t = DEFAULT_N_FFT)]
    n_fft: usize,
    /// Use width-1 bins (the no-binning limit)
    #[arg(long = "no-binning")]
    no_binning: bool,
}

impl ScheduleArgs {
    fn build(&self) -> Result<BinSchedule, Error> {
        if self.no_binning {
            BinSchedule::unit(DEFAULT_REF_FPS, self.n_fft, self.cutoff_hz)
        } else {
            build_schedule(DEFAULT_REF_FPS, self.n_fft, self.cutoff_hz, self.c)
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// mini_rgbd_like (batch 1, lr 1e-4) or rvi38_like (batch 4, lr 1e-3)
    #[arg(long, default_value = "mini_rgbd_like")]
    preset: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    /// 1 = shifted cosine, 2 = dot product
    #[arg(long = "attention-variant", default_value = "2")]
    attention_variant: String,
}

impl TrainArgs {
    fn to_config(&self) -> Result<TrainConfig, Error> {
        let mut cfg = TrainConfig::preset(&self.preset)?;
        cfg.seed = self.seed;
        cfg.workers = self.workers;
        if let Some(e) = self.epochs {
            cfg.max_epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(lr) = self.lr {
            cfg.base_lr = lr;
        }
        if let Some(d) = self.dropout {
            cfg.model.dropout = d;
        }
        cfg.model.attention_variant = AttnVariant::parse(&self.attention_variant)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse pose-estimator output, repair missing joints, normalize, and
    /// write the canonical sequence file
    Ingest {
        /// A .seq file or a directory of per-frame keypoint JSON files
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        fps: Option<f64>,
        #[arg(long)]
        subject: Option<String>,
        /// normal | abnormal | none
        #[arg(long)]
        label: Option<String>,
        /// Keypoints at or below this confidence count as missing
        #[arg(long = "conf-threshold", default_value_t = 0.0)]
        conf_threshold: f64,
        #[arg(long = "no-normalize")]
        no_normalize: bool,
    },
    /// Extract binned spectral features from sequence files
    Features {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the recorded capture rate of the input sequences
        #[arg(long)]
        fps: Option<f64>,
        #[command(flatten)]
        schedule: ScheduleArgs,
        /// Write the binary feature format instead of text
        #[arg(long)]
        binary: bool,
    },
    /// Train on every labeled sequence and write a checkpoint
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Leave-one-out cross-validation report
    Loocv {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Binned-vs-unbinned ablation over the baselines and the GCN model
    Ablation {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Gaussian-noise robustness sweep
    Robustness {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated noise levels as fractions of coordinate std
        #[arg(long)]
        levels: Option<String>,
        /// Comma-separated training seeds
        #[arg(long)]
        seeds: Option<String>,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Grid-search the bin growth parameter by LOOCV accuracy
    SearchC {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated candidate values, all > 1
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Generate a deterministic synthetic labeled dataset
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "mini-like")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "n-normal")]
        n_normal: Option<usize>,
        #[arg(long = "n-abnormal")]
        n_abnormal: Option<usize>,
        #[arg(long)]
        fps: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long = "jitter-std")]
        jitter_std: Option<f64>,
    },
    /// Run a checkpoint on one sequence and export its attention map
    AttentionExport {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        schedule: ScheduleArgs,
    },
}

/// Write through a sibling temp file + rename so readers never observe a
/// partial file.
fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Param(format!("bad output path {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn load_sequences(path: &Path) -> Result<Vec<PoseSequence>, Error> {
    let mut out = Vec::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "seq"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Param(format!("no .seq files in {}", path.display())));
        }
        for f in files {
            let text = fs::read_to_string(&f)?;
            out.push(sequence_from_text(&text).map_err(|e| {
                Error::Format(format!("{}: {e}", f.display()))
            })?);
        }
    } else {
        let text = fs::read_to_string(path)?;
        out.push(sequence_from_text(&text)?);
    }
    Ok(out)
}

fn features_for(
    sequences: &[PoseSequence],
    schedule: &BinSchedule,
) -> Result<Vec<SpectralFeatures>, Error> {
    sequences.iter().map(|s| extract_features(s, schedule)).collect()
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Error> {
    s.split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| Error::Param(format!("bad {what} value '{t}'")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Cmd::Ingest {
            input,
            out,
            fps,
            subject,
            label,
            conf_threshold,
            no_normalize,
        } => {
            let label = match label.as_deref() {
                None => None,
                Some(s) => Label::from_field(s)?,
            };
            let seq = if input.is_dir() {
                let mut files: Vec<PathBuf> = fs::read_dir(&input)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|e| e == "json"))
                    .collect();
                files.sort();
                if files.is_empty() {
                    return Err(Error::Param(format!("no frame .json files in {}", input.display())));
                }
                let mut frames = Vec::with_capacity(files.len());
                for f in &files {
                    let text = fs::read_to_string(f)?;
                    frames.push(parse_keypoint_frame(&text).map_err(|e| {
                        Error::Format(format!("{}: {e}", f.display()))
                    })?);
                }
                let subject = subject
                    .or_else(|| input.file_name().map(|n| n.to_string_lossy().into_owned()))
                    .ok_or_else(|| Error::Param("cannot infer --subject".into()))?;
                PoseSequence::new(frames, fps.unwrap_or(DEFAULT_REF_FPS), subject, label)?
            } else {
                let mut seq = sequence_from_text(&fs::read_to_string(&input)?)?;
                if let Some(fps) = fps {
                    seq.fps = fps;
                }
                if let Some(s) = subject {
                    seq.subject_id = s;
                }
                if label.is_some() {
                    seq.label = label;
                }
                seq
            };
            let repaired = interpolate_missing(&seq, conf_threshold)?;
            let finished = if no_normalize {
                repaired
            } else {
                normalize_global(&repaired)?
            };
            let path = out.join(format!("{}.seq", finished.subject_id));
            atomic_write(&path, sequence_to_text(&finished)?.as_bytes())?;
            println!("wrote {}", path.display());
        }
        Cmd::Features {
            data,
            out,
            fps,
            schedule,
            binary,
        } => {
            let mut sequences = load_sequences(&data)?;
            if let Some(fps) = fps {
                for s in &mut sequences {
                    s.fps = fps;
                }
            }
            let sched = schedule.build()?;
            println!(
                "schedule c={} bins={} coverage={} n_fft={} cutoff_hz={} ref_fps={}",
                sched.c,
                sched.num_bins(),
                sched.coverage(),
                sched.n_fft,
                sched.cutoff_hz,
                sched.ref_fps
            );
            let mut rates: Vec<String> = sequences.iter().map(|s| format!("{}", s.fps)).collect();
            rates.sort();
            rates.dedup();
            for r in rates {
                println!("resample {r} fps -> {} fps reference", sched.ref_fps);
            }
            for seq in &sequences {
                let f = extract_features(seq, &sched)?;
                let (name, bytes) = if binary {
                    (format!("{}.featb", f.subject_id), features_to_binary(&f))
                } else {
                    (format!("{}.feat", f.subject_id), features_to_text(&f).into_bytes())
                };
                atomic_write(&out.join(name), &bytes)?;
            }
            println!("wrote {} feature files to {}", sequences.len(), out.display());
        }
        Cmd::Train {
            data,
            out,
            schedule,
            train: targs,
        } => {
            let cfg = targs.to_config()?;
            let sched = schedule.build()?;
            let features = features_for(&load_sequences(&data)?, &sched)?;
            let refs: Vec<&SpectralFeatures> = features.iter().collect();
            let adj = build_adjacency(sched.num_bins(), &cfg.model)?;
            let (params, curve) = train(&refs, &adj, &cfg, cfg.seed)?;
            atomic_write(&out, &checkpoint_to_bytes(&params))?;
            println!(
                "trained {} epochs on {} samples, final loss {:.6}; wrote {}",
                cfg.max_epochs,
                refs.len(),
                curve.last().unwrap(),
                out.display()
            );
        }
        Cmd::Loocv {
            data,
            out,
            schedule,
            train: targs,
        } => {
            let cfg = targs.to_config()?;
            let sched = schedule.build()?;
            let features = features_for(&load_sequences(&data)?, &sched)?;
            let report = loocv(&features, &cfg)?;
            atomic_write(&out, report.to_text().as_bytes())?;
            let m = &report.metrics;
            println!(
                "loocv ac={:.2} se={:.2} sp={:.2} f1={:.2} mcc={:.2}; wrote {}",
                m.ac,
                m.se,
                m.sp,
                m.f1,
                m.mcc,
                out.display()
            );
        }
        Cmd::Ablation {
            data,
            out,
            schedule,
            train: targs,
        } => {
            let cfg = targs.to_config()?;
            let sched = schedule.build()?;
            let sequences = load_sequences(&data)?;
            let report = ablation_table(&sequences, &sched, &cfg)?;
            atomic_write(&out, report.to_text().as_bytes())?;
            println!("wrote {} ablation rows to {}", report.rows.len(), out.display());
        }
        Cmd::Robustness {
            data,
            out,
            levels,
            seeds,
            schedule,
            train: targs,
        } => {
            let cfg = targs.to_config()?;
            let sched = schedule.build()?;
            let sequences = load_sequences(&data)?;
            let mut noise = NoiseSpec::default();
            if let Some(l) = levels {
                noise.levels = parse_list(&l, "level")?;
            }
            if let Some(s) = seeds {
                noise.seeds = parse_list(&s, "seed")?;
            }
            let report = robustness_sweep(&sequences, &sched, &noise, &cfg)?;
            atomic_write(&out, report.to_text().as_bytes())?;
            println!("wrote {} sweep rows to {}", report.rows.len(), out.display());
        }
        Cmd::SearchC {
            data,
            grid,
            out,
            schedule,
            train: targs,
        } => {
            let cfg = targs.to_config()?;
            let sequences = load_sequences(&data)?;
            let grid: Vec<f64> = parse_list(&grid, "grid")?;
            let mut rows = Vec::new();
            let best = search_c(&grid, |c| {
                let sched = build_schedule(DEFAULT_REF_FPS, schedule.n_fft, schedule.cutoff_hz, c)?;
                let features = features_for(&sequences, &sched)?;
                let report = loocv(&features, &cfg)?;
                rows.push(format!("{c}\t{:.4}", report.metrics.ac));
                Ok(report.metrics.ac)
            })?;
            println!("best c = {best}");
            if let Some(out) = out {
                let mut text = String::from("report v1\nkind search-c\nc\tac\n");
                for r in &rows {
                    text.push_str(r);
                    text.push('\n');
                }
                text.push_str(&format!("best {best}\n"));
                atomic_write(&out, text.as_bytes())?;
            }
        }
        Cmd::Synth {
            out,
            preset,
            seed,
            n_normal,
            n_abnormal,
            fps,
            duration,
            jitter_std,
        } => {
            let mut spec = match preset.as_str() {
                "mini-like" | "mini_like" => SynthSpec::mini_like(seed),
                other => return Err(Error::Param(format!("unknown synth preset '{other}'"))),
            };
            if let Some(n) = n_normal {
                spec.n_normal = n;
            }
            if let Some(n) = n_abnormal {
                spec.n_abnormal = n;
            }
            if let Some(f) = fps {
                spec.fps = f;
            }
            if let Some(d) = duration {
                spec.duration_s = d;
            }
            if let Some(j) = jitter_std {
                spec.jitter_std = j;
            }
            let data = generate(&spec)?;
            for seq in &data {
                let path = out.join(format!("{}.seq", seq.subject_id));
                atomic_write(&path, sequence_to_text(seq)?.as_bytes())?;
            }
            println!("wrote {} sequences to {}", data.len(), out.display());
        }
        Cmd::AttentionExport {
            checkpoint,
            input,
            out,
            schedule,
        } => {
            let params = checkpoint_from_bytes(&fs::read(&checkpoint)?)?;
            let sched = schedule.build()?;
            if sched.num_bins() != params.bins {
                return Err(Error::dimension(
                    "attention-export",
                    format!("checkpoint trained on {} bins", params.bins),
                    format!("schedule yields {} bins", sched.num_bins()),
                ));
            }
            let seq = load_sequences(&input)?.remove(0);
            let features = extract_features(&seq, &sched)?;
            let adj = build_adjacency(params.bins, &params.config)?;
            let (label, p, map) = predict(&params, &adj, &features)?;
            atomic_write(&out, export_attention(&map, &features.subject_id).as_bytes())?;
            println!(
                "{}: predicted {} (p_abnormal {:.4}); wrote {}",
                features.subject_id,
                Label::to_field(Some(label)),
                p,
                out.display()
            );
        }
    }
    Ok(())
}

/// Expand `--config FILE` into trailing flags (explicit flags win; unknown
/// keys are rejected).
fn expand_config(mut args: Vec<String>) -> Result<Vec<String>, Error> {
    const KNOWN: &[&str] = &[
        "seed", "workers", "c", "cutoff-hz", "n-fft", "preset", "epochs", "batch-size", "lr",
        "dropout", "attention-variant", "levels", "seeds", "grid", "fps", "conf-threshold",
        "duration", "jitter-std", "n-normal", "n-abnormal",
    ];
    let Some(pos) = args.iter().position(|a| a == "--config") else {
        return Ok(args);
    };
    if pos + 1 >= args.len() {
        return Err(Error::Param("--config needs a file path".into()));
    }
    let path = args.remove(pos + 1);
    args.remove(pos);
    let text = fs::read_to_string(&path)?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("{path}:{}: expected key = value", lineno + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if !KNOWN.contains(&key.as_str()) {
            return Err(Error::Param(format!("{path}:{}: unknown config key '{key}'", lineno + 1)));
        }
        let flag = format!("--{key}");
        if !args.contains(&flag) {
            args.push(flag);
            args.push(value.to_string());
        }
    }
    Ok(args)
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let args = match expand_config(raw) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if args.iter().any(|a| a == "--version" || a == "-V") {
        println!("spectropose {}", long_version());
        return ExitCode::SUCCESS;
    }
    let cli = Cli::parse_from(args);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
