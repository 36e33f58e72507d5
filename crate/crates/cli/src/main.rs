use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use csrbm::io::config::ExperimentConfig;
use csrbm::io::container::{self, ModelBundle, SampleFile};
use csrbm::io::experiment;
use csrbm::io::wfdb;
use csrbm::rbm::RbmModel;
use csrbm::rng::derive_seed;
use csrbm::{dictlearn, eval, sensing};
use nalgebra::DVector;

#[derive(Parser)]
#[command(name = "csrbm", version, about = "Compressed-sensing ECG recovery with an RBM support prior")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. --set m_ratios=0.3 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Decode a WFDB format-212 record into a sample file.
    Convert {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        record: String,
        #[arg(long, short)]
        output: PathBuf,
        /// Store baseline-removed ADC units instead of millivolts.
        #[arg(long)]
        adu: bool,
    },
    /// Learn the sparsifying model and training statistics.
    TrainDict {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Sample files to train on; defaults to the configured data source.
        #[arg(long)]
        input: Vec<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Fit the support prior of a model written by train-dict.
    TrainRbm {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Compress and recover a sample file window by window.
    Reconstruct {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Compare a reconstruction with its original.
    Evaluate {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        reconstructed: PathBuf,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        #[arg(long, default_value_t = 128)]
        window_n: usize,
        #[arg(long, default_value_t = 4)]
        qrs_tolerance: usize,
    },
    /// Run the full train / compress / recover / score protocol.
    Experiment {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// CSV destination; standard output when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn build_config(base: Option<&str>, args: &ConfigArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match base {
        Some(text) => ExperimentConfig::parse(text)?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|_| csrbm::Error::MissingData(path.clone()))?;
        cfg.apply_text(&text).map_err(|e| match e {
            csrbm::Error::Parse { line, message } => {
                csrbm::Error::Config(format!("{}:{line}: {message}", path.display()))
            }
            other => other,
        })?;
    }
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn channel<'a>(file: &'a SampleFile, idx: usize, path: &Path) -> anyhow::Result<&'a [f64]> {
    file.signals
        .get(idx)
        .map(Vec::as_slice)
        .ok_or_else(|| csrbm::Error::Config(format!("{} has no channel {idx}", path.display())).into())
}

fn convert(data_dir: &Path, record: &str, output: &Path, adu: bool) -> anyhow::Result<()> {
    let rec = wfdb::read_record(data_dir, record)?;
    let signals = if adu {
        rec.signals
            .iter()
            .zip(&rec.meta.signals)
            .map(|(s, spec)| s.iter().map(|v| v * spec.gain).collect())
            .collect()
    } else {
        rec.signals
    };
    let names = rec
        .meta
        .signals
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if s.description.is_empty() {
                format!("signal{i}")
            } else {
                s.description.clone()
            }
        })
        .collect();
    container::save_samples(
        output,
        &SampleFile {
            fs: rec.meta.sampling_freq,
            names,
            signals,
        },
    )?;
    log::info!("wrote {}", output.display());
    Ok(())
}

fn train_dict(args: &ConfigArgs, inputs: &[PathBuf], output: &Path) -> anyhow::Result<()> {
    let cfg = build_config(None, args)?;
    let segments = if inputs.is_empty() {
        let sources = experiment::load_sources(&cfg)?;
        experiment::training_segments(&cfg, &sources)
    } else {
        let mut segs = Vec::new();
        for p in inputs {
            let f = container::load_samples(p)?;
            let x = channel(&f, cfg.channel, p)?;
            segs.extend(eval::segment_strided(x, cfg.window_n, cfg.stride()));
        }
        segs
    };
    if segments.is_empty() {
        bail!(csrbm::Error::InvalidInput("no training windows".into()));
    }
    let g = dictlearn::TrainingSet::from_segments(&segments)?;
    let (sparsifier, stats) = experiment::train_sparsifier(&cfg, &g)?;
    let j = sparsifier.n_atoms();
    let bundle = ModelBundle {
        sparsifier,
        rbm: RbmModel::zeros(j, cfg.hidden()),
        coeff_variances: stats.coeff_variances,
        repr_error_variances: stats.repr_error_variances,
        config_echo: cfg.to_text(),
        support_patterns: Some(stats.patterns),
    };
    container::save_model(output, &bundle)?;
    log::info!("{} windows, {} atoms -> {}", g.count(), j, output.display());
    Ok(())
}

fn train_rbm(args: &ConfigArgs, model: &Path, output: &Path) -> anyhow::Result<()> {
    let mut bundle = container::load_model(model)?;
    let cfg = build_config(Some(&bundle.config_echo), args)?;
    let patterns = bundle
        .support_patterns
        .take()
        .ok_or_else(|| csrbm::Error::BadContainer("model holds no support patterns".into()))?;
    bundle.rbm = experiment::train_prior(&cfg, &patterns)?;
    bundle.config_echo = cfg.to_text();
    container::save_model(output, &bundle)?;
    Ok(())
}

fn reconstruct(args: &ConfigArgs, model: &Path, input: &Path, output: &Path) -> anyhow::Result<()> {
    let bundle = container::load_model(model)?;
    let cfg = build_config(Some(&bundle.config_echo), args)?;
    let file = container::load_samples(input)?;
    let x = channel(&file, cfg.channel, input)?;
    let n = bundle.sparsifier.n_samples();
    let ratio = cfg.m_ratios[0];
    let algorithm = cfg.algorithms[0];
    let m = ((ratio * n as f64).round() as usize).max(1);
    let rm = experiment::recovery_model(
        &bundle,
        m,
        cfg.sigma_n_sq,
        derive_seed(cfg.seed, &[1, 0, 0]),
        cfg.sparsity(),
    )?;
    let mut out = Vec::new();
    for (si, seg) in eval::segment(x, n).iter().enumerate() {
        let y = sensing::measure(
            rm.sensing(),
            &DVector::from_column_slice(seg),
            cfg.sigma_n_sq,
            derive_seed(cfg.seed, &[2, 0, 0, 0, si as u64]),
        )?;
        out.extend(experiment::recover(&rm, &y, algorithm)?);
    }
    container::save_samples(
        output,
        &SampleFile {
            fs: file.fs,
            names: vec![format!("{} ({})", algorithm.name(), file.names.get(cfg.channel).map_or("", |s| s))],
            signals: vec![out],
        },
    )?;
    Ok(())
}

fn evaluate(
    original: &Path,
    reconstructed: &Path,
    ch: usize,
    window_n: usize,
    tolerance: usize,
) -> anyhow::Result<()> {
    let a = container::load_samples(original)?;
    let b = container::load_samples(reconstructed)?;
    let x = channel(&a, ch, original)?;
    let xh = channel(&b, 0, reconstructed)?;
    if window_n == 0 {
        bail!(csrbm::Error::Config("window_n must be positive".into()));
    }
    let len = xh.len().min(x.len()) / window_n * window_n;
    if len == 0 {
        bail!(csrbm::Error::InvalidInput("signals shorter than one window".into()));
    }
    let orig = eval::segment(&x[..len], window_n);
    let recon = eval::segment(&xh[..len], window_n);
    let m = experiment::record_metrics(&orig, &recon, a.fs, None, tolerance)?;
    let mut w = io::stdout().lock();
    writeln!(w, "r_snr_mean,precision,recall,psim_precision,psim_recall")?;
    writeln!(
        w,
        "{:.6},{:.6},{:.6},{:.6},{:.6}",
        m.r_snr_mean, m.precision, m.recall, m.psim_precision, m.psim_recall
    )?;
    Ok(())
}

fn run_experiment(args: &ConfigArgs, output: Option<&Path>) -> anyhow::Result<()> {
    let cfg = build_config(None, args)?;
    let rows = experiment::run_experiment(&cfg)?;
    // rows are complete before anything is written, so a failure leaves no partial file
    let mut buf = Vec::new();
    experiment::write_csv(&rows, &mut buf)?;
    match output {
        Some(p) => fs::write(p, buf).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().lock().write_all(&buf)?,
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<csrbm::Error>() {
        Some(e) if e.is_numerical() => 3,
        Some(csrbm::Error::Config(_)) => 1,
        Some(_) => 2,
        None if err.downcast_ref::<io::Error>().is_some() => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Convert {
            data_dir,
            record,
            output,
            adu,
        } => convert(data_dir, record, output, *adu),
        Command::TrainDict { cfg, input, output } => train_dict(cfg, input, output),
        Command::TrainRbm { cfg, model, output } => train_rbm(cfg, model, output),
        Command::Reconstruct {
            cfg,
            model,
            input,
            output,
        } => reconstruct(cfg, model, input, output),
        Command::Evaluate {
            original,
            reconstructed,
            channel,
            window_n,
            qrs_tolerance,
        } => evaluate(original, reconstructed, *channel, *window_n, *qrs_tolerance),
        Command::Experiment { cfg, output } => run_experiment(cfg, output.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
