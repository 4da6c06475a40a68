//! Command-line front end for `credal-cert`.
//!
//! Exit codes: 0 on success, 1 for input, parse and configuration errors,
//! 2 for numerical failures (degenerate bandwidth, singular or
//! ill-conditioned solves). Nothing is written to the output on a nonzero
//! exit, except for `monitor`, which streams.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub mod certificate;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod simulate;

use crate::commands::Globals;
use crate::config::{GammaSetting, MedianToken};
use crate::error::{CliError, CliResult};

fn parse_gamma(s: &str) -> Result<GammaSetting, String> {
    if s == "median" {
        return Ok(GammaSetting::Token(MedianToken::Median));
    }
    match s.parse::<f64>() {
        Ok(g) if g > 0.0 && g.is_finite() => Ok(GammaSetting::Value(g)),
        _ => Err(format!("`{s}` is neither a positive number nor \"median\"")),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "credal-cert",
    version,
    about = "Distribution-shift risk certificates from kernel mean embeddings"
)]
pub struct Cli {
    /// Seed for every randomized step; overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write output here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for the numeric kernels (0 = all cores).
    #[arg(long, global = true, env = "CREDAL_CERT_THREADS")]
    pub threads: Option<usize>,
    /// Clip reported risks to [0, 1]. The additive identities between
    /// certificate fields no longer hold when this is set.
    #[arg(long, global = true)]
    pub clamp_risk: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify one target sample against a labelled source sample.
    #[command(after_long_help = certificate::FIELDS_HELP)]
    Certify {
        source_features: PathBuf,
        source_losses: PathBuf,
        target_features: PathBuf,
        config: PathBuf,
    },
    /// Certify a stream of target batches separated by `---` lines, one
    /// NDJSON record per batch.
    #[command(after_long_help = certificate::FIELDS_HELP)]
    Monitor {
        source_features: PathBuf,
        source_losses: PathBuf,
        config: PathBuf,
        /// Batch stream; `-` reads standard input.
        #[arg(default_value = "-")]
        target_stream: PathBuf,
        /// Pool the last N batches into each estimate.
        #[arg(long)]
        window: Option<usize>,
    },
    /// Run a synthetic experiment and print a pass/fail report.
    Simulate { config: PathBuf },
    /// Permutation two-sample test and calibrated credal radius.
    Calibrate {
        source_features: PathBuf,
        target_features: PathBuf,
        #[arg(long, default_value = "median", value_parser = parse_gamma)]
        gamma: GammaSetting,
        #[arg(long, default_value_t = config::DEFAULT_PERMUTATIONS)]
        permutations: usize,
        #[arg(long, default_value_t = config::DEFAULT_ALPHA)]
        alpha: f64,
    },
    /// Kernel ridge estimate of the loss RKHS norm.
    Norm {
        features: PathBuf,
        losses: PathBuf,
        #[arg(long, default_value = "median", value_parser = parse_gamma)]
        gamma: GammaSetting,
        /// Ridge; defaults to 1e-6 · trace(K) / n.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Geodesic distortion diagnostics.
    Geometry {
        source_features: PathBuf,
        target_features: PathBuf,
        /// Anchor points, one per row; defaults to the source mean.
        #[arg(long)]
        anchors: Option<PathBuf>,
        /// One class label per anchor row; groups the output by class.
        #[arg(long, requires = "anchors")]
        labels: Option<PathBuf>,
        #[arg(long, default_value = "median", value_parser = parse_gamma)]
        gamma: GammaSetting,
        #[arg(long, default_value_t = 1.0)]
        c_w: f64,
    },
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(CliError::Output)
        }
    }
}

fn configure_threads(threads: Option<usize>) {
    if let Some(n) = threads.filter(|&n| n > 0) {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    configure_threads(cli.threads);
    let g = Globals {
        seed: cli.seed,
        clamp_risk: cli.clamp_risk,
    };
    let out = cli.out.as_deref();
    match cli.command {
        Command::Certify {
            source_features,
            source_losses,
            target_features,
            config,
        } => emit(
            out,
            &commands::certify(
                &source_features,
                &source_losses,
                &target_features,
                &config,
                &g,
            )?,
        ),
        Command::Monitor {
            source_features,
            source_losses,
            config,
            target_stream,
            window,
        } => {
            let stream = commands::open_stream(&target_stream)?;
            let name = target_stream.display().to_string();
            match out {
                Some(p) => {
                    // nothing is created until the source side has loaded
                    let mut sink = LazyFile {
                        path: p,
                        file: None,
                    };
                    commands::monitor(
                        &source_features,
                        &source_losses,
                        &config,
                        stream,
                        &name,
                        window,
                        &g,
                        &mut sink,
                    )
                }
                None => {
                    let mut stdout = std::io::stdout().lock();
                    commands::monitor(
                        &source_features,
                        &source_losses,
                        &config,
                        stream,
                        &name,
                        window,
                        &g,
                        &mut stdout,
                    )
                }
            }
        }
        Command::Simulate { config } => {
            let loaded = io::load(&config)?;
            let e = simulate::Experiment::from_json(&loaded.text, &config.display().to_string())?;
            emit(out, &simulate::run(e, g.seed)?.render())
        }
        Command::Calibrate {
            source_features,
            target_features,
            gamma,
            permutations,
            alpha,
        } => emit(
            out,
            &commands::calibrate(
                &source_features,
                &target_features,
                gamma,
                permutations,
                alpha,
                &g,
            )?,
        ),
        Command::Norm {
            features,
            losses,
            gamma,
            lambda,
        } => emit(out, &commands::norm(&features, &losses, gamma, lambda)?),
        Command::Geometry {
            source_features,
            target_features,
            anchors,
            labels,
            gamma,
            c_w,
        } => emit(
            out,
            &commands::geometry(
                &source_features,
                &target_features,
                anchors.as_deref(),
                labels.as_deref(),
                gamma,
                c_w,
            )?,
        ),
    }
}

/// A file sink that is only created on the first write.
struct LazyFile<'a> {
    path: &'a Path,
    file: Option<fs::File>,
}

impl Write for LazyFile<'_> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let file = match &mut self.file {
            Some(f) => f,
            None => self.file.insert(fs::File::create(self.path)?),
        };
        file.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        match &mut self.file {
            Some(f) => f.flush(),
            None => Ok(()),
        }
    }
}
