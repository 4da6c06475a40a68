use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use credal_cert::geometry::{
    distortion_reports, rare_class_report, DistortionReport, RareClassReport,
};
use credal_cert::kernel::{median_heuristic, BandwidthSource, FeatureMatrix, KernelSpec};
use credal_cert::mmd::permutation_calibrate;
use credal_cert::rkhs_norm::{estimate_rkhs_norm, estimate_rkhs_norm_default};
use serde::Serialize;

use crate::certificate::TOOL_VERSION;
use crate::config::{CertifyConfig, GammaSetting};
use crate::error::{CliError, CliResult};
use crate::io;
use crate::pipeline::{select_kernel, Pipeline, SourceData};

/// Options shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Globals {
    pub seed: Option<u64>,
    pub clamp_risk: bool,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    // only finite floats reach here; serialization cannot fail
    serde_json::to_string(value).expect("serializable record")
}

pub fn certify(
    source_features: &Path,
    source_losses: &Path,
    target_features: &Path,
    config: &Path,
    g: &Globals,
) -> CliResult<String> {
    let loaded = CertifyConfig::load(config)?;
    let source = SourceData::load(source_features, source_losses)?;
    let (xt, digest_target) = io::read_features(target_features)?;
    let kernel = select_kernel(&loaded.config, &[&source.xs, &xt])?;
    let pipeline = Pipeline::new(source, &loaded, kernel)?;
    let seed = g.seed.or(loaded.config.seed).unwrap_or(0);
    let cert = pipeline.certify(&xt, digest_target, seed, g.clamp_risk)?;
    Ok(to_json(&cert) + "\n")
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    batch_seq: u64,
    error: String,
    error_class: &'a str,
}

/// Splits a stream into batches at lines that are exactly `---`.
struct Batches<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    done: bool,
}

struct Batch {
    text: String,
    /// Stream line number just before the batch.
    offset: usize,
}

impl<R: BufRead> Iterator for Batches<R> {
    type Item = std::io::Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let offset = self.line_no;
        let mut text = String::new();
        loop {
            match self.lines.next() {
                None => {
                    self.done = true;
                    // a trailing delimiter does not open an empty batch
                    return (!text.trim().is_empty()).then_some(Ok(Batch { text, offset }));
                }
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e));
                }
                Some(Ok(line)) => {
                    self.line_no += 1;
                    if line.trim_end() == "---" {
                        return Some(Ok(Batch { text, offset }));
                    }
                    text.push_str(&line);
                    text.push('\n');
                }
            }
        }
    }
}

/// Streams one NDJSON record per target batch to `out`.
///
/// Malformed batches produce an error record and the stream continues.
/// Source-side problems abort before anything is written.
#[allow(clippy::too_many_arguments)]
pub fn monitor<R: BufRead, W: Write>(
    source_features: &Path,
    source_losses: &Path,
    config: &Path,
    target: R,
    target_name: &str,
    window: Option<usize>,
    g: &Globals,
    out: &mut W,
) -> CliResult<()> {
    if window == Some(0) {
        return Err(CliError::input(
            "--window",
            "window must be at least 1 batch",
        ));
    }
    let loaded = CertifyConfig::load(config)?;
    let source = SourceData::load(source_features, source_losses)?;
    let kernel = select_kernel(&loaded.config, &[&source.xs])?;
    let pipeline = Pipeline::new(source, &loaded, kernel)?;
    let seed = g.seed.or(loaded.config.seed).unwrap_or(0);
    let window = window.unwrap_or(1);

    let mut history: VecDeque<(FeatureMatrix, String)> = VecDeque::new();
    let batches = Batches {
        lines: target.lines(),
        line_no: 0,
        done: false,
    };
    for (seq, batch) in (0u64..).zip(batches) {
        let batch = batch.map_err(|e| CliError::io(Path::new(target_name), e))?;
        let record = parse_batch(&batch, target_name, seq).and_then(|xt| {
            history.push_back((xt, io::digest(batch.text.as_bytes())));
            while history.len() > window {
                history.pop_front();
            }
            let parts: Vec<&FeatureMatrix> = history.iter().map(|(x, _)| x).collect();
            let pooled = FeatureMatrix::vstack(&parts)?;
            let digest = if history.len() == 1 {
                history[0].1.clone()
            } else {
                let joined: Vec<&str> = history.iter().map(|(_, d)| d.as_str()).collect();
                io::digest(joined.join("\n").as_bytes())
            };
            let mut cert =
                pipeline.certify(&pooled, digest, seed.wrapping_add(seq), g.clamp_risk)?;
            cert.batch_seq = Some(seq);
            Ok(to_json(&cert))
        });
        let line = match record {
            Ok(line) => line,
            Err(e) => to_json(&ErrorRecord {
                batch_seq: seq,
                error: match e {
                    CliError::Core(_) => format!("{target_name} batch {seq}: {e}"),
                    _ => e.to_string(),
                },
                error_class: if e.is_numerical() {
                    "numerical"
                } else {
                    "input"
                },
            }),
        };
        writeln!(out, "{line}")
            .and_then(|_| out.flush())
            .map_err(CliError::Output)?;
    }
    Ok(())
}

fn parse_batch(batch: &Batch, target_name: &str, seq: u64) -> CliResult<FeatureMatrix> {
    if batch.text.trim().is_empty() {
        return Err(CliError::input(
            format!("{target_name} batch {seq}"),
            "empty batch",
        ));
    }
    io::parse_features(
        &batch.text,
        &format!("{target_name} batch {seq}"),
        batch.offset,
    )
}

pub fn open_stream(path: &Path) -> CliResult<Box<dyn BufRead>> {
    if path == Path::new("-") {
        Ok(Box::new(BufReader::new(std::io::stdin())))
    } else {
        let f = File::open(path).map_err(|e| CliError::io(path, e))?;
        Ok(Box::new(BufReader::new(f)))
    }
}

fn kernel_for(gamma: GammaSetting, x: &FeatureMatrix, y: &FeatureMatrix) -> CliResult<KernelSpec> {
    Ok(match gamma {
        GammaSetting::Value(g) => KernelSpec::fixed(g)?,
        GammaSetting::Token(_) => median_heuristic(x, y)?,
    })
}

#[derive(Serialize)]
struct CalibrationRecord {
    tool_version: &'static str,
    gamma: f64,
    gamma_source: BandwidthSource,
    epsilon_alpha: f64,
    p_value: f64,
    observed_mmd2: f64,
    num_permutations: usize,
    alpha: f64,
    seed: u64,
    rejects_null: bool,
    digest_source_features: String,
    digest_target_features: String,
}

pub fn calibrate(
    source_features: &Path,
    target_features: &Path,
    gamma: GammaSetting,
    permutations: usize,
    alpha: f64,
    g: &Globals,
) -> CliResult<String> {
    let (xs, ds) = io::read_features(source_features)?;
    let (xt, dt) = io::read_features(target_features)?;
    let k = kernel_for(gamma, &xs, &xt)?;
    let seed = g.seed.unwrap_or(0);
    let r = permutation_calibrate(&xs, &xt, &k, permutations, alpha, seed)?;
    Ok(to_json(&CalibrationRecord {
        tool_version: TOOL_VERSION,
        gamma: k.gamma,
        gamma_source: k.source,
        epsilon_alpha: r.epsilon_alpha,
        p_value: r.p_value,
        observed_mmd2: r.observed_mmd2,
        num_permutations: r.num_permutations,
        alpha: r.alpha,
        seed: r.seed,
        rejects_null: r.rejects_null(),
        digest_source_features: ds,
        digest_target_features: dt,
    }) + "\n")
}

#[derive(Serialize)]
struct NormRecord {
    tool_version: &'static str,
    l_h: f64,
    lambda: f64,
    n_fit: usize,
    residual_rms: f64,
    gamma: f64,
    gamma_source: BandwidthSource,
    digest_features: String,
    digest_losses: String,
}

pub fn norm(
    features: &Path,
    losses: &Path,
    gamma: GammaSetting,
    lambda: Option<f64>,
) -> CliResult<String> {
    let source = SourceData::load(features, losses)?;
    let k = match gamma {
        GammaSetting::Value(g) => KernelSpec::fixed(g)?,
        GammaSetting::Token(_) => credal_cert::kernel::median_heuristic_pooled(&[&source.xs])?,
    };
    let est = match lambda {
        Some(l) => estimate_rkhs_norm(&source.xs, &source.losses, &k, l)?,
        None => estimate_rkhs_norm_default(&source.xs, &source.losses, &k)?,
    };
    Ok(to_json(&NormRecord {
        tool_version: TOOL_VERSION,
        l_h: est.l_h,
        lambda: est.lambda,
        n_fit: est.n_fit,
        residual_rms: est.residual_rms,
        gamma: k.gamma,
        gamma_source: k.source,
        digest_features: source.digest_features,
        digest_losses: source.digest_losses,
    }) + "\n")
}

#[derive(Serialize)]
#[serde(untagged)]
enum GeometryBody {
    Anchors { reports: Vec<DistortionReport> },
    Classes(RareClassReport),
}

#[derive(Serialize)]
struct GeometryRecord {
    tool_version: &'static str,
    gamma: f64,
    gamma_source: BandwidthSource,
    c_w: f64,
    #[serde(flatten)]
    body: GeometryBody,
}

fn read_labels(path: &Path) -> CliResult<Vec<String>> {
    let loaded = io::load(path)?;
    Ok(loaded
        .text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Distortion diagnostics. Without `anchors` the source mean is the single
/// anchor; with `labels` the output is grouped by class.
pub fn geometry(
    source_features: &Path,
    target_features: &Path,
    anchors: Option<&Path>,
    labels: Option<&Path>,
    gamma: GammaSetting,
    c_w: f64,
) -> CliResult<String> {
    let (xs, _) = io::read_features(source_features)?;
    let (xt, _) = io::read_features(target_features)?;
    let k = kernel_for(gamma, &xs, &xt)?;
    let anchor_rows = match anchors {
        Some(p) => io::read_features(p)?.0,
        None => FeatureMatrix::new(xs.mean(), 1, xs.ncols())?,
    };
    let body = match labels {
        Some(p) => {
            let labels = read_labels(p)?;
            GeometryBody::Classes(rare_class_report(&anchor_rows, &labels, &xs, &xt, &k, c_w)?)
        }
        None => GeometryBody::Anchors {
            reports: distortion_reports(&anchor_rows, &xs, &xt, &k, c_w)?,
        },
    };
    Ok(to_json(&GeometryRecord {
        tool_version: TOOL_VERSION,
        gamma: k.gamma,
        gamma_source: k.source,
        c_w,
        body,
    }) + "\n")
}
