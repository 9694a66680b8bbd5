//! Command-line front end: `featurize`, `rank`, `eval`, `explain`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{self, BaselineStats, DiscoveryCurve, LabelMap};
use crate::explain::{export_explanation, render_pixel_explanation, Explanation};
use crate::features::{
    self, bow_histogram, build_codebook, npy, pixel_features, DescriptorSet, ImageTensor, NpyDtype,
};
use crate::io::{file_digest, write_atomic};
use crate::manifest::{Manifest, ManifestHeader, TOOL_VERSION};
use crate::sampling::GENERATOR;
use crate::selectors::{random_rank, svd_rank, svd_rank_explained, DemudRun, Method};
use crate::subspace::{FeatureKind, FeatureMatrix};

/// Environment variable capping the worker thread count (0 = automatic).
pub const THREADS_ENV: &str = "DEMUD_THREADS";

#[derive(Debug, Parser)]
#[command(name = "demud", version, about = "Explainable novelty ranking with incremental SVD")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a directory of images or descriptor files into a feature matrix.
    Featurize(FeaturizeArgs),
    /// Rank items by novelty and write a manifest (plus explanations for DEMUD).
    Rank(RankArgs),
    /// Score a manifest's class discovery against ground-truth labels.
    Eval(EvalArgs),
    /// Recompute the explanation of one DEMUD selection.
    Explain(ExplainArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeaturizeMode {
    Pixel,
    Bow,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long, value_enum)]
    pub mode: FeaturizeMode,
    /// Directory of images (pixel) or per-image descriptor NPY files (bow).
    #[arg(long)]
    pub input: PathBuf,
    /// Output feature file (`.npy`); ids go to `<stem>.ids.txt`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = features::DEFAULT_SIDE)]
    pub side: u32,
    #[arg(long = "k-sift", default_value_t = 5)]
    pub k_sift: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Feature matrix (`.npy` with id sidecar, or `.csv`).
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub ids: Option<PathBuf>,
    /// Overrides the feature kind recorded next to the feature file.
    #[arg(long)]
    pub kind: Option<FeatureKind>,
    #[arg(long, value_parser = ["demud", "svd", "random"], default_value = "demud")]
    pub method: String,
    /// Component cap: a number, or `auto` for min(items, dimensions).
    #[arg(long, default_value = "auto")]
    pub k: String,
    /// Number of selections (default: every item).
    #[arg(long)]
    pub n: Option<usize>,
    /// Recorded in the manifest header for later evaluation.
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also export explanations for the static SVD baseline.
    #[arg(long)]
    pub svd_explanations: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Selections to evaluate (default: estimated from the labels, capped at 300).
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long, default_value_t = eval::DEFAULT_TRIALS)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Feature file to check against the manifest digest.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub allow_digest_mismatch: bool,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub ids: Option<PathBuf>,
    #[arg(long)]
    pub kind: Option<FeatureKind>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub round: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub allow_digest_mismatch: bool,
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    configure_threads();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn configure_threads() {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return;
    };
    match value.trim().parse::<usize>() {
        Ok(0) => {}
        Ok(n) => {
            // the global pool can only be built once per process
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Err(_) => log::warn!("ignoring {THREADS_ENV}={value:?}: not a number"),
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Featurize(args) => cmd_featurize(&args).map(|_| ()),
        Command::Rank(args) => cmd_rank(&args).map(|_| ()),
        Command::Eval(args) => {
            let report = cmd_eval(&args)?;
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Internal(e.to_string()))?
                + "\n";
            match &args.out {
                Some(path) => write_atomic(path, text.as_bytes()),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Explain(args) => cmd_explain(&args).map(|_| ()),
    }
}

/// Feature kind and image side recorded next to a feature file by `featurize`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub feature_kind: FeatureKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub side: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k_sift: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
}

pub fn meta_sidecar(features: &Path) -> PathBuf {
    sibling(features, "meta.json")
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedInput {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeaturizeReport {
    pub mode: String,
    pub processed: usize,
    pub dim: usize,
    pub skipped: Vec<SkippedInput>,
}

/// Regular files in `dir` as `(id, path)`, sorted by id (the file stem).
fn list_inputs(dir: &Path, extension: Option<&str>) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        if let Some(ext) = extension {
            if path.extension().and_then(|e| e.to_str()) != Some(ext) {
                continue;
            }
        }
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        files.push((id, path));
    }
    files.sort();
    if let Some(w) = files.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidData(format!(
            "two inputs share the id `{}`: {} and {}",
            w[0].0,
            w[0].1.display(),
            w[1].1.display()
        )));
    }
    Ok(files)
}

pub fn cmd_featurize(args: &FeaturizeArgs) -> Result<FeaturizeReport> {
    let (extension, kind) = match args.mode {
        FeaturizeMode::Pixel => (None, FeatureKind::Pixel),
        FeaturizeMode::Bow => (Some("npy"), FeatureKind::Bow),
    };
    let inputs = list_inputs(&args.input, extension)?;
    if inputs.is_empty() {
        return Err(Error::InvalidData(format!(
            "no inputs found in {}",
            args.input.display()
        )));
    }

    let mut skipped = Vec::new();
    let mut ids = Vec::new();
    let (data, dim, meta) = match args.mode {
        FeaturizeMode::Pixel => {
            if args.side == 0 {
                return Err(Error::InvalidArgument("--side must be positive".into()));
            }
            let results: Vec<Result<Vec<f64>>> = inputs
                .par_iter()
                .map(|(_, path)| ImageTensor::open(path).and_then(|img| pixel_features(&img, args.side)))
                .collect();
            let mut data = Vec::new();
            for ((id, _), result) in inputs.iter().zip(results) {
                match result {
                    Ok(v) => {
                        ids.push(id.clone());
                        data.extend(v);
                    }
                    Err(e) => skip(&mut skipped, id, e),
                }
            }
            let dim = args.side as usize * args.side as usize * 3;
            let meta = FeatureMeta {
                feature_kind: kind,
                side: Some(args.side),
                k_sift: None,
                seed: None,
            };
            (data, dim, meta)
        }
        FeaturizeMode::Bow => {
            let mut sets = Vec::new();
            for (id, path) in &inputs {
                match npy::read_array(path).and_then(|a| DescriptorSet::new(a.cols.max(1), a.data)) {
                    Ok(set) => {
                        ids.push(id.clone());
                        sets.push(set);
                    }
                    Err(e) => skip(&mut skipped, id, e),
                }
            }
            if sets.is_empty() {
                return Err(all_failed(&skipped));
            }
            let codebook = build_codebook(&sets, args.k_sift, args.seed)?;
            let mut data = Vec::with_capacity(sets.len() * args.k_sift);
            for set in &sets {
                data.extend(bow_histogram(&codebook, set)?);
            }
            let centroids: Vec<f64> = codebook.centroids.concat();
            npy::write_array(
                &sibling(&args.out, "codebook.npy"),
                codebook.clusters(),
                codebook.dim(),
                &centroids,
                NpyDtype::F64,
            )?;
            let meta = FeatureMeta {
                feature_kind: kind,
                side: None,
                k_sift: Some(args.k_sift),
                seed: Some(args.seed),
            };
            (data, args.k_sift, meta)
        }
    };
    if ids.is_empty() {
        return Err(all_failed(&skipped));
    }

    let matrix = FeatureMatrix::new(ids, data, dim, kind)?;
    features::save_npy(&matrix, &args.out, NpyDtype::F32)?;
    write_json(&meta_sidecar(&args.out), &meta)?;
    let report = FeaturizeReport {
        mode: format!("{:?}", args.mode).to_lowercase(),
        processed: matrix.n_items(),
        dim,
        skipped,
    };
    write_json(&sibling(&args.out, "report.json"), &report)?;
    Ok(report)
}

fn skip(skipped: &mut Vec<SkippedInput>, id: &str, err: Error) {
    log::warn!("skipping `{id}`: {err}");
    skipped.push(SkippedInput {
        id: id.to_string(),
        error: err.to_string(),
    });
}

fn all_failed(skipped: &[SkippedInput]) -> Error {
    Error::InvalidData(format!("all {} inputs failed to load", skipped.len()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))? + "\n";
    write_atomic(path, text.as_bytes())
}

fn resolve_kind(features: &Path, flag: Option<FeatureKind>) -> Result<FeatureKind> {
    if let Some(kind) = flag {
        return Ok(kind);
    }
    let meta = meta_sidecar(features);
    if meta.exists() {
        let text = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        let parsed: FeatureMeta =
            serde_json::from_str(&text).map_err(|e| Error::format(&meta, e.to_string()))?;
        return Ok(parsed.feature_kind);
    }
    Ok(FeatureKind::Generic)
}

fn load_features(path: &Path, ids: Option<&Path>, kind: Option<FeatureKind>) -> Result<FeatureMatrix> {
    let kind = resolve_kind(path, kind)?;
    if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        if ids.is_some() {
            return Err(Error::InvalidArgument("--ids does not apply to CSV input".into()));
        }
        return Ok(features::load_csv(path)?.with_kind(kind));
    }
    features::load_npy(path, ids, kind)
}

fn parse_cap(k: &str, x: &FeatureMatrix) -> Result<usize> {
    if k == "auto" {
        return Ok(x.n_items().min(x.dim()));
    }
    k.parse()
        .map_err(|_| Error::InvalidArgument(format!("--k must be `auto` or a count, got `{k}`")))
}

/// Side of the square image behind a pixel feature vector of length `d`.
pub fn pixel_side(d: usize) -> Option<u32> {
    if !d.is_multiple_of(3) {
        return None;
    }
    let side = ((d / 3) as f64).sqrt().round() as usize;
    (side * side * 3 == d).then_some(side as u32)
}

fn emit_explanation(e: &Explanation, dir: &Path, kind: FeatureKind) -> Result<()> {
    export_explanation(e, dir, kind)?;
    if kind == FeatureKind::Pixel {
        let side = pixel_side(e.selected.len()).ok_or_else(|| {
            Error::InvalidData(format!(
                "pixel features of length {} are not a square RGB image",
                e.selected.len()
            ))
        })?;
        let (recon, resid) = render_pixel_explanation(e, side)?;
        save_png(&recon, &dir.join(format!("sel_{}_recon.png", e.round)))?;
        save_png(&resid, &dir.join(format!("sel_{}_resid.png", e.round)))?;
    }
    Ok(())
}

fn save_png(img: &image::RgbImage, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::Internal(format!("PNG encoding failed: {e}")))?;
    write_atomic(path, &bytes)
}

pub fn cmd_rank(args: &RankArgs) -> Result<Manifest> {
    let method: Method = args.method.parse()?;
    let x = load_features(&args.features, args.ids.as_deref(), args.kind)?;
    let n_select = args.n.unwrap_or(x.n_items());
    if n_select == 0 || n_select > x.n_items() {
        return Err(Error::InvalidArgument(format!(
            "--n {n_select} outside 1..={}",
            x.n_items()
        )));
    }
    let cap = parse_cap(&args.k, &x)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;

    let records = match method {
        Method::Demud => {
            let mut run = DemudRun::new(&x, cap);
            let mut records = Vec::with_capacity(n_select);
            while records.len() < n_select {
                let (record, e) = run
                    .step()?
                    .ok_or_else(|| Error::Internal("ran out of items".into()))?;
                emit_explanation(&e, &args.out, x.kind())?;
                records.push(record);
            }
            records
        }
        Method::Svd if args.svd_explanations => {
            let (ranking, explanations) = svd_rank_explained(&x, cap, n_select)?;
            for e in &explanations {
                emit_explanation(e, &args.out, x.kind())?;
            }
            ranking.records
        }
        Method::Svd => svd_rank(&x, cap, n_select)?.records,
        Method::Random => random_rank(&x, args.seed, n_select)?.records,
    };

    let random = method == Method::Random;
    let manifest = Manifest {
        header: ManifestHeader {
            tool_version: TOOL_VERSION.to_string(),
            method,
            cap: (!random).then_some(cap),
            seed: random.then_some(args.seed),
            t: args.t,
            n_select,
            n_items: x.n_items(),
            dim: x.dim(),
            feature_digest: file_digest(&args.features)?,
            feature_kind: x.kind(),
            generator: random.then(|| GENERATOR.to_string()),
        },
        records,
    };
    manifest.write(&args.out.join("manifest.jsonl"))?;
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub method: Method,
    pub t: usize,
    /// `flag`, `estimated`, or `estimated-clamped` (cut to the manifest length).
    pub t_source: String,
    pub classes: usize,
    pub curve: Vec<usize>,
    pub nauc: f64,
    pub random_baseline: BaselineStats,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    let manifest = Manifest::read(&args.manifest)?;
    if let Some(features) = &args.features {
        check_digest(&manifest, features, args.allow_digest_mismatch)?;
    }
    let labels = LabelMap::load_csv(&args.labels)?;
    let available = manifest.records.len();
    let (t, t_source) = match args.t {
        Some(t) => (t, "flag".to_string()),
        None => {
            let est = eval::choose_t(&labels, eval::DEFAULT_T_CAP, args.trials, args.seed);
            if est > available {
                (available, "estimated-clamped".to_string())
            } else {
                (est, "estimated".to_string())
            }
        }
    };
    let curve: DiscoveryCurve = eval::discovery_curve(&manifest.ranking(), &labels, t)?;
    let baseline = eval::random_baseline(&labels, t, args.trials, args.seed)?;
    Ok(EvalReport {
        method: manifest.header.method,
        t,
        t_source,
        classes: curve.classes,
        nauc: eval::nauc(&curve),
        curve: curve.counts,
        random_baseline: baseline,
    })
}

fn check_digest(manifest: &Manifest, features: &Path, allow: bool) -> Result<()> {
    let digest = file_digest(features)?;
    if digest == manifest.header.feature_digest {
        return Ok(());
    }
    if allow {
        log::warn!("feature file digest differs from the manifest; continuing as requested");
        return Ok(());
    }
    Err(Error::InvalidData(format!(
        "{} does not match the manifest's feature digest ({} vs {})",
        features.display(),
        digest,
        manifest.header.feature_digest
    )))
}

pub fn cmd_explain(args: &ExplainArgs) -> Result<Explanation> {
    if args.round == 0 {
        return Err(Error::InvalidArgument("--round starts at 1".into()));
    }
    let manifest = Manifest::read(&args.manifest)?;
    if manifest.header.method != Method::Demud {
        return Err(Error::InvalidArgument(format!(
            "explain needs a demud manifest, this one is `{}`",
            manifest.header.method
        )));
    }
    let target = manifest.records.get(args.round - 1).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "round {} not in manifest ({} selections)",
            args.round,
            manifest.records.len()
        ))
    })?;
    check_digest(&manifest, &args.features, args.allow_digest_mismatch)?;
    let kind = args.kind.unwrap_or(manifest.header.feature_kind);
    let x = load_features(&args.features, args.ids.as_deref(), Some(kind))?;
    let cap = manifest
        .header
        .cap
        .ok_or_else(|| Error::InvalidData("manifest header lacks the component cap".into()))?;

    let mut run = DemudRun::new(&x, cap);
    let mut last = None;
    for _ in 0..args.round {
        last = run.step()?;
    }
    let (record, e) = last.ok_or_else(|| Error::Internal("selection ran out of items".into()))?;
    if record.item_index != target.item_index || record.item_id != target.item_id {
        return Err(Error::InvalidData(format!(
            "recomputed round {} selects `{}`, manifest says `{}`",
            args.round, record.item_id, target.item_id
        )));
    }
    std::fs::create_dir_all(&args.out).map_err(|err| Error::io(&args.out, err))?;
    emit_explanation(&e, &args.out, x.kind())?;
    Ok(e)
}
