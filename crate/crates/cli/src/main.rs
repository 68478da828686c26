//! `oodkit` command-line interface.
//!
//! Every command writes its artifacts through a temporary file and a rename,
//! so an output path either holds a complete artifact or is left untouched.
//! Exit status is 0 only after all artifacts are in place.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use oodkit::encoder::{train_toy_encoder, ToyEncoderParams, ToyTrainConfig};
use oodkit::experiment::{check_disjoint, table_csv, Selections};
use oodkit::lof::LOF_MAGIC;
use oodkit::parallel::{with_workers, worker_count};
use oodkit::protocols::{self, Protocol, MAIN_SWEEP_KS};
use oodkit::ssd::{fit_gaussian_default, SSD_MAGIC};
use oodkit::synthetic::{dermoscopy_fixture, FixtureConfig};
use oodkit::{
    fit_gaussian, fit_lof, k_sweep, load_embeddings, run_experiment, stratified_group_split,
    DetectorConfig, EmbeddingFormat, EmbeddingMatrix, EvalReport, ExperimentConfig, Filter,
    GaussianStats, LofModel, Metric, SampleManifest, Split, SplitRatios,
};

/// Seed used by every command unless `--seed` is given.
const DEFAULT_SEED: u64 = 2019;

#[derive(Parser)]
#[command(
    name = "oodkit",
    version,
    about = "Out-of-distribution scoring of embedding sets with LOF and Mahalanobis detectors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the seeded synthetic dermoscopy fixture (unsplit manifest + embeddings).
    Synth(SynthArgs),
    /// Assign train/val/test splits at group level, stratified by class and source.
    Split(SplitArgs),
    /// Fit a LOF or SSD model on a filtered selection and save it.
    Fit(FitArgs),
    /// Score embeddings with a saved model; writes one score per row.
    Score(ScoreArgs),
    /// Evaluate a saved model on ID/OOD selections; writes a JSON report.
    Eval(EvalArgs),
    /// Fit-and-evaluate over a list of K (plus SSD), one report per cell and a table.
    Sweep(SweepArgs),
    /// Train the toy encoder contrastively and embed its inputs.
    ToyTrain(ToyTrainArgs),
    /// Aggregate JSON reports into a CSV table.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorKind {
    Lof,
    Ssd,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    dim: u64,
    /// Multiplier on the per-stratum group counts.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Leave out the CIFAR10/SVHN block.
    #[arg(long)]
    no_benchmark: bool,
    /// Output directory; receives `embeddings.bin` and `manifest.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Train, val and test fractions; must sum to 1.
    #[arg(long, default_value = "0.80,0.05,0.15", value_parser = parse_ratios)]
    ratios: SplitRatios,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Embedding file (binary container, or headerless CSV by `.csv` extension).
    #[arg(long)]
    embeddings: PathBuf,
    /// Manifest CSV aligned row-for-row with the embeddings.
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct DetectorArgs {
    #[arg(long, value_enum, default_value = "lof")]
    detector: DetectorKind,
    /// LOF neighborhood size.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long, default_value = "cosine")]
    metric: Metric,
    /// SSD diagonal loading; trace-scaled default when omitted.
    #[arg(long)]
    epsilon: Option<f64>,
    /// L2-normalize embeddings before fitting and scoring.
    #[arg(long)]
    normalize: bool,
}

impl DetectorArgs {
    fn config(&self) -> Result<DetectorConfig> {
        Ok(match self.detector {
            DetectorKind::Lof => DetectorConfig::Lof {
                k: self.k as usize,
                metric: self.metric,
            },
            DetectorKind::Ssd => {
                if let Some(e) = self.epsilon {
                    if !(e.is_finite() && e >= 0.0) {
                        bail!("--epsilon must be finite and >= 0");
                    }
                }
                DetectorConfig::Ssd {
                    epsilon: self.epsilon,
                }
            }
        })
    }
}

/// A split selector; `all` places no split constraint.
#[derive(Clone, Copy, Debug)]
struct SplitSel(Option<Split>);

fn parse_split_sel(s: &str) -> std::result::Result<SplitSel, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(SplitSel(None));
    }
    s.parse::<Split>().map(|v| SplitSel(Some(v))).map_err(|e| e.to_string())
}

fn parse_ratios(s: &str) -> std::result::Result<SplitRatios, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let [train, val, test] = parts[..] else {
        return Err(format!("expected three comma-separated fractions, got {}", parts.len()));
    };
    SplitRatios::new(train, val, test).map_err(|e| e.to_string())
}

fn build_filter(classes: &[String], sources: &[String], splits: &[SplitSel]) -> Filter {
    let f = Filter::new()
        .classes(classes.iter().map(String::as_str))
        .sources(sources.iter().map(String::as_str));
    if splits.iter().all(|s| s.0.is_some()) {
        f.splits(splits.iter().filter_map(|s| s.0))
    } else {
        f
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Comma-separated class labels; all classes when omitted.
    #[arg(long, value_delimiter = ',')]
    classes: Vec<String>,
    /// Comma-separated sources; all sources when omitted.
    #[arg(long, value_delimiter = ',')]
    sources: Vec<String>,
    /// Comma-separated splits, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "train", value_parser = parse_split_sel)]
    split: Vec<SplitSel>,
    /// Model container path; a `<out>.fit.json` record is written beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Optional manifest; when given, rows are labeled by sample id and may be filtered.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    classes: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    sources: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "all", value_parser = parse_split_sel)]
    split: Vec<SplitSel>,
    /// Output CSV (`sample_id,score` or `row,score`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',')]
    id_classes: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    id_sources: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "test", value_parser = parse_split_sel)]
    id_split: Vec<SplitSel>,
    #[arg(long, value_delimiter = ',')]
    ood_classes: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    ood_sources: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "all", value_parser = parse_split_sel)]
    ood_split: Vec<SplitSel>,
    /// Experiment name recorded in the report.
    #[arg(long, default_value = "eval")]
    name: String,
    /// Named protocol whose published value is attached as the reference.
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Named protocol supplying filters and the default K list.
    #[arg(long, required_unless_present = "fit_classes")]
    protocol: Option<String>,
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u64).range(1..))]
    ks: Vec<u64>,
    #[arg(long, default_value = "cosine")]
    metric: Metric,
    #[arg(long)]
    normalize: bool,
    /// Leave out the SSD row.
    #[arg(long)]
    no_ssd: bool,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Custom sweep: fit classes (train split).
    #[arg(long, value_delimiter = ',', conflicts_with = "protocol")]
    fit_classes: Vec<String>,
    /// Custom sweep: sources for fit and ID eval.
    #[arg(long, value_delimiter = ',', conflicts_with = "protocol")]
    fit_sources: Vec<String>,
    /// Custom sweep: OOD classes (any split).
    #[arg(long, value_delimiter = ',', conflicts_with = "protocol")]
    ood_classes: Vec<String>,
    #[arg(long, default_value = "sweep")]
    name: String,
    /// Output directory for per-cell reports and `table.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ToyTrainArgs {
    /// Input vectors (binary container or CSV).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    hidden: u64,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    out_dim: u64,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    epochs: u64,
    /// Samples per batch (each contributes two views).
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(2..))]
    batch: u64,
    #[arg(long, default_value_t = oodkit::contrastive::DEFAULT_TEMPERATURE)]
    tau: f64,
    /// Standard deviation of the additive-noise augmentation.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output directory; receives `encoder.bin`, `curve.csv` and `embedded.bin`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON files, in table order.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Written beside every model so `eval` can refuse fit/eval overlap.
#[derive(Debug, Serialize, Deserialize)]
struct FitRecord {
    detector: DetectorConfig,
    fit_filter: Filter,
    normalize: bool,
    embeddings_path: String,
    manifest_path: String,
    fit_sample_ids: Vec<String>,
}

fn fit_record_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".fit.json");
    PathBuf::from(s)
}

enum Model {
    Lof(LofModel),
    Ssd(GaussianStats),
}

impl Model {
    fn load(path: &Path) -> Result<Model> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        match bytes.get(..4) {
            Some(m) if m == LOF_MAGIC => Ok(Model::Lof(LofModel::from_bytes(&bytes)?)),
            Some(m) if m == SSD_MAGIC => Ok(Model::Ssd(GaussianStats::from_bytes(&bytes)?)),
            _ => bail!("{} is not a LOF or SSD model container", path.display()),
        }
    }

    fn score(&self, q: &EmbeddingMatrix) -> Result<Vec<f64>> {
        Ok(match self {
            Model::Lof(m) => m.score_batch(q)?,
            Model::Ssd(s) => s.score_batch(q)?,
        })
    }

    fn epsilon(&self) -> Option<f64> {
        match self {
            Model::Lof(_) => None,
            Model::Ssd(s) => Some(s.epsilon()),
        }
    }
}

/// Writes `pairs` of (path, bytes) so that either all land or none do.
fn write_all_atomic(pairs: &[(&Path, &[u8])]) -> Result<()> {
    let mut staged = Vec::new();
    for (path, bytes) in pairs {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".partial");
        let tmp = PathBuf::from(tmp);
        if let Err(e) = fs::write(&tmp, bytes) {
            let _ = fs::remove_file(&tmp);
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(e).with_context(|| format!("writing {}", path.display()));
        }
        staged.push((tmp, *path));
    }
    for (tmp, path) in staged {
        fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Refuses an output path that would overwrite one of the inputs.
fn ensure_not_input(out: &Path, inputs: &[&Path]) -> Result<()> {
    let canon = |p: &Path| fs::canonicalize(p).ok();
    if let Some(o) = canon(out) {
        for i in inputs {
            if canon(i).as_ref() == Some(&o) {
                bail!("output {} would overwrite an input file", out.display());
            }
        }
    }
    Ok(())
}

fn load_z(path: &Path) -> Result<EmbeddingMatrix> {
    Ok(load_embeddings(path, EmbeddingFormat::from_path(path))?)
}

fn embedding_bytes(m: &EmbeddingMatrix) -> Result<Vec<u8>> {
    Ok(m.to_binary()?)
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let cfg = FixtureConfig {
        seed: a.seed,
        dim: a.dim as usize,
        scale: a.scale,
        benchmark_block: !a.no_benchmark,
    };
    let (manifest, z) = dermoscopy_fixture(&cfg)?;
    let emb = a.out.join("embeddings.bin");
    let man = a.out.join("manifest.csv");
    write_all_atomic(&[
        (&emb, &embedding_bytes(&z)?),
        (&man, manifest.to_csv().as_bytes()),
    ])?;
    println!("{} samples, dimension {}", z.n(), z.d());
    Ok(())
}

fn cmd_split(a: &SplitArgs) -> Result<()> {
    ensure_not_input(&a.out, &[&a.manifest])?;
    let manifest = SampleManifest::load(&a.manifest)?;
    let assignment = stratified_group_split(&manifest, a.ratios, a.seed)?;
    let out = assignment.apply(&manifest)?;
    write_all_atomic(&[(&a.out, out.to_csv().as_bytes())])?;
    for w in &assignment.warnings {
        eprintln!("warning: {w}");
    }
    println!("class,source,train_groups,val_groups,test_groups,train_samples,val_samples,test_samples");
    for s in &assignment.strata {
        println!(
            "{},{},{},{},{},{},{},{}",
            s.class_label,
            s.source,
            s.groups[0],
            s.groups[1],
            s.groups[2],
            s.samples[0],
            s.samples[1],
            s.samples[2]
        );
    }
    Ok(())
}

fn load_data(d: &DataArgs) -> Result<(SampleManifest, EmbeddingMatrix)> {
    let manifest = SampleManifest::load(&d.manifest)?;
    let z = load_z(&d.embeddings)?;
    if manifest.len() != z.n() {
        bail!(
            "manifest has {} records but embeddings have {} rows",
            manifest.len(),
            z.n()
        );
    }
    Ok((manifest, z))
}

fn prepared(z: &EmbeddingMatrix, normalize: bool) -> Result<EmbeddingMatrix> {
    Ok(if normalize { z.l2_normalize()? } else { z.clone() })
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let detector = a.detector.config()?;
    ensure_not_input(&a.out, &[&a.data.embeddings, &a.data.manifest])?;
    let (manifest, z) = load_data(&a.data)?;
    let filter = build_filter(&a.classes, &a.sources, &a.split);
    let idx = manifest.select(&filter)?;
    let fit = prepared(&z, a.detector.normalize)?.select(&idx)?;
    let model_bytes = match detector {
        DetectorConfig::Lof { k, metric } => fit_lof(&fit, k, metric)?.to_bytes()?,
        DetectorConfig::Ssd { epsilon } => match epsilon {
            Some(e) => fit_gaussian(&fit, e)?,
            None => fit_gaussian_default(&fit)?,
        }
        .to_bytes()?,
    };
    let record = FitRecord {
        detector,
        fit_filter: filter.clone(),
        normalize: a.detector.normalize,
        embeddings_path: path_string(&a.data.embeddings),
        manifest_path: path_string(&a.data.manifest),
        fit_sample_ids: idx
            .iter()
            .map(|&i| manifest.records()[i].sample_id.clone())
            .collect(),
    };
    let record_json = serde_json::to_string_pretty(&record)? + "\n";
    write_all_atomic(&[
        (&a.out, &model_bytes),
        (&fit_record_path(&a.out), record_json.as_bytes()),
    ])?;
    println!("fit {detector} on {} samples ({filter})", idx.len());
    Ok(())
}

fn load_fit_record(model: &Path) -> Result<FitRecord> {
    let path = fit_record_path(model);
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading fit record {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_score(a: &ScoreArgs) -> Result<()> {
    let inputs: Vec<&Path> = [Some(a.model.as_path()), Some(a.embeddings.as_path()), a.manifest.as_deref()]
        .into_iter()
        .flatten()
        .collect();
    ensure_not_input(&a.out, &inputs)?;
    let model = Model::load(&a.model)?;
    // models saved without a fit record were fitted on raw rows
    let normalize = if fit_record_path(&a.model).exists() {
        load_fit_record(&a.model)?.normalize
    } else {
        false
    };
    let z = prepared(&load_z(&a.embeddings)?, normalize)?;
    let (labels, rows): (Vec<String>, Vec<usize>) = match &a.manifest {
        Some(path) => {
            let manifest = SampleManifest::load(path)?;
            if manifest.len() != z.n() {
                bail!("manifest has {} records but embeddings have {} rows", manifest.len(), z.n());
            }
            let idx = manifest.select(&build_filter(&a.classes, &a.sources, &a.split))?;
            (
                idx.iter().map(|&i| manifest.records()[i].sample_id.clone()).collect(),
                idx,
            )
        }
        None => {
            if !(a.classes.is_empty() && a.sources.is_empty()) {
                bail!("--classes/--sources need --manifest");
            }
            ((0..z.n()).map(|i| i.to_string()).collect(), (0..z.n()).collect())
        }
    };
    let scores = model.score(&z.select(&rows)?)?;
    let header = if a.manifest.is_some() { "sample_id" } else { "row" };
    let mut out = format!("{header},score\n");
    for (l, s) in labels.iter().zip(&scores) {
        out.push_str(&format!("{l},{s:?}\n"));
    }
    write_all_atomic(&[(&a.out, out.as_bytes())])?;
    println!("scored {} rows", scores.len());
    Ok(())
}

fn find_protocol(name: &str) -> Result<Protocol> {
    protocols::protocol(name).ok_or_else(|| {
        let names: Vec<&str> = protocols::all_protocols().iter().map(|p| p.name).collect();
        anyhow!("unknown protocol {name:?}; known: {}", names.join(", "))
    })
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    ensure_not_input(&a.out, &[&a.model, &a.data.embeddings, &a.data.manifest])?;
    let protocol = a.protocol.as_deref().map(find_protocol).transpose()?;
    let model = Model::load(&a.model)?;
    let record = load_fit_record(&a.model)?;
    let (manifest, z) = load_data(&a.data)?;

    let id_filter = build_filter(&a.id_classes, &a.id_sources, &a.id_split);
    let ood_filter = build_filter(&a.ood_classes, &a.ood_sources, &a.ood_split);
    let fit_ids: HashSet<&str> = record.fit_sample_ids.iter().map(String::as_str).collect();
    let sel = Selections {
        fit: (0..manifest.len())
            .filter(|&i| fit_ids.contains(manifest.records()[i].sample_id.as_str()))
            .collect(),
        id_eval: manifest.select(&id_filter)?,
        ood_eval: manifest.select(&ood_filter)?,
    };
    check_disjoint(&manifest, &sel)?;
    let zp = prepared(&z, record.normalize)?;
    let id_scores = model.score(&zp.select(&sel.id_eval)?)?;
    let ood_scores = model.score(&zp.select(&sel.ood_eval)?)?;

    let config = ExperimentConfig {
        name: a.name.clone(),
        detector: record.detector,
        fit_filter: record.fit_filter.clone(),
        id_eval_filter: id_filter,
        ood_eval_filter: ood_filter,
        normalize: record.normalize,
        embeddings_path: Some(path_string(&a.data.embeddings)),
        manifest_path: Some(path_string(&a.data.manifest)),
    };
    // the report counts the fit set as recorded, even if the manifest changed
    let mut report = EvalReport::from_scores(&config, &sel, id_scores, ood_scores, model.epsilon())?;
    report.n_fit = record.fit_sample_ids.len();
    report.reference_auroc = protocol.and_then(|p| p.published_for(&record.detector));
    write_all_atomic(&[(&a.out, (report.to_json() + "\n").as_bytes())])?;
    println!(
        "{}: AUROC {:.4} ({} ID, {} OOD)",
        report.detector_label, report.auroc, report.n_id, report.n_ood
    );
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    if let Some(e) = a.epsilon {
        if !(e.is_finite() && e >= 0.0) {
            bail!("--epsilon must be finite and >= 0");
        }
    }
    let (manifest, z) = load_data(&a.data)?;
    let protocol = a.protocol.as_deref().map(find_protocol).transpose()?;
    let lof = |k: usize| DetectorConfig::Lof { k, metric: a.metric };
    let mut base = match &protocol {
        Some(p) => p.config(lof(1)),
        None => {
            let id = Filter::new()
                .classes(a.fit_classes.iter().map(String::as_str))
                .sources(a.fit_sources.iter().map(String::as_str));
            ExperimentConfig {
                name: a.name.clone(),
                detector: lof(1),
                fit_filter: id.clone().split(Split::Train),
                id_eval_filter: id.split(Split::Test),
                ood_eval_filter: Filter::new()
                    .classes(a.ood_classes.iter().map(String::as_str))
                    .sources(a.fit_sources.iter().map(String::as_str)),
                normalize: false,
                embeddings_path: None,
                manifest_path: None,
            }
        }
    };
    base.normalize = a.normalize;
    base.embeddings_path = Some(path_string(&a.data.embeddings));
    base.manifest_path = Some(path_string(&a.data.manifest));

    let ks: Vec<usize> = if !a.ks.is_empty() {
        a.ks.iter().map(|&k| k as usize).collect()
    } else if let Some(p) = &protocol {
        p.sweep_ks().to_vec()
    } else {
        MAIN_SWEEP_KS.to_vec()
    };
    let mut reports = k_sweep(&base, &ks, &manifest, &z)?;
    let with_ssd = !a.no_ssd && protocol.as_ref().is_none_or(|p| p.published_ssd.is_some());
    if with_ssd {
        reports.push(run_experiment(
            &base.with_detector(DetectorConfig::Ssd { epsilon: a.epsilon }),
            &manifest,
            &z,
        )?);
    }
    if let Some(p) = &protocol {
        for r in &mut reports {
            r.reference_auroc = p.published_for(&r.config.detector);
        }
    }

    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    let mut seen = BTreeSet::new();
    for r in &reports {
        let stem = match r.config.detector {
            DetectorConfig::Lof { k, .. } => format!("{}_k{k}", base.name),
            DetectorConfig::Ssd { .. } => format!("{}_ssd", base.name),
        };
        // repeated K values share one file
        if seen.insert(stem.clone()) {
            files.push((a.out.join(format!("{stem}.json")), (r.to_json() + "\n").into_bytes()));
        }
    }
    let table = table_csv(&reports);
    files.push((a.out.join("table.csv"), table.clone().into_bytes()));
    let pairs: Vec<(&Path, &[u8])> = files.iter().map(|(p, b)| (p.as_path(), b.as_slice())).collect();
    write_all_atomic(&pairs)?;
    print!("{table}");
    Ok(())
}

fn cmd_toy_train(a: &ToyTrainArgs) -> Result<()> {
    let samples = load_z(&a.input)?;
    let params = ToyEncoderParams::init(samples.d(), a.hidden as usize, a.out_dim as usize, a.seed)?;
    let config = ToyTrainConfig {
        lr: a.lr,
        epochs: a.epochs as usize,
        batch_n: a.batch as usize,
        tau: a.tau,
        noise_scale: a.noise,
        seed: a.seed,
    };
    let outcome = train_toy_encoder(&samples, &params, &config)?;
    let embedded = outcome.params.embed(&samples)?;
    let (enc, curve, emb) = (
        a.out.join("encoder.bin"),
        a.out.join("curve.csv"),
        a.out.join("embedded.bin"),
    );
    ensure_not_input(&emb, &[&a.input])?;
    write_all_atomic(&[
        (&enc, &outcome.params.to_bytes()),
        (&curve, outcome.curve_csv().as_bytes()),
        (&emb, &embedding_bytes(&embedded)?),
    ])?;
    println!(
        "epoch 1 mean loss {:.6}, epoch {} mean loss {:.6}",
        outcome.curve[0],
        outcome.curve.len(),
        outcome.curve[outcome.curve.len() - 1]
    );
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let inputs: Vec<&Path> = a.reports.iter().map(PathBuf::as_path).collect();
    ensure_not_input(&a.out, &inputs)?;
    let reports = a
        .reports
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(EvalReport::from_json(&text)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let table = table_csv(&reports);
    write_all_atomic(&[(&a.out, table.as_bytes())])?;
    print!("{table}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Split(a) => cmd_split(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Score(a) => cmd_score(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ToyTrain(a) => cmd_toy_train(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match with_workers(worker_count(), || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
