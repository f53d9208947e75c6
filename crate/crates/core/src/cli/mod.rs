//! Config-driven experiment runner behind the `kernel-spectra` binary.
//!
//! | Command | Artifacts |
//! |---------|-----------|
//! | `gram` | `spectrum.csv`, `projections.csv`, `measures.json` (+ `alignf.csv`) |
//! | `train` | `trajectory.csv`, `manifest.json` |
//! | `compare` | `compare.csv`, `ranking.json` |
//! | `embed` | `embedding.bin`, `embedding.json` (+ `alignf.csv`) |
//!
//! Every command also writes `timing.json` with the wall time. It is kept apart from the
//! other artifacts so those stay byte-identical across reruns.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use crate::align::{alignf_kernel, gaussian_bank, AlignfResult};
use crate::data::{self, Dataset, RawImageSet, Split};
use crate::embed::{build_nystrom, build_rff, pretrain_neural_embedding, Embedding, KernelSpec, PretrainConfig};
use crate::error::{Error, Result};
use crate::exec::{with_threads, Exec};
use crate::gram::{
    self, generalization_measure, projection_profile, GeneralizationMeasure, GramMatrix, ProjectionProfile, Spectrum,
};
use crate::train::{init_network, train_with, Record};

pub use config::{
    DatasetConfig, DatasetName, EmbeddingConfig, ExperimentConfig, GramConfig, GramSourceConfig, NeuralSource,
    TrainSection,
};
use output::{alignf_csv, ensure_dir, opt, projections_csv, spectrum_csv, text, trajectory_csv, write_json, Csv};

/// Cumulative-projection checkpoints reported by `gram` and `compare`.
pub const CHECKPOINTS: [usize; 3] = [10, 50, 100];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Gram,
    Train,
    Compare,
    Embed,
}

/// Independent seed streams derived from the experiment seed.
pub mod stream {
    pub const SUBSET: u64 = 1;
    pub const TEST_SUBSET: u64 = 2;
    pub const EMBED: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const PRETRAIN: u64 = 5;
    pub const TRAIN: u64 = 6;
    pub const MONTE_CARLO: u64 = 7;
}

/// SplitMix64 of `seed` mixed with a stream tag.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// Paths written by a command.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
}

/// `{"error": {"kind": ..., "message": ...}}`
pub fn error_json(e: &Error) -> String {
    json!({ "error": { "kind": e.kind(), "message": e.to_string() } }).to_string()
}

/// Applies the overrides and runs `command` inside a pool of `threads` workers.
pub fn run(command: Command, mut config: ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if let Some(out) = &opts.out {
        config.output.dir = out.clone();
    }
    config.validate()?;
    let out = ensure_dir(&config.output.dir)?;
    let start = Instant::now();
    let exec = Exec::Parallel;
    let result = with_threads(opts.threads, || match command {
        Command::Gram => cmd_gram(&config, &out, exec),
        Command::Train => cmd_train(&config, &out, exec),
        Command::Compare => cmd_compare(&config, &out, exec),
        Command::Embed => cmd_embed(&config, &out, exec),
    });
    let timing = out.join("timing.json");
    write_json(
        &timing,
        &json!({ "wall_seconds": start.elapsed().as_secs_f64(), "threads": opts.threads }),
    )?;
    let mut report = result?;
    report.files.push(timing);
    Ok(report)
}

/// Training rows (subsampled per the config), the test rows, and the raw training images
/// (needed for transfer pre-training on another class pair).
pub struct Task {
    pub raw_train: RawImageSet,
    pub train: Dataset,
    pub test: Option<Dataset>,
}

fn load_raw(cfg: &DatasetConfig, split: Split) -> Result<RawImageSet> {
    let dir = &cfg.path;
    match (cfg.name, split) {
        (DatasetName::Mnist, Split::Train) => data::load_mnist(
            dir.join("train-images-idx3-ubyte"),
            dir.join("train-labels-idx1-ubyte"),
        ),
        (DatasetName::Mnist, Split::Test) => data::load_mnist(
            dir.join("t10k-images-idx3-ubyte"),
            dir.join("t10k-labels-idx1-ubyte"),
        ),
        (DatasetName::Cifar10, Split::Train) => {
            let paths: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
            data::load_cifar10(&paths)
        }
        (DatasetName::Cifar10, Split::Test) => data::load_cifar10(&[dir.join("test_batch.bin")]),
    }
}

fn binary_task(raw: &RawImageSet, classes: [u8; 2], split: Split, per_class: Option<usize>, seed: u64) -> Result<Dataset> {
    let full = data::make_binary_task(raw, classes[0], classes[1], split, None)?;
    match per_class {
        Some(k) => data::subsample_per_class(&full, k, seed),
        None => Ok(full),
    }
}

pub fn load_task(cfg: &DatasetConfig, seed: u64) -> Result<Task> {
    let raw_train = load_raw(cfg, Split::Train)?;
    let train = binary_task(&raw_train, cfg.classes, Split::Train, cfg.per_class, derive_seed(seed, stream::SUBSET))?;
    let test = if cfg.test {
        let raw = load_raw(cfg, Split::Test)?;
        Some(binary_task(&raw, cfg.classes, Split::Test, cfg.test_per_class, derive_seed(seed, stream::TEST_SUBSET))?)
    } else {
        None
    };
    Ok(Task { raw_train, train, test })
}

#[derive(Clone, Debug)]
pub struct AlignfReport {
    pub gammas: Vec<f64>,
    pub result: AlignfResult,
}

#[derive(Clone, Debug, Serialize)]
pub struct PretrainSummary {
    pub epochs: usize,
    pub rows: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// A constructed embedding and the rows downstream steps should use.
pub struct Prepared {
    pub embedding: Embedding,
    /// Training rows for the downstream model (the held-out half for same-half neural runs).
    pub train: Dataset,
    /// Kernel the embedding approximates, when there is one.
    pub kernel: Option<KernelSpec>,
    pub construction_seed: u64,
    pub alignf: Option<AlignfReport>,
    pub pretrain: Option<PretrainSummary>,
}

pub fn prepare(cfg: &EmbeddingConfig, task: &Task, dataset: &DatasetConfig, seed: u64, exec: Exec) -> Result<Prepared> {
    let train = &task.train;
    let s = derive_seed(seed, stream::EMBED);
    let mut prepared = Prepared {
        embedding: Embedding::Identity { dim: train.dim() },
        train: train.clone(),
        kernel: None,
        construction_seed: s,
        alignf: None,
        pretrain: None,
    };
    match cfg {
        EmbeddingConfig::Identity => prepared.kernel = Some(KernelSpec::Linear),
        EmbeddingConfig::Rff { gamma, dim } => {
            prepared.embedding = Embedding::Rff(build_rff(*gamma, *dim, train.dim(), s)?);
            prepared.kernel = Some(KernelSpec::Gaussian { gamma: *gamma });
        }
        EmbeddingConfig::Nystrom { kernel, dim, eig_floor } => {
            prepared.embedding = Embedding::Nystrom(build_nystrom(kernel, train.features().view(), *dim, s, *eig_floor)?);
            prepared.kernel = Some(kernel.clone());
        }
        EmbeddingConfig::Alignf { gammas, dim, eig_floor, tol } => {
            let (kernel, result) = alignf_kernel(&gaussian_bank(gammas), train.features().view(), train.labels(), *tol, exec)?;
            if !result.excluded.is_empty() {
                eprintln!("warning: alignf excluded degenerate base kernels {:?}", result.excluded);
            }
            prepared.embedding = Embedding::Nystrom(build_nystrom(&kernel, train.features().view(), *dim, s, *eig_floor)?);
            prepared.kernel = Some(kernel);
            prepared.alignf = Some(AlignfReport {
                gammas: gammas.clone(),
                result,
            });
        }
        EmbeddingConfig::Neural {
            source,
            hidden1,
            hidden2,
            eta,
            epochs,
            init_scale,
            other_classes,
        } => {
            let pre_set = match source {
                NeuralSource::SameHalf => {
                    let (pre, rest) = data::split_half(train, derive_seed(seed, stream::SPLIT))?;
                    prepared.train = rest;
                    pre
                }
                NeuralSource::OtherClasses => binary_task(
                    &task.raw_train,
                    *other_classes,
                    Split::Train,
                    dataset.per_class,
                    derive_seed(seed, stream::SUBSET),
                )?,
            };
            let pre = pretrain_neural_embedding(
                &pre_set,
                &PretrainConfig {
                    hidden1: *hidden1,
                    hidden2: *hidden2,
                    eta: *eta,
                    epochs: *epochs,
                    seed: derive_seed(seed, stream::PRETRAIN),
                    init_scale: *init_scale,
                },
            )?;
            prepared.construction_seed = derive_seed(seed, stream::PRETRAIN);
            prepared.pretrain = Some(PretrainSummary {
                epochs: *epochs,
                rows: pre_set.len(),
                initial_loss: pre.losses[0],
                final_loss: *pre.losses.last().expect("at least one loss"),
            });
            prepared.embedding = Embedding::Neural(pre.map);
        }
        EmbeddingConfig::File { path } => {
            let e = Embedding::load(path)?;
            if e.input_dim() != train.dim() {
                return Err(Error::Precondition(format!(
                    "embedding in {} takes {}-dimensional inputs, the dataset has {}",
                    path.display(),
                    e.input_dim(),
                    train.dim()
                )));
            }
            prepared.embedding = e;
        }
    }
    Ok(prepared)
}

/// Spectral analysis of one prepared embedding.
pub struct Analysis {
    pub gram: GramMatrix,
    pub spectrum: Spectrum,
    pub profile: ProjectionProfile,
    pub measure: GeneralizationMeasure,
}

pub fn analyze(prepared: &Prepared, embedded: &Dataset, cfg: &GramConfig, seed: u64, exec: Exec) -> Result<Analysis> {
    let rows = embedded.features().view();
    let gram = match cfg.source {
        GramSourceConfig::ClosedForm => gram::gram_from_embedded_with(rows, exec)?,
        GramSourceConfig::MonteCarlo => {
            gram::gram_monte_carlo_with(rows, cfg.samples, derive_seed(seed, stream::MONTE_CARLO), exec)?
        }
        GramSourceConfig::KernelMatrix => {
            let kernel = prepared.kernel.as_ref().ok_or_else(|| {
                Error::Config(format!(
                    "a {:?} embedding has no closed-form kernel for gram.source = \"kernel_matrix\"",
                    prepared.embedding.kind()
                ))
            })?;
            let k = kernel.gram(prepared.train.features().view(), exec);
            gram::gram_from_kernel_matrix_with(k.view(), exec)?
        }
    };
    let spectrum = Spectrum::from_matrix(gram.h.view(), cfg.eigen)?;
    let y = embedded.labels();
    let profile = projection_profile(&spectrum, y)?;
    let measure = generalization_measure(&spectrum, y, cfg.pinv_floor)?;
    Ok(Analysis {
        gram,
        spectrum,
        profile,
        measure,
    })
}

fn checkpoint_map(profile: &ProjectionProfile) -> serde_json::Map<String, serde_json::Value> {
    CHECKPOINTS
        .iter()
        .map(|&c| (c.to_string(), json!(profile.cumulative_at(c))))
        .collect()
}

fn cmd_gram(cfg: &ExperimentConfig, out: &Path, exec: Exec) -> Result<RunReport> {
    let task = load_task(&cfg.dataset, cfg.seed)?;
    let prepared = prepare(&cfg.embedding, &task, &cfg.dataset, cfg.seed, exec)?;
    let embedded = prepared.embedding.embed_dataset(&prepared.train, exec)?;
    let a = analyze(&prepared, &embedded, &cfg.gram, cfg.seed, exec)?;

    let mut files = Vec::new();
    let p = out.join("spectrum.csv");
    spectrum_csv(&a.spectrum).write(&p)?;
    files.push(p);
    let p = out.join("projections.csv");
    projections_csv(&a.spectrum, &a.profile).write(&p)?;
    files.push(p);
    let p = out.join("measures.json");
    write_json(
        &p,
        &json!({
            "embedding": cfg.embedding.label(),
            "kind": prepared.embedding.kind(),
            "dim": prepared.embedding.dim(),
            "n": embedded.len(),
            "source": a.gram.source,
            "generalization_measure": a.measure.value,
            "pinv_floor": cfg.gram.pinv_floor,
            "dropped_eigenvalues": a.measure.dropped,
            "retained_eigenvalues": a.measure.retained,
            "trace": a.gram.trace(),
            "lambda_max": a.spectrum.lambda_max(),
            "cumulative_projection": checkpoint_map(&a.profile),
            "alignf_alignment": prepared.alignf.as_ref().map(|r| r.result.alignment),
        }),
    )?;
    files.push(p);
    if let Some(r) = &prepared.alignf {
        let p = out.join("alignf.csv");
        alignf_csv(&r.gammas, &r.result).write(&p)?;
        files.push(p);
    }
    Ok(RunReport { files })
}

struct TrainRun {
    records: Vec<Record>,
    error: Option<Error>,
    dim: usize,
    n_train: usize,
    n_test: Option<usize>,
}

fn train_prepared(cfg: &ExperimentConfig, prepared: &Prepared, test: Option<&Dataset>, exec: Exec) -> Result<TrainRun> {
    let train_set = prepared.embedding.embed_dataset(&prepared.train, exec)?;
    let test_set = test.map(|t| prepared.embedding.embed_dataset(t, exec)).transpose()?;
    let seed = derive_seed(cfg.seed, stream::TRAIN);
    let tc = cfg.train.to_train_config(seed);
    let state = init_network(cfg.train.width, train_set.dim(), tc.init_scale, seed)?;
    let mut records = Vec::new();
    let error = train_with(state, &train_set, test_set.as_ref(), &tc, exec, |r| records.push(*r)).err();
    Ok(TrainRun {
        records,
        error,
        dim: train_set.dim(),
        n_train: train_set.len(),
        n_test: test_set.as_ref().map(Dataset::len),
    })
}

fn cmd_train(cfg: &ExperimentConfig, out: &Path, exec: Exec) -> Result<RunReport> {
    let task = load_task(&cfg.dataset, cfg.seed)?;
    let prepared = prepare(&cfg.embedding, &task, &cfg.dataset, cfg.seed, exec)?;
    let run = train_prepared(cfg, &prepared, task.test.as_ref(), exec)?;

    let traj = out.join("trajectory.csv");
    trajectory_csv(&run.records).write(&traj)?;
    let (status, failing_step) = match &run.error {
        None => ("ok", None),
        Some(Error::Divergence { step, .. }) => ("diverged", Some(*step)),
        Some(_) => ("failed", None),
    };
    let manifest = out.join("manifest.json");
    write_json(
        &manifest,
        &json!({
            "command": "train",
            "seed": cfg.seed,
            "config": cfg,
            "embedding": cfg.embedding.label(),
            "dim": run.dim,
            "n_train": run.n_train,
            "n_test": run.n_test,
            "pretrain": prepared.pretrain,
            "status": status,
            "failing_step": failing_step,
            "error": run.error.as_ref().map(|e| e.to_string()),
            "final": run.records.last(),
            "timing_file": "timing.json",
        }),
    )?;
    if let Some(e) = run.error {
        return Err(e);
    }
    Ok(RunReport {
        files: vec![traj, manifest],
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareRow {
    pub index: usize,
    pub label: String,
    pub kind: Option<String>,
    pub dim: Option<usize>,
    pub generalization_measure: Option<f64>,
    pub dropped_eigenvalues: Option<usize>,
    pub final_train_loss: Option<f64>,
    pub final_test_loss: Option<f64>,
    pub final_test_accuracy: Option<f64>,
    pub cumulative: Vec<Option<f64>>,
    pub error: Option<(String, String)>,
}

fn compare_entry(cfg: &ExperimentConfig, task: &Task, index: usize, e: &EmbeddingConfig, exec: Exec) -> CompareRow {
    let mut row = CompareRow {
        index,
        label: e.label(),
        kind: None,
        dim: None,
        generalization_measure: None,
        dropped_eigenvalues: None,
        final_train_loss: None,
        final_test_loss: None,
        final_test_accuracy: None,
        cumulative: vec![None; CHECKPOINTS.len()],
        error: None,
    };
    let result = (|| -> Result<()> {
        let prepared = prepare(e, task, &cfg.dataset, cfg.seed, exec)?;
        row.kind = Some(format!("{:?}", prepared.embedding.kind()).to_lowercase());
        row.dim = Some(prepared.embedding.dim());
        let embedded = prepared.embedding.embed_dataset(&prepared.train, exec)?;
        let a = analyze(&prepared, &embedded, &cfg.gram, cfg.seed, exec)?;
        row.generalization_measure = Some(a.measure.value);
        row.dropped_eigenvalues = Some(a.measure.dropped);
        row.cumulative = CHECKPOINTS.iter().map(|&c| Some(a.profile.cumulative_at(c))).collect();
        let run = train_prepared(cfg, &prepared, task.test.as_ref(), exec)?;
        if let Some(last) = run.records.last() {
            row.final_train_loss = Some(last.train_loss);
            row.final_test_loss = last.test_loss;
            row.final_test_accuracy = last.test_accuracy;
        }
        match run.error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    })();
    if let Err(err) = result {
        row.error = Some((err.kind().to_owned(), err.to_string()));
    }
    row
}

fn cmd_compare(cfg: &ExperimentConfig, out: &Path, exec: Exec) -> Result<RunReport> {
    if cfg.compare.len() < 2 {
        return Err(Error::Precondition(format!(
            "compare needs at least two embeddings, got {}",
            cfg.compare.len()
        )));
    }
    let task = load_task(&cfg.dataset, cfg.seed)?;
    let rows: Vec<CompareRow> = cfg
        .compare
        .iter()
        .enumerate()
        .map(|(i, e)| compare_entry(cfg, &task, i, e, exec))
        .collect();

    let mut header = vec![
        "index",
        "label",
        "kind",
        "dim",
        "status",
        "generalization_measure",
        "dropped_eigenvalues",
        "final_train_loss",
        "final_test_loss",
        "final_test_accuracy",
    ];
    let cum_names: Vec<String> = CHECKPOINTS.iter().map(|c| format!("cumulative_{c}")).collect();
    header.extend(cum_names.iter().map(String::as_str));
    header.push("error");
    let mut csv = Csv::new(&header);
    for r in &rows {
        let mut fields = vec![
            r.index.to_string(),
            text(&r.label),
            r.kind.clone().unwrap_or_default(),
            r.dim.map(|d| d.to_string()).unwrap_or_default(),
            if r.error.is_none() { "ok".into() } else { "failed".into() },
            opt(r.generalization_measure),
            r.dropped_eigenvalues.map(|d| d.to_string()).unwrap_or_default(),
            opt(r.final_train_loss),
            opt(r.final_test_loss),
            opt(r.final_test_accuracy),
        ];
        fields.extend(r.cumulative.iter().map(|c| opt(*c)));
        fields.push(r.error.as_ref().map(|(_, m)| text(m)).unwrap_or_default());
        csv.row(&fields);
    }
    let table = out.join("compare.csv");
    csv.write(&table)?;

    let ranked = |key: fn(&CompareRow) -> Option<f64>, ascending: bool| {
        let mut ok: Vec<&CompareRow> = rows.iter().filter(|r| r.error.is_none() && key(r).is_some()).collect();
        ok.sort_by(|a, b| {
            let (x, y) = (key(a).unwrap(), key(b).unwrap());
            let o = if ascending { x.total_cmp(&y) } else { y.total_cmp(&x) };
            o.then(a.index.cmp(&b.index))
        });
        ok.iter()
            .enumerate()
            .map(|(rank, r)| json!({ "rank": rank + 1, "index": r.index, "label": r.label, "value": key(r) }))
            .collect::<Vec<_>>()
    };
    let summary = out.join("ranking.json");
    write_json(
        &summary,
        &json!({
            "by_generalization_measure": ranked(|r| r.generalization_measure, true),
            "by_final_train_loss": ranked(|r| r.final_train_loss, true),
            "by_final_test_accuracy": ranked(|r| r.final_test_accuracy, false),
            "rows": rows,
            "failed": rows.iter().filter_map(|r| r.error.as_ref().map(|(kind, message)| json!({
                "index": r.index, "label": r.label, "kind": kind, "message": message,
            }))).collect::<Vec<_>>(),
        }),
    )?;
    Ok(RunReport {
        files: vec![table, summary],
    })
}

fn cmd_embed(cfg: &ExperimentConfig, out: &Path, exec: Exec) -> Result<RunReport> {
    let task = load_task(&cfg.dataset, cfg.seed)?;
    let prepared = prepare(&cfg.embedding, &task, &cfg.dataset, cfg.seed, exec)?;
    let container = prepared.embedding.to_container();
    let bin = out.join("embedding.bin");
    container.write(&bin)?;
    let summary = out.join("embedding.json");
    write_json(
        &summary,
        &json!({
            "embedding": cfg.embedding.label(),
            "kind": prepared.embedding.kind(),
            "dim": prepared.embedding.dim(),
            "input_dim": prepared.embedding.input_dim(),
            "seed": cfg.seed,
            "construction_seed": prepared.construction_seed,
            "parameter_count": container.parameter_count(),
            "pretrain": prepared.pretrain,
            "alignf_weights": prepared.alignf.as_ref().map(|r| r.result.weights.clone()),
        }),
    )?;
    let mut files = vec![bin, summary];
    if let Some(r) = &prepared.alignf {
        let p = out.join("alignf.csv");
        alignf_csv(&r.gammas, &r.result).write(&p)?;
        files.push(p);
    }
    Ok(RunReport { files })
}
