//! The `speedrs` command-line tool.
//!
//! Verbs: gen-mmd-corpus, train-approximator, gen-task, train, evaluate,
//! oos, report. Settings resolve as default < config file < flag; every run
//! writes a manifest of its fully resolved settings, and `--from-manifest`
//! replays a run byte-identically. Exit codes: 0 success, 2 config error,
//! 3 numerical failure, 4 IO failure. `SPEEDRS_THREADS` caps the worker
//! pool; all relative paths are resolved against `--workdir`.

use clap::{Args, Parser, Subcommand};
use speedrs_cli::checkpoint::{
    load_approximator, load_regressor, save_approximator, save_regressor,
};
use speedrs_cli::config::{
    manifest_path, parse_kv_file, read_manifest, write_manifest, Resolver,
};
use speedrs_cli::csvio;
use speedrs_cli::experiments::{
    self, gen_task_dataset, Featurizer, OosConfig, OosModels, Task, TaskConfig, TaskDataset,
};
use speedrs_cli::{pb1, CliError, CliResult};
use speedrs_core::approx::{
    build_mmd_dataset, train_approximator, ApproxTrainConfig, CorpusConfig,
};
use speedrs_core::neural::{mlp_forward, split_dataset, standardize_apply, Activation, Dataset, TrainConfig};
use speedrs_core::pipeline::{
    build_reference_sets, BaselineKernel, BaselineMmdForm, RefSetConfig, ReferenceSet,
};
use speedrs_core::sigkernel::{GoursatConfig, Scheme};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "speedrs", version, about = "Signature-based distribution regression pipeline")]
struct Cli {
    /// Root directory; all relative paths are resolved against it.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// Plain-text `key = value` settings file (relative to workdir).
    #[arg(long, global = true)]
    config: Option<String>,
    /// Use full-scale experiment sizes instead of desk-scale defaults.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Replay a previous run exactly from its manifest (flags are ignored).
    #[arg(long, global = true)]
    from_manifest: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the expected-signature / distance training corpus CSV.
    GenMmdCorpus(GenCorpusArgs),
    /// Train the distance approximator from a corpus CSV.
    TrainApproximator(TrainApproxArgs),
    /// Generate a task dataset (bundles + targets).
    GenTask(GenTaskArgs),
    /// Build features for a task dataset and train one regressor.
    Train(TrainArgs),
    /// Re-evaluate a trained regressor on a feature table.
    Evaluate(EvaluateArgs),
    /// Out-of-regime / irregular-sampling sweeps against trained models.
    Oos(OosArgs),
    /// Aggregate per-run metrics CSVs into a report table.
    Report(ReportArgs),
}

impl Cmd {
    fn verb(&self) -> &'static str {
        match self {
            Cmd::GenMmdCorpus(_) => "gen-mmd-corpus",
            Cmd::TrainApproximator(_) => "train-approximator",
            Cmd::GenTask(_) => "gen-task",
            Cmd::Train(_) => "train",
            Cmd::Evaluate(_) => "evaluate",
            Cmd::Oos(_) => "oos",
            Cmd::Report(_) => "report",
        }
    }
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    len: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    dyadic_order: Option<u32>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    zero_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct TrainApproxArgs {
    #[arg(long)]
    corpus: Option<String>,
    #[arg(long)]
    level: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_final_fraction: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    symmetrize: Option<bool>,
    #[arg(long)]
    clamp: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    history: Option<String>,
}

#[derive(Args)]
struct GenTaskArgs {
    #[arg(long)]
    task: Option<Task>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    len: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    mc_paths: Option<usize>,
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long)]
    strike: Option<f64>,
    #[arg(long)]
    barrier: Option<f64>,
    #[arg(long)]
    temp_min: Option<f64>,
    #[arg(long)]
    temp_max: Option<f64>,
    /// Particles per simulated gas box (gas_temperature only).
    #[arg(long)]
    gas_particles: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Task label recorded in the metrics row.
    #[arg(long)]
    task: Option<Task>,
    #[arg(long)]
    bundles: Option<String>,
    #[arg(long)]
    approximator: Option<String>,
    /// speedrs | rbf | matern32
    #[arg(long)]
    featurizer: Option<String>,
    /// as_printed | standard_biased
    #[arg(long)]
    form: Option<String>,
    #[arg(long)]
    b_total: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// relu | tanhshrink
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    ref_batch_sig: Option<usize>,
    #[arg(long)]
    ref_batch_baseline: Option<usize>,
    /// Paths per bundle the pointwise baselines read (speedrs reads all).
    #[arg(long)]
    baseline_paths: Option<usize>,
    #[arg(long)]
    ref_seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_final_fraction: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_model: Option<String>,
    #[arg(long)]
    out_features: Option<String>,
    #[arg(long)]
    out_refs: Option<String>,
    #[arg(long)]
    out_metrics: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    task: Option<Task>,
    #[arg(long)]
    model_name: Option<String>,
    #[arg(long)]
    b_total: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct OosArgs {
    /// pricing | mixture
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    refs: Option<String>,
    #[arg(long)]
    approximator: Option<String>,
    #[arg(long)]
    speedrs_model: Option<String>,
    /// Baseline checkpoints; pass "none" to skip one.
    #[arg(long)]
    rbf_model: Option<String>,
    #[arg(long)]
    matern_model: Option<String>,
    #[arg(long)]
    form: Option<String>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    n_runs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    len: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    mc_paths: Option<usize>,
    /// 0 disables irregular subsampling.
    #[arg(long)]
    keep_prob: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long)]
    strike: Option<f64>,
    #[arg(long)]
    barrier: Option<f64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory scanned (non-recursively) for metrics CSVs, or a single
    /// metrics CSV path.
    #[arg(long)]
    inputs: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

fn parse_scheme(s: &str) -> CliResult<Scheme> {
    match s {
        "first_order" => Ok(Scheme::FirstOrder),
        "second_order" => Ok(Scheme::SecondOrder),
        _ => Err(CliError::Config(format!(
            "scheme must be first_order or second_order, got {s:?}"
        ))),
    }
}

fn parse_activation(s: &str) -> CliResult<Activation> {
    match s {
        "relu" => Ok(Activation::Relu),
        "tanhshrink" => Ok(Activation::Tanhshrink),
        _ => Err(CliError::Config(format!(
            "activation must be relu or tanhshrink, got {s:?}"
        ))),
    }
}

fn parse_form(s: &str) -> CliResult<BaselineMmdForm> {
    match s {
        "as_printed" => Ok(BaselineMmdForm::AsPrinted),
        "standard_biased" => Ok(BaselineMmdForm::StandardBiased),
        _ => Err(CliError::Config(format!(
            "form must be as_printed or standard_biased, got {s:?}"
        ))),
    }
}

fn pick<T>(paper: bool, desk: T, full: T) -> T {
    if paper {
        full
    } else {
        desk
    }
}

fn path_in(workdir: &Path, s: &str) -> PathBuf {
    let p = Path::new(s);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        workdir.join(p)
    }
}

struct Ctx {
    workdir: PathBuf,
    resolver: Resolver,
    paper: bool,
}

impl Ctx {
    fn finish_manifest(self, verb: &str, primary_out: &Path) -> CliResult<()> {
        let resolved: BTreeMap<String, String> = self.resolver.finish()?;
        write_manifest(&manifest_path(primary_out), verb, &resolved)?;
        Ok(())
    }
}

fn run_gen_corpus(mut ctx: Ctx, a: &GenCorpusArgs) -> CliResult<()> {
    let wd = ctx.workdir.clone();
    let paper = ctx.paper;
    let r = &mut ctx.resolver;
    let rows = r.get("rows", pick(paper, 3000, 39_449), a.rows)?;
    let cfg = CorpusConfig {
        batch: r.get("batch", pick(paper, 100, 400), a.batch)?,
        len: r.get("len", 15, a.len)?,
        horizon: r.get("horizon", 1.0, a.horizon)?,
        sigma: r.get("sigma", 0.5, a.sigma)?,
        lambda: r.get("lambda", 1e-3, a.lambda)?,
        goursat: GoursatConfig {
            dyadic_order: r.get("dyadic_order", 1, a.dyadic_order)?,
            scheme: parse_scheme(&r.get(
                "scheme",
                "second_order".to_owned(),
                a.scheme.clone(),
            )?)?,
        },
        zero_fraction: r.get("zero_fraction", 0.25, a.zero_fraction)?,
    };
    let seed = r.get("seed", 0, a.seed)?;
    let out = path_in(&wd, &r.get("out", "corpus.csv".to_owned(), a.out.clone())?);
    let dataset = build_mmd_dataset(rows, &cfg, seed)?;
    csvio::write_corpus(&out, &dataset)?;
    ctx.finish_manifest("gen-mmd-corpus", &out)?;
    eprintln!("wrote {} corpus rows to {}", rows, out.display());
    Ok(())
}

fn run_train_approx(mut ctx: Ctx, a: &TrainApproxArgs) -> CliResult<()> {
    let wd = ctx.workdir.clone();
    let r = &mut ctx.resolver;
    let corpus = path_in(&wd, &r.get("corpus", "corpus.csv".to_owned(), a.corpus.clone())?);
    let level = r.get("level", 3, a.level)?;
    let cfg = ApproxTrainConfig {
        train: TrainConfig {
            epochs: r.get("epochs", 200, a.epochs)?,
            batch_size: r.get("batch_size", 128, a.batch_size)?,
            initial_lr: r.get("lr", 5e-4, a.lr)?,
            lr_final_fraction: r.get("lr_final_fraction", 0.1, a.lr_final_fraction)?,
            weight_decay: r.get("weight_decay", 1e-4, a.weight_decay)?,
            seed: r.get("seed", 0, a.seed)?,
            split_ratio: r.get("split", 0.8, a.split)?,
        },
        symmetrize: r.get("symmetrize", true, a.symmetrize)?,
        clamp: r.get("clamp", true, a.clamp)?,
    };
    let out = path_in(&wd, &r.get("out", "approximator.ckpt".to_owned(), a.out.clone())?);
    let history = path_in(&wd, &r.get(
        "history",
        "approximator_history.csv".to_owned(),
        a.history.clone(),
    )?);
    let rows = csvio::read_corpus(&corpus)?;
    let (model, hist) = train_approximator(&rows, level, &cfg)?;
    save_approximator(&out, &model, cfg.train.seed)?;
    csvio::write_history(&history, &hist)?;
    eprintln!(
        "trained level-{level} approximator: final train MSE {}, valid MSE {}",
        hist.train.last().unwrap(),
        hist.valid.last().unwrap()
    );
    ctx.finish_manifest("train-approximator", &out)?;
    Ok(())
}

fn targets_path(pb1_path: &Path) -> PathBuf {
    pb1_path.with_extension("targets.csv")
}

fn run_gen_task(mut ctx: Ctx, a: &GenTaskArgs) -> CliResult<()> {
    let wd = ctx.workdir.clone();
    let paper = ctx.paper;
    let r = &mut ctx.resolver;
    let task: Task = r
        .get("task", "pricing".to_owned(), a.task.map(|t| t.to_string()))?
        .parse()
        .map_err(CliError::Config)?;
    let seed = r.get("seed", 0, a.seed)?;
    let base = if paper {
        TaskConfig::paper(task, seed)
    } else {
        TaskConfig::desk(task, seed)
    };
    let cfg = TaskConfig {
        task,
        rows: r.get("rows", base.rows, a.rows)?,
        batch: r.get("batch", base.batch, a.batch)?,
        len: r.get("len", base.len, a.len)?,
        horizon: r.get("horizon", base.horizon, a.horizon)?,
        mc_paths: r.get("mc_paths", base.mc_paths, a.mc_paths)?,
        x0: r.get("x0", base.x0, a.x0)?,
        strike: r.get("strike", base.strike, a.strike)?,
        barrier: r.get("barrier", base.barrier, a.barrier)?,
        temp_min: r.get("temp_min", base.temp_min, a.temp_min)?,
        temp_max: r.get("temp_max", base.temp_max, a.temp_max)?,
        gas_particles: r.get("gas_particles", base.gas_particles, a.gas_particles)?,
        seed,
    };
    let out = path_in(&wd, &r.get("out", "task.pb1".to_owned(), a.out.clone())?);
    let ds = gen_task_dataset(&cfg)?;
    pb1::write_dataset(&out, &ds.bundles, &ds.specs)?;
    csvio::write_targets(&targets_path(&out), &ds.targets)?;
    eprintln!(
        "wrote {} {} bundles to {}",
        ds.bundles.len(),
        task.label(),
        out.display()
    );
    ctx.finish_manifest("gen-task", &out)?;
    Ok(())
}

fn load_task_dataset(pb1_path: &Path) -> CliResult<TaskDataset> {
    let (bundles, specs) = pb1::read_dataset(pb1_path)?;
    let targets = csvio::read_targets(&targets_path(pb1_path))?;
    if targets.len() != bundles.len() {
        return Err(CliError::Config(format!(
            "{} targets but {} bundles",
            targets.len(),
            bundles.len()
        )));
    }
    let seeds = bundles.iter().map(|b| b.seed).collect();
    Ok(TaskDataset {
        bundles,
        targets,
        specs,
        seeds,
    })
}

fn run_train(mut ctx: Ctx, a: &TrainArgs) -> CliResult<()> {
    let wd = ctx.workdir.clone();
    let paper = ctx.paper;
    let r = &mut ctx.resolver;
    let task: Task = r
        .get("task", "pricing".to_owned(), a.task.map(|t| t.to_string()))?
        .parse()
        .map_err(CliError::Config)?;
    let bundles = path_in(&wd, &r.get("bundles", "task.pb1".to_owned(), a.bundles.clone())?);
    let approx_path = path_in(&wd, &r.get(
        "approximator",
        "approximator.ckpt".to_owned(),
        a.approximator.clone(),
    )?);
    let featurizer = r.get("featurizer", "speedrs".to_owned(), a.featurizer.clone())?;
    let form = parse_form(&r.get("form", "as_printed".to_owned(), a.form.clone())?)?;
    let default_b = if task == Task::GasTemperature { 30 } else { 20 };
    let default_w = if task == Task::GasTemperature { 100 } else { 50 };
    let b_total = r.get("b_total", default_b, a.b_total)?;
    let width = r.get("width", default_w, a.width)?;
    let default_act = if task == Task::GasTemperature && featurizer == "speedrs" {
        "tanhshrink"
    } else {
        "relu"
    };
    let activation =
        parse_activation(&r.get("activation", default_act.to_owned(), a.activation.clone())?)?;
    let default_lr = if activation == Activation::Tanhshrink {
        1e-2
    } else {
        5e-4
    };
    let ref_cfg_partial = (
        r.get("ref_batch_sig", pick(paper, 400, 2000), a.ref_batch_sig)?,
        r.get(
            "ref_batch_baseline",
            pick(paper, 200, 400),
            a.ref_batch_baseline,
        )?,
    );
    let ref_seed = r.get("ref_seed", 1000, a.ref_seed)?;
    let baseline_paths = r.get("baseline_paths", 400, a.baseline_paths)?;
    let train_cfg = TrainConfig {
        epochs: r.get("epochs", 200, a.epochs)?,
        batch_size: r.get("batch_size", 64, a.batch_size)?,
        initial_lr: r.get("lr", default_lr, a.lr)?,
        lr_final_fraction: r.get("lr_final_fraction", 0.1, a.lr_final_fraction)?,
        weight_decay: r.get("weight_decay", 1e-4, a.weight_decay)?,
        seed: r.get("seed", 0, a.seed)?,
        split_ratio: r.get("split", 0.8, a.split)?,
    };
    let out_model = path_in(&wd, &r.get("out_model", "model.ckpt".to_owned(), a.out_model.clone())?);
    let out_features = path_in(&wd, &r.get(
        "out_features",
        "features.csv".to_owned(),
        a.out_features.clone(),
    )?);
    let out_refs = path_in(&wd, &r.get("out_refs", "refs.json".to_owned(), a.out_refs.clone())?);
    let out_metrics = path_in(&wd, &r.get(
        "out_metrics",
        "metrics.csv".to_owned(),
        a.out_metrics.clone(),
    )?);

    let ds = load_task_dataset(&bundles)?;
    let d = ds.bundles.first().map(|b| b.dim()).unwrap_or(1);
    let approx = load_approximator(&approx_path)?;
    let ref_cfg = RefSetConfig {
        batch_sig: ref_cfg_partial.0,
        batch_baseline: ref_cfg_partial.1,
        len: ds.bundles[0].paths[0].len(),
        horizon: *ds.bundles[0].paths[0].times().last().unwrap(),
    };
    let refs = build_reference_sets(b_total, d, &ref_cfg, approx.level, ref_seed)?;
    let table = match featurizer.as_str() {
        "speedrs" => experiments::feature_table_speedrs(&ds, &refs, &approx)?,
        "rbf" => experiments::feature_table_pointwise(
            &experiments::cap_dataset_paths(&ds, baseline_paths)?,
            &refs,
            BaselineKernel::Rbf { sigma: 1.0 },
            form,
        )?,
        "matern32" => experiments::feature_table_pointwise(
            &experiments::cap_dataset_paths(&ds, baseline_paths)?,
            &refs,
            BaselineKernel::Matern32 { sigma: 1.0 },
            form,
        )?,
        other => {
            return Err(CliError::Config(format!(
                "featurizer must be speedrs, rbf, or matern32, got {other:?}"
            )))
        }
    };
    csvio::write_feature_table(&out_features, &table)?;
    let (model, train_mse, valid_mse) =
        experiments::train_one(&table, width, activation, &train_cfg)?;
    save_regressor(&out_model, &model, train_cfg.seed)?;
    std::fs::write(&out_refs, serde_json::to_string(&refs)?)?;
    csvio::write_metrics(
        &out_metrics,
        &[csvio::MetricsRow {
            task: task.label().into(),
            model: featurizer.clone(),
            b: b_total,
            width,
            seed: train_cfg.seed,
            train_mse,
            valid_mse,
        }],
    )?;
    eprintln!(
        "{} {featurizer} B={b_total} width={width}: train MSE {train_mse}, valid MSE {valid_mse}",
        task.label()
    );
    ctx.finish_manifest("train", &out_model)?;
    Ok(())
}

fn run_evaluate(mut ctx: Ctx, a: &EvaluateArgs) -> CliResult<()> {
    let wd = ctx.workdir.clone();
    let r = &mut ctx.resolver;
    let model_path = path_in(&wd, &r.get("model", "model.ckpt".to_owned(), a.model.clone())?);
    let features = path_in(&wd, &r.get(
        "features",
        "features.csv".to_owned(),
        a.features.clone(),
    )?);
    let split = r.get("split", 0.8, a.split)?;
    let seed = r.get("seed", 0, a.seed)?;
    let task: Task = r
        .get("task", "pricing".to_owned(), a.task.map(|t| t.to_string()))?
        .parse()
        .map_err(CliError::Config)?;
    let model_name = r.get("model_name", "speedrs".to_owned(), a.model_name.clone())?;
    let b_total = r.get("b_total", 20, a.b_total)?;
    let width = r.get("width", 50, a.width)?;
    let out = path_in(&wd, &r.get("out", "metrics.csv".to_owned(), a.out.clone())?);

    let table = csvio::read_feature_table(&features)?;
    let model = load_regressor(&model_path)?;
    let data = Dataset {
        features: table.rows.clone(),
        targets: table.targets.clone(),
    };
    let (train, valid) = split_dataset(&data, split, seed);
    let mse_of = |set: &Dataset| -> CliResult<f64> {
        let std = standardize_apply(&model.standardizer, &set.features);
        let mut acc = 0.0;
        for (x, y) in std.iter().zip(&set.targets) {
            let p = mlp_forward(&model.mlp, x)?;
            acc += (p - y) * (p - y);
        }
        Ok(acc / set.targets.len() as f64)
    };
    let train_mse = mse_of(&train)?;
    let valid_mse = mse_of(&valid)?;
    csvio::write_metrics(
        &out,
        &[csvio::MetricsRow {
            task: task.label().into(),
            model: model_name,
            b: b_total,
            width,
            seed,
            train_mse,
            valid_mse,
        }],
    )?;
    eprintln!("train MSE {train_mse}, valid MSE {valid_mse}");
    ctx.finish_manifest("evaluate", &out)?;
    Ok(())
}

fn run_oos(mut ctx: Ctx, a: &OosArgs) -> CliResult<()> {
    let wd = ctx.workdir.clone();
    let paper = ctx.paper;
    let r = &mut ctx.resolver;
    let mode = r.get("mode", "pricing".to_owned(), a.mode.clone())?;
    let refs_path = path_in(&wd, &r.get("refs", "refs.json".to_owned(), a.refs.clone())?);
    let approx_path = path_in(&wd, &r.get(
        "approximator",
        "approximator.ckpt".to_owned(),
        a.approximator.clone(),
    )?);
    let speedrs_model = r.get(
        "speedrs_model",
        "model.ckpt".to_owned(),
        a.speedrs_model.clone(),
    )?;
    let rbf_model = r.get("rbf_model", "none".to_owned(), a.rbf_model.clone())?;
    let matern_model = r.get("matern_model", "none".to_owned(), a.matern_model.clone())?;
    let form = parse_form(&r.get("form", "as_printed".to_owned(), a.form.clone())?)?;
    let keep_prob = r.get("keep_prob", 0.0, a.keep_prob)?;
    let cfg = OosConfig {
        grid_points: r.get("grid_points", 21, a.grid_points)?,
        n_runs: r.get("n_runs", pick(paper, 10, 100), a.n_runs)?,
        batch: r.get("batch", pick(paper, 200, 2000), a.batch)?,
        len: r.get("len", 15, a.len)?,
        horizon: r.get("horizon", 1.0, a.horizon)?,
        mc_paths: r.get("mc_paths", 100_000, a.mc_paths)?,
        keep_prob: if keep_prob > 0.0 { Some(keep_prob) } else { None },
        seed: r.get("seed", 0, a.seed)?,
        x0: r.get("x0", 90.0, a.x0)?,
        strike: r.get("strike", 80.0, a.strike)?,
        barrier: r.get("barrier", 85.0, a.barrier)?,
    };
    let out = path_in(&wd, &r.get("out", "oos.csv".to_owned(), a.out.clone())?);

    let refs: Vec<ReferenceSet> =
        serde_json::from_str(&std::fs::read_to_string(&refs_path)?)?;
    let approx = load_approximator(&approx_path)?;
    let mut entries = vec![(
        "speedrs".to_owned(),
        Featurizer::Speedrs,
        load_regressor(&path_in(&wd, &speedrs_model))?,
    )];
    if rbf_model != "none" {
        entries.push((
            "rbf".to_owned(),
            Featurizer::Pointwise(BaselineKernel::Rbf { sigma: 1.0 }, form),
            load_regressor(&path_in(&wd, &rbf_model))?,
        ));
    }
    if matern_model != "none" {
        entries.push((
            "matern32".to_owned(),
            Featurizer::Pointwise(BaselineKernel::Matern32 { sigma: 1.0 }, form),
            load_regressor(&path_in(&wd, &matern_model))?,
        ));
    }
    let models = OosModels {
        refs,
        approx,
        entries,
    };
    let rows = match mode.as_str() {
        "pricing" => experiments::oos_pricing(&cfg, &models)?,
        "mixture" => experiments::oos_mixture(&cfg, &models)?,
        other => {
            return Err(CliError::Config(format!(
                "mode must be pricing or mixture, got {other:?}"
            )))
        }
    };
    csvio::write_oos(&out, &rows)?;
    eprintln!("wrote {} OOS rows to {}", rows.len(), out.display());
    ctx.finish_manifest("oos", &out)?;
    Ok(())
}

fn run_report(mut ctx: Ctx, a: &ReportArgs) -> CliResult<()> {
    let wd = ctx.workdir.clone();
    let r = &mut ctx.resolver;
    let inputs = path_in(&wd, &r.get("inputs", ".".to_owned(), a.inputs.clone())?);
    let out = path_in(&wd, &r.get("out", "report.csv".to_owned(), a.out.clone())?);
    let mut files = Vec::new();
    if inputs.is_dir() {
        for entry in std::fs::read_dir(&inputs)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "csv") && path != out {
                files.push(path);
            }
        }
        files.sort();
    } else {
        files.push(inputs);
    }
    let mut rows = Vec::new();
    for f in &files {
        // only files with the exact metrics schema participate
        if let Ok(mut m) = csvio::read_metrics(f) {
            rows.append(&mut m);
        }
    }
    let report = experiments::emit_report(&rows, &out)?;
    eprintln!(
        "aggregated {} metrics rows into {} report rows at {}",
        rows.len(),
        report.len(),
        out.display()
    );
    ctx.finish_manifest("report", &out)?;
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Ok(threads) = std::env::var("SPEEDRS_THREADS") {
        let n: usize = threads
            .parse()
            .map_err(|_| CliError::Config(format!("bad SPEEDRS_THREADS value {threads:?}")))?;
        // ignore the error if a pool already exists (e.g. under tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if cli.paper_scale {
        eprintln!(
            "warning: --paper-scale selected; full-scale corpora and datasets are \
             GPU-sized workloads (hours of compute; the desk-scale defaults \
             finish in minutes)"
        );
    }
    let resolver = match &cli.from_manifest {
        Some(m) => {
            let manifest = read_manifest(&cli.workdir.join(m))?;
            if manifest.verb != cli.cmd.verb() {
                return Err(CliError::Config(format!(
                    "manifest was written by verb {:?}, not {:?}",
                    manifest.verb,
                    cli.cmd.verb()
                )));
            }
            Resolver::from_manifest(&manifest)
        }
        None => match &cli.config {
            Some(c) => Resolver::new(parse_kv_file(&cli.workdir.join(c))?),
            None => Resolver::new(BTreeMap::new()),
        },
    };
    let ctx = Ctx {
        workdir: cli.workdir.clone(),
        resolver,
        paper: cli.paper_scale,
    };
    match &cli.cmd {
        Cmd::GenMmdCorpus(a) => run_gen_corpus(ctx, a),
        Cmd::TrainApproximator(a) => run_train_approx(ctx, a),
        Cmd::GenTask(a) => run_gen_task(ctx, a),
        Cmd::Train(a) => run_train(ctx, a),
        Cmd::Evaluate(a) => run_evaluate(ctx, a),
        Cmd::Oos(a) => run_oos(ctx, a),
        Cmd::Report(a) => run_report(ctx, a),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
