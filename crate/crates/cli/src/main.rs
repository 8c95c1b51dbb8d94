//! `stentshape`: simulate, train, predict, instantiate, evaluate and
//! cross-validate from the command line.

mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use stentshape::dataset::{generate_dataset, load_dataset, save_dataset, SegmentSample, SimulationConfig};
use stentshape::gcn::{load_checkpoint, save_checkpoint, Checkpoint, GcnModel};
use stentshape::geometry::project;
use stentshape::graph::build_marker_graph;
use stentshape::mesh::{write_obj, write_params_sidecar};
use stentshape::pipeline::{crossval, evaluate, fit, instantiate_sample, predict_aligned, EvalOptions, FitConfig, SegmentModel};

use error::CliError;

#[derive(Parser)]
#[command(name = "stentshape", version, about = "Partially-deployed stent segment shape instantiation")]
struct Cli {
    /// Seed for every random choice; a fresh one is generated and printed
    /// when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress summaries on stdout.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a simulation config.
    Simulate,
    /// Train a model on a dataset and write a checkpoint.
    Train {
        dataset: PathBuf,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Predict partially-deployed marker references.
    Predict {
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Instantiate markers (and optionally meshes) from the observed 2D markers.
    Instantiate {
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Write the posed mesh of every segment here (OBJ plus parameters).
        #[arg(long)]
        mesh_dir: Option<PathBuf>,
    },
    /// Evaluate a model and write a metric report.
    Evaluate {
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Skip the angular and mesh-distance metrics.
        #[arg(long)]
        no_mesh: bool,
    },
    /// Three-fold cross-validation split by graft family.
    Crossval {
        dataset: PathBuf,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long)]
        no_mesh: bool,
    },
}

#[derive(Args, Default)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    /// L2 weight on the filter coefficients.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    hidden_layers: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    /// Chebyshev order K.
    #[arg(long)]
    k: Option<usize>,
    /// Train on the samples as given, without augmentation.
    #[arg(long)]
    no_augment: bool,
    /// Keep at most this many augmented variants per sample.
    #[arg(long)]
    max_variants: Option<usize>,
}

impl TrainFlags {
    fn apply(&self, cfg: &mut FitConfig) {
        let t = &mut cfg.train;
        t.epochs = self.epochs.unwrap_or(t.epochs);
        t.learning_rate = self.lr.unwrap_or(t.learning_rate);
        t.momentum = self.momentum.unwrap_or(t.momentum);
        t.l2_weight = self.alpha.unwrap_or(t.l2_weight);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.noise_sigma = self.noise_sigma.unwrap_or(t.noise_sigma);
        let g = &mut cfg.gcn;
        g.hidden_layers = self.hidden_layers.unwrap_or(g.hidden_layers);
        g.channels = self.channels.unwrap_or(g.channels);
        g.k = self.k.unwrap_or(g.k);
        if self.no_augment {
            cfg.augment = None;
        } else if let Some(n) = self.max_variants {
            if let Some(a) = cfg.augment.as_mut() {
                a.max_variants = Some(n);
            }
        }
    }
}

struct Ctx {
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    quiet: bool,
    seed: Option<u64>,
}

impl Ctx {
    fn say(&self, text: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", text.as_ref());
        }
    }

    fn out(&self) -> Result<&Path, CliError> {
        self.out.as_deref().ok_or_else(|| CliError::usage("--out is required for this command"))
    }

    /// Flag seed, else `fallback`, else a fresh one. Always announced on
    /// stderr so runs can be repeated.
    fn seed(&self, fallback: Option<u64>) -> u64 {
        let seed = self.seed.or(fallback).unwrap_or_else(rand_seed);
        eprintln!("seed: {seed}");
        seed
    }

    fn fit_config(&self, flags: &TrainFlags) -> Result<FitConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => FitConfig::from_toml(&read_text(path)?)?,
            None => FitConfig::default(),
        };
        flags.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn rand_seed() -> u64 {
    use std::hash::{BuildHasher, Hasher};
    let mut h = std::collections::hash_map::RandomState::new().build_hasher();
    h.write_u128(std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0));
    h.finish()
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

/// `report.json` → `report.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn load_data(path: &Path) -> Result<Vec<SegmentSample>, CliError> {
    load_dataset(path).map_err(|e| CliError::from(e).context(path))
}

fn load_model(path: &Path) -> Result<GcnModel, CliError> {
    let ckpt = load_checkpoint(path).map_err(|e| CliError::from(e).context(path))?;
    Ok(ckpt.to_model()?)
}

fn simulate(ctx: &Ctx) -> Result<(), CliError> {
    let path = ctx.config.as_deref().ok_or_else(|| CliError::usage("simulate needs --config <simulation.toml>"))?;
    let mut cfg = SimulationConfig::from_toml(&read_text(path)?).map_err(|e| CliError::from(e).context(path))?;
    cfg.seed = Some(ctx.seed(cfg.seed));
    let out = ctx.out()?;
    let data = generate_dataset(&cfg)?;
    save_dataset(&data, out).map_err(|e| CliError::from(e).context(out))?;
    let mean_iv = data.iter().map(|s| s.initial_variation()).sum::<f64>() / data.len().max(1) as f64;
    ctx.say(format!(
        "wrote {} segments from {} families to {} (mean initial variation {mean_iv:.4} mm)",
        data.len(),
        cfg.families.len(),
        out.display()
    ));
    Ok(())
}

fn train(ctx: &Ctx, dataset: &Path, flags: &TrainFlags) -> Result<(), CliError> {
    let cfg = ctx.fit_config(flags)?;
    let seed = ctx.seed(None);
    let out = ctx.out()?;
    let data = load_data(dataset)?;
    let t = &cfg.train;
    ctx.say(format!(
        "lr={} momentum={} alpha={} batch={} epochs={} noise_sigma={}",
        t.learning_rate, t.momentum, t.l2_weight, t.batch_size, t.epochs, t.noise_sigma
    ));
    let fitted = fit(&data, &build_marker_graph(), &cfg, seed)?;
    let history = fitted.outcome.loss_history.clone();
    let ckpt = Checkpoint::from_model(&fitted.model, Some(stentshape::gcn::TrainConfig { rng_seed: seed, ..cfg.train }), history.clone());
    save_checkpoint(&ckpt, out).map_err(|e| CliError::from(e).context(out))?;
    let mut curve = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        curve.push_str(&format!("{},{l:?}\n", i + 1));
    }
    write_text(&sibling(out, "loss.csv"), &curve)?;
    match history.last() {
        Some(l) => ctx.say(format!("trained on {} pairs; final loss {l:.6}", fitted.training_pairs)),
        None => ctx.say("no epochs run; wrote the initialized parameters"),
    }
    Ok(())
}

fn predict(ctx: &Ctx, dataset: &Path, model: &Path) -> Result<(), CliError> {
    let out = ctx.out()?;
    let data = load_data(dataset)?;
    let model = load_model(model)?;
    let graph = build_marker_graph();
    let mut records = Vec::with_capacity(data.len());
    for s in &data {
        let predicted = predict_aligned(&model, &graph, s)?;
        records.push(json!({ "segment_id": s.id(), "predicted": predicted }));
    }
    write_json(out, &records)?;
    ctx.say(format!("predicted {} segments", records.len()));
    Ok(())
}

fn instantiate(ctx: &Ctx, dataset: &Path, model: &Path, mesh_dir: Option<&Path>) -> Result<(), CliError> {
    let out = ctx.out()?;
    let data = load_data(dataset)?;
    let model = load_model(model)?;
    let graph = build_marker_graph();
    if let Some(dir) = mesh_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut records = Vec::new();
    for s in &data {
        let (Some(x_g), Some(camera)) = (&s.x_g, &s.projection) else {
            continue;
        };
        let inst = instantiate_sample(&model, &graph, s, x_g, camera).map_err(|e| CliError::from(e).segment(&s.id()))?;
        let reprojected = project(camera, &inst.markers)?;
        if let (Some(dir), Some(seg)) = (mesh_dir, SegmentModel::new(s)?) {
            let mesh = seg.posed_mesh(&inst)?;
            let name = s.id().replace('/', "_");
            let obj = dir.join(format!("{name}.obj"));
            let file = fs::File::create(&obj).map_err(|e| CliError::io(&obj, e))?;
            write_obj(&mesh, file)?;
            let params = dir.join(format!("{name}.params.json"));
            let file = fs::File::create(&params).map_err(|e| CliError::io(&params, e))?;
            write_params_sidecar(&mesh, file)?;
        }
        records.push(json!({
            "segment_id": s.id(),
            "markers": inst.markers,
            "pose": inst.pose,
            "reprojected": reprojected,
        }));
    }
    write_json(out, &records)?;
    ctx.say(format!("instantiated {} segments", records.len()));
    Ok(())
}

fn run_evaluate(ctx: &Ctx, dataset: &Path, model_path: &Path, no_mesh: bool) -> Result<(), CliError> {
    let out = ctx.out()?;
    let data = load_data(dataset)?;
    let model = load_model(model_path)?;
    let opts = EvalOptions { mesh_metrics: !no_mesh };
    let (mut report, timing) = evaluate(&model, &build_marker_graph(), &data, &opts)?;
    report.seed = ctx.seed;
    report.config = json!({
        "dataset": dataset.display().to_string(),
        "model": model_path.display().to_string(),
        "gcn": model.config,
        "eval": opts,
    });
    write_json(out, &report)?;
    let table = report.table();
    write_text(&sibling(out, "txt"), &table)?;
    write_json(&sibling(out, "timing.json"), &timing)?;
    ctx.say(table);
    Ok(())
}

fn run_crossval(ctx: &Ctx, dataset: &Path, flags: &TrainFlags, no_mesh: bool) -> Result<(), CliError> {
    let cfg = ctx.fit_config(flags)?;
    let seed = ctx.seed(None);
    let out = ctx.out()?;
    let data = load_data(dataset)?;
    let opts = EvalOptions { mesh_metrics: !no_mesh };
    let (report, timings) = crossval(&data, &build_marker_graph(), &cfg, &opts, seed)?;
    write_json(out, &report)?;
    let table = report.table();
    write_text(&sibling(out, "txt"), &table)?;
    write_json(&sibling(out, "timing.json"), &timings)?;
    ctx.say(table);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Ctx {
        config: cli.config,
        out: cli.out,
        quiet: cli.quiet,
        seed: cli.seed,
    };
    match &cli.command {
        Command::Simulate => simulate(&ctx),
        Command::Train { dataset, train: flags } => train(&ctx, dataset, flags),
        Command::Predict { dataset, model } => predict(&ctx, dataset, model),
        Command::Instantiate { dataset, model, mesh_dir } => instantiate(&ctx, dataset, model, mesh_dir.as_deref()),
        Command::Evaluate { dataset, model, no_mesh } => run_evaluate(&ctx, dataset, model, *no_mesh),
        Command::Crossval { dataset, train: flags, no_mesh } => run_crossval(&ctx, dataset, flags, *no_mesh),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { error::USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
