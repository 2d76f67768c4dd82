//! `o2o`: dataset generation, training, evaluation, the toy landscape study
//! and post-hoc analysis.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use o2o_core::analysis::{
    field_svg, line_plot_svg, ranking_accuracy, write_accuracy_csv, write_dqda_csv, write_field_csv, write_paths_csv,
};
use o2o_core::critics::{Estimator, ObjectiveKind};
use o2o_core::datastore::{OfflineDataset, Row};
use o2o_core::envs::{collect_trajectories, Behavior, CollectorMode, MazeKind, PointMaze, ScriptedCollector};
use o2o_core::ndmath::Activation;
use o2o_core::par::ExecMode;
use o2o_core::trainer::toy::{toy_landscape, train_toy, write_trace_csv, ToyConfig};
use o2o_core::trainer::{
    evaluate, load_checkpoint, read_checkpoint_config, RunRecord, TrainConfig, Trainer, CONFIG_KEYS,
};
use o2o_core::{Error, ErrorCategory};

#[derive(Parser)]
#[command(name = "o2o", version, about = "Offline-to-online RL lab: TD, CQL, Cal-QL and ranking critics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect a scripted maze dataset into a `.o2o` file.
    GenData(GenDataArgs),
    /// Offline pretraining followed by online fine-tuning.
    Train(TrainArgs),
    /// Evaluate the policy stored in a checkpoint.
    Eval(EvalArgs),
    /// Train a critic on the 2-D disc task and map its landscape.
    Toy(ToyArgs),
    /// Plots and ranking accuracies for a finished training run.
    Analyze(AnalyzeArgs),
    /// Dump a `.o2o` dataset as CSV (one row per transition).
    ExportCsv(ExportArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Maze preset: medium | large.
    #[arg(long, default_value = "medium")]
    env: MazeKind,
    /// Collector: play | diverse.
    #[arg(long, default_value = "play")]
    mode: CollectorMode,
    #[arg(long, default_value_t = 200)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key (repeatable); overrides win over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory (record, checkpoint, config).
    #[arg(long)]
    out: PathBuf,
    /// Threads used for evaluation rollouts.
    #[arg(long, default_value_t = 1)]
    eval_workers: usize,
    /// Continue from `<out>/checkpoint.bin`.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    eval_workers: usize,
    /// Per-episode outcomes as CSV (`episode,success,length`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ToyArgs {
    /// td | cql | calql | rankq
    #[arg(long)]
    objective: ObjectiveKind,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Regularizer weight for CQL / Cal-QL.
    #[arg(long)]
    alpha: Option<f64>,
    /// Noise scale of the ranking negatives.
    #[arg(long)]
    sigma: Option<f64>,
    /// Comma list of double_sigma, no_permuted, no_chain.
    #[arg(long)]
    ablation: Option<String>,
    /// lse | mean-policy
    #[arg(long)]
    estimator: Option<Estimator>,
    /// relu | tanh
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Grid resolution per axis for the gradient field.
    #[arg(long, default_value_t = 41)]
    grid: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Dataset whose success rows are ranked; defaults to the run's held-out split.
    #[arg(long)]
    heldout_data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn config_help() -> String {
    let defaults = TrainConfig::default();
    let width = CONFIG_KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from("Config keys (default in brackets):\n");
    for (k, desc) in CONFIG_KEYS {
        let d = defaults.get(k).unwrap_or_default();
        s.push_str(&format!("  {k:<width$}  {desc} [{d}]\n"));
    }
    s
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::from).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(Error::from).with_context(|| format!("writing {}", path.display()))
}

fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(Error::from).with_context(|| format!("creating {}", path.display()))
}

fn load_dataset(path: &Path) -> Result<OfflineDataset> {
    OfflineDataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn dataset_for(cfg: &TrainConfig) -> Result<Option<OfflineDataset>> {
    match &cfg.dataset {
        Some(p) => load_dataset(p).map(Some),
        None => Ok(None),
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let env = PointMaze::preset(a.env);
    let collector = ScriptedCollector::for_mode(a.mode);
    let trajs = collect_trajectories(&env, &collector, a.episodes, a.gamma, a.seed, ExecMode::default())?;
    let data = OfflineDataset::new(trajs, a.gamma)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    data.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("episodes: {}", data.trajectories().len());
    println!("transitions: {}", data.len());
    println!("success fraction: {:.4}", data.episode_success_rate());
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for t in data.trajectories() {
        let name = Behavior::from_tag(t.tag).map_or("untagged", Behavior::name);
        match counts.iter_mut().find(|c| c.0 == name) {
            Some(c) => c.1 += 1,
            None => counts.push((name, 1)),
        }
    }
    let parts: Vec<String> = counts.iter().map(|(n, c)| format!("{n} {c}")).collect();
    println!("composition: {}", parts.join(", "));
    println!("wrote {}", a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    create_dir(&a.out)?;
    let ckpt = a.out.join("checkpoint.bin");
    let mut trainer = if a.resume {
        if a.config.is_some() || !a.overrides.is_empty() || a.seed.is_some() {
            return Err(Error::Config("--resume takes its config from the checkpoint".into()).into());
        }
        let cfg = read_checkpoint_config(&ckpt).with_context(|| format!("reading {}", ckpt.display()))?;
        let data = dataset_for(&cfg)?;
        let t = load_checkpoint(&ckpt, data.as_ref())?;
        println!("resuming at step {} of {}", t.global_step(), t.total_steps());
        t
    } else {
        let text = match &a.config {
            Some(p) => fs::read_to_string(p)
                .map_err(Error::from)
                .with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        let mut overrides = TrainConfig::split_overrides(&a.overrides)?;
        if let Some(s) = a.seed {
            overrides.push(("seed".into(), s.to_string()));
        }
        let cfg = TrainConfig::parse(&text, &overrides)?;
        write_file(&a.out.join("config.txt"), cfg.to_text())?;
        let data = dataset_for(&cfg)?;
        Trainer::new(cfg, data.as_ref())?
    };
    trainer = trainer.with_output_dir(&a.out)?.with_eval_workers(a.eval_workers);
    let record = trainer.run()?;
    if let Some(last) = record.last() {
        println!(
            "final: step {} success rate {:.3} avg length {:.1}",
            last.step, last.success_rate, last.avg_traj_len
        );
    }
    println!("wrote {}", a.out.join("run_record.csv").display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let cfg = read_checkpoint_config(&a.checkpoint).with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let data = dataset_for(&cfg)?;
    let t = load_checkpoint(&a.checkpoint, data.as_ref())?;
    let res = evaluate(&t.agent().policy, t.env(), a.episodes, a.seed, a.eval_workers)?;
    println!("episodes: {}", a.episodes);
    println!("success rate: {:.4}", res.success_rate);
    println!("mean length: {:.2}", res.mean_length);
    if let Some(out) = &a.out {
        let mut w = csv::Writer::from_writer(create_file(out)?);
        w.write_record(["episode", "success", "length"]).map_err(Error::from)?;
        for (i, (ok, len)) in res.outcomes.iter().enumerate() {
            w.write_record([i.to_string(), (*ok as u8).to_string(), len.to_string()])
                .map_err(Error::from)?;
        }
        w.flush().map_err(Error::from)?;
    }
    Ok(())
}

fn toy(a: ToyArgs) -> Result<()> {
    let mut cfg = ToyConfig::new(a.objective);
    cfg.seed = a.seed;
    if let Some(v) = a.iters {
        cfg.iters = v;
    }
    if let Some(v) = a.alpha {
        cfg.objective.alpha = v;
    }
    if let Some(v) = a.sigma {
        cfg.objective.sigma = v;
    }
    if let Some(v) = &a.ablation {
        cfg.objective.set_ablations(v)?;
    }
    if let Some(v) = a.estimator {
        cfg.objective.estimator = v;
    }
    if let Some(v) = a.activation {
        cfg.activation = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if a.grid < 2 {
        return Err(Error::Config("--grid must be at least 2".into()).into());
    }
    create_dir(&a.out)?;
    let run = train_toy(&cfg)?;
    let land = toy_landscape(&run, a.grid)?;

    write_field_csv(&land.field, create_file(&a.out.join("field.csv"))?)?;
    write_paths_csv(&land.paths, create_file(&a.out.join("paths.csv"))?)?;
    write_dqda_csv(&run.dqda, create_file(&a.out.join("dqda.csv"))?)?;
    write_trace_csv(&run.trace, create_file(&a.out.join("trace.csv"))?)?;
    write_file(&a.out.join("landscape.svg"), field_svg(&land.field, &land.paths, Some(cfg.radius)))?;
    let series = vec![
        ("max |dQ/da|", run.dqda.iter().map(|(i, s)| (*i as f64, s.max)).collect()),
        ("std |dQ/da|", run.dqda.iter().map(|(i, s)| (*i as f64, s.std)).collect()),
    ];
    write_file(&a.out.join("dqda.svg"), line_plot_svg("dQ/da during training", &series, true))?;

    let last = run.dqda.last().map(|d| d.1).expect("dqda series always has a final entry");
    let summary = format!(
        "objective: {}\nconverged paths: {}/{}\nfield max |dQ/da|: {}\nfinal dqda max: {}\nfinal dqda std: {}\n",
        a.objective.name(),
        land.converged(),
        land.paths.len(),
        land.field.max_magnitude(),
        last.max,
        last.std,
    );
    write_file(&a.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let rec_path = a.run.join("run_record.csv");
    let text = fs::read_to_string(&rec_path)
        .map_err(Error::from)
        .with_context(|| format!("reading {}", rec_path.display()))?;
    let record = RunRecord::from_csv_str(&text)?;
    let col = |f: fn(&o2o_core::trainer::RecordRow) -> f64| -> Vec<(f64, f64)> {
        record.rows.iter().map(|r| (r.step as f64, f(r))).collect()
    };
    write_file(
        &a.run.join("success.svg"),
        line_plot_svg("success rate", &[("success", col(|r| r.success_rate))], false),
    )?;
    write_file(
        &a.run.join("dqda.svg"),
        line_plot_svg(
            "dQ/da on policy actions",
            &[("max", col(|r| r.dqda_max)), ("std", col(|r| r.dqda_std))],
            true,
        ),
    )?;
    write_file(
        &a.run.join("losses.svg"),
        line_plot_svg(
            "critic losses",
            &[
                ("td", col(|r| r.losses.td)),
                ("rank", col(|r| r.losses.rank_succ + r.losses.rank_chain + r.losses.rank_fail)),
            ],
            false,
        ),
    )?;
    println!("wrote success.svg, dqda.svg, losses.svg");

    let ckpt = a.run.join("checkpoint.bin");
    if !ckpt.exists() {
        println!("no checkpoint in {}; skipping ranking accuracy", a.run.display());
        return Ok(());
    }
    let cfg = read_checkpoint_config(&ckpt).with_context(|| format!("reading {}", ckpt.display()))?;
    let data = dataset_for(&cfg)?;
    let heldout = match &a.heldout_data {
        Some(p) => load_dataset(p)?,
        None => {
            let d = data.as_ref().ok_or_else(|| {
                Error::Config("run has no dataset; pass --heldout-data for ranking accuracy".into())
            })?;
            match cfg.heldout_split(d)? {
                Some((_, h)) => h,
                None => {
                    return Err(Error::Config(
                        "run used heldout_frac = 0; pass --heldout-data for ranking accuracy".into(),
                    )
                    .into())
                }
            }
        }
    };
    let rows: Vec<Row> = heldout.rows().iter().filter(|r| r.success).cloned().collect();
    let t = load_checkpoint(&ckpt, data.as_ref())?;
    let acc = ranking_accuracy(&t.agent().critics.q[0], &rows, cfg.objective.sigma, a.seed)?;
    write_accuracy_csv(&acc, create_file(&a.run.join("ranking_accuracy.csv"))?)?;
    for (name, v) in acc.as_pairs() {
        println!("ranking accuracy {name}: {v:.4}");
    }
    Ok(())
}

fn export_csv(a: ExportArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    data.export_csv(create_file(&a.out)?)?;
    println!("wrote {} rows to {}", data.len(), a.out.display());
    Ok(())
}

fn category(err: &anyhow::Error) -> ErrorCategory {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return e.category();
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return ErrorCategory::Io;
        }
    }
    ErrorCategory::Internal
}

fn main() -> ExitCode {
    let help = config_help();
    let cmd = Cli::command()
        .after_long_help(help.clone())
        .mut_subcommand("train", |c| c.after_help(help));
    let cli = match Cli::from_arg_matches(&cmd.get_matches()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let res = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Toy(a) => toy(a),
        Command::Analyze(a) => analyze(a),
        Command::ExportCsv(a) => export_csv(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cat = category(&e);
            eprintln!("error[{cat}]: {e:#}");
            ExitCode::from(cat.exit_code() as u8)
        }
    }
}
