//! Command-line entry points: synth / train / eval / report.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use super::config::{build_world, AgentSpec, RosterSpec, RunConfig};
use super::dataset::{ingest, save_dataset, split_dataset};
use super::evaluate::{evaluate, EvalOptions};
use super::synth::synth_world;
use super::HarnessError;
use crate::geo::save_gazetteer;
use crate::learn::{train, SeededProjectionExtractor, SelectionModel, TrainSample};

#[derive(Parser)]
#[command(
    name = "swarmgeo",
    version,
    about = "Multi-agent visual geo-localization"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic world: dataset.jsonl, gazetteer.csv,
    /// roster.json under --out.
    Synth {
        #[arg(long)]
        agents: usize,
        #[arg(long)]
        regions: usize,
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the selection model on the configured train split and save
    /// a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON training report path.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<u32>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate the pipeline on the configured test split and write a
    /// run report.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint from `train`; absent means uniform election over
        /// a fresh unit graph.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        z: Option<u32>,
        #[arg(long)]
        th: Option<f64>,
        #[arg(long)]
        retrieval: Option<OnOff>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write per-sample audit logs (JSONL) into this directory.
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
    /// Pretty-print a run report.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

/// Run the CLI against explicit argv; returns the process exit code
/// (0 success, 1 validation error, 2 runtime fault).
pub fn cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(argv) {
        Ok(p) => p,
        Err(e) => {
            // clap renders its own usage/help text; --help exits 0.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(parsed.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), HarnessError> {
    match cmd {
        Cmd::Synth {
            agents,
            regions,
            samples,
            seed,
            out,
        } => run_synth(agents, regions, samples, seed, &out),
        Cmd::Train {
            config,
            dataset,
            out,
            report,
            epochs,
            lr,
            seed,
        } => run_train(&config, &dataset, &out, report.as_deref(), epochs, lr, seed),
        Cmd::Eval {
            config,
            dataset,
            out,
            model,
            k,
            r,
            z,
            th,
            retrieval,
            seed,
            log_dir,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(k) = k {
                cfg.discussion.k = k;
            }
            if let Some(r) = r {
                cfg.discussion.r = r;
            }
            if let Some(z) = z {
                cfg.discussion.z = z;
            }
            if let Some(th) = th {
                cfg.discussion.th_km = th;
            }
            if let Some(flag) = retrieval {
                cfg.discussion.retrieval_enabled = matches!(flag, OnOff::On);
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            run_eval(cfg, &dataset, &out, model.as_deref(), log_dir)
        }
        Cmd::Report { input } => run_report(&input),
    }
}

fn run_synth(
    agents: usize,
    regions: usize,
    samples: usize,
    seed: u64,
    out: &std::path::Path,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", out.display())))?;
    let world = synth_world(agents, regions, samples, seed)?;
    save_dataset(&out.join("dataset.jsonl"), &world.dataset)?;
    save_gazetteer(&out.join("gazetteer.csv"), &world.gazetteer)
        .map_err(|e| HarnessError::Io(e.to_string()))?;
    let roster = RosterSpec {
        agents: world
            .roster
            .into_iter()
            .map(|(name, profile)| AgentSpec {
                name,
                profile: Some(profile),
                endpoint: None,
                timeout_s: None,
            })
            .collect(),
    };
    roster.save(&out.join("roster.json"))?;
    println!(
        "wrote {} samples, {} regions, {} agents under {}",
        samples,
        regions,
        agents,
        out.display()
    );
    Ok(())
}

fn run_train(
    config: &std::path::Path,
    dataset: &std::path::Path,
    out: &std::path::Path,
    report_path: Option<&std::path::Path>,
    epochs: Option<u32>,
    lr: Option<f64>,
    seed: Option<u64>,
) -> Result<(), HarnessError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(epochs) = epochs {
        cfg.train.epochs = epochs;
    }
    if let Some(lr) = lr {
        cfg.train.lr = lr;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let world = build_world(&cfg)?;
    let records = ingest(dataset)?;
    let (train_records, _) = split_dataset(&records, cfg.split_fraction, cfg.seed);
    if train_records.is_empty() {
        return Err(HarnessError::Validation("train split is empty".into()));
    }
    let samples: Vec<TrainSample> = train_records
        .iter()
        .map(|r| TrainSample {
            image: r.image_ref(),
            truth_box: r.truth_box,
        })
        .collect();
    let extractor = SeededProjectionExtractor::new(cfg.model.d_k);
    let mut model =
        SelectionModel::new_random(world.roster.len(), cfg.model.d_k, cfg.model.d_h, cfg.seed);
    let report = train(
        &mut model,
        &samples,
        &world.roster,
        &world.gazetteer,
        &extractor,
        &cfg.train,
        &cfg.discussion,
        cfg.seed,
    )
    .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    model
        .save(out)
        .map_err(|e| HarnessError::Io(e.to_string()))?;
    if let Some(path) = report_path {
        std::fs::write(
            path,
            serde_json::to_string_pretty(&report).expect("report serializes"),
        )
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    }
    println!(
        "trained {} epochs on {} samples; windowed loss {:.6} (d {:.4} lst {:.4} a {:.4}), acc {:.3}; saved {}",
        report.epochs,
        samples.len(),
        report.loss_total,
        report.loss_d,
        report.loss_lst,
        report.loss_a,
        report.acc_window,
        out.display()
    );
    Ok(())
}

fn run_eval(
    cfg: RunConfig,
    dataset: &std::path::Path,
    out: &std::path::Path,
    model_path: Option<&std::path::Path>,
    log_dir: Option<PathBuf>,
) -> Result<(), HarnessError> {
    let world = build_world(&cfg)?;
    let records = ingest(dataset)?;
    let (train_records, test_records) = split_dataset(&records, cfg.split_fraction, cfg.seed);
    let loaded = match model_path {
        Some(p) => {
            Some(SelectionModel::load(p).map_err(|e| HarnessError::Validation(e.to_string()))?)
        }
        None => None,
    };
    let extractor = loaded
        .as_ref()
        .map(|m| SeededProjectionExtractor::new(m.d_k));
    let opts = EvalOptions {
        discussion: cfg.discussion.clone(),
        image_token_cost: cfg.image_token_cost,
        seed: cfg.seed,
        model: loaded
            .as_ref()
            .zip(extractor.as_ref())
            .map(|(m, e)| (m, e as &dyn crate::learn::FeatureExtractor)),
        config_echo: serde_json::json!({
            "seed": cfg.seed,
            "split_fraction": cfg.split_fraction,
            "image_token_cost": cfg.image_token_cost,
            "retrieval_bonus": cfg.retrieval_bonus,
            "discussion": cfg.discussion,
            "model": model_path.map(|p| p.display().to_string()),
        }),
        log_dir,
    };
    let report = evaluate(
        &world.roster,
        &world.gazetteer,
        &opts,
        &train_records,
        &test_records,
    )?;
    std::fs::write(
        out,
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )
    .map_err(|e| HarnessError::Io(format!("{}: {e}", out.display())))?;
    println!(
        "accuracy {:.4} over {} samples; avg tokens {:.0}, avg calls {:.1}; wrote {}",
        report.accuracy,
        report.samples.len(),
        report.avg_tokens,
        report.avg_agent_calls,
        out.display()
    );
    Ok(())
}

fn run_report(input: &std::path::Path) -> Result<(), HarnessError> {
    let raw = std::fs::read_to_string(input)
        .map_err(|e| HarnessError::Validation(format!("{}: {e}", input.display())))?;
    let value: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| HarnessError::Validation(format!("{}: {e}", input.display())))?;
    let pick = |k: &str| value.get(k).cloned().unwrap_or(serde_json::Value::Null);
    println!("accuracy:     {}", pick("accuracy"));
    println!("avg tokens:   {}", pick("avg_tokens"));
    println!("avg calls:    {}", pick("avg_agent_calls"));
    println!("rt avg (ms):  {}", pick("rt_avg_ms"));
    println!("rt med (ms):  {}", pick("rt_med_ms"));
    println!("coverage:     {}", pick("coverage"));
    println!("consistency:  {}", pick("consistency"));
    let sample_count = value
        .get("samples")
        .and_then(|s| s.as_array())
        .map(|a| a.len())
        .unwrap_or(0);
    println!("samples:      {sample_count}");
    println!(
        "{}",
        serde_json::to_string_pretty(&value).expect("valid json re-serializes")
    );
    Ok(())
}
