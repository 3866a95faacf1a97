//! `sod` — RGB-D salient object detection harness: synthetic data
//! generation, training, evaluation, component ablation, single-image
//! prediction, and gradient verification.

use sod_cli::{ablate, checkpoint, config, dataset, error, evalcsv, pnm, synth, train};

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::{CliError, IoContext, Result};
use sod_core::metrics::GrayMap;
use sod_core::tensor::Tensor;

#[derive(Parser)]
#[command(name = "sod", version, about = "RGB-D salient object detection harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic RGB-D dataset (train/ and test/ splits).
    GenData {
        /// Output directory; receives train/ and test/ subdirectories.
        #[arg(long)]
        out: PathBuf,
        /// Optional `key = value` config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed override (also overridable via M2R_SEED).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model on a generated dataset.
    Train {
        /// Dataset root containing train/ and test/ splits.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for model.ckpt and train_log.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate: either a checkpoint over a split, or a directory of
    /// prediction maps against ground truth maps.
    Eval {
        /// Checkpoint to evaluate (requires --data).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Split directory (rgb/, depth/, gt/, manifest.txt).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory of predicted .pgm maps (requires --gt).
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Directory of ground-truth .pgm maps.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Output directory for metrics.csv and curves.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the 13-scheme component ablation and write ablation.csv plus
    /// the full-scale reference.csv.
    Ablate {
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds.
        #[arg(long, default_value = "0,1,2")]
        seeds: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Predict a saliency map for one RGB (.ppm) / depth (.pgm) pair.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        rgb: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        /// Output .pgm path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference verification of every gradient in the stack.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Maximum acceptable relative error.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn load_cfg(path: Option<&PathBuf>, seed: Option<u64>) -> Result<config::TrainConfig> {
    let mut cfg = config::load_config(path.map(|p| p.as_path()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn cmd_gen_data(out: &PathBuf, config: Option<&PathBuf>, seed: Option<u64>) -> Result<()> {
    let cfg = load_cfg(config, seed)?;
    let res = cfg.model.input;
    let train = synth::synth_dataset(cfg.train_samples, res, cfg.seed);
    let test = synth::synth_dataset(cfg.test_samples, res, cfg.seed ^ 0x7E57);
    dataset::write_split(&out.join("train"), &train)?;
    dataset::write_split(&out.join("test"), &test)?;
    println!(
        "wrote {} train and {} test samples at {res}x{res} to {}",
        train.len(),
        test.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(
    data: &PathBuf,
    out: &PathBuf,
    config: Option<&PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let cfg = load_cfg(config, seed)?;
    let train = dataset::read_split(&data.join("train"))?;
    let val = dataset::read_split(&data.join("test"))?;
    let outcome = train::train_model(&cfg, &train, &val, Some(out), true)?;
    let ckpt = out.join("model.ckpt");
    checkpoint::save(&ckpt, &outcome.model)?;
    println!("saved checkpoint to {}", ckpt.display());
    Ok(())
}

fn cmd_eval(
    ckpt: Option<&PathBuf>,
    data: Option<&PathBuf>,
    pred: Option<&PathBuf>,
    gt: Option<&PathBuf>,
    out: &PathBuf,
) -> Result<()> {
    let report = match (ckpt, data, pred, gt) {
        (Some(ckpt), Some(data), None, None) => {
            let model = checkpoint::load(ckpt)?;
            let samples = dataset::read_split(data)?;
            train::evaluate_model(&model, &samples)?
        }
        (None, None, Some(pred), Some(gt)) => {
            let pairs = dataset::read_eval_pairs(pred, gt)?;
            let maps: Vec<(GrayMap, GrayMap)> =
                pairs.into_iter().map(|(_, p, g)| (p, g)).collect();
            sod_core::metrics::evaluate_dataset(&maps)?
        }
        _ => {
            return Err(CliError::contract(
                "eval needs either --checkpoint with --data, or --pred with --gt",
            ))
        }
    };
    evalcsv::write_metrics(out, &report)?;
    evalcsv::write_curves(out, &report)?;
    println!(
        "{}\n{}",
        evalcsv::SUMMARY_HEADER,
        evalcsv::summary_row(&report)
    );
    Ok(())
}

fn cmd_ablate(out: &PathBuf, seeds: &str, config: Option<&PathBuf>) -> Result<()> {
    let base = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .io_ctx(format!("reading config {}", p.display()))?;
            config::parse_config(&text)?
        }
        None => ablate::ablation_base(),
    };
    let seeds: Result<Vec<u64>> = seeds
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| CliError::contract(format!("bad seed '{s}'")))
        })
        .collect();
    let seeds = seeds?;
    if seeds.is_empty() {
        return Err(CliError::contract("at least one seed required"));
    }
    let results = ablate::run_ablation(&base, &seeds, true)?;
    ablate::write_results(out, &results)?;
    ablate::write_reference(out)?;
    println!("wrote ablation.csv and reference.csv to {}", out.display());
    Ok(())
}

fn cmd_predict(ckpt: &PathBuf, rgb: &PathBuf, depth: &PathBuf, out: &PathBuf) -> Result<()> {
    let model = checkpoint::load(ckpt)?;
    let rgb_img = pnm::load_ppm(rgb)?;
    let depth_img = pnm::load_pgm(depth)?;
    if (rgb_img.h, rgb_img.w) != (depth_img.h, depth_img.w) {
        return Err(CliError::contract(format!(
            "rgb is {}x{} but depth is {}x{}",
            rgb_img.h, rgb_img.w, depth_img.h, depth_img.w
        )));
    }
    let rgb_t = Tensor::new(&[3, rgb_img.h, rgb_img.w], rgb_img.data.clone())
        .map_err(CliError::from)?;
    let depth_t = Tensor::new(&[1, depth_img.h, depth_img.w], depth_img.data.clone())
        .map_err(CliError::from)?;
    let (bytes, h, w) = model.predict(&rgb_t, &depth_t)?;
    pnm::save_pgm_bytes(out, h, w, &bytes)?;
    println!("wrote {}x{} saliency map to {}", w, h, out.display());
    Ok(())
}

fn cmd_gradcheck(trials: usize, seed: u64, tolerance: f64) -> Result<()> {
    let entries = sod_core::gradcheck::run_suite(seed, trials)?;
    let mut failed = false;
    for e in &entries {
        let ok = e.result.max_rel < tolerance && e.result.checked > 0;
        failed |= !ok;
        println!(
            "{:<45} max_rel={:>10.3e} checked={:>5} skipped={:>4}  {}",
            e.name,
            e.result.max_rel,
            e.result.checked,
            e.result.skipped,
            if ok { "ok" } else { "FAIL" }
        );
    }
    if failed {
        return Err(CliError::contract(format!(
            "gradient check exceeded tolerance {tolerance:.1e}"
        )));
    }
    println!("all gradients verified at tolerance {tolerance:.1e}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenData { out, config, seed } => cmd_gen_data(out, config.as_ref(), *seed),
        Command::Train { data, out, config, seed } => {
            cmd_train(data, out, config.as_ref(), *seed)
        }
        Command::Eval { checkpoint, data, pred, gt, out } => cmd_eval(
            checkpoint.as_ref(),
            data.as_ref(),
            pred.as_ref(),
            gt.as_ref(),
            out,
        ),
        Command::Ablate { out, seeds, config } => cmd_ablate(out, seeds, config.as_ref()),
        Command::Predict { checkpoint, rgb, depth, out } => {
            cmd_predict(checkpoint, rgb, depth, out)
        }
        Command::Gradcheck { trials, seed, tolerance } => {
            cmd_gradcheck(*trials, *seed, *tolerance)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
