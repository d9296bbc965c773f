use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use elkc::psim::{SimConfig, SimState};

use crate::usage;

#[derive(Debug, Args)]
pub struct TrainSimArgs {
    /// Flat `key = value` config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Codec for both directions, e.g. `3lc:1.75`.
    #[arg(long)]
    codec: Option<String>,
    #[arg(long)]
    push_codec: Option<String>,
    #[arg(long)]
    pull_codec: Option<String>,
    #[arg(long, env = "ELKC_SEED")]
    seed: Option<u64>,
    /// Extra `key=value` overrides, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

pub fn build_config(args: &TrainSimArgs) -> Result<SimConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            if !path.is_file() {
                return Err(usage(format!("no such config file: {}", path.display())));
            }
            SimConfig::from_file(path).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => SimConfig::default(),
    };
    let mut set = |k: &str, v: String| cfg.set(k, &v).map_err(|e| usage(e.to_string()));
    if let Some(v) = args.workers {
        set("workers", v.to_string())?;
    }
    if let Some(v) = args.steps {
        set("steps", v.to_string())?;
    }
    if let Some(v) = &args.codec {
        set("codec", v.clone())?;
    }
    if let Some(v) = &args.push_codec {
        set("push_codec", v.clone())?;
    }
    if let Some(v) = &args.pull_codec {
        set("pull_codec", v.clone())?;
    }
    if let Some(v) = args.seed {
        set("seed", v.to_string())?;
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        set(k, v.to_string())?;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

pub fn run(args: TrainSimArgs) -> Result<()> {
    let cfg = build_config(&args)?;
    let workers = cfg.workers;
    let mut state = SimState::new(cfg)?;
    for _ in 0..state.config().steps {
        state.train_step()?;
    }
    let log = state.into_metrics();
    match &args.csv_out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            log.write_csv(BufWriter::new(file))?;
        }
        None => log.write_csv(io::stdout().lock())?,
    }
    if let (Some(acc), Ok(traffic)) = (log.final_test_acc(), log.traffic_summary(workers)) {
        eprintln!(
            "final loss {:.4}, test accuracy {:.2}%, {:.3} bits per state change ({:.1}x)",
            log.final_loss().unwrap_or(f64::NAN),
            acc * 100.0,
            traffic.bits_per_value,
            traffic.ratio
        );
    }
    Ok(())
}
