use std::path::PathBuf;

use anyhow::{Context, Result};

use fwiprune_core::dataio::{load_checkpoint, save_checkpoint};
use fwiprune_core::optim::AdamConfig;
use fwiprune_core::pipeline::{compress, DataSplits, PipelineConfig};

use crate::commands::{check_compat, load_split};
use crate::manifest::ManifestBuilder;
use crate::CompressArgs;

pub fn pipeline_config(
    ratio: f64,
    iters: usize,
    threshold: Option<f64>,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    seed: u64,
) -> PipelineConfig {
    PipelineConfig {
        ratio,
        iterations: iters,
        threshold,
        total_epochs: epochs,
        adam: AdamConfig { lr, ..AdamConfig::default() },
        seed,
        batch_size,
    }
}

pub fn run(args: &CompressArgs) -> Result<()> {
    let cfg = pipeline_config(
        args.ratio,
        args.iters,
        args.threshold,
        args.epochs,
        args.lr,
        args.batch_size,
        args.seed,
    );
    cfg.validate().context("invalid --ratio/--iters/--batch-size combination")?;
    let builder = ManifestBuilder::new("compress")
        .seed(args.seed)
        .config(serde_json::to_value(&cfg)?)
        .input(&args.checkpoint)
        .input(&args.data);

    match execute(args, &cfg) {
        Ok((outputs, summary)) => {
            builder.write(&args.out, &outputs, None)?;
            println!("{summary}");
            Ok(())
        }
        Err(e) => {
            builder.write(&args.out, &[], Some(format!("{e:#}"))).ok();
            Err(e)
        }
    }
}

fn execute(args: &CompressArgs, cfg: &PipelineConfig) -> Result<(Vec<PathBuf>, String)> {
    let net = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let data = DataSplits { train: load_split(&args.data, "train")?, val: load_split(&args.data, "val")? };
    check_compat(&net, &data.train, "train split")?;
    check_compat(&net, &data.val, "val split")?;

    let (pruned, report) = compress(net, &data, cfg)?;

    std::fs::create_dir_all(&args.out)?;
    let mut outputs = Vec::new();
    let ckpt = args.out.join("pruned.ckpt");
    save_checkpoint(&pruned, &ckpt)?;
    outputs.push(ckpt);
    for (k, plan) in report.plans.iter().enumerate() {
        let p = args.out.join(format!("plan_iter_{}.json", k + 1));
        std::fs::write(&p, serde_json::to_string_pretty(plan)?)?;
        outputs.push(p);
    }
    let report_path = args.out.join("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    outputs.push(report_path);

    let summary = format!(
        "R={} N={}: val {:.6} -> {:.6} (branch {:?}); widths {:?}",
        cfg.ratio,
        cfg.iterations,
        report.baseline_val_loss,
        report.winner_loss,
        report.branch,
        pruned.layer_widths()
    );
    Ok((outputs, summary))
}
