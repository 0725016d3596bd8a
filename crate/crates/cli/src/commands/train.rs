use std::path::PathBuf;

use anyhow::{Context, Result};
use serde_json::json;

use fwiprune_core::dataio::save_checkpoint;
use fwiprune_core::metrics::metrics;
use fwiprune_core::optim::AdamConfig;
use fwiprune_core::pipeline::{finetune, predict, validation_loss, PipelineConfig};

use crate::commands::{check_compat, load_split, resolve_arch};
use crate::manifest::ManifestBuilder;
use crate::TrainArgs;

pub fn run(args: &TrainArgs) -> Result<()> {
    let out_dir = args
        .out
        .parent()
        .map(|p| if p.as_os_str().is_empty() { PathBuf::from(".") } else { p.to_path_buf() })
        .unwrap_or_else(|| PathBuf::from("."));
    let cfg = PipelineConfig {
        ratio: 0.0,
        iterations: 1,
        threshold: None,
        total_epochs: args.epochs,
        adam: AdamConfig { lr: args.lr, ..AdamConfig::default() },
        seed: args.seed,
        batch_size: args.batch_size,
    };
    let builder = ManifestBuilder::new("train")
        .seed(args.seed)
        .config(json!({ "arch": args.arch, "pipeline": cfg }))
        .input(&args.data);

    let result = train(args, &cfg);
    match result {
        Ok((outputs, val_loss)) => {
            builder.write(&out_dir, &outputs, None)?;
            println!("trained {} epochs; validation MAE {val_loss:.6}; checkpoint {}", args.epochs, args.out.display());
            Ok(())
        }
        Err(e) => {
            builder.write(&out_dir, &[], Some(format!("{e:#}"))).ok();
            Err(e)
        }
    }
}

fn train(args: &TrainArgs, cfg: &PipelineConfig) -> Result<(Vec<PathBuf>, f64)> {
    let train_set = load_split(&args.data, "train")?;
    let val_set = load_split(&args.data, "val")?;
    let mut net = resolve_arch(&args.arch)?;
    // shape compatibility is checked before any training starts
    check_compat(&net, &train_set, "train split")?;
    check_compat(&net, &val_set, "val split")?;

    net.init_weights(args.seed);
    let curve = finetune(&mut net, &train_set, args.epochs, cfg)?;
    let val_loss = validation_loss(&net, &val_set, args.batch_size)?;
    let pred = predict(&net, &val_set, args.batch_size)?;
    let triple = metrics(&pred, &val_set.targets)?;

    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    save_checkpoint(&net, &args.out).context("writing checkpoint")?;

    let curve_path = args.out.with_extension("curve.csv");
    let mut csv = String::from("epoch,train_mae\n");
    for (i, l) in curve.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i + 1, l));
    }
    std::fs::write(&curve_path, csv)?;

    let summary_path = args.out.with_extension("val.json");
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&json!({
            "val_mae": val_loss,
            "metrics": triple,
            "one_minus_ssim": fwiprune_core::metrics::one_minus_ssim(&triple),
        }))?,
    )?;

    Ok((vec![args.out.clone(), curve_path, summary_path], val_loss))
}
