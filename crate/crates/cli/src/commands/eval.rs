use anyhow::{Context, Result};
use serde_json::json;

use fwiprune_core::dataio::load_checkpoint;
use fwiprune_core::metrics::{metrics, one_minus_ssim};
use fwiprune_core::pipeline::{predict, validation_loss};

use crate::commands::{check_compat, load_split};
use crate::manifest::ManifestBuilder;
use crate::EvalArgs;

pub fn run(args: &EvalArgs) -> Result<()> {
    let net = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let data = load_split(&args.data, &args.split)?;
    check_compat(&net, &data, &args.split)?;

    let loss = validation_loss(&net, &data, args.batch_size)?;
    let pred = predict(&net, &data, args.batch_size)?;
    let triple = metrics(&pred, &data.targets)?;
    let payload = json!({
        "split": args.split,
        "samples": data.len(),
        "mae": triple.mae,
        "rmse": triple.rmse,
        "ssim": triple.ssim,
        "one_minus_ssim": one_minus_ssim(&triple),
        "loss_mae": loss,
    });
    println!("{payload}");

    if let Some(out) = &args.out {
        let builder = ManifestBuilder::new("eval")
            .config(json!({ "split": args.split, "batch_size": args.batch_size }))
            .input(&args.checkpoint)
            .input(&args.data);
        std::fs::create_dir_all(out)?;
        let path = out.join("eval.json");
        std::fs::write(&path, serde_json::to_string_pretty(&payload)?)?;
        builder.write(out, &[path], None)?;
    }
    Ok(())
}
