use std::path::PathBuf;

use anyhow::{Context, Result};

use fwiprune_core::costs::{flops_count, reduction_report};
use fwiprune_core::dataio::load_checkpoint;

use crate::manifest::ManifestBuilder;
use crate::CostArgs;

pub fn run(args: &CostArgs) -> Result<()> {
    let net = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let mut report = flops_count(&net, net.input_shape)?;
    if let Some(base_path) = &args.baseline {
        let base = load_checkpoint(base_path).with_context(|| format!("loading {}", base_path.display()))?;
        let base_report = flops_count(&base, base.input_shape)?;
        report = reduction_report(&base_report, &report)?;
    }

    print!("{}", report.to_table());
    println!("{}", serde_json::to_string(&report)?);

    if let Some(out) = &args.out {
        let builder = ManifestBuilder::new("cost")
            .config(serde_json::json!({ "baseline": args.baseline }))
            .input(&args.checkpoint);
        std::fs::create_dir_all(out)?;
        let json_path = out.join("cost.json");
        std::fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;
        let csv_path = out.join("cost.csv");
        std::fs::write(&csv_path, report.to_csv())?;
        let outputs: Vec<PathBuf> = vec![json_path, csv_path];
        builder.write(out, &outputs, None)?;
    }
    Ok(())
}
