use anyhow::{Context, Result};

use fwiprune_core::bench::bench_latency;
use fwiprune_core::dataio::load_checkpoint;

use crate::manifest::ManifestBuilder;
use crate::BenchArgs;

pub fn run(args: &BenchArgs) -> Result<()> {
    let net = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let (c, h, w) = net.input_shape;
    let stats = bench_latency(&net, (args.batch, c, h, w), args.runs, args.warmup, args.threads)?;

    println!("{}", stats.summary());
    println!("{}", serde_json::to_string(&stats)?);

    if let Some(out) = &args.out {
        let builder = ManifestBuilder::new("bench")
            .config(serde_json::json!({
                "runs": args.runs,
                "warmup": args.warmup,
                "threads": args.threads,
                "batch": args.batch,
            }))
            .input(&args.checkpoint);
        std::fs::create_dir_all(out)?;
        let path = out.join("bench.json");
        std::fs::write(&path, serde_json::to_string_pretty(&stats)?)?;
        builder.write(out, &[path], None)?;
    }
    Ok(())
}
