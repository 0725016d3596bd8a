use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use fwiprune_core::bench::bench_latency;
use fwiprune_core::costs::flops_count;
use fwiprune_core::dataio::{load_checkpoint, save_checkpoint};
use fwiprune_core::metrics::one_minus_ssim;
use fwiprune_core::netgraph::NetworkGraph;
use fwiprune_core::pipeline::{compress, DataSplits};

use crate::commands::{check_compat, load_split};
use crate::manifest::ManifestBuilder;
use crate::SweepArgs;

struct CellOutcome {
    ratio: f64,
    iters: usize,
    result: Result<CellStats>,
    report_rel: String,
}

struct CellStats {
    params: u64,
    flops: u64,
    latency_ms: Option<f64>,
    mae: f64,
    rmse: f64,
    one_minus_ssim: f64,
}

pub fn run(args: &SweepArgs) -> Result<()> {
    if args.ratios.is_empty() || args.iters.is_empty() {
        bail!("--ratios and --iters must each name at least one value");
    }
    let builder = ManifestBuilder::new("sweep")
        .seed(args.seed)
        .config(serde_json::json!({
            "ratios": args.ratios,
            "iters": args.iters,
            "threshold": args.threshold,
            "epochs": args.epochs,
            "lr": args.lr,
            "batch_size": args.batch_size,
            "parallel": args.parallel,
            "bench_runs": args.bench_runs,
        }))
        .input(&args.checkpoint)
        .input(&args.data);

    match execute(args) {
        Ok(outputs) => {
            builder.write(&args.out, &outputs, None)?;
            println!("sweep finished: {}", args.out.join("sweep.csv").display());
            Ok(())
        }
        Err(e) => {
            builder.write(&args.out, &[], Some(format!("{e:#}"))).ok();
            Err(e)
        }
    }
}

fn execute(args: &SweepArgs) -> Result<Vec<PathBuf>> {
    let base = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let data = DataSplits { train: load_split(&args.data, "train")?, val: load_split(&args.data, "val")? };
    check_compat(&base, &data.train, "train split")?;
    check_compat(&base, &data.val, "val split")?;
    std::fs::create_dir_all(args.out.join("cells"))?;

    let cells: Vec<(f64, usize)> = args
        .ratios
        .iter()
        .flat_map(|&r| args.iters.iter().map(move |&n| (r, n)))
        .collect();

    let outcomes: Vec<CellOutcome> = if args.parallel {
        // cell-level parallelism disables in-cell latency numbers
        std::thread::scope(|scope| {
            let handles: Vec<_> = cells
                .iter()
                .map(|&(ratio, iters)| {
                    let base = &base;
                    let data = &data;
                    scope.spawn(move || run_cell(args, base, data, ratio, iters, false))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("sweep cell panicked")).collect()
        })
    } else {
        cells
            .iter()
            .map(|&(ratio, iters)| run_cell(args, &base, &data, ratio, iters, true))
            .collect()
    };

    let mut csv = String::from("ratio,iters,params,flops,latency_ms,mae,rmse,one_minus_ssim,status,report\n");
    let mut failures = 0usize;
    for c in &outcomes {
        match &c.result {
            Ok(s) => {
                let lat = s.latency_ms.map_or_else(String::new, |v| format!("{v:.4}"));
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{},ok,{}\n",
                    c.ratio, c.iters, s.params, s.flops, lat, s.mae, s.rmse, s.one_minus_ssim, c.report_rel
                ));
            }
            Err(e) => {
                failures += 1;
                let msg = format!("{e:#}").replace([',', '\n'], ";");
                csv.push_str(&format!("{},{},,,,,,,failed,{}\n", c.ratio, c.iters, msg));
            }
        }
    }
    let csv_path = args.out.join("sweep.csv");
    std::fs::write(&csv_path, csv)?;
    if failures > 0 {
        eprintln!("{failures}/{} sweep cells failed (recorded in sweep.csv)", outcomes.len());
    }
    Ok(vec![csv_path])
}

fn run_cell(
    args: &SweepArgs,
    base: &NetworkGraph<f32>,
    data: &DataSplits<f32>,
    ratio: f64,
    iters: usize,
    with_latency: bool,
) -> CellOutcome {
    let cell_dir = args.out.join("cells").join(format!("r{ratio:.2}_n{iters}"));
    let report_rel = format!("cells/r{ratio:.2}_n{iters}/report.json");
    let result = (|| -> Result<CellStats> {
        std::fs::create_dir_all(&cell_dir)?;
        let cfg = super::compress::pipeline_config(
            ratio,
            iters,
            args.threshold,
            args.epochs,
            args.lr,
            args.batch_size,
            args.seed,
        );
        let (pruned, report) = compress(base.clone(), data, &cfg)?;
        save_checkpoint(&pruned, cell_dir.join("pruned.ckpt"))?;
        std::fs::write(cell_dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
        let cost = flops_count(&pruned, pruned.input_shape)?;
        write_cost(&cell_dir, &cost)?;

        let latency_ms = if with_latency && args.bench_runs > 0 {
            let (c, h, w) = pruned.input_shape;
            let stats = bench_latency(&pruned, (1, c, h, w), args.bench_runs, 2, 1)?;
            std::fs::write(cell_dir.join("bench.json"), serde_json::to_string_pretty(&stats)?)?;
            Some(stats.mean_ms)
        } else {
            None
        };

        Ok(CellStats {
            params: cost.total_params,
            flops: cost.total_flops.unwrap_or(0),
            latency_ms,
            mae: report.final_metrics.mae,
            rmse: report.final_metrics.rmse,
            one_minus_ssim: one_minus_ssim(&report.final_metrics),
        })
    })();
    CellOutcome { ratio, iters, result, report_rel }
}

fn write_cost(dir: &Path, cost: &fwiprune_core::costs::CostReport) -> Result<()> {
    std::fs::write(dir.join("cost.json"), serde_json::to_string_pretty(cost)?)?;
    Ok(())
}
