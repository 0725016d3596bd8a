use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use fwiprune_core::dataio::{gen_synthetic, write_npy, NpyDType, SyntheticTask};
use fwiprune_core::tensor::Tensor;

use crate::manifest::ManifestBuilder;
use crate::SynthArgs;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthConfig {
    pub task: SyntheticTask,
    pub count: usize,
    pub splits: SplitFractions,
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg: SynthConfig = serde_json::from_str(&text).context("parsing synth config")?;
    if let Some(count) = args.count {
        cfg.count = count;
    }
    if let Some(seed) = args.seed {
        cfg.task.seed = seed;
    }

    let builder = ManifestBuilder::new("synth")
        .seed(cfg.task.seed)
        .config(serde_json::to_value(&cfg)?)
        .input(&args.config);

    let result = generate(&cfg, args);
    match result {
        Ok(outputs) => {
            builder.write(&args.out, &outputs, None)?;
            println!(
                "wrote {} samples ({} files) under {}",
                cfg.count,
                outputs.len(),
                args.out.display()
            );
            Ok(())
        }
        Err(e) => {
            builder.write(&args.out, &[], Some(format!("{e:#}"))).ok();
            Err(e)
        }
    }
}

fn generate(cfg: &SynthConfig, args: &SynthArgs) -> Result<Vec<PathBuf>> {
    let s = &cfg.splits;
    for (name, f) in [("train", s.train), ("val", s.val), ("test", s.test)] {
        if !(0.0..=1.0).contains(&f) {
            bail!("split fraction {name} = {f} outside [0, 1]");
        }
    }
    if (s.train + s.val + s.test - 1.0).abs() > 1e-9 {
        bail!("split fractions must sum to 1, got {}", s.train + s.val + s.test);
    }

    let n_train = (cfg.count as f64 * s.train).floor() as usize;
    let n_val = (cfg.count as f64 * s.val).floor() as usize;
    let n_test = cfg.count - n_train - n_val;
    for (name, n) in [("train", n_train), ("val", n_val), ("test", n_test)] {
        if n == 0 {
            bail!("split {name} would be empty for count {}", cfg.count);
        }
    }

    let (inputs, maps) = gen_synthetic(&cfg.task, cfg.count)?;
    let isz = inputs.len() / cfg.count;
    let tsz = maps.len() / cfg.count;
    let mut outputs = Vec::new();
    let bounds = [(0, n_train, "train"), (n_train, n_train + n_val, "val"), (n_train + n_val, cfg.count, "test")];
    for (lo, hi, name) in bounds {
        let dir = args.out.join(name);
        std::fs::create_dir_all(&dir)?;
        let mut ishape = inputs.shape().to_vec();
        ishape[0] = hi - lo;
        let mut tshape = maps.shape().to_vec();
        tshape[0] = hi - lo;
        let split_inputs = Tensor::from_vec(ishape, inputs.data()[lo * isz..hi * isz].to_vec())?;
        let split_maps = Tensor::from_vec(tshape, maps.data()[lo * tsz..hi * tsz].to_vec())?;
        let ip = dir.join("inputs.npy");
        let mp = dir.join("maps.npy");
        write_npy(&split_inputs, &ip, NpyDType::F4)?;
        write_npy(&split_maps, &mp, NpyDType::F4)?;
        outputs.push(ip);
        outputs.push(mp);
    }
    Ok(outputs)
}
