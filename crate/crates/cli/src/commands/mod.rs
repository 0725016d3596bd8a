pub mod bench;
pub mod compress;
pub mod cost;
pub mod eval;
pub mod synth;
pub mod sweep;
pub mod train;

use std::path::Path;

use anyhow::{bail, Context, Result};
use fwiprune_core::dataio::read_npy;
use fwiprune_core::netgraph::{build_inversionnet_default, build_tiny_testnet, ArchConfig, NetworkGraph};
use fwiprune_core::pipeline::DataSet;

/// Load one split (`train`, `val`, `test`) from a dataset directory.
pub fn load_split(data_dir: &Path, split: &str) -> Result<DataSet<f32>> {
    let dir = data_dir.join(split);
    let inputs = read_npy(dir.join("inputs.npy"))
        .with_context(|| format!("reading {}", dir.join("inputs.npy").display()))?;
    let maps = read_npy(dir.join("maps.npy"))
        .with_context(|| format!("reading {}", dir.join("maps.npy").display()))?;
    Ok(DataSet::new(inputs, maps)?)
}

/// Resolve `--arch`: a JSON config path, or one of the built-in presets.
pub fn resolve_arch(arch: &str) -> Result<NetworkGraph<f32>> {
    match arch {
        "tiny" => Ok(build_tiny_testnet::<f32>()),
        "default" => Ok(build_inversionnet_default::<f32>()),
        path => {
            let p = Path::new(path);
            if !p.exists() {
                bail!("--arch {path:?} is neither a preset (tiny, default) nor an existing file");
            }
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {path}"))?;
            let cfg: ArchConfig = serde_json::from_str(&text).with_context(|| format!("parsing {path}"))?;
            Ok(NetworkGraph::from_config(&cfg)?)
        }
    }
}

/// Check that a dataset matches a network's input and output contracts
/// before any training starts.
pub fn check_compat(net: &NetworkGraph<f32>, data: &DataSet<f32>, what: &str) -> Result<()> {
    let (c, h, w) = net.input_shape;
    let ishape = data.inputs.shape();
    if ishape[1..] != [c, h, w] {
        bail!("{what}: inputs {ishape:?} incompatible with network input ({c}, {h}, {w})");
    }
    let (oc, oh, ow) = net.output_shape;
    let tshape = data.targets.shape();
    if tshape[1..] != [oc, oh, ow] {
        bail!("{what}: targets {tshape:?} incompatible with network output ({oc}, {oh}, {ow})");
    }
    Ok(())
}
