//! Synthetic desk-scale dataset: layered velocity maps and a fixed seeded
//! linear-projection forward operator standing in for wave physics. Every
//! sample is a pure function of `(seed, index)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const STREAM_PROJECTION: u64 = 0x5052_4f4a; // "PROJ"
const STREAM_MAP: u64 = 0x4d41_5053; // "MAPS"
const STREAM_NOISE: u64 = 0x4e4f_4953; // "NOIS"

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub seed: u64,
    pub map_height: usize,
    pub map_width: usize,
    pub min_layers: usize,
    pub max_layers: usize,
    /// Raw velocity bounds; maps are normalized into [-1, 1] by this range.
    pub velocity_range: (f64, f64),
    pub channels: usize,
    pub time_steps: usize,
    pub receivers: usize,
    pub noise_amp: f64,
    /// Maximum boundary tilt in rows per column.
    pub max_tilt: f64,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        SyntheticTask {
            seed: 0,
            map_height: 16,
            map_width: 16,
            min_layers: 2,
            max_layers: 5,
            velocity_range: (1500.0, 4500.0),
            channels: 3,
            time_steps: 64,
            receivers: 16,
            noise_amp: 0.02,
            max_tilt: 0.3,
        }
    }
}

impl SyntheticTask {
    pub fn validate(&self) -> Result<()> {
        if self.map_height < 2 || self.map_width < 1 {
            return Err(Error::InvalidConfig("map size degenerate".into()));
        }
        if self.min_layers < 1 || self.max_layers < self.min_layers || self.max_layers > self.map_height {
            return Err(Error::InvalidConfig(format!(
                "layer count range {}..={} invalid for height {}",
                self.min_layers, self.max_layers, self.map_height
            )));
        }
        if self.channels < 1 || self.time_steps < 1 || self.receivers < 1 {
            return Err(Error::InvalidConfig("input grid degenerate".into()));
        }
        if self.velocity_range.1 <= self.velocity_range.0 {
            return Err(Error::InvalidConfig("velocity range must be increasing".into()));
        }
        if self.noise_amp < 0.0 || self.max_tilt < 0.0 {
            return Err(Error::InvalidConfig("noise and tilt must be >= 0".into()));
        }
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn stream_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(seed ^ stream.rotate_left(32) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Holds the fixed projection operator so per-sample generation is cheap.
pub struct SyntheticGen {
    task: SyntheticTask,
    /// `(channels*time*receivers) x (map_height*map_width)` row-major.
    projection: Vec<f32>,
}

impl SyntheticGen {
    pub fn new(task: SyntheticTask) -> Result<Self> {
        task.validate()?;
        let q = task.channels * task.time_steps * task.receivers;
        let hw = task.map_height * task.map_width;
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(task.seed, STREAM_PROJECTION, 0));
        let scale = 1.0 / (hw as f64).sqrt();
        let normal = Normal::new(0.0, scale).expect("positive std");
        let projection = (0..q * hw).map(|_| normal.sample(&mut rng) as f32).collect();
        Ok(SyntheticGen { task, projection })
    }

    pub fn task(&self) -> &SyntheticTask {
        &self.task
    }

    /// One `(input, velocity map)` pair, deterministic in `(seed, index)`.
    pub fn sample(&self, index: u64) -> (Vec<f32>, Vec<f32>) {
        let t = &self.task;
        let (h, w) = (t.map_height, t.map_width);
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(t.seed, STREAM_MAP, index));

        let layers = rng.random_range(t.min_layers..=t.max_layers);
        // boundary rows: `layers - 1` distinct draws from 1..h, sorted
        let mut rows: Vec<usize> = Vec::with_capacity(layers - 1);
        while rows.len() < layers - 1 {
            let r = rng.random_range(1..h);
            if !rows.contains(&r) {
                rows.push(r);
            }
        }
        rows.sort_unstable();

        // stratified velocities are strictly increasing with depth
        let (lo, hi) = t.velocity_range;
        let span = hi - lo;
        let velocities: Vec<f64> = (0..layers)
            .map(|i| lo + span * ((i as f64 + rng.random_range(0.0..1.0)) / layers as f64))
            .collect();

        let tilt = if t.max_tilt > 0.0 { rng.random_range(-t.max_tilt..=t.max_tilt) } else { 0.0 };
        let center = (w as f64 - 1.0) / 2.0;

        let mut map = vec![0.0f32; h * w];
        for col in 0..w {
            let shift = (tilt * (col as f64 - center)).round() as isize;
            for row in 0..h {
                // which region does this row land in, given tilted boundaries
                let mut region = 0usize;
                for (k, &b) in rows.iter().enumerate() {
                    let eff = (b as isize + shift).clamp(1, h as isize - 1) as usize;
                    if row >= eff {
                        region = k + 1;
                    }
                }
                let v = velocities[region];
                map[row * w + col] = (2.0 * (v - lo) / span - 1.0) as f32;
            }
        }

        let q = t.channels * t.time_steps * t.receivers;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(stream_seed(t.seed, STREAM_NOISE, index));
        let normal = Normal::new(0.0, 1.0).expect("unit std");
        let hw = h * w;
        let mut input = vec![0.0f32; q];
        for (qi, out) in input.iter_mut().enumerate() {
            let row = &self.projection[qi * hw..(qi + 1) * hw];
            let mut acc = 0.0f32;
            for (p, m) in row.iter().zip(&map) {
                acc += p * m;
            }
            let noise = if t.noise_amp > 0.0 {
                (t.noise_amp * normal.sample(&mut noise_rng)) as f32
            } else {
                0.0
            };
            *out = acc.tanh() + noise;
        }
        (input, map)
    }
}

/// Generate `count` paired samples: inputs `(count, channels, time,
/// receivers)` and maps `(count, 1, height, width)`.
pub fn gen_synthetic(task: &SyntheticTask, count: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
    if count < 1 {
        return Err(Error::InvalidConfig("sample count must be >= 1".into()));
    }
    let generator = SyntheticGen::new(task.clone())?;
    let t = &generator.task;
    let q = t.channels * t.time_steps * t.receivers;
    let hw = t.map_height * t.map_width;
    let mut inputs = Vec::with_capacity(count * q);
    let mut maps = Vec::with_capacity(count * hw);
    for index in 0..count {
        let (i, m) = generator.sample(index as u64);
        inputs.extend_from_slice(&i);
        maps.extend_from_slice(&m);
    }
    Ok((
        Tensor::from_vec(vec![count, t.channels, t.time_steps, t.receivers], inputs)?,
        Tensor::from_vec(vec![count, 1, t.map_height, t.map_width], maps)?,
    ))
}
