//! Seeded synthetic weights and activations for demos and tests.

use std::path::PathBuf;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::Serialize;

use fgq::io::save_npy;
use fgq::sim::ActivationTensor;
use fgq::{Family, NpyDtype, WeightTensor};

use crate::config::RunConfig;

/// Layer shapes of the synthetic model; channels chain from a 3-channel input.
pub const SYNTH_SHAPES: [(usize, usize, usize, usize); 10] = [
    (16, 3, 3, 3),
    (32, 16, 3, 3),
    (32, 32, 3, 3),
    (32, 32, 3, 3),
    (64, 32, 3, 3),
    (64, 64, 3, 3),
    (64, 64, 3, 3),
    (64, 64, 3, 3),
    (64, 64, 3, 3),
    (64, 64, 3, 3),
];

const GAUSSIAN_SIGMA: f64 = 0.05;
const EXPONENTIAL_MEAN: f64 = 0.03;

pub struct SyntheticLayer {
    pub name: String,
    pub family: Family,
    pub weights: WeightTensor<f64>,
}

/// Even layers are Gaussian, odd layers have Laplace-distributed weights
/// (exponential magnitudes with random signs).
pub fn synthetic_model(rng: &mut ChaCha8Rng) -> Vec<SyntheticLayer> {
    let normal = Normal::new(0.0, GAUSSIAN_SIGMA).expect("valid sigma");
    let exp = Exp::new(1.0 / EXPONENTIAL_MEAN).expect("valid rate");
    SYNTH_SHAPES
        .iter()
        .enumerate()
        .map(|(i, &dims)| {
            let n = dims.0 * dims.1 * dims.2 * dims.3;
            let family = if i % 2 == 0 { Family::Gaussian } else { Family::Exponential };
            let data: Vec<f64> = (0..n)
                .map(|_| match family {
                    Family::Gaussian => normal.sample(rng),
                    _ => {
                        let m = exp.sample(rng);
                        if rng.gen() { m } else { -m }
                    }
                })
                .collect();
            SyntheticLayer {
                name: format!("layer{i:02}"),
                family,
                weights: WeightTensor::new(dims, data).expect("finite synthetic weights"),
            }
        })
        .collect()
}

/// Uniform `[0, 1)` activations, like post-ReLU features.
pub fn synthetic_activations(rng: &mut ChaCha8Rng, dims: (usize, usize, usize)) -> ActivationTensor<f64> {
    let data = (0..dims.0 * dims.1 * dims.2).map(|_| rng.gen::<f64>()).collect();
    ActivationTensor::new(dims, data).expect("positive dims")
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthLayerInfo {
    pub file: PathBuf,
    pub family: Family,
    pub dims: [usize; 4],
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthReport {
    pub command: &'static str,
    pub seed: u64,
    pub layers: Vec<SynthLayerInfo>,
    pub activations: PathBuf,
}

/// Writes `layerNN.npy` (float32) and `activations.npy` into `--out`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthReport> {
    let dir = cfg.out.as_ref().context("synth needs --out")?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut layers = Vec::new();
    for layer in synthetic_model(&mut rng) {
        let file = dir.join(format!("{}.npy", layer.name));
        save_npy(&layer.weights, &file, NpyDtype::F32)
            .with_context(|| format!("writing {}", file.display()))?;
        layers.push(SynthLayerInfo {
            file,
            family: layer.family,
            dims: layer.weights.dims().as_array(),
        });
    }
    let (h, w) = cfg.input_hw;
    let x = synthetic_activations(&mut rng, (SYNTH_SHAPES[0].1, h, w));
    let activations = dir.join("activations.npy");
    fgq::io::write_npy(&activations, &[x.dims().0, h, w], x.data(), NpyDtype::F32)?;
    Ok(SynthReport {
        command: "synth",
        seed: cfg.seed,
        layers,
        activations,
    })
}
