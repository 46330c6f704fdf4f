//! Signal extraction demo: a sampled sinusoid observed through bounded noise.
//!
//! The signal is the first coordinate of the rotation `x_{k+1} = A x_k + f_k`
//! with `A` a rotation by `2 pi / 16`, measured as `y_k = x_k[0] + g_k`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use descest::model::{disturbance_cost, simulate};
use descest::{
    io, DescriptorModel, DisturbanceRealization, Matrix, MeasurementSequence, MinimaxFilter,
    Trajectory, UncertaintyWeights, Vector,
};

const PERIOD: f64 = 16.0;
/// Nominal amplitudes of the process and measurement noise.
const PROCESS_NOISE: f64 = 0.02;
const MEASUREMENT_NOISE: f64 = 0.3;
/// Upper bounds on the cost of each disturbance group.
const SHARE_PROCESS: f64 = 0.2;
const SHARE_MEASUREMENT: f64 = 0.45;

pub struct Demo {
    pub seed: u64,
    pub model: DescriptorModel,
    pub weights: UncertaintyWeights,
    pub disturbance: DisturbanceRealization,
    pub truth: Trajectory,
    pub y: MeasurementSequence,
    pub cost: f64,
    /// Filtered estimates of the signal, one per step.
    pub estimates: Vec<f64>,
    pub mse_raw: f64,
    pub mse_filtered: f64,
}

#[derive(Serialize)]
pub struct DemoSummary {
    pub seed: u64,
    pub steps: usize,
    pub disturbance_cost: f64,
    pub mse_raw: f64,
    pub mse_filtered: f64,
    pub files: Vec<String>,
}

fn uniform(rng: &mut ChaCha8Rng, len: usize, amplitude: f64) -> Vector {
    Vector::from_fn(len, |_, _| rng.random_range(-amplitude..=amplitude))
}

fn rescale_group(group: &mut [Vector], cost: f64, share: f64) {
    if cost > share {
        let f = (share / cost).sqrt();
        group.iter_mut().for_each(|v| *v *= f);
    }
}

/// Generates the model, a disturbance of cost at most 1, the trajectory and
/// measurements, and runs the filter over the record. Deterministic in `seed`.
pub fn demo_generate(seed: u64, steps: usize) -> anyhow::Result<Demo> {
    if steps < 8 {
        bail!("demo needs at least 8 steps, got {steps}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = 2.0 * std::f64::consts::PI / PERIOD;
    let rot = Matrix::from_row_slice(2, 2, &[w.cos(), -w.sin(), w.sin(), w.cos()]);
    let h = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let model = DescriptorModel::time_invariant(steps, Matrix::identity(2, 2), rot, h);

    // A unit-amplitude initial state costs 0.01; the noise weights make the
    // nominal noise levels cost about one budget share each.
    let s_proc = 1.0 / (steps as f64 * PROCESS_NOISE * PROCESS_NOISE);
    let s_meas = 1.0 / ((steps + 1) as f64 * MEASUREMENT_NOISE * MEASUREMENT_NOISE);
    let weights = UncertaintyWeights::constant(
        Matrix::identity(2, 2) * 0.01,
        Matrix::identity(2, 2) * (SHARE_PROCESS * s_proc),
        Matrix::identity(1, 1) * (SHARE_MEASUREMENT * s_meas),
    );

    let phase = rng.random_range(0.0..2.0 * std::f64::consts::PI);
    let mut d = DisturbanceRealization::zeros(&model);
    d.q = Vector::from_row_slice(&[phase.cos(), phase.sin()]);
    d.f = (0..steps)
        .map(|_| uniform(&mut rng, 2, PROCESS_NOISE))
        .collect();
    d.g = (0..=steps)
        .map(|_| uniform(&mut rng, 1, MEASUREMENT_NOISE))
        .collect();

    let part = |d: &DisturbanceRealization, keep: usize| {
        let mut only = DisturbanceRealization::zeros(&model);
        match keep {
            1 => only.f = d.f.clone(),
            _ => only.g = d.g.clone(),
        }
        disturbance_cost(&weights, &only)
    };
    let cost_f = part(&d, 1)?;
    rescale_group(&mut d.f, cost_f, SHARE_PROCESS);
    let cost_g = part(&d, 2)?;
    rescale_group(&mut d.g, cost_g, SHARE_MEASUREMENT);
    let cost = disturbance_cost(&weights, &d)?;

    let (truth, y) = simulate(&model, &d, &Vector::zeros(2))?;
    let states = MinimaxFilter::new(&model, &weights)?.run_all(&y)?;
    let e1 = Vector::from_row_slice(&[1.0, 0.0]);
    let estimates = states
        .iter()
        .map(|s| s.estimate(&e1).map(|e| e.value))
        .collect::<descest::Result<Vec<_>>>()?;
    let len = (steps + 1) as f64;
    let signal = |k: usize| truth.x[k][0];
    let mse_raw = (0..=steps)
        .map(|k| (y.y[k][0] - signal(k)).powi(2))
        .sum::<f64>()
        / len;
    let mse_filtered = (0..=steps)
        .map(|k| (estimates[k] - signal(k)).powi(2))
        .sum::<f64>()
        / len;

    Ok(Demo {
        seed,
        model,
        weights,
        disturbance: d,
        truth,
        y,
        cost,
        estimates,
        mse_raw,
        mse_filtered,
    })
}

impl Demo {
    /// Writes `demo_model.json`, `demo_measurements.csv` and `demo_truth.csv`
    /// into `dir` and returns their paths.
    pub fn write(&self, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let files = [
            (
                "demo_model.json",
                io::discrete_model_to_json(&self.model, &self.weights)? + "\n",
            ),
            ("demo_measurements.csv", io::measurements_to_csv(&self.y)?),
            (
                "demo_truth.csv",
                io::grid_csv(
                    "k",
                    "x",
                    (0..self.truth.x.len()).map(|k| k.to_string()),
                    &self.truth.x,
                )?,
            ),
        ];
        let mut out = Vec::new();
        for (name, text) in files {
            let path = dir.join(name);
            crate::write_atomic(&path, &text)?;
            out.push(path);
        }
        Ok(out)
    }

    pub fn summary(&self, files: Vec<PathBuf>) -> DemoSummary {
        DemoSummary {
            seed: self.seed,
            steps: self.model.steps,
            disturbance_cost: self.cost,
            mse_raw: self.mse_raw,
            mse_filtered: self.mse_filtered,
            files: files.iter().map(|p| p.display().to_string()).collect(),
        }
    }
}
