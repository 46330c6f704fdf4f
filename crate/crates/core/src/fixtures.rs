//! Reference instances for tests, benchmarks and demos.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::matalg::{Matrix, Vector};
use crate::model::{DescriptorModel, MeasurementSequence, UncertaintyWeights};

/// A model with weights and a measurement record.
#[derive(Debug, Clone)]
pub struct Instance {
    pub model: DescriptorModel,
    pub weights: UncertaintyWeights,
    pub y: MeasurementSequence,
}

/// `x_1 = x_0 + f_0`, `y_k = x_k + g_k` with unit weights and `y = (0, 1)`.
pub fn scalar_chain() -> Instance {
    let one = Matrix::from_element(1, 1, 1.0);
    Instance {
        model: DescriptorModel::time_invariant(1, one.clone(), one.clone(), one.clone()),
        weights: UncertaintyWeights::constant(one.clone(), one.clone(), one),
        y: MeasurementSequence::new(vec![
            Vector::from_element(1, 0.0),
            Vector::from_element(1, 1.0),
        ]),
    }
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut impl Rng, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// `A A' + shift I` for Gaussian `A`.
pub fn random_spd(rng: &mut impl Rng, n: usize, shift: f64) -> Matrix {
    let a = gaussian_matrix(rng, n, n);
    &a * a.transpose() + Matrix::identity(n, n) * shift
}

/// Product of Gaussian `rows x rank` and `rank x cols` factors.
pub fn random_low_rank(rng: &mut impl Rng, rows: usize, cols: usize, rank: usize) -> Matrix {
    gaussian_matrix(rng, rows, rank) * gaussian_matrix(rng, rank, cols)
}

/// Random time-varying instance with `n` states, `steps` steps, between one
/// and `n` outputs per step, positive definite weights and Gaussian data.
/// Every fourth `F_k` is rank deficient.
pub fn random_instance(rng: &mut impl Rng, n: usize, steps: usize) -> Instance {
    let p = rng.random_range(1..=n);
    let f = (0..=steps)
        .map(|k| {
            if n > 1 && k % 4 == 3 {
                random_low_rank(rng, n, n, n - 1)
            } else {
                gaussian_matrix(rng, n, n) + Matrix::identity(n, n) * 2.0
            }
        })
        .collect();
    let c = (0..steps).map(|_| gaussian_matrix(rng, n, n)).collect();
    let h = (0..=steps).map(|_| gaussian_matrix(rng, p, n)).collect();
    let model = DescriptorModel::time_varying(f, c, h);
    let weights = UncertaintyWeights::new(
        random_spd(rng, n, 0.5),
        (0..steps).map(|_| random_spd(rng, n, 0.5)).collect(),
        (0..=steps).map(|_| random_spd(rng, p, 0.5)).collect(),
    );
    let y = MeasurementSequence::new((0..=steps).map(|_| gaussian_vector(rng, p)).collect());
    Instance { model, weights, y }
}

/// [`random_instance`] with the measurements rescaled so that the smallest
/// disturbance cost compatible with them is `target_cost`.
pub fn feasible_instance(rng: &mut impl Rng, n: usize, steps: usize, target_cost: f64) -> Instance {
    let mut inst = random_instance(rng, n, steps);
    let min_cost = crate::oracle::stacked_minimize(&inst.model, &inst.weights, &inst.y)
        .expect("random instance is valid")
        .min_cost;
    if min_cost > 0.0 {
        inst.y = inst.y.scaled((target_cost / min_cost).sqrt());
    }
    inst
}
