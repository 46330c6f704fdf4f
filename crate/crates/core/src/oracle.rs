//! Brute-force reference for the discrete estimator.
//!
//! Builds the full quadratic
//!
//! ```text
//! J(x_0..x_N) = (S F_0 x_0, F_0 x_0)
//!             + sum_i (S_i (F_{i+1} x_{i+1} - C_i x_i), .)
//!             + sum_i (R_i (y_i - H_i x_i), .)
//! ```
//!
//! over the stacked trajectory, minimizes it with a dense pseudoinverse and
//! eliminates `x_0..x_{N-1}` by a Schur complement to obtain the marginal
//! form in `x_N`. Nothing here touches the recursive estimator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::continuous::{ContinuousModel, Grid, TimeFunction};
use crate::discrete::Ellipsoid;
use crate::matalg::{self, pinv, quad_form, Matrix, Vector};
use crate::model::{
    disturbance_cost, residuals_of, validate, validate_measurements, DescriptorModel,
    MeasurementSequence, Trajectory, UncertaintyWeights,
};
use crate::{Error, Result};

/// Relative tolerance of the range test on the marginal form.
const RANGE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct StackedSolution {
    pub n: usize,
    /// `x_0..x_N` concatenated (minimum-norm minimizer).
    pub x_stack: Vector,
    pub min_cost: f64,
    pub marginal_q: Matrix,
    /// Linear term `r` of the marginal form `(Q x, x) - 2 (r, x) + alpha`.
    pub marginal_r: Vector,
    pub marginal_center: Vector,
    pub marginal_alpha: f64,
}

impl StackedSolution {
    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            x: self
                .x_stack
                .as_slice()
                .chunks(self.n.max(1))
                .take(self.x_stack.len() / self.n.max(1))
                .map(Vector::from_row_slice)
                .collect(),
        }
    }

    /// `(Q x, x) - 2 (r, x) + alpha` for a terminal state `x`.
    pub fn marginal_form(&self, x: &Vector) -> f64 {
        quad_form(&self.marginal_q, x) - 2.0 * self.marginal_r.dot(x) + self.marginal_alpha
    }
}

/// Closed interval `[lo, hi]`, possibly unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalInterval {
    pub lo: f64,
    pub hi: f64,
}

impl DirectionalInterval {
    pub fn center(&self) -> f64 {
        if self.lo.is_finite() && self.hi.is_finite() {
            0.5 * (self.lo + self.hi)
        } else {
            0.0
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

/// Dense normal equations `J(X) = (A X, X) - 2 (b, X) + c`.
struct Quadratic {
    a: Matrix,
    b: Vector,
    c: f64,
}

impl Quadratic {
    fn new(dim: usize) -> Self {
        Quadratic {
            a: Matrix::zeros(dim, dim),
            b: Vector::zeros(dim),
            c: 0.0,
        }
    }

    /// Adds `(W (sum_j B_j x_j - v), .)` where `blocks` lists `(j, B_j)`.
    fn add_term(&mut self, n: usize, blocks: &[(usize, &Matrix)], w: &Matrix, v: Option<&Vector>) {
        for &(i, bi) in blocks {
            let bi_w = bi.transpose() * w;
            for &(j, bj) in blocks {
                let mut dst = self.a.view_mut((i * n, j * n), (n, n));
                dst += &bi_w * bj;
            }
            if let Some(v) = v {
                let mut dst = self.b.rows_mut(i * n, n);
                dst += bi.transpose() * (w * v);
            }
        }
        if let Some(v) = v {
            self.c += quad_form(w, v);
        }
    }
}

fn ensure_valid(
    model: &DescriptorModel,
    w: &UncertaintyWeights,
    y: &MeasurementSequence,
) -> Result<()> {
    let mut diags = validate(model, w);
    diags.extend(validate_measurements(model, y));
    if diags.is_empty() {
        Ok(())
    } else {
        Err(Error::Contract(diags.join("; ")))
    }
}

/// `J` evaluated on a trajectory.
pub fn stacked_cost(
    model: &DescriptorModel,
    w: &UncertaintyWeights,
    y: &MeasurementSequence,
    x: &Trajectory,
) -> Result<f64> {
    disturbance_cost(w, &residuals_of(model, x, y)?)
}

pub fn stacked_minimize(
    model: &DescriptorModel,
    w: &UncertaintyWeights,
    y: &MeasurementSequence,
) -> Result<StackedSolution> {
    ensure_valid(model, w, y)?;
    let n = model.n;
    let horizon = model.steps;
    let dim = n * (horizon + 1);
    let mut quad = Quadratic::new(dim);

    quad.add_term(n, &[(0, model.f(0))], &w.s, None);
    for i in 0..horizon {
        let minus_c = -model.c(i);
        let s_i = w.s_at(i).expect("validated");
        quad.add_term(n, &[(i + 1, model.f(i + 1)), (i, &minus_c)], s_i, None);
    }
    for i in 0..=horizon {
        let r_i = w.r_at(i).expect("validated");
        quad.add_term(n, &[(i, model.h(i))], r_i, Some(&y.y[i]));
    }

    let a = matalg::symmetrize(&quad.a);
    let x_stack = pinv(&a, 0.0)? * &quad.b;
    let solution = StackedSolution {
        n,
        x_stack,
        min_cost: 0.0,
        marginal_q: Matrix::zeros(0, 0),
        marginal_r: Vector::zeros(0),
        marginal_center: Vector::zeros(0),
        marginal_alpha: 0.0,
    };
    let min_cost = stacked_cost(model, w, y, &solution.trajectory())?;

    let head = n * horizon;
    let (q_m, r_m, alpha_m) = if head == 0 {
        (a.clone(), quad.b.clone(), quad.c)
    } else {
        let a_uu = a.view((0, 0), (head, head)).into_owned();
        let a_un = a.view((0, head), (head, n)).into_owned();
        let a_nn = a.view((head, head), (n, n)).into_owned();
        let b_u = quad.b.rows(0, head).into_owned();
        let b_n = quad.b.rows(head, n).into_owned();
        let uu_pinv = pinv(&a_uu, 0.0)?;
        let q_m = matalg::symmetrize(&(a_nn - a_un.transpose() * &uu_pinv * &a_un));
        let r_m = b_n - a_un.transpose() * (&uu_pinv * &b_u);
        let alpha_m = quad.c - quad_form(&uu_pinv, &b_u);
        (q_m, r_m, alpha_m)
    };
    let center = pinv(&q_m, 0.0)? * &r_m;

    Ok(StackedSolution {
        min_cost,
        marginal_q: q_m,
        marginal_r: r_m,
        marginal_center: center,
        marginal_alpha: alpha_m,
        ..solution
    })
}

/// `{(l, x_N) : marginal form <= 1}`; unbounded when `l` is outside the
/// range of the marginal form.
pub fn direction_interval(stacked: &StackedSolution, ell: &Vector) -> Result<DirectionalInterval> {
    if ell.len() != stacked.n {
        return Err(Error::dim(format!(
            "direction has {} components, n = {}",
            ell.len(),
            stacked.n
        )));
    }
    let q_pinv = pinv(&stacked.marginal_q, 0.0)?;
    let in_range = (&q_pinv * (&stacked.marginal_q * ell) - ell).norm() <= RANGE_TOL * ell.norm();
    if !in_range {
        return Ok(DirectionalInterval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        });
    }
    let center = ell.dot(&stacked.marginal_center);
    let half = ((1.0 - stacked.min_cost).max(0.0) * quad_form(&q_pinv, ell).max(0.0)).sqrt();
    Ok(DirectionalInterval {
        lo: center - half,
        hi: center + half,
    })
}

/// Largest distance from the center over `samples` boundary points.
///
/// Unit vectors `u` are mapped to `center + s Q^{-1/2} u` with
/// `s^2 = 1 - alpha + (Q center, center)`, so the result is a lower bound on
/// the Chebyshev radius. Deterministic: the sampler is seeded with `seed`.
pub fn sampled_radius_seeded(ellipsoid: &Ellipsoid, samples: usize, seed: u64) -> Result<f64> {
    if samples < 1000 {
        return Err(Error::Contract(format!(
            "sampled_radius needs >= 1000 samples, got {samples}"
        )));
    }
    let n = ellipsoid.q.nrows();
    let (eigs, vecs) = matalg::eig_sym(&ellipsoid.q)?;
    if eigs.last().is_none_or(|&l| l <= 0.0) {
        return Err(Error::Contract(
            "sampled_radius needs a positive definite form".into(),
        ));
    }
    // A unit direction w in the eigenbasis maps to a boundary point at
    // distance sqrt(bracket / lambda_min) * sqrt(sum w_i^2 lambda_min / lambda_i).
    let lambda_min = *eigs.last().unwrap();
    let base = ellipsoid.bracket().max(0.0).sqrt() / lambda_min.sqrt();
    let ratios: Vec<f64> = eigs.iter().map(|l| lambda_min / l).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0_f64;
    for _ in 0..samples {
        let u = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = vecs.transpose() * u;
        let norm2 = w.norm_squared();
        if norm2 == 0.0 {
            continue;
        }
        let stretch: f64 = w
            .iter()
            .zip(&ratios)
            .map(|(wi, r)| wi * wi * r)
            .sum::<f64>()
            / norm2;
        best = best.max(base * stretch.sqrt());
    }
    Ok(best)
}

pub fn sampled_radius(ellipsoid: &Ellipsoid, samples: usize) -> Result<f64> {
    sampled_radius_seeded(ellipsoid, samples, 0)
}

/// Discrete model whose stacked cost is the midpoint/trapezoid
/// discretization of `int |f|^2 + |y - x|^2 dt` for `x' = C x + f`,
/// `x(t0) = 0` (the case `F = I` with unit weights).
///
/// State `k` of the result is `x(t_{k+1})`, `k = 0..K-1`:
///
/// ```text
/// (E - h C_{1/2} / 2) x_1 = h f_0,                               S = E / h
/// (E - h C_{j+1/2} / 2) x_{j+1} - (E + h C_{j+1/2} / 2) x_j = h f_j,  S_j = E / h
/// y_j = x_j + g_j,    R_j = h E  (h/2 E at T)
/// ```
pub fn discretize_smoother(
    model: &ContinuousModel,
    y: &TimeFunction<Vector>,
    grid: &Grid,
) -> Result<(DescriptorModel, UncertaintyWeights, MeasurementSequence)> {
    let n = model.state_dim();
    if model.f != Matrix::identity(n, n) {
        return Err(Error::Contract("discretize_smoother needs F = I".into()));
    }
    let h = (grid.t_end - grid.t0) / grid.k as f64;
    let eye = Matrix::identity(n, n);
    let c_mid = |j: usize| model.c.at(grid.midpoint(j));
    let f = (0..grid.k).map(|j| &eye - c_mid(j) * (h / 2.0)).collect();
    let c = (1..grid.k).map(|j| &eye + c_mid(j) * (h / 2.0)).collect();
    let hs = (0..grid.k).map(|_| eye.clone()).collect();
    let discrete = DescriptorModel::time_varying(f, c, hs);
    let s = &eye / h;
    let r_seq = (1..=grid.k)
        .map(|j| {
            if j == grid.k {
                &eye * (h / 2.0)
            } else {
                &eye * h
            }
        })
        .collect();
    let weights = UncertaintyWeights::new(s.clone(), vec![s], r_seq);
    let ys = MeasurementSequence::new((1..=grid.k).map(|j| y.at(grid.node(j))).collect());
    Ok((discrete, weights, ys))
}
