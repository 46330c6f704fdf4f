//! Recursive minimax a posteriori estimation for discrete descriptor models.
//!
//! After `N` steps the state holds `(Q_N, r_N, alpha_N)` such that the set of
//! terminal states compatible with `y_0..y_N` and the disturbance budget is
//!
//! ```text
//! P_N = { x : (Q_N x, x) - 2 (r_N, x) + alpha_N <= 1 }.
//! ```
//!
//! The recursion is
//!
//! ```text
//! Q_0 = F_0' S F_0 + H_0' R_0 H_0,     r_0 = H_0' R_0 y_0,   alpha_0 = (R_0 y_0, y_0)
//! P_k = Q_k + C_k' S_k C_k
//! Q_k = H_k' R_k H_k + F_k' [S_{k-1} - S_{k-1} C_{k-1} P_{k-1}^+ C_{k-1}' S_{k-1}] F_k
//! r_k = F_k' S_{k-1} C_{k-1} P_{k-1}^+ r_{k-1} + H_k' R_k y_k
//! alpha_k = alpha_{k-1} + (R_k y_k, y_k) - (P_{k-1}^+ r_{k-1}, r_{k-1})
//! ```
//!
//! A direction `l` is observable iff `Q_N^+ Q_N l = l`; the estimate of
//! `(l, x_N)` is then `(l, Q_N^+ r_N)` with guaranteed error
//! `[1 - alpha_N + (Q_N^+ r_N, r_N)]^{1/2} (Q_N^+ l, l)^{1/2}`.
//!
//! Naming note: this error is the a posteriori error of the discrete
//! problem even though it is written `sigma(l, N)` like the continuous a
//! priori error.

use crate::matalg::{self, pinv, quad_form, Matrix, Vector};
use crate::model::{validate, DescriptorModel, MeasurementSequence, UncertaintyWeights};
use crate::{Error, Result};

/// Numerical tolerances shared by every quantity of one estimation chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative singular-value threshold for `+` and ranks; `0` selects
    /// `max(m, n) * eps`.
    pub rank_tol: f64,
    /// Observability test `|Q^+ Q l - l| <= obs_tol |l|`.
    pub obs_tol: f64,
    /// Brackets `1 - alpha + (Q^+ r, r)` in `[-clamp, 0)` are rounded to 0.
    pub clamp: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank_tol: 0.0,
            obs_tol: 1e-8,
            clamp: 1e-9,
        }
    }
}

impl Tolerances {
    fn clamp_bracket(&self, bracket: f64) -> Result<f64> {
        if bracket >= 0.0 {
            Ok(bracket)
        } else if bracket >= -self.clamp {
            Ok(0.0)
        } else {
            Err(Error::EmptyPosteriorSet(bracket))
        }
    }
}

/// `(Q_k, P_k, r_k, alpha_k)` after measurement `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub k: usize,
    pub steps: usize,
    pub n: usize,
    pub q: Matrix,
    /// `Q_k + C_k' S_k C_k`; present while `k < N`.
    pub p: Option<Matrix>,
    pub r: Vector,
    pub alpha: f64,
    pub tol: Tolerances,
}

/// Directional estimate of `(l, x_N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimaxEstimate {
    pub value: f64,
    /// Guaranteed error; `+inf` for unobservable directions.
    pub error: f64,
    pub observable: bool,
}

/// `{ x : (Q x, x) - 2 (Q center, x) + alpha <= 1 }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub q: Matrix,
    pub center: Vector,
    pub alpha: f64,
    /// Chebyshev radius; `+inf` unless `Q` is positive definite.
    pub radius: f64,
}

impl Ellipsoid {
    /// Left-hand side of the membership predicate.
    pub fn form(&self, x: &Vector) -> f64 {
        quad_form(&self.q, x) - 2.0 * (&self.q * &self.center).dot(x) + self.alpha
    }

    /// `1 - form(x)`; nonnegative exactly on the set.
    pub fn slack(&self, x: &Vector) -> f64 {
        1.0 - self.form(x)
    }

    pub fn contains(&self, x: &Vector) -> bool {
        self.form(x) <= 1.0
    }

    /// `1 - alpha + (Q center, center)`, the squared size of the set in the
    /// metric of `Q`.
    pub fn bracket(&self) -> f64 {
        1.0 - self.alpha + quad_form(&self.q, &self.center)
    }
}

/// Runs the recursion for one model and weight set.
#[derive(Debug, Clone)]
pub struct MinimaxFilter<'a> {
    model: &'a DescriptorModel,
    weights: &'a UncertaintyWeights,
    tol: Tolerances,
}

impl<'a> MinimaxFilter<'a> {
    /// Validates the model and weights up front.
    pub fn new(model: &'a DescriptorModel, weights: &'a UncertaintyWeights) -> Result<Self> {
        let diags = validate(model, weights);
        if !diags.is_empty() {
            return Err(Error::Contract(diags.join("; ")));
        }
        Ok(MinimaxFilter {
            model,
            weights,
            tol: Tolerances::default(),
        })
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn model(&self) -> &DescriptorModel {
        self.model
    }

    fn check_y(&self, k: usize, y: &Vector) -> Result<()> {
        let p = self.model.rows_h(k);
        if y.len() != p {
            return Err(Error::dim(format!(
                "y_{k} has {} components, H_{k} has {p} rows",
                y.len()
            )));
        }
        Ok(())
    }

    fn weight_s(&self, k: usize) -> &Matrix {
        self.weights.s_at(k).expect("validated")
    }

    fn weight_r(&self, k: usize) -> &Matrix {
        self.weights.r_at(k).expect("validated")
    }

    fn p_of(&self, k: usize, q: &Matrix) -> Option<Matrix> {
        (k < self.model.steps).then(|| {
            let c = self.model.c(k);
            matalg::symmetrize(&(q + c.transpose() * self.weight_s(k) * c))
        })
    }

    pub fn init(&self, y0: &Vector) -> Result<EstimatorState> {
        self.check_y(0, y0)?;
        let (f, h, r0) = (self.model.f(0), self.model.h(0), self.weight_r(0));
        let q = matalg::symmetrize(&(f.transpose() * &self.weights.s * f + h.transpose() * r0 * h));
        let r = h.transpose() * (r0 * y0);
        let alpha = quad_form(r0, y0);
        Ok(EstimatorState {
            k: 0,
            steps: self.model.steps,
            n: self.model.n,
            p: self.p_of(0, &q),
            q,
            r,
            alpha,
            tol: self.tol,
        })
    }

    /// Advances `state` from step `k` to `k + 1` with measurement `y_{k+1}`.
    pub fn step(&self, state: &EstimatorState, y_next: &Vector) -> Result<EstimatorState> {
        let k = state.k;
        let p = state
            .p
            .as_ref()
            .filter(|_| k < self.model.steps)
            .ok_or_else(|| {
                Error::Contract(format!(
                    "step past the horizon: k={k}, N={}",
                    self.model.steps
                ))
            })?;
        if state.n != self.model.n {
            return Err(Error::dim(
                "state and model have different state dimensions",
            ));
        }
        let next = k + 1;
        self.check_y(next, y_next)?;

        let p_pinv = pinv(p, self.tol.rank_tol)?;
        let s = self.weight_s(k);
        let sc = s * self.model.c(k);
        let gain = &sc * &p_pinv;
        let inner = s - &gain * sc.transpose();
        let (f, h, r_w) = (self.model.f(next), self.model.h(next), self.weight_r(next));

        let q = matalg::symmetrize(&(h.transpose() * r_w * h + f.transpose() * inner * f));
        let r = f.transpose() * (&gain * &state.r) + h.transpose() * (r_w * y_next);
        let alpha = state.alpha + quad_form(r_w, y_next) - quad_form(&p_pinv, &state.r);
        Ok(EstimatorState {
            k: next,
            steps: state.steps,
            n: state.n,
            p: self.p_of(next, &q),
            q,
            r,
            alpha,
            tol: state.tol,
        })
    }

    /// Processes the whole record `y_0..y_N` and returns the final state.
    pub fn run(&self, y: &MeasurementSequence) -> Result<EstimatorState> {
        Ok(self.run_all(y)?.pop().expect("at least one state"))
    }

    /// Every intermediate state `k = 0..=N`.
    pub fn run_all(&self, y: &MeasurementSequence) -> Result<Vec<EstimatorState>> {
        if y.len() != self.model.steps + 1 {
            return Err(Error::dim(format!(
                "horizon N={} needs {} measurements, got {}",
                self.model.steps,
                self.model.steps + 1,
                y.len()
            )));
        }
        let mut states = Vec::with_capacity(y.len());
        states.push(self.init(&y.y[0])?);
        for yk in &y.y[1..] {
            let next = self.step(states.last().unwrap(), yk)?;
            states.push(next);
        }
        Ok(states)
    }
}

impl EstimatorState {
    fn q_pinv(&self) -> Result<Matrix> {
        pinv(&self.q, self.tol.rank_tol)
    }

    /// `Q^+ r`, the center of the compatible set.
    pub fn center(&self) -> Result<Vector> {
        Ok(self.q_pinv()? * &self.r)
    }

    pub fn estimate(&self, ell: &Vector) -> Result<MinimaxEstimate> {
        if ell.len() != self.n {
            return Err(Error::dim(format!(
                "direction has {} components, n = {}",
                ell.len(),
                self.n
            )));
        }
        let q_pinv = self.q_pinv()?;
        let projected = &q_pinv * (&self.q * ell);
        let observable = (projected - ell).norm() <= self.tol.obs_tol * ell.norm();
        if !observable {
            return Ok(MinimaxEstimate {
                value: 0.0,
                error: f64::INFINITY,
                observable,
            });
        }
        let center = &q_pinv * &self.r;
        let bracket = self
            .tol
            .clamp_bracket(1.0 - self.alpha + center.dot(&self.r))?;
        let spread = quad_form(&q_pinv, ell).max(0.0);
        Ok(MinimaxEstimate {
            value: ell.dot(&center),
            error: (bracket * spread).sqrt(),
            observable,
        })
    }

    /// `rank Q`, the number of independent observable directions.
    pub fn noncausality_index(&self) -> Result<usize> {
        matalg::rank(&self.q, self.tol.rank_tol)
    }

    /// Whether every direction of the state is observable at this step.
    pub fn is_causal(&self) -> Result<bool> {
        Ok(self.noncausality_index()? == self.n)
    }

    pub fn posterior_ellipsoid(&self) -> Result<Ellipsoid> {
        let center = self.center()?;
        let mut ellipsoid = Ellipsoid {
            q: self.q.clone(),
            center,
            alpha: self.alpha,
            radius: f64::INFINITY,
        };
        if self.n > 0 && self.is_causal()? {
            let bracket = self.tol.clamp_bracket(ellipsoid.bracket())?;
            let (eigs, _) = matalg::eig_sym(&self.q)?;
            let lambda_min = *eigs.last().unwrap();
            if lambda_min > 0.0 {
                ellipsoid.radius = bracket.sqrt() / lambda_min.sqrt();
            }
        } else if self.n == 0 {
            ellipsoid.radius = 0.0;
        }
        Ok(ellipsoid)
    }
}
