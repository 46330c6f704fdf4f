//! Continuous-time descriptor models `d/dt F x(t) = C(t) x(t) + f(t)`.
//!
//! Both estimators reduce to linear two-point boundary value problems that
//! are discretized on a uniform grid and assembled into one band system:
//!
//! - [`apriori_solve`]: the adjoint system
//!   ```text
//!   d/dt F'z = -C'z + H'Q_2 H p - l,      F'z(T) = 0,
//!   d/dt F p =  C p + Q_1^{-1} z,          F p(t_0) = Q_0^{-1}(F F^+ z(t_0) + d),  F'd = 0,
//!   ```
//!   giving the a priori estimator `u(t) = Q_2 H p` with squared error
//!   `int (l, p) dt`;
//! - [`aposteriori_solve`]: with unit weights and `y = x + eta`, the
//!   minimal-cost trajectory through the blocks of `L'C(t)R'` (see
//!   [`BlockDecomposition`]), where `F = L Lambda R`.
//!
//! Differential rows use the implicit midpoint rule. Rows that are purely
//! algebraic in the SVD frame of `F` are collocated at the grid nodes, which
//! keeps the discrete system square for singular `F`.

use std::ops::{Add, Mul};

use crate::matalg::{self, inv_spd, svd_factor, BandMatrix, Matrix, SvdFactorization, Vector};
use crate::{Error, Result};

/// Uniform grid `t_j = t0 + j h`, `j = 0..=k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub t0: f64,
    pub t_end: f64,
    pub k: usize,
}

impl Grid {
    pub fn new(t0: f64, t_end: f64, k: usize) -> Result<Self> {
        if !(t0.is_finite() && t_end.is_finite() && t0 < t_end) {
            return Err(Error::Contract(format!(
                "grid needs t0 < T, got [{t0}, {t_end}]"
            )));
        }
        if k < 2 {
            return Err(Error::Contract(format!(
                "grid needs at least 2 intervals, got {k}"
            )));
        }
        Ok(Grid { t0, t_end, k })
    }

    pub fn step(&self) -> f64 {
        (self.t_end - self.t0) / self.k as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.k {
            self.t_end
        } else {
            self.t0 + j as f64 * self.step()
        }
    }

    pub fn midpoint(&self, j: usize) -> f64 {
        self.t0 + (j as f64 + 0.5) * self.step()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.k).map(|j| self.node(j))
    }

    pub fn len(&self) -> usize {
        self.k + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Trapezoid rule for a function given by its node values.
    pub fn trapezoid(&self, values: impl Iterator<Item = f64>) -> f64 {
        let mut sum = 0.0;
        for (j, v) in values.enumerate() {
            let w = if j == 0 || j == self.k { 0.5 } else { 1.0 };
            sum += w * v;
        }
        sum * self.step()
    }
}

/// Function of time given by samples on a uniform grid over `[t0, t_end]`
/// and evaluated by linear interpolation. A single sample is a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFunction<T> {
    pub t0: f64,
    pub t_end: f64,
    pub samples: Vec<T>,
}

impl<T> TimeFunction<T>
where
    T: Clone + Add<Output = T> + Mul<f64, Output = T>,
{
    pub fn constant(value: T) -> Self {
        TimeFunction {
            t0: 0.0,
            t_end: 1.0,
            samples: vec![value],
        }
    }

    pub fn sampled(t0: f64, t_end: f64, samples: Vec<T>) -> Self {
        TimeFunction { t0, t_end, samples }
    }

    /// Samples `f` at the nodes of `grid`.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> T) -> Self {
        TimeFunction {
            t0: grid.t0,
            t_end: grid.t_end,
            samples: grid.nodes().map(f).collect(),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.samples.len() == 1
    }

    pub fn at(&self, t: f64) -> T {
        let len = self.samples.len();
        if len == 1 {
            return self.samples[0].clone();
        }
        let intervals = (len - 1) as f64;
        let s = ((t - self.t0) / (self.t_end - self.t0) * intervals).clamp(0.0, intervals);
        let i = (s.floor() as usize).min(len - 2);
        let w = s - i as f64;
        if w == 0.0 {
            self.samples[i].clone()
        } else if w == 1.0 {
            self.samples[i + 1].clone()
        } else {
            self.samples[i].clone() * (1.0 - w) + self.samples[i + 1].clone() * w
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.samples.iter()
    }
}

/// Continuous descriptor model with the weights of the uncertainty set
/// `(Q_0 f_0, f_0) + int (Q_1 f, f) dt <= 1` and the noise weight `Q_2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel {
    pub f: Matrix,
    pub c: TimeFunction<Matrix>,
    pub h: TimeFunction<Matrix>,
    pub q0: Matrix,
    pub q1: TimeFunction<Matrix>,
    pub q2: TimeFunction<Matrix>,
    /// Direction `l(t)` of the functional `int (l, x) dt`.
    pub ell: TimeFunction<Vector>,
    pub t0: f64,
    pub t_end: f64,
    /// Number of intervals of the sampling grid of the time functions.
    pub k: usize,
}

impl ContinuousModel {
    /// Time-invariant model with unit weights, `H = I` and `l = 0`.
    pub fn unit(f: Matrix, c: Matrix, t0: f64, t_end: f64, k: usize) -> Self {
        let (m, n) = f.shape();
        ContinuousModel {
            c: TimeFunction::constant(c),
            h: TimeFunction::constant(Matrix::identity(n, n)),
            q0: Matrix::identity(m, m),
            q1: TimeFunction::constant(Matrix::identity(m, m)),
            q2: TimeFunction::constant(Matrix::identity(n, n)),
            ell: TimeFunction::constant(Vector::zeros(n)),
            f,
            t0,
            t_end,
            k,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.t0, self.t_end, self.k)
    }

    pub fn state_dim(&self) -> usize {
        self.f.ncols()
    }

    pub fn eq_dim(&self) -> usize {
        self.f.nrows()
    }

    fn obs_dim(&self) -> usize {
        self.h.samples.first().map_or(0, |h| h.nrows())
    }

    /// Shape and definiteness diagnostics; empty when the model is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (m, n) = self.f.shape();
        let p = self.obs_dim();
        if !(self.t0.is_finite() && self.t_end.is_finite() && self.t0 < self.t_end) {
            out.push(format!(
                "time interval: need t0 < T, got [{}, {}]",
                self.t0, self.t_end
            ));
        }
        if self.k < 2 {
            out.push(format!("K: need at least 2 intervals, got {}", self.k));
        }
        if self.f.iter().any(|v| !v.is_finite()) {
            out.push("F: non-finite entry".into());
        }
        let lens_ok = |name: &str, len: usize, out: &mut Vec<String>| {
            if len != 1 && len != self.k + 1 {
                out.push(format!(
                    "{name}: expected 1 or {} samples, found {len}",
                    self.k + 1
                ));
            }
        };
        lens_ok("C", self.c.samples.len(), &mut out);
        lens_ok("H", self.h.samples.len(), &mut out);
        lens_ok("Q1", self.q1.samples.len(), &mut out);
        lens_ok("Q2", self.q2.samples.len(), &mut out);
        lens_ok("ell", self.ell.samples.len(), &mut out);
        for (j, c) in self.c.iter().enumerate() {
            if c.shape() != (m, n) {
                out.push(format!(
                    "C[{j}]: is {}x{}, expected {m}x{n}",
                    c.nrows(),
                    c.ncols()
                ));
            }
        }
        for (j, h) in self.h.iter().enumerate() {
            if h.shape() != (p, n) {
                out.push(format!(
                    "H[{j}]: is {}x{}, expected {p}x{n}",
                    h.nrows(),
                    h.ncols()
                ));
            }
        }
        for (j, l) in self.ell.iter().enumerate() {
            if l.len() != n {
                out.push(format!(
                    "ell[{j}]: has {} components, expected {n}",
                    l.len()
                ));
            }
        }
        let mut pd = |name: String, w: &Matrix, dim: usize| {
            if w.shape() != (dim, dim) {
                out.push(format!(
                    "{name}: is {}x{}, expected {dim}x{dim}",
                    w.nrows(),
                    w.ncols()
                ));
            } else if dim > 0 && inv_spd(w).is_err() {
                out.push(format!("{name}: not positive definite"));
            }
        };
        pd("Q0".into(), &self.q0, m);
        for (j, w) in self.q1.iter().enumerate() {
            pd(format!("Q1[{j}]"), w, m);
        }
        for (j, w) in self.q2.iter().enumerate() {
            pd(format!("Q2[{j}]"), w, p);
        }
        out
    }

    fn ensure_valid(&self) -> Result<()> {
        let diags = self.validate();
        if diags.is_empty() {
            Ok(())
        } else {
            Err(Error::Contract(diags.join("; ")))
        }
    }
}

/// The four blocks of `L' C R'` split at `rank F`.
#[derive(Debug, Clone, PartialEq)]
pub struct CBlocks {
    pub c1: Matrix,
    pub c2: Matrix,
    pub c3: Matrix,
    pub c4: Matrix,
}

impl CBlocks {
    fn split(svd: &SvdFactorization, c: &Matrix) -> Self {
        let rotated = svd.left.transpose() * c * svd.right.transpose();
        let (m, n) = rotated.shape();
        let r = svd.rank;
        CBlocks {
            c1: rotated.view((0, 0), (r, r)).into_owned(),
            c2: rotated.view((0, r), (r, n - r)).into_owned(),
            c3: rotated.view((r, 0), (m - r, r)).into_owned(),
            c4: rotated.view((r, r), (m - r, n - r)).into_owned(),
        }
    }

    fn assembled(&self) -> Matrix {
        let r = self.c1.nrows();
        let m = r + self.c3.nrows();
        let n = r + self.c2.ncols();
        let mut out = Matrix::zeros(m, n);
        out.view_mut((0, 0), (r, r)).copy_from(&self.c1);
        out.view_mut((0, r), (r, n - r)).copy_from(&self.c2);
        out.view_mut((r, 0), (m - r, r)).copy_from(&self.c3);
        out.view_mut((r, r), (m - r, n - r)).copy_from(&self.c4);
        out
    }
}

/// SVD of `F` and the blocks of `L' C(t) R'` on the model's grid.
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    pub svd: SvdFactorization,
    pub grid: Grid,
    pub blocks: Vec<CBlocks>,
}

impl BlockDecomposition {
    pub fn rank(&self) -> usize {
        self.svd.rank
    }

    /// `L [[C1, C2], [C3, C4]] R` at node `j`.
    pub fn reassemble(&self, j: usize) -> Matrix {
        &self.svd.left * self.blocks[j].assembled() * &self.svd.right
    }
}

pub fn block_decompose(model: &ContinuousModel) -> Result<BlockDecomposition> {
    let grid = model.grid()?;
    let svd = svd_factor(&model.f)?;
    let blocks = grid
        .nodes()
        .map(|t| CBlocks::split(&svd, &model.c.at(t)))
        .collect();
    Ok(BlockDecomposition { svd, grid, blocks })
}

/// Outcome of the closed-range test on the algebraic coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionA {
    pub holds: bool,
    /// Largest sampled value of `sup_t |(eps^2 E + C4'C4)^{-1} C2'|`.
    pub sup_estimate: f64,
}

/// Smallest and largest `eps` of the sampling grid.
pub const EPS_RANGE: (f64, f64) = (1e-6, 0.99);
/// Growth over one decade of `eps` above which the norm counts as divergent.
pub const DIVERGENCE_RATIO: f64 = 10.0;

fn coupling_norm(blocks: &[CBlocks], eps: f64) -> Result<f64> {
    let mut worst = 0.0_f64;
    for b in blocks {
        let k = b.c4.ncols();
        if k == 0 || b.c2.nrows() == 0 {
            continue;
        }
        let reg = Matrix::identity(k, k) * (eps * eps) + b.c4.transpose() * &b.c4;
        let op = inv_spd(&reg)? * b.c2.transpose();
        worst = worst.max(matalg::norm2(&op)?);
    }
    Ok(worst)
}

/// Samples `|(eps^2 E + C4'C4)^{-1} C2'|` (worst grid node) on `eps_samples`
/// log-spaced values in [`EPS_RANGE`] and reports divergence when the norm
/// grows by more than [`DIVERGENCE_RATIO`] from `eps = 1e-5` to `1e-6`.
pub fn check_condition_a(blocks: &BlockDecomposition, eps_samples: usize) -> Result<ConditionA> {
    if eps_samples < 3 {
        return Err(Error::Contract(format!(
            "need at least 3 eps samples, got {eps_samples}"
        )));
    }
    let (lo, hi) = EPS_RANGE;
    let ratio = (hi / lo).ln() / (eps_samples - 1) as f64;
    let mut sup = 0.0_f64;
    for i in 0..eps_samples {
        let eps = lo * (ratio * i as f64).exp();
        sup = sup.max(coupling_norm(&blocks.blocks, eps)?);
    }
    let smallest = coupling_norm(&blocks.blocks, lo)?;
    let decade_up = coupling_norm(&blocks.blocks, 10.0 * lo)?;
    let diverges = decade_up > 0.0 && smallest / decade_up > DIVERGENCE_RATIO;
    Ok(ConditionA {
        holds: !diverges,
        sup_estimate: sup,
    })
}

/// Grid functions of the a priori estimator.
#[derive(Debug, Clone)]
pub struct AprioriSolution {
    pub grid: Grid,
    pub z: Vec<Vector>,
    pub p: Vec<Vector>,
    /// The free vector with `F'd = 0` in the initial condition.
    pub d: Vector,
    /// `u(t) = Q_2 H p`; the estimate is `int (u, y) dt`.
    pub u_hat: Vec<Vector>,
    /// Squared minimax a priori error `int (l, p) dt`.
    pub sigma2: f64,
}

/// Grid functions of the a posteriori estimator.
#[derive(Debug, Clone)]
pub struct AposterioriSolution {
    pub grid: Grid,
    pub rank: usize,
    pub x1: Vec<Vector>,
    pub q1: Vec<Vector>,
    pub x2: Vec<Vector>,
    pub q2: Vec<Vector>,
    /// `R' [x1; x2]`, the estimate in original coordinates.
    pub x_hat: Vec<Vector>,
    /// `[q1; q2]` in the `L'` frame (the minimizing `f`, rotated).
    pub q: Vec<Vector>,
}

/// A solution that carries a state-like path on a grid.
pub trait GridPath {
    fn grid(&self) -> &Grid;
    fn path(&self) -> &[Vector];
}

impl GridPath for AprioriSolution {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `p`, so that the functional of `l` is the squared a priori error.
    fn path(&self) -> &[Vector] {
        &self.p
    }
}

impl GridPath for AposterioriSolution {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn path(&self) -> &[Vector] {
        &self.x_hat
    }
}

/// Trapezoid-rule value of `int (l(t), x(t)) dt` along the solution path.
pub fn functional_estimate(sol: &impl GridPath, ell: &[Vector]) -> Result<f64> {
    let path = sol.path();
    if ell.len() != path.len() {
        return Err(Error::Contract(format!(
            "direction has {} grid values, solution has {}",
            ell.len(),
            path.len()
        )));
    }
    if let Some(j) = ell.iter().zip(path).position(|(l, x)| l.len() != x.len()) {
        return Err(Error::dim(format!(
            "direction and solution differ in size at node {j}"
        )));
    }
    Ok(sol
        .grid()
        .trapezoid(ell.iter().zip(path).map(|(l, x)| l.dot(x))))
}

/// Triplet assembly of the band system.
#[derive(Default)]
struct Assembly {
    triplets: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
}

impl Assembly {
    /// Appends one row per row of `blocks[..].1`, all sharing the same count.
    fn rows(&mut self, blocks: &[(usize, &Matrix)], rhs: &Vector) {
        let base = self.rhs.len();
        for &(col, mat) in blocks {
            debug_assert_eq!(mat.nrows(), rhs.len());
            for i in 0..mat.nrows() {
                for j in 0..mat.ncols() {
                    let v = mat[(i, j)];
                    if v != 0.0 {
                        self.triplets.push((base + i, col + j, v));
                    }
                }
            }
        }
        self.rhs.extend(rhs.iter());
    }

    fn solve(self, unknowns: usize) -> Result<Vec<f64>> {
        if self.rhs.len() != unknowns {
            return Err(Error::Numerical(format!(
                "assembled {} rows for {unknowns} unknowns",
                self.rhs.len()
            )));
        }
        BandMatrix::from_triplets(unknowns, &self.triplets).solve(&self.rhs)
    }
}

fn rows_of(m: &Matrix, start: usize, count: usize) -> Matrix {
    m.rows(start, count).into_owned()
}

/// Solves the a priori adjoint boundary value problem on `grid`.
pub fn apriori_solve(model: &ContinuousModel, grid: &Grid) -> Result<AprioriSolution> {
    model.ensure_valid()?;
    let (m, n) = model.f.shape();
    let svd = svd_factor(&model.f)?;
    let r = svd.rank;
    let h = grid.step();
    let f = &model.f;
    let ft = f.transpose();

    // Row selectors: R rows split differential/algebraic for the z equation,
    // L' rows for the p equation.
    let r_dif = rows_of(&svd.right, 0, r);
    let r_alg = rows_of(&svd.right, r, n - r);
    let lt = svd.left.transpose();
    let l_dif = rows_of(&lt, 0, r);
    let l_alg = rows_of(&lt, r, m - r);
    let l_null = svd.left.columns(r, m - r).into_owned();
    let ff_pinv = svd.left.columns(0, r) * svd.left.columns(0, r).transpose();
    let q0_inv = inv_spd(&model.q0)?;

    let block = m + n;
    let d_len = m - r;
    let z_col = |j: usize| d_len + j * block;
    let p_col = |j: usize| d_len + j * block + m;
    let unknowns = d_len + grid.len() * block;

    // Coefficients at time t: (-C', H'Q2H, l, C, Q1^{-1}).
    let coeffs = |t: f64| -> Result<(Matrix, Matrix, Vector, Matrix, Matrix)> {
        let c = model.c.at(t);
        let hm = model.h.at(t);
        let hqh = hm.transpose() * model.q2.at(t) * &hm;
        Ok((
            -c.transpose(),
            hqh,
            model.ell.at(t),
            c,
            inv_spd(&model.q1.at(t))?,
        ))
    };

    let mut asm = Assembly::default();
    // F p(t0) - Q0^{-1} F F^+ z(t0) - Q0^{-1} L_null c = 0
    asm.rows(
        &[
            (p_col(0), f),
            (z_col(0), &(-(&q0_inv * &ff_pinv))),
            (0, &(-(&q0_inv * &l_null))),
        ],
        &Vector::zeros(m),
    );
    for j in 0..grid.len() {
        let (neg_ct, hqh, ell, c, q1_inv) = coeffs(grid.node(j))?;
        // Algebraic rows at the node.
        asm.rows(
            &[
                (z_col(j), &(&r_alg * &neg_ct)),
                (p_col(j), &(&r_alg * &hqh)),
            ],
            &(&r_alg * &ell),
        );
        asm.rows(
            &[(z_col(j), &(&l_alg * &q1_inv)), (p_col(j), &(&l_alg * &c))],
            &Vector::zeros(m - r),
        );
        if j == grid.k {
            break;
        }
        // Midpoint rows on [t_j, t_{j+1}].
        let (neg_ct, hqh, ell, c, q1_inv) = coeffs(grid.midpoint(j))?;
        let dz = &r_dif * &ft / h;
        let z_avg = &r_dif * &neg_ct * 0.5;
        let p_avg = &r_dif * &hqh * 0.5;
        asm.rows(
            &[
                (z_col(j), &(-&dz - &z_avg)),
                (z_col(j + 1), &(&dz - &z_avg)),
                (p_col(j), &(-&p_avg)),
                (p_col(j + 1), &(-&p_avg)),
            ],
            &(-(&r_dif * &ell)),
        );
        let dp = &l_dif * f / h;
        let p_avg = &l_dif * &c * 0.5;
        let z_avg = &l_dif * &q1_inv * 0.5;
        asm.rows(
            &[
                (p_col(j), &(-&dp - &p_avg)),
                (p_col(j + 1), &(&dp - &p_avg)),
                (z_col(j), &(-&z_avg)),
                (z_col(j + 1), &(-&z_avg)),
            ],
            &Vector::zeros(r),
        );
    }
    // F'z(T) = 0, i.e. the leading r components of L'z(T) vanish.
    asm.rows(&[(z_col(grid.k), &l_dif)], &Vector::zeros(r));

    let sol = asm.solve(unknowns).map_err(|e| match e {
        Error::IllPosed(msg) => Error::IllPosed(format!(
            "a priori system is singular, the minimax error is not finite in this direction ({msg})"
        )),
        other => other,
    })?;
    let d = &l_null * Vector::from_row_slice(&sol[..d_len]);
    let z: Vec<Vector> = (0..grid.len())
        .map(|j| Vector::from_row_slice(&sol[z_col(j)..z_col(j) + m]))
        .collect();
    let p: Vec<Vector> = (0..grid.len())
        .map(|j| Vector::from_row_slice(&sol[p_col(j)..p_col(j) + n]))
        .collect();
    let u_hat = p
        .iter()
        .enumerate()
        .map(|(j, pj)| {
            let t = grid.node(j);
            model.q2.at(t) * (model.h.at(t) * pj)
        })
        .collect();
    let sigma2 = grid.trapezoid(
        p.iter()
            .enumerate()
            .map(|(j, pj)| model.ell.at(grid.node(j)).dot(pj)),
    );
    Ok(AprioriSolution {
        grid: *grid,
        z,
        p,
        d,
        u_hat,
        sigma2,
    })
}

/// Pointwise coefficients of the reduced a posteriori system at one time.
///
/// With `M = (E + C4'C4)^{-1}`:
/// ```text
/// x2 = -M C4'C3 x1 + M (C2'q1 + y2)
/// q2 = -(E - C4 M C4')C3 x1 - C4 M (C2'q1 + y2)
/// ```
/// and `x1, q1` obey `D^{1/2} x1' = a11 x1 + a12 q1 + b1`,
/// `D^{1/2} q1' = a21 x1 + a22 q1 + b2`.
struct ReducedCoefficients {
    a11: Matrix,
    a12: Matrix,
    a21: Matrix,
    a22: Matrix,
    b1: Vector,
    b2: Vector,
    /// `-M C4'C3`, `M C2'`, `M`.
    x2_x1: Matrix,
    x2_q1: Matrix,
    m_inv: Matrix,
    /// `-(E - C4 M C4')C3`, `-C4 M`.
    q2_x1: Matrix,
    q2_rest: Matrix,
    c2t: Matrix,
}

impl ReducedCoefficients {
    fn new(b: &CBlocks, y1: &Vector, y2: &Vector) -> Result<Self> {
        let r = b.c1.nrows();
        let k = b.c4.ncols();
        let a = b.c4.nrows();
        let m_inv = inv_spd(&(Matrix::identity(k, k) + b.c4.transpose() * &b.c4))?;
        let c2t = b.c2.transpose();
        let c4m = &b.c4 * &m_inv;
        let proj = Matrix::identity(a, a) - &c4m * b.c4.transpose();
        let e_r = Matrix::identity(r, r);

        let a11 = &b.c1 - &b.c2 * &m_inv * b.c4.transpose() * &b.c3;
        let a12 = &b.c2 * &m_inv * &c2t + &e_r;
        let b1 = &b.c2 * (&m_inv * y2);
        let a22 = -b.c1.transpose() + b.c3.transpose() * &c4m * &c2t;
        let b2 = b.c3.transpose() * (&c4m * y2) - y1;
        let a21 = b.c3.transpose() * &proj * &b.c3 + &e_r;
        Ok(ReducedCoefficients {
            a11,
            a12,
            a21,
            a22,
            b1,
            b2,
            x2_x1: -(&m_inv * b.c4.transpose() * &b.c3),
            x2_q1: &m_inv * &c2t,
            q2_x1: -(proj * &b.c3),
            q2_rest: -c4m,
            m_inv,
            c2t,
        })
    }
}

fn is_identity(m: &Matrix) -> bool {
    m.is_square() && (m - Matrix::identity(m.nrows(), m.nrows())).amax() <= 1e-12
}

/// Minimax a posteriori estimate for `y(t) = x(t) + eta(t)` with the
/// uncertainty set `int (|f|^2 + |eta|^2) dt <= 1` and `F x(t0) = 0`.
///
/// The model must have unit weights `Q1`, `Q2` and `H = I`; `Q0` and `l`
/// are not used.
pub fn aposteriori_solve(
    model: &ContinuousModel,
    y: &TimeFunction<Vector>,
    grid: &Grid,
) -> Result<AposterioriSolution> {
    model.ensure_valid()?;
    let (m, n) = model.f.shape();
    let normalized = model.q1.iter().all(is_identity)
        && model.q2.iter().all(is_identity)
        && model.h.iter().all(|h| is_identity(h) && h.nrows() == n);
    if !normalized {
        return Err(Error::Contract(
            "a posteriori solver needs unit weights Q1, Q2 and full-state observation H = I".into(),
        ));
    }
    if let Some(bad) = y.iter().position(|v| v.len() != n) {
        return Err(Error::dim(format!(
            "measurement sample {bad} does not have {n} components"
        )));
    }

    let svd = svd_factor(&model.f)?;
    let r = svd.rank;
    let half_d = Matrix::from_diagonal(&Vector::from_vec(svd.singular_values()));
    let h = grid.step();
    let at = |t: f64| -> Result<(ReducedCoefficients, Vector)> {
        let yr = &svd.right * y.at(t);
        let (y1, y2) = (yr.rows(0, r).into_owned(), yr.rows(r, n - r).into_owned());
        let blocks = CBlocks::split(&svd, &model.c.at(t));
        Ok((ReducedCoefficients::new(&blocks, &y1, &y2)?, y2))
    };

    let (x1, q1) = if r == 0 {
        (
            vec![Vector::zeros(0); grid.len()],
            vec![Vector::zeros(0); grid.len()],
        )
    } else {
        let x_col = |j: usize| 2 * r * j;
        let q_col = |j: usize| 2 * r * j + r;
        let eye = Matrix::identity(r, r);
        let mut asm = Assembly::default();
        asm.rows(&[(x_col(0), &eye)], &Vector::zeros(r));
        for j in 0..grid.k {
            let (c, _) = at(grid.midpoint(j))?;
            let dd = &half_d / h;
            asm.rows(
                &[
                    (x_col(j), &(-&dd - &c.a11 * 0.5)),
                    (x_col(j + 1), &(&dd - &c.a11 * 0.5)),
                    (q_col(j), &(&c.a12 * -0.5)),
                    (q_col(j + 1), &(&c.a12 * -0.5)),
                ],
                &c.b1,
            );
            asm.rows(
                &[
                    (q_col(j), &(-&dd - &c.a22 * 0.5)),
                    (q_col(j + 1), &(&dd - &c.a22 * 0.5)),
                    (x_col(j), &(&c.a21 * -0.5)),
                    (x_col(j + 1), &(&c.a21 * -0.5)),
                ],
                &c.b2,
            );
        }
        asm.rows(&[(q_col(grid.k), &eye)], &Vector::zeros(r));
        let sol = asm.solve(2 * r * grid.len()).map_err(|e| match e {
            Error::IllPosed(msg) => {
                Error::IllPosed(format!("a posteriori system is singular ({msg})"))
            }
            other => other,
        })?;
        let x1 = (0..grid.len())
            .map(|j| Vector::from_row_slice(&sol[x_col(j)..x_col(j) + r]))
            .collect();
        let q1 = (0..grid.len())
            .map(|j| Vector::from_row_slice(&sol[q_col(j)..q_col(j) + r]))
            .collect();
        (x1, q1)
    };

    let mut x2 = Vec::with_capacity(grid.len());
    let mut q2 = Vec::with_capacity(grid.len());
    let mut x_hat = Vec::with_capacity(grid.len());
    let mut q = Vec::with_capacity(grid.len());
    let rt = svd.right.transpose();
    for j in 0..grid.len() {
        let (c, y2) = at(grid.node(j))?;
        let rest = &c.c2t * &q1[j] + &y2;
        let x2j = &c.x2_x1 * &x1[j] + &c.m_inv * &rest;
        debug_assert_eq!(c.x2_q1.ncols(), r);
        let q2j = &c.q2_x1 * &x1[j] + &c.q2_rest * &rest;
        let mut full = Vector::zeros(n);
        full.rows_mut(0, r).copy_from(&x1[j]);
        full.rows_mut(r, n - r).copy_from(&x2j);
        x_hat.push(&rt * full);
        let mut qq = Vector::zeros(m);
        qq.rows_mut(0, r).copy_from(&q1[j]);
        qq.rows_mut(r, m - r).copy_from(&q2j);
        q.push(qq);
        x2.push(x2j);
        q2.push(q2j);
    }
    Ok(AposterioriSolution {
        grid: *grid,
        rank: r,
        x1,
        q1,
        x2,
        q2,
        x_hat,
        q,
    })
}
