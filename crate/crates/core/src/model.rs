//! Discrete descriptor models, uncertainty weights and measurement records.
//!
//! ```text
//! F_{k+1} x_{k+1} - C_k x_k = f_k,   F_0 x_0 = q,
//! y_k = H_k x_k + g_k,               k = 0..N
//! ```
//!
//! with the disturbance cost
//! `G(q, f, g) = (S q, q) + sum_i (S_i f_i, f_i) + (R_i g_i, g_i)`.

use crate::matalg::{self, pinv, quad_form, Matrix, Vector};
use crate::{Error, Result};

/// Linear descriptor model on the horizon `k = 0..=steps`.
///
/// `f` holds `F_0..F_N`, `c` holds `C_0..C_{N-1}`, `h` holds `H_0..H_N`.
/// A time-invariant model stores a single matrix in each sequence and
/// broadcasts it to every step.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorModel {
    pub n: usize,
    pub steps: usize,
    pub f: Vec<Matrix>,
    pub c: Vec<Matrix>,
    pub h: Vec<Matrix>,
    pub time_invariant: bool,
}

impl DescriptorModel {
    pub fn time_invariant(steps: usize, f: Matrix, c: Matrix, h: Matrix) -> Self {
        DescriptorModel {
            n: f.ncols(),
            steps,
            f: vec![f],
            c: vec![c],
            h: vec![h],
            time_invariant: true,
        }
    }

    /// `f` and `h` must have `N + 1` entries, `c` must have `N`.
    pub fn time_varying(f: Vec<Matrix>, c: Vec<Matrix>, h: Vec<Matrix>) -> Self {
        let n = f.first().map_or(0, |m| m.ncols());
        DescriptorModel {
            n,
            steps: f.len().saturating_sub(1),
            f,
            c,
            h,
            time_invariant: false,
        }
    }

    fn pick(seq: &[Matrix], k: usize, broadcast: bool) -> &Matrix {
        if broadcast {
            &seq[0]
        } else {
            &seq[k]
        }
    }

    pub fn f(&self, k: usize) -> &Matrix {
        Self::pick(&self.f, k, self.time_invariant)
    }

    pub fn c(&self, k: usize) -> &Matrix {
        Self::pick(&self.c, k, self.time_invariant)
    }

    pub fn h(&self, k: usize) -> &Matrix {
        Self::pick(&self.h, k, self.time_invariant)
    }

    /// Rows of `F_k`, i.e. the dimension of `q` (k = 0) or `f_{k-1}`.
    pub fn rows_f(&self, k: usize) -> usize {
        self.f(k).nrows()
    }

    pub fn rows_h(&self, k: usize) -> usize {
        self.h(k).nrows()
    }

    /// Replaces the horizon of a time-invariant model.
    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    fn shape_diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n_steps = self.steps;
        let counts = |len: usize| if self.time_invariant { 1 } else { len };
        for (name, seq, want) in [
            ("F", &self.f, counts(n_steps + 1)),
            ("H", &self.h, counts(n_steps + 1)),
        ] {
            if seq.len() != want {
                out.push(format!(
                    "{name}: expected {want} matrices, found {}",
                    seq.len()
                ));
            }
        }
        if !out.is_empty() {
            return out;
        }
        // C is unused when N = 0, so an empty sequence is fine there.
        let want_c = if n_steps == 0 {
            self.c.len().min(1)
        } else {
            counts(n_steps)
        };
        let ok_c = self.c.len() == want_c;
        if !ok_c {
            out.push(format!(
                "C: expected {want_c} matrices, found {}",
                self.c.len()
            ));
        }
        for k in 0..=n_steps {
            if self.f(k).ncols() != self.n {
                out.push(format!(
                    "F_{k}: has {} columns, state dimension is {}",
                    self.f(k).ncols(),
                    self.n
                ));
            }
            if self.h(k).ncols() != self.n {
                out.push(format!(
                    "H_{k}: has {} columns, state dimension is {}",
                    self.h(k).ncols(),
                    self.n
                ));
            }
        }
        if ok_c {
            for k in 0..n_steps {
                let c = self.c(k);
                if c.ncols() != self.n {
                    out.push(format!(
                        "C_{k}: has {} columns, state dimension is {}",
                        c.ncols(),
                        self.n
                    ));
                }
                if c.nrows() != self.rows_f(k + 1) {
                    out.push(format!(
                        "C_{k}: has {} rows but F_{} has {}",
                        c.nrows(),
                        k + 1,
                        self.rows_f(k + 1)
                    ));
                }
            }
        }
        for (name, seq) in [("F", &self.f), ("C", &self.c), ("H", &self.h)] {
            for (i, m) in seq.iter().enumerate() {
                if m.iter().any(|v| !v.is_finite()) {
                    out.push(format!("{name}_{i}: non-finite entry"));
                }
            }
        }
        out
    }
}

/// Weights of the disturbance ellipsoid.
///
/// `s_seq` weights `f_0..f_{N-1}` and `r_seq` weights `g_0..g_N`; a sequence
/// of length one is broadcast to every step.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyWeights {
    pub s: Matrix,
    pub s_seq: Vec<Matrix>,
    pub r_seq: Vec<Matrix>,
}

impl UncertaintyWeights {
    pub fn new(s: Matrix, s_seq: Vec<Matrix>, r_seq: Vec<Matrix>) -> Self {
        UncertaintyWeights { s, s_seq, r_seq }
    }

    /// Same weights at every step.
    pub fn constant(s: Matrix, s_step: Matrix, r_step: Matrix) -> Self {
        UncertaintyWeights {
            s,
            s_seq: vec![s_step],
            r_seq: vec![r_step],
        }
    }

    pub fn s_at(&self, i: usize) -> Option<&Matrix> {
        match self.s_seq.len() {
            1 => self.s_seq.first(),
            _ => self.s_seq.get(i),
        }
    }

    pub fn r_at(&self, i: usize) -> Option<&Matrix> {
        match self.r_seq.len() {
            1 => self.r_seq.first(),
            _ => self.r_seq.get(i),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSequence {
    pub y: Vec<Vector>,
}

impl MeasurementSequence {
    pub fn new(y: Vec<Vector>) -> Self {
        MeasurementSequence { y }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        MeasurementSequence {
            y: self.y.iter().map(|v| v * factor).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<Vector>,
}

/// `(q, f_0..f_{N-1}, g_0..g_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceRealization {
    pub q: Vector,
    pub f: Vec<Vector>,
    pub g: Vec<Vector>,
}

impl DisturbanceRealization {
    pub fn zeros(model: &DescriptorModel) -> Self {
        DisturbanceRealization {
            q: Vector::zeros(model.rows_f(0)),
            f: (1..=model.steps)
                .map(|k| Vector::zeros(model.rows_f(k)))
                .collect(),
            g: (0..=model.steps)
                .map(|k| Vector::zeros(model.rows_h(k)))
                .collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        DisturbanceRealization {
            q: &self.q * factor,
            f: self.f.iter().map(|v| v * factor).collect(),
            g: self.g.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Eigenvalue floor relative to the largest magnitude; values above
/// `-PSD_SLACK * scale` count as nonnegative.
const PSD_SLACK: f64 = 1e-10;

fn definiteness(name: &str, w: &Matrix, dim: usize, strict: bool, out: &mut Vec<String>) {
    if w.nrows() != dim || w.ncols() != dim {
        out.push(format!(
            "{name}: is {}x{}, expected {dim}x{dim}",
            w.nrows(),
            w.ncols()
        ));
        return;
    }
    if w.iter().any(|v| !v.is_finite()) {
        out.push(format!("{name}: non-finite entry"));
        return;
    }
    if dim == 0 {
        return;
    }
    let scale = w.amax().max(f64::MIN_POSITIVE);
    if (w - w.transpose()).amax() > 1e-10 * scale {
        out.push(format!("{name}: not symmetric"));
        return;
    }
    let Ok((eigs, _)) = matalg::eig_sym(w) else {
        out.push(format!("{name}: eigendecomposition failed"));
        return;
    };
    let lo = *eigs.last().unwrap();
    if strict && lo <= PSD_SLACK * scale {
        out.push(format!(
            "{name}: not positive definite (smallest eigenvalue {lo:e})"
        ));
    } else if lo < -PSD_SLACK * scale {
        out.push(format!(
            "{name}: not positive semidefinite (smallest eigenvalue {lo:e})"
        ));
    }
}

/// Checks shapes and definiteness. Empty output means the pair is usable by
/// the estimators; each diagnostic names the offending index.
pub fn validate(model: &DescriptorModel, w: &UncertaintyWeights) -> Vec<String> {
    let mut out = model.shape_diagnostics();
    if !out.is_empty() {
        return out;
    }
    let n_steps = model.steps;
    definiteness("S", &w.s, model.rows_f(0), false, &mut out);

    if !(w.s_seq.len() == 1 || w.s_seq.len() == n_steps) && !(n_steps == 0 && w.s_seq.is_empty()) {
        out.push(format!(
            "S_seq: expected 1 or {n_steps} matrices, found {}",
            w.s_seq.len()
        ));
    } else {
        for i in 0..n_steps {
            definiteness(
                &format!("S_{i}"),
                w.s_at(i).unwrap(),
                model.rows_f(i + 1),
                true,
                &mut out,
            );
        }
    }
    if !(w.r_seq.len() == 1 || w.r_seq.len() == n_steps + 1) {
        out.push(format!(
            "R_seq: expected 1 or {} matrices, found {}",
            n_steps + 1,
            w.r_seq.len()
        ));
    } else {
        for i in 0..=n_steps {
            definiteness(
                &format!("R_{i}"),
                w.r_at(i).unwrap(),
                model.rows_h(i),
                true,
                &mut out,
            );
        }
    }
    out
}

/// Diagnostics for a measurement record against the model's `H_k`.
pub fn validate_measurements(model: &DescriptorModel, y: &MeasurementSequence) -> Vec<String> {
    let mut out = Vec::new();
    if y.len() != model.steps + 1 {
        out.push(format!(
            "measurements: expected {} rows (k = 0..{}), found {}",
            model.steps + 1,
            model.steps,
            y.len()
        ));
        return out;
    }
    for (k, yk) in y.y.iter().enumerate() {
        if yk.len() != model.rows_h(k) {
            out.push(format!(
                "y_{k}: has {} components, H_{k} has {} rows",
                yk.len(),
                model.rows_h(k)
            ));
        }
        if yk.iter().any(|v| !v.is_finite()) {
            out.push(format!("y_{k}: non-finite entry"));
        }
    }
    out
}

fn weighted(w: Option<&Matrix>, v: &Vector, what: &str, i: usize) -> Result<f64> {
    let w = w.ok_or_else(|| Error::dim(format!("no weight for {what}_{i}")))?;
    if w.nrows() != v.len() || w.ncols() != v.len() {
        return Err(Error::dim(format!(
            "{what}_{i} has {} components, its weight is {}x{}",
            v.len(),
            w.nrows(),
            w.ncols()
        )));
    }
    Ok(quad_form(w, v))
}

/// `G(q, f, g)`.
pub fn disturbance_cost(w: &UncertaintyWeights, d: &DisturbanceRealization) -> Result<f64> {
    let mut total = weighted(Some(&w.s), &d.q, "q", 0)?;
    for (i, fi) in d.f.iter().enumerate() {
        total += weighted(w.s_at(i), fi, "f", i)?;
    }
    for (i, gi) in d.g.iter().enumerate() {
        total += weighted(w.r_at(i), gi, "g", i)?;
    }
    Ok(total)
}

fn check_len(v: &Vector, len: usize, what: impl FnOnce() -> String) -> Result<()> {
    if v.len() == len {
        Ok(())
    } else {
        Err(Error::dim(format!(
            "{}: has {} components, expected {len}",
            what(),
            v.len()
        )))
    }
}

/// The disturbance that makes `(x, y)` consistent with the model:
/// `q = F_0 x_0`, `f_k = F_{k+1} x_{k+1} - C_k x_k`, `g_k = y_k - H_k x_k`.
pub fn residuals_of(
    model: &DescriptorModel,
    x: &Trajectory,
    y: &MeasurementSequence,
) -> Result<DisturbanceRealization> {
    let n_steps = model.steps;
    if x.x.len() != n_steps + 1 || y.len() != n_steps + 1 {
        return Err(Error::dim(format!(
            "horizon N={n_steps} needs {} states and measurements, got {} and {}",
            n_steps + 1,
            x.x.len(),
            y.len()
        )));
    }
    for (k, xk) in x.x.iter().enumerate() {
        check_len(xk, model.n, || format!("x_{k}"))?;
    }
    for (k, yk) in y.y.iter().enumerate() {
        check_len(yk, model.rows_h(k), || format!("y_{k}"))?;
    }
    let q = model.f(0) * &x.x[0];
    let f = (0..n_steps)
        .map(|k| model.f(k + 1) * &x.x[k + 1] - model.c(k) * &x.x[k])
        .collect();
    let g = (0..=n_steps)
        .map(|k| &y.y[k] - model.h(k) * &x.x[k])
        .collect();
    Ok(DisturbanceRealization { q, f, g })
}

/// Minimum-norm solution of `a x = b` plus the projection of `seed` onto the
/// null space of `a`, together with the residual norm of the particular part.
fn solve_with_seed(a: &Matrix, b: &Vector, seed: &Vector) -> Result<(Vector, f64)> {
    let a_pinv = pinv(a, 0.0)?;
    let particular = &a_pinv * b;
    let residual = (a * &particular - b).norm();
    let null_part = seed - &a_pinv * (a * seed);
    Ok((particular + null_part, residual))
}

fn consistent(residual: f64, a: &Matrix, b: &Vector) -> bool {
    residual <= 1e-9 * (1.0 + b.norm() + a.norm())
}

/// Generates a trajectory and measurements driven by `d`.
///
/// Each step solves `F_{k+1} x_{k+1} = C_k x_k + f_k` by pseudoinverse;
/// null-space components of a column-rank-deficient `F` are taken from
/// `x_free`.
pub fn simulate(
    model: &DescriptorModel,
    d: &DisturbanceRealization,
    x_free: &Vector,
) -> Result<(Trajectory, MeasurementSequence)> {
    let n_steps = model.steps;
    check_len(x_free, model.n, || "x_free".into())?;
    check_len(&d.q, model.rows_f(0), || "q".into())?;
    if d.f.len() != n_steps || d.g.len() != n_steps + 1 {
        return Err(Error::dim(format!(
            "disturbance has {} f and {} g entries, horizon N={n_steps}",
            d.f.len(),
            d.g.len()
        )));
    }

    let (x0, res) = solve_with_seed(model.f(0), &d.q, x_free)?;
    if !consistent(res, model.f(0), &d.q) {
        return Err(Error::InfeasibleInitial(res));
    }
    let mut xs = Vec::with_capacity(n_steps + 1);
    xs.push(x0);
    for k in 0..n_steps {
        check_len(&d.f[k], model.rows_f(k + 1), || format!("f_{k}"))?;
        let rhs = model.c(k) * &xs[k] + &d.f[k];
        let (next, res) = solve_with_seed(model.f(k + 1), &rhs, x_free)?;
        if !consistent(res, model.f(k + 1), &rhs) {
            return Err(Error::InfeasibleStep {
                step: k,
                residual: res,
            });
        }
        xs.push(next);
    }
    let mut ys = Vec::with_capacity(n_steps + 1);
    for (k, xk) in xs.iter().enumerate() {
        check_len(&d.g[k], model.rows_h(k), || format!("g_{k}"))?;
        ys.push(model.h(k) * xk + &d.g[k]);
    }
    Ok((Trajectory { x: xs }, MeasurementSequence { y: ys }))
}
