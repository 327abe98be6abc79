//! Vector-valued natural cubic splines on `[-1, 1]` and their operator form.
//!
//! A spline fitted to values `Y[n × d]` over knots `t` is linear in `Y`, so
//! evaluating it at `m` fixed points is the map `Y ↦ Aᵀ·Y` for a matrix
//! `A[n × m]` that depends only on the knots and the evaluation points.
//! [`SplineOperator`] materializes that matrix.
//!
//! Points inside `[-1, 1]` but outside the knot hull are handled by the
//! natural extension: the spline continues as the straight line tangent at
//! the end knot (the second derivative is zero there).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Smallest admissible gap between neighbouring knots.
pub const MIN_KNOT_GAP: f64 = 1e-12;

/// Strictly increasing abscissas in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Knots(Vec<f64>);

impl Knots {
    pub const MIN_LEN: usize = 4;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_min_len(values, Self::MIN_LEN)
    }

    /// Accepts as few as three knots, the smallest system with an interior
    /// unknown. Only meant for hand-checkable tests.
    #[doc(hidden)]
    pub fn relaxed(values: Vec<f64>) -> Result<Self> {
        Self::with_min_len(values, 3)
    }

    fn with_min_len(values: Vec<f64>, min_len: usize) -> Result<Self> {
        if values.len() < min_len {
            return Err(Error::Knots(format!(
                "need at least {min_len} knots, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Knots(format!("knot {v} outside [-1, 1]")));
        }
        for (i, w) in values.windows(2).enumerate() {
            if !(w[1] - w[0] >= MIN_KNOT_GAP) {
                return Err(Error::Knots(format!(
                    "knots must be strictly increasing: t[{i}]={} t[{}]={}",
                    w[0],
                    i + 1,
                    w[1]
                )));
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_points(points: &[f64]) -> Result<()> {
    match points.iter().find(|p| !(-1.0..=1.0).contains(*p)) {
        Some(&point) => Err(Error::OutOfRange {
            point,
            lo: -1.0,
            hi: 1.0,
        }),
        None => Ok(()),
    }
}

/// A fitted natural cubic spline `R → R^d`.
#[derive(Clone, Debug)]
pub struct NaturalCubicSpline {
    knots: Knots,
    values: Tensor,
    second_derivatives: Tensor,
}

/// Solves the natural-spline system for the second derivatives at every
/// knot. One Thomas forward/back sweep, shared by all `d` columns.
fn solve_second_derivatives(t: &[f64], y: &Tensor) -> Tensor {
    let n = t.len();
    let d = y.cols();
    let yd = y.data();
    let mut m = vec![0.0; n * d];
    let unknowns = n - 2;
    if unknowns == 0 {
        return Tensor::raw(vec![n, d], m);
    }
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();

    // Row r (knot r+1): h[r]·M[r] + 2(h[r]+h[r+1])·M[r+1] + h[r+1]·M[r+2] = rhs.
    let mut c_prime = vec![0.0; unknowns];
    let mut denom = vec![0.0; unknowns];
    for r in 0..unknowns {
        let diag = 2.0 * (h[r] + h[r + 1]);
        let sub = if r == 0 { 0.0 } else { h[r] };
        let den = diag - sub * if r == 0 { 0.0 } else { c_prime[r - 1] };
        denom[r] = den;
        c_prime[r] = if r + 1 < unknowns { h[r + 1] / den } else { 0.0 };
    }

    // Forward sweep writes the modified right-hand side into M's interior
    // rows; the back substitution then overwrites it in place.
    for r in 0..unknowns {
        let i = r + 1;
        let (done, rest) = m.split_at_mut(i * d);
        let prev = &done[(i - 1) * d..];
        let row = &mut rest[..d];
        let (sub, den) = (if r > 0 { h[r] } else { 0.0 }, denom[r]);
        for k in 0..d {
            let s_right = (yd[(i + 1) * d + k] - yd[i * d + k]) / h[i];
            let s_left = (yd[i * d + k] - yd[(i - 1) * d + k]) / h[i - 1];
            row[k] = (6.0 * (s_right - s_left) - sub * prev[k]) / den;
        }
    }
    for r in (0..unknowns.saturating_sub(1)).rev() {
        let i = r + 1;
        let (head, tail) = m.split_at_mut((i + 1) * d);
        let next = &tail[..d];
        let c = c_prime[r];
        for (v, nx) in head[i * d..].iter_mut().zip(next) {
            *v -= c * nx;
        }
    }
    Tensor::raw(vec![n, d], m)
}

impl NaturalCubicSpline {
    /// Interpolates `values[i]` at `knots[i]`.
    pub fn fit(knots: &Knots, values: &Tensor) -> Result<Self> {
        if values.rows() != knots.len() {
            return Err(Error::shape(
                "spline fit",
                &[knots.len()],
                values.shape(),
            ));
        }
        let values = values.flatten_rows();
        let second_derivatives = solve_second_derivatives(knots.values(), &values);
        Ok(Self {
            knots: knots.clone(),
            values,
            second_derivatives,
        })
    }

    pub fn knots(&self) -> &Knots {
        &self.knots
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn second_derivatives(&self) -> &Tensor {
        &self.second_derivatives
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    /// Evaluates at each point; result is `[points.len() × d]`.
    pub fn eval(&self, points: &[f64]) -> Result<Tensor> {
        check_points(points)?;
        let d = self.dim();
        let mut out = vec![0.0; points.len() * d];
        for (p, row) in points.iter().zip(out.chunks_mut(d)) {
            eval_into(self.knots.values(), self.values.data(), self.second_derivatives.data(), *p, row);
        }
        Ok(Tensor::raw(vec![points.len(), d], out))
    }
}

/// Evaluates the spline with knots `t`, values `y` and second derivatives `m`
/// (all row-major with `out.len()` columns) at `p`.
fn eval_into(t: &[f64], y: &[f64], m: &[f64], p: f64, out: &mut [f64]) {
    let n = t.len();
    let d = out.len();

    if p < t[0] || p > t[n - 1] {
        // Tangent line at the nearer end knot; M is zero there.
        let (i0, i1, anchor) = if p < t[0] { (0, 1, 0) } else { (n - 2, n - 1, n - 1) };
        let h = t[i1] - t[i0];
        for k in 0..d {
            let secant = (y[i1 * d + k] - y[i0 * d + k]) / h;
            let slope = if anchor == 0 {
                secant - h * m[i1 * d + k] / 6.0
            } else {
                secant + h * m[i0 * d + k] / 6.0
            };
            out[k] = y[anchor * d + k] + slope * (p - t[anchor]);
        }
        return;
    }

    // First knot strictly greater than p, clamped so [i, i+1] is valid.
    let upper = t.partition_point(|&k| k <= p);
    if upper > 0 && t[upper - 1] == p {
        out.copy_from_slice(&y[(upper - 1) * d..upper * d]);
        return;
    }
    let i = upper.clamp(1, n - 1) - 1;
    let h = t[i + 1] - t[i];
    let a = (t[i + 1] - p) / h;
    let b = (p - t[i]) / h;
    let c3a = (a * a * a - a) * h * h / 6.0;
    let c3b = (b * b * b - b) * h * h / 6.0;
    for k in 0..d {
        out[k] = a * y[i * d + k]
            + b * y[(i + 1) * d + k]
            + c3a * m[i * d + k]
            + c3b * m[(i + 1) * d + k];
    }
}

/// Fits and evaluates in one pass. O((n + m)·d) plus O(m log n) search.
pub fn fit_eval(knots: &Knots, values: &Tensor, points: &[f64]) -> Result<Tensor> {
    if values.rows() != knots.len() {
        return Err(Error::shape("spline fit", &[knots.len()], values.shape()));
    }
    check_points(points)?;
    let m = solve_second_derivatives(knots.values(), values);
    let d = values.cols();
    let mut out = vec![0.0; points.len() * d];
    for (p, row) in points.iter().zip(out.chunks_mut(d)) {
        eval_into(knots.values(), values.data(), m.data(), *p, row);
    }
    let mut shape = values.shape().to_vec();
    shape[0] = points.len();
    Ok(Tensor::raw(shape, out))
}

/// Dense linear map from knot values to spline evaluations.
#[derive(Clone, Debug)]
pub struct SplineOperator {
    knots: Knots,
    eval_points: Vec<f64>,
    matrix: Arc<Tensor>,
}

impl SplineOperator {
    /// Row `i` holds the evaluations of the spline fitted to the `i`-th
    /// standard basis vector, so evaluating a fit of `Y` is `matrixᵀ·Y`.
    pub fn build(knots: &Knots, eval_points: &[f64]) -> Result<Self> {
        check_points(eval_points)?;
        if eval_points.is_empty() {
            return Err(Error::invalid("operator needs at least one evaluation point"));
        }
        let n = knots.len();
        let basis = NaturalCubicSpline::fit(knots, &Tensor::identity(n))?;
        // [m × n] evaluations, transposed into [n × m].
        let evals = basis.eval(eval_points)?;
        Ok(Self {
            knots: knots.clone(),
            eval_points: eval_points.to_vec(),
            matrix: Arc::new(evals.transpose()),
        })
    }

    pub fn knots(&self) -> &Knots {
        &self.knots
    }

    pub fn eval_points(&self) -> &[f64] {
        &self.eval_points
    }

    pub fn matrix(&self) -> &Arc<Tensor> {
        &self.matrix
    }

    /// `matrixᵀ·Y`.
    pub fn apply(&self, y: &Tensor) -> Result<Tensor> {
        if y.rows() != self.knots.len() {
            return Err(Error::shape("spline operator", self.matrix.shape(), y.shape()));
        }
        crate::autodiff::linear_operator_kernel(&self.matrix, y)
    }
}
