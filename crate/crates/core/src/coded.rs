//! The coded-smoothing module: spline-encode a batch of `K` samples into `N`
//! coded samples, run the computation on those, and spline-decode the `N`
//! outputs back into `K` estimates.
//!
//! Encoding points are first-kind Chebyshev points, decoding points are
//! second-kind Chebyshev points, both sorted ascending. Samples of any shape
//! are treated as flat feature vectors along axis 0.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use crate::autodiff::{linear_operator_kernel, Var};
use crate::error::{Error, Result};
use crate::spline::{fit_eval, Knots, SplineOperator};
use crate::tensor::Tensor;

/// Smallest batch the module accepts.
pub const MIN_POINTS: usize = 4;

/// `cos((2i-1)π / 2K)` for `i = 1..=K`, sorted ascending. No size check.
///
/// Evaluated as `sin((2p + 1 - K)π / 2K)` for position `p`, which is the same
/// value but exactly antisymmetric about zero.
pub fn chebyshev_first_points(k: usize) -> Vec<f64> {
    (0..k)
        .map(|p| ((2 * p + 1) as f64 - k as f64) * PI / (2 * k) as f64)
        .map(f64::sin)
        .collect()
}

/// `cos((j-1)π / (N-1))` for `j = 1..=N`, sorted ascending, with the
/// endpoints pinned to exactly ±1. No size check.
pub fn chebyshev_second_points(n: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..n)
        .map(|p| (2.0 * p as f64 - (n - 1) as f64) * PI / (2 * (n - 1)) as f64)
        .map(f64::sin)
        .collect();
    pts[0] = -1.0;
    pts[n - 1] = 1.0;
    pts
}

fn check_size(what: &str, v: usize) -> Result<()> {
    if v < MIN_POINTS {
        return Err(Error::invalid(format!(
            "{what} must be at least {MIN_POINTS}, got {v}"
        )));
    }
    Ok(())
}

/// First-kind Chebyshev encoding points `α`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingPoints(Vec<f64>);

impl EncodingPoints {
    pub fn chebyshev_first(k: usize) -> Result<Self> {
        check_size("K", k)?;
        Ok(Self(chebyshev_first_points(k)))
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

/// Second-kind Chebyshev decoding points `β`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodingPoints(Vec<f64>);

impl DecodingPoints {
    pub fn chebyshev_second(n: usize) -> Result<Self> {
        check_size("N", n)?;
        Ok(Self(chebyshev_second_points(n)))
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

/// Precomputed encode and decode operators for one `(K, N)` pair.
#[derive(Debug)]
struct Operators {
    alpha: Knots,
    beta: Knots,
    encode: SplineOperator,
    decode: SplineOperator,
}

impl Operators {
    fn build(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        let alpha = Knots::new(alpha)?;
        let beta = Knots::new(beta)?;
        let encode = SplineOperator::build(&alpha, beta.values())?;
        let decode = SplineOperator::build(&beta, alpha.values())?;
        Ok(Self {
            alpha,
            beta,
            encode,
            decode,
        })
    }
}

type Cache = RwLock<HashMap<(usize, usize), Arc<Operators>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Spline encoder/decoder pair around an arbitrary batch function.
#[derive(Clone, Debug)]
pub struct CodedSmoothingModule {
    k: usize,
    n: usize,
    ops: Arc<Operators>,
}

impl CodedSmoothingModule {
    /// Module with `K` encoding and `N` decoding points. Operators are
    /// shared process-wide per `(K, N)`.
    pub fn new(k: usize, n: usize) -> Result<Self> {
        check_size("K", k)?;
        check_size("N", n)?;
        if let Some(ops) = cache().read().expect("operator cache poisoned").get(&(k, n)) {
            return Ok(Self {
                k,
                n,
                ops: Arc::clone(ops),
            });
        }
        let built = Arc::new(Operators::build(
            chebyshev_first_points(k),
            chebyshev_second_points(n),
        )?);
        let ops = Arc::clone(
            cache()
                .write()
                .expect("operator cache poisoned")
                .entry((k, n))
                .or_insert(built),
        );
        Ok(Self { k, n, ops })
    }

    /// Test mode with `β := α` and `N = K`: both operators are the identity,
    /// so the module reduces to evaluating the batch function directly.
    pub fn identity(k: usize) -> Result<Self> {
        check_size("K", k)?;
        let alpha = chebyshev_first_points(k);
        let ops = Operators::build(alpha.clone(), alpha)?;
        Ok(Self {
            k,
            n: k,
            ops: Arc::new(ops),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> &[f64] {
        self.ops.alpha.values()
    }

    pub fn beta(&self) -> &[f64] {
        self.ops.beta.values()
    }

    /// `[K × N]`.
    pub fn encode_operator(&self) -> &SplineOperator {
        &self.ops.encode
    }

    /// `[N × K]`.
    pub fn decode_operator(&self) -> &SplineOperator {
        &self.ops.decode
    }

    fn expect_rows(&self, what: &'static str, got: usize, want: usize) -> Result<()> {
        if got != want {
            return Err(Error::shape(what, &[want], &[got]));
        }
        Ok(())
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.expect_rows("encode", x.rows(), self.k)?;
        linear_operator_kernel(self.ops.encode.matrix(), x)
    }

    pub fn decode(&self, f: &Tensor) -> Result<Tensor> {
        self.expect_rows("decode", f.rows(), self.n)?;
        linear_operator_kernel(self.ops.decode.matrix(), f)
    }

    /// `decode(f(encode(X)))` without a tape.
    pub fn forward<F>(&self, x: &Tensor, f: F) -> Result<Tensor>
    where
        F: FnOnce(&Tensor) -> Result<Tensor>,
    {
        let coded = self.encode(x)?;
        let out = f(&coded)?;
        self.expect_rows("batch function output", out.rows(), self.n)?;
        self.decode(&out)
    }

    pub fn encode_var<'t>(&self, x: Var<'t>) -> Result<Var<'t>> {
        self.expect_rows("encode", x.value().rows(), self.k)?;
        x.apply_linear_operator(self.ops.encode.matrix())
    }

    pub fn decode_var<'t>(&self, f: Var<'t>) -> Result<Var<'t>> {
        self.expect_rows("decode", f.value().rows(), self.n)?;
        f.apply_linear_operator(self.ops.decode.matrix())
    }

    /// Differentiable `decode(f(encode(X)))`.
    pub fn forward_var<'t, F>(&self, x: Var<'t>, f: F) -> Result<Var<'t>>
    where
        F: FnOnce(Var<'t>) -> Result<Var<'t>>,
    {
        let coded = self.encode_var(x)?;
        let out = f(coded)?;
        self.expect_rows("batch function output", out.value().rows(), self.n)?;
        self.decode_var(out)
    }

    /// Encoding by direct spline fit and evaluation, `O((K + N)·d)`, with no
    /// dense operator involved.
    pub fn encode_tridiagonal(&self, x: &Tensor) -> Result<Tensor> {
        self.expect_rows("encode", x.rows(), self.k)?;
        fit_eval(&self.ops.alpha, x, self.ops.beta.values())
    }

    pub fn decode_tridiagonal(&self, f: &Tensor) -> Result<Tensor> {
        self.expect_rows("decode", f.rows(), self.n)?;
        fit_eval(&self.ops.beta, f, self.ops.alpha.values())
    }

    /// Mean over samples and output coordinates of `|f̂(x_i) − f(x_i)|²`.
    pub fn estimate_mse<F>(&self, x: &Tensor, f: F) -> Result<f64>
    where
        F: Fn(&Tensor) -> Result<Tensor>,
    {
        let est = self.forward(x, &f)?;
        let exact = f(x)?;
        let diff = est.sub(&exact)?;
        Ok(diff.data().iter().map(|v| v * v).sum::<f64>() / diff.numel() as f64)
    }
}
