//! Scalar test functions applied elementwise, used by the rate experiments.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarFn {
    Sin,
    /// `exp(-4x²)`
    GaussBump,
    /// `x³ − x/2`
    Cubic,
    /// `0.75` everywhere.
    Constant,
}

impl ScalarFn {
    pub const ALL: [ScalarFn; 4] = [ScalarFn::Sin, ScalarFn::GaussBump, ScalarFn::Cubic, ScalarFn::Constant];

    pub fn name(self) -> &'static str {
        match self {
            ScalarFn::Sin => "sin",
            ScalarFn::GaussBump => "gauss_bump",
            ScalarFn::Cubic => "cubic",
            ScalarFn::Constant => "constant",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            ScalarFn::Sin => x.sin(),
            ScalarFn::GaussBump => (-4.0 * x * x).exp(),
            ScalarFn::Cubic => x * x * x - 0.5 * x,
            ScalarFn::Constant => 0.75,
        }
    }

    pub fn apply(self, t: &Tensor) -> Tensor {
        t.map(|v| self.eval(v))
    }
}

impl fmt::Display for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScalarFn {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown function {s:?}")))
    }
}

/// `K` scalar inputs drawn uniformly from `[-1, 1]`, as a `[K × 1]` column.
pub fn uniform_inputs(k: usize, seed: u64) -> Tensor {
    let mut rng = stream(seed, Stream::Inputs);
    let u = Uniform::new_inclusive(-1.0, 1.0);
    Tensor::raw(vec![k, 1], (0..k).map(|_| u.sample(&mut rng)).collect())
}
