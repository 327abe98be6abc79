//! Synthetic datasets.
//!
//! Every generator is deterministic in its seed. Features of the 2-D sets
//! are min-max scaled per coordinate to `[-1, 1]` over the full generated
//! sample (train and test together) before the split.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    TwoMoons,
    ConcentricCircles,
    Spirals,
    SinusoidRegression,
    Gaussian8Autoencoder,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 5] = [
        DatasetKind::TwoMoons,
        DatasetKind::ConcentricCircles,
        DatasetKind::Spirals,
        DatasetKind::SinusoidRegression,
        DatasetKind::Gaussian8Autoencoder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::TwoMoons => "two_moons",
            DatasetKind::ConcentricCircles => "concentric_circles",
            DatasetKind::Spirals => "spirals",
            DatasetKind::SinusoidRegression => "sinusoid_regression",
            DatasetKind::Gaussian8Autoencoder => "gaussian8_autoencoder",
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            DatasetKind::SinusoidRegression => 1,
            _ => 2,
        }
    }

    /// Width of the model output the task expects.
    pub fn output_dim(self) -> usize {
        match self {
            DatasetKind::TwoMoons | DatasetKind::ConcentricCircles => 2,
            DatasetKind::Spirals => 3,
            DatasetKind::SinusoidRegression => 1,
            DatasetKind::Gaussian8Autoencoder => 2,
        }
    }

    pub fn is_classification(self) -> bool {
        matches!(
            self,
            DatasetKind::TwoMoons | DatasetKind::ConcentricCircles | DatasetKind::Spirals
        )
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown dataset kind {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n_train: usize,
    pub n_test: usize,
    pub noise: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Labels { labels: Vec<usize>, classes: usize },
    Values(Tensor),
    /// The input itself.
    Reconstruction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub target: Target,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.target {
            Target::Labels { labels, .. } => Some(labels),
            _ => None,
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let target = match &self.target {
            Target::Labels { labels, classes } => Target::Labels {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
            Target::Values(v) => Target::Values(v.select_rows(idx)),
            Target::Reconstruction => Target::Reconstruction,
        };
        Dataset {
            x: self.x.select_rows(idx),
            target,
        }
    }

    /// Dense loss target for the whole set: one-hot rows, values, or `x`.
    pub fn target_tensor(&self) -> Tensor {
        match &self.target {
            Target::Labels { labels, classes } => one_hot(labels, *classes),
            Target::Values(v) => v.clone(),
            Target::Reconstruction => self.x.clone(),
        }
    }
}

pub fn one_hot(labels: &[usize], classes: usize) -> Tensor {
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        data[i * classes + l] = 1.0;
    }
    Tensor::raw(vec![labels.len(), classes], data)
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| lo + step * i as f64)
}

fn scale_columns(points: &mut [[f64; 2]]) {
    for c in 0..2 {
        let lo = points.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for p in points.iter_mut() {
            p[c] = if span > 0.0 { 2.0 * (p[c] - lo) / span - 1.0 } else { 0.0 };
        }
    }
}

/// Unscaled, unshuffled points of the two interleaving half circles.
/// The first `n / 2` points form the upper arc (label 0).
pub fn two_moons_arcs(n: usize) -> Vec<([f64; 2], usize)> {
    let n_upper = n / 2;
    let n_lower = n - n_upper;
    let upper = linspace(0.0, PI, n_upper).map(|t| ([t.cos(), t.sin()], 0));
    let lower = linspace(0.0, PI, n_lower).map(|t| ([1.0 - t.cos(), 0.5 - t.sin()], 1));
    upper.chain(lower).collect()
}

/// Generates `n` samples in canonical order (no shuffling).
pub fn generate(kind: DatasetKind, n: usize, noise: f64, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("dataset needs at least one sample"));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::invalid(format!("noise must be >= 0, got {noise}")));
    }
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let jitter = |rng: &mut ChaCha8Rng| noise * gauss.sample(rng);

    let labelled: Vec<([f64; 2], usize)> = match kind {
        DatasetKind::TwoMoons => two_moons_arcs(n),
        DatasetKind::ConcentricCircles => {
            let n_outer = n / 2;
            let ring = |m: usize, r: f64, label: usize| {
                (0..m).map(move |i| {
                    let t = 2.0 * PI * i as f64 / m as f64;
                    ([r * t.cos(), r * t.sin()], label)
                })
            };
            ring(n_outer, 1.0, 0).chain(ring(n - n_outer, 0.5, 1)).collect()
        }
        DatasetKind::Spirals => (0..n)
            .map(|i| {
                let arm = i % 3;
                let r = (i / 3) as f64 / (n.div_ceil(3)) as f64;
                let t = 2.0 * PI * arm as f64 / 3.0 + 4.0 * PI * r;
                ([r * t.cos(), r * t.sin()], arm)
            })
            .collect(),
        DatasetKind::SinusoidRegression => {
            let u = Uniform::new_inclusive(-1.0, 1.0);
            let mut xs = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let x: f64 = u.sample(rng);
                xs.push(x);
                ys.push(sinusoid_target(x) + jitter(rng));
            }
            return Ok(Dataset {
                x: Tensor::raw(vec![n, 1], xs),
                target: Target::Values(Tensor::raw(vec![n, 1], ys)),
            });
        }
        DatasetKind::Gaussian8Autoencoder => {
            // Neighbouring modes one unit apart.
            let radius = 1.0 / (2.0 * (PI / 8.0).sin());
            (0..n)
                .map(|_| {
                    let mode = rng.gen_range(0..8);
                    let t = 2.0 * PI * mode as f64 / 8.0;
                    ([radius * t.cos(), radius * t.sin()], mode)
                })
                .collect()
        }
    };

    let mut points: Vec<[f64; 2]> = labelled
        .iter()
        .map(|(p, _)| [p[0] + jitter(rng), p[1] + jitter(rng)])
        .collect();
    scale_columns(&mut points);
    let x = Tensor::raw(vec![n, 2], points.into_iter().flatten().collect());
    let target = match kind {
        DatasetKind::Gaussian8Autoencoder => Target::Reconstruction,
        _ => Target::Labels {
            labels: labelled.iter().map(|(_, l)| *l).collect(),
            classes: kind.output_dim(),
        },
    };
    Ok(Dataset { x, target })
}

/// Noise-free regression target `sin(2πx)`.
pub fn sinusoid_target(x: f64) -> f64 {
    (2.0 * PI * x).sin()
}

/// Builds `(train, test)` from the spec.
pub fn make_dataset(spec: &DatasetSpec) -> Result<(Dataset, Dataset)> {
    if spec.n_train < 2 || spec.n_test < 1 {
        return Err(Error::invalid(format!(
            "need n_train >= 2 and n_test >= 1, got {} and {}",
            spec.n_train, spec.n_test
        )));
    }
    let mut rng = stream(spec.seed, Stream::Data);
    let all = generate(spec.kind, spec.n_train + spec.n_test, spec.noise, &mut rng)?;
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.shuffle(&mut rng);
    let (tr, te) = order.split_at(spec.n_train);
    Ok((all.subset(tr), all.subset(te)))
}
