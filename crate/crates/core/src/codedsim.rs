//! Straggler-tolerant coded computing, simulated by omission.
//!
//! `N` workers each evaluate `f` on one coded sample. Up to `S` of them never
//! report back; the decoder spline is fitted only on the surviving
//! `(β_j, f(x̃_j))` pairs and evaluated at the encoding points. The expected
//! error scales like `C·((S + 1)/N)³·‖(f∘u_enc)″‖²`, where `C` is a constant
//! and the norm depends on `f` and the encoder; neither is measured here,
//! only the scaling of the error with `(S + 1)/N`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::coded::CodedSmoothingModule;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::spline::{Knots, SplineOperator};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StragglerPolicy {
    /// `S` workers chosen uniformly at random.
    UniformRandom,
    /// A contiguous run of `S` decoding points around the centre.
    AdversarialContiguous,
}

impl fmt::Display for StragglerPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StragglerPolicy::UniformRandom => "uniform_random",
            StragglerPolicy::AdversarialContiguous => "adversarial_contiguous",
        })
    }
}

impl FromStr for StragglerPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_random" => Ok(StragglerPolicy::UniformRandom),
            "adversarial_contiguous" => Ok(StragglerPolicy::AdversarialContiguous),
            other => Err(Error::invalid(format!("unknown straggler policy {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StragglerScenario {
    pub n: usize,
    pub s: usize,
    pub policy: StragglerPolicy,
    pub seed: u64,
}

impl StragglerScenario {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::invalid(format!("need at least 4 workers, got {}", self.n)));
        }
        if self.s + 4 > self.n {
            return Err(Error::invalid(format!(
                "S = {} leaves fewer than 4 of N = {} results",
                self.s, self.n
            )));
        }
        Ok(())
    }

    /// Indices of workers that return, ascending.
    pub fn returned(&self) -> Result<Vec<usize>> {
        self.validate()?;
        let mut dropped = vec![false; self.n];
        match self.policy {
            StragglerPolicy::UniformRandom => {
                // The first S of one seeded shuffle, so for a fixed seed the
                // dropped sets are nested as S grows.
                let mut order: Vec<usize> = (0..self.n).collect();
                order.shuffle(&mut stream(self.seed, Stream::Straggler));
                for &i in &order[..self.s] {
                    dropped[i] = true;
                }
            }
            StragglerPolicy::AdversarialContiguous => {
                let start = (self.n - self.s) / 2;
                dropped[start..start + self.s].iter_mut().for_each(|d| *d = true);
            }
        }
        Ok((0..self.n).filter(|&i| !dropped[i]).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkerResult {
    pub index: usize,
    pub point: f64,
    pub output: Vec<f64>,
    pub returned: bool,
}

#[derive(Clone, Debug)]
pub struct CodedJob {
    pub estimates: Tensor,
    pub mse: f64,
    pub workers: Vec<WorkerResult>,
}

/// Fits the decoder on returned workers only and evaluates it at `alpha`.
pub fn decode_returned(workers: &[WorkerResult], alpha: &[f64]) -> Result<Tensor> {
    let mut live: Vec<&WorkerResult> = workers.iter().filter(|w| w.returned).collect();
    if live.len() < 4 {
        return Err(Error::invalid(format!(
            "only {} results returned, decoding needs 4",
            live.len()
        )));
    }
    live.sort_by_key(|w| w.index);
    let knots = Knots::new(live.iter().map(|w| w.point).collect())?;
    let width = live[0].output.len();
    let data: Vec<f64> = live.iter().flat_map(|w| w.output.iter().copied()).collect();
    let values = Tensor::raw(vec![live.len(), width], data);
    SplineOperator::build(&knots, alpha)?.apply(&values)
}

/// Encodes `x`, lets each worker evaluate `f` on its coded row in `order`,
/// drops stragglers and decodes from the rest.
pub fn run_coded_job_in_order<F>(f: F, x: &Tensor, scenario: &StragglerScenario, order: &[usize]) -> Result<CodedJob>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let returned = scenario.returned()?;
    let module = CodedSmoothingModule::new(x.rows(), scenario.n)?;
    let coded = module.encode(x)?;
    let n = scenario.n;
    let mut sorted_order = order.to_vec();
    sorted_order.sort_unstable();
    if sorted_order != (0..n).collect::<Vec<_>>() {
        return Err(Error::invalid("worker order must list every worker once"));
    }

    let mut slots: Vec<Option<WorkerResult>> = vec![None; n];
    for &j in order {
        let out = f(&coded.select_rows(&[j]))?;
        if out.rows() != 1 {
            return Err(Error::shape("worker output", &[1], out.shape()));
        }
        slots[j] = Some(WorkerResult {
            index: j,
            point: module.beta()[j],
            output: out.into_data(),
            returned: returned.binary_search(&j).is_ok(),
        });
    }
    let workers: Vec<WorkerResult> = slots.into_iter().map(|w| w.expect("every worker ran")).collect();

    let estimates = decode_returned(&workers, module.alpha())?;
    let exact = f(x)?.flatten_rows();
    let diff = estimates.sub(&exact)?;
    let mse = diff.data().iter().map(|v| v * v).sum::<f64>() / diff.numel() as f64;
    Ok(CodedJob {
        estimates,
        mse,
        workers,
    })
}

pub fn run_coded_job<F>(f: F, x: &Tensor, scenario: &StragglerScenario) -> Result<CodedJob>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let order: Vec<usize> = (0..scenario.n).collect();
    run_coded_job_in_order(f, x, scenario, &order)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub n: usize,
    pub s: usize,
    pub policy: StragglerPolicy,
    /// `(seed, mse)` per run.
    pub runs: Vec<(u64, f64)>,
    pub mean_mse: f64,
}

impl SweepCell {
    pub fn ratio(&self) -> f64 {
        (self.s + 1) as f64 / self.n as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimReport {
    pub k: usize,
    pub cells: Vec<SweepCell>,
}

impl SimReport {
    pub fn cell(&self, n: usize, s: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.n == n && c.s == s)
    }

    /// Keeps only the cells matching `keep`.
    pub fn filter(&self, keep: impl Fn(&SweepCell) -> bool) -> SimReport {
        SimReport {
            k: self.k,
            cells: self.cells.iter().filter(|c| keep(c)).cloned().collect(),
        }
    }
}

/// Grid of mean MSE over `seeds` for every `(N, S)` pair, `N`-major.
pub fn sweep<F>(
    f: F,
    x: &Tensor,
    n_list: &[usize],
    s_list: &[usize],
    policy: StragglerPolicy,
    seeds: &[u64],
) -> Result<SimReport>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    if n_list.is_empty() || s_list.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("sweep needs non-empty N, S and seed lists"));
    }
    for &n in n_list {
        for &s in s_list {
            StragglerScenario { n, s, policy, seed: 0 }.validate()?;
        }
    }
    let mut cells = Vec::with_capacity(n_list.len() * s_list.len());
    for &n in n_list {
        for &s in s_list {
            let mut runs = Vec::with_capacity(seeds.len());
            // Running mean, so identical runs average to the same bits.
            let mut mean = 0.0;
            for (i, &seed) in seeds.iter().enumerate() {
                let job = run_coded_job(&f, x, &StragglerScenario { n, s, policy, seed })?;
                mean += (job.mse - mean) / (i + 1) as f64;
                runs.push((seed, job.mse));
            }
            cells.push(SweepCell {
                n,
                s,
                policy,
                runs,
                mean_mse: mean,
            });
        }
    }
    Ok(SimReport { k: x.rows(), cells })
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Slope of `log MSE` against `log((S + 1)/N)` over the report's cells.
pub fn fit_scaling_exponent(report: &SimReport) -> Result<f64> {
    if report.cells.len() < 4 {
        return Err(Error::invalid(format!(
            "need at least 4 grid points, got {}",
            report.cells.len()
        )));
    }
    let ratios: Vec<f64> = report.cells.iter().map(SweepCell::ratio).collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    if hi / lo < 8.0 - 1e-12 {
        return Err(Error::invalid(format!(
            "(S+1)/N spans only {:.3}x, need at least 8x",
            hi / lo
        )));
    }
    if let Some(c) = report.cells.iter().find(|c| !(c.mean_mse > 0.0)) {
        return Err(Error::Numeric(format!(
            "MSE at N={}, S={} is {}, cannot take its log",
            c.n, c.s, c.mean_mse
        )));
    }
    let xs: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = report.cells.iter().map(|c| c.mean_mse.ln()).collect();
    Ok(least_squares_slope(&xs, &ys))
}
