//! Dual-path training of small MLPs.
//!
//! The main path is the ordinary forward pass; the coded path routes the
//! same batch through [`CodedSmoothingModule`] around the same network. The
//! loss is `(1 − μ)·L_main + μ·L_coded`, with the network parameters shared
//! by both paths.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::autodiff::{sgd_momentum_step, Tape, Var};
use crate::coded::CodedSmoothingModule;
use crate::data::{make_dataset, Dataset, DatasetSpec, Target};
use crate::error::{Error, Result};
use crate::model::{Mlp, MlpSpec};
use crate::rng::{stream, Stream};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NSchedule {
    /// `N = round(γK)` for every epoch.
    Constant,
    /// `N` grows linearly from `K` at the first epoch to `round(γK)` at the last.
    LinearRamp,
}

impl fmt::Display for NSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NSchedule::Constant => "constant",
            NSchedule::LinearRamp => "linear_ramp",
        })
    }
}

impl std::str::FromStr for NSchedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(NSchedule::Constant),
            "linear_ramp" => Ok(NSchedule::LinearRamp),
            other => Err(Error::invalid(format!("unknown N schedule {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Erm,
    Mixup { alpha: f64 },
    Coded { mu: f64, gamma: f64, schedule: NSchedule },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Erm => "erm",
            Method::Mixup { .. } => "mixup",
            Method::Coded { .. } => "coded",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Method::Erm => Ok(()),
            Method::Mixup { alpha } if alpha > 0.0 && alpha.is_finite() => Ok(()),
            Method::Mixup { alpha } => Err(Error::invalid(format!("mixup alpha must be > 0, got {alpha}"))),
            Method::Coded { mu, gamma, .. } => {
                check_mu(mu)?;
                if !(gamma >= 1.0) || !gamma.is_finite() {
                    return Err(Error::invalid(format!("gamma must be >= 1, got {gamma}")));
                }
                Ok(())
            }
        }
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::invalid(format!("mu must lie in [0, 1], got {mu}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainPlan {
    pub dataset: DatasetSpec,
    pub model: MlpSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs at which the learning rate is divided by 10.
    pub lr_decay_epochs: Vec<usize>,
    pub momentum: f64,
    pub seed: u64,
    pub method: Method,
}

impl TrainPlan {
    /// Collects every violated constraint, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.batch_size < 4 {
            out.push(format!("batch_size must be >= 4, got {}", self.batch_size));
        }
        if self.epochs == 0 {
            out.push("epochs must be >= 1".into());
        }
        if self.dataset.n_train < self.batch_size {
            out.push(format!(
                "n_train ({}) must be at least batch_size ({})",
                self.dataset.n_train, self.batch_size
            ));
        }
        if self.dataset.n_test == 0 {
            out.push("n_test must be >= 1".into());
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            out.push(format!("lr must be > 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            out.push(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.model.input_dim() != self.dataset.kind.input_dim() {
            out.push(format!(
                "model input width {} does not match dataset {} ({})",
                self.model.input_dim(),
                self.dataset.kind,
                self.dataset.kind.input_dim()
            ));
        }
        if self.model.output_dim() != self.dataset.kind.output_dim() {
            out.push(format!(
                "model output width {} does not match dataset {} ({})",
                self.model.output_dim(),
                self.dataset.kind,
                self.dataset.kind.output_dim()
            ));
        }
        if let Err(e) = self.method.validate() {
            out.push(e.to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().as_slice() {
            [] => Ok(()),
            p => Err(Error::invalid(p.join("; "))),
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.lr_decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.lr * 0.1f64.powi(decays as i32)
    }
}

/// `N` for the given epoch.
pub fn schedule_n(gamma: f64, schedule: NSchedule, epoch: usize, total_epochs: usize, k: usize) -> usize {
    let top = (gamma * k as f64).round() as usize;
    let lo = k.max(4);
    let n = match schedule {
        NSchedule::Constant => top,
        NSchedule::LinearRamp if total_epochs <= 1 => k,
        NSchedule::LinearRamp => {
            let frac = epoch as f64 / (total_epochs - 1) as f64;
            (k as f64 + (gamma * k as f64 - k as f64) * frac).round() as usize
        }
    };
    n.clamp(lo, top.max(lo))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    Mse,
}

impl LossKind {
    pub fn for_dataset(d: &Dataset) -> Self {
        match d.target {
            Target::Labels { .. } => LossKind::CrossEntropy,
            _ => LossKind::Mse,
        }
    }

    pub fn apply<'t>(self, pred: Var<'t>, target: &Tensor) -> Result<Var<'t>> {
        match self {
            LossKind::CrossEntropy => pred.softmax_cross_entropy(target),
            LossKind::Mse => pred.mse(target),
        }
    }

    /// Loss value without recording gradients.
    pub fn value(self, pred: &Tensor, target: &Tensor) -> Result<f64> {
        let tape = Tape::new();
        Ok(self.apply(tape.constant(pred.clone()), target)?.value().item())
    }
}

/// The combined loss and the path losses that went into it.
#[derive(Clone, Copy, Debug)]
pub struct DualPathLoss<'t> {
    pub total: Var<'t>,
    /// `None` when `μ = 1`: the main path is never recorded.
    pub main: Option<Var<'t>>,
    /// `None` when `μ = 0`: the coded path is never run.
    pub coded: Option<Var<'t>>,
}

/// `(1 − μ)·main + μ·coded`, returning an endpoint path unchanged.
pub fn combine_losses<'t>(main: Option<Var<'t>>, coded: Option<Var<'t>>, mu: f64) -> Result<Var<'t>> {
    check_mu(mu)?;
    match (main, coded) {
        (Some(m), _) if mu == 0.0 => Ok(m),
        (_, Some(c)) if mu == 1.0 => Ok(c),
        (Some(m), Some(c)) => m.scale(1.0 - mu).add(c.scale(mu)),
        _ => Err(Error::invalid("a path required by mu is missing")),
    }
}

pub fn dual_path_loss<'t>(
    model: &Mlp,
    params: &[Var<'t>],
    module: &CodedSmoothingModule,
    x: Var<'t>,
    target: &Tensor,
    loss: LossKind,
    mu: f64,
) -> Result<DualPathLoss<'t>> {
    check_mu(mu)?;
    let main = if mu < 1.0 {
        Some(loss.apply(model.forward(params, x)?, target)?)
    } else {
        None
    };
    let coded = if mu > 0.0 {
        let est = module.forward_var(x, |z| model.forward(params, z))?;
        Some(loss.apply(est, target)?)
    } else {
        None
    };
    Ok(DualPathLoss {
        total: combine_losses(main, coded, mu)?,
        main,
        coded,
    })
}

/// One `λ ~ Beta(α, α)` per batch, partners from a uniform permutation.
pub fn mixup_batch<R: Rng>(x: &Tensor, y: &Tensor, alpha: f64, rng: &mut R) -> Result<(Tensor, Tensor)> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("mixup alpha must be > 0, got {alpha}")));
    }
    let lambda = Beta::new(alpha, alpha)
        .map_err(|e| Error::invalid(e.to_string()))?
        .sample(rng);
    let mut partner: Vec<usize> = (0..x.rows()).collect();
    partner.shuffle(rng);
    mixup_with(x, y, lambda, &partner)
}

/// `x̄_i = λ·x_i + (1 − λ)·x_{partner[i]}`, same for the labels.
pub fn mixup_with(x: &Tensor, y: &Tensor, lambda: f64, partner: &[usize]) -> Result<(Tensor, Tensor)> {
    if x.rows() != y.rows() || partner.len() != x.rows() {
        return Err(Error::shape("mixup", x.shape(), y.shape()));
    }
    let mix = |t: &Tensor| {
        let other = t.select_rows(partner);
        t.zip_map(&other, |a, b| lambda * a + (1.0 - lambda) * b)
    };
    Ok((mix(x)?, mix(y)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_main: f64,
    pub loss_coded: Option<f64>,
    /// Accuracy for classification, MSE otherwise.
    pub test_metric: f64,
    pub n: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub epochs: Vec<EpochRecord>,
    /// Present for 2-D classification tasks.
    pub boundary_smoothness: Option<f64>,
}

impl Metrics {
    pub fn last(&self) -> &EpochRecord {
        self.epochs.last().expect("at least one epoch")
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Mlp,
    pub metrics: Metrics,
    pub test: Dataset,
}

/// Test accuracy (classification) or mean squared error.
pub fn evaluate(model: &Mlp, data: &Dataset) -> Result<f64> {
    let out = model.predict(&data.x)?;
    match &data.target {
        Target::Labels { labels, .. } => Ok(accuracy(&out, labels)),
        Target::Values(v) => LossKind::Mse.value(&out, v),
        Target::Reconstruction => LossKind::Mse.value(&out, &data.x),
    }
}

pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows())
        .map(|i| {
            let row = t.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    let hits = argmax_rows(logits)
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    hits as f64 / labels.len() as f64
}

/// `n × n` grid over `[-1, 1]²`, row-major.
pub fn default_grid(n: usize) -> Tensor {
    let step = 2.0 / (n - 1) as f64;
    let mut data = Vec::with_capacity(n * n * 2);
    for i in 0..n {
        for j in 0..n {
            data.push(-1.0 + step * i as f64);
            data.push(-1.0 + step * j as f64);
        }
    }
    Tensor::raw(vec![n * n, 2], data)
}

/// Mean over the grid of `‖∇ₓ(logit₁ − logit₀)‖₂`.
pub fn boundary_smoothness(model: &Mlp, grid: &Tensor) -> Result<f64> {
    let spec = model.spec();
    if spec.input_dim() != 2 || grid.cols() != 2 {
        return Err(Error::invalid("boundary smoothness needs a model with 2-D input"));
    }
    if spec.output_dim() < 2 {
        return Err(Error::invalid("boundary smoothness needs at least two logits"));
    }
    let tape = Tape::new();
    let params = model.bind_frozen(&tape);
    let x = tape.var(grid.clone());
    let logits = model.forward(&params, x)?;
    let mut sel = vec![0.0; spec.output_dim()];
    sel[0] = -1.0;
    sel[1] = 1.0;
    let margin = logits.matmul(tape.constant(Tensor::raw(vec![spec.output_dim(), 1], sel)))?;
    let g = tape.backward(margin.sum())?.wrt(x);
    let total: f64 = (0..g.rows())
        .map(|i| g.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum();
    Ok(total / g.rows() as f64)
}

fn guard(v: f64, epoch: usize, step: usize) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("loss is {v} at epoch {epoch}, step {step}")))
    }
}

/// Trains with the plan's method. Deterministic in `plan.seed`.
pub fn train(plan: &TrainPlan) -> Result<TrainOutcome> {
    plan.validate()?;
    let (train_set, test_set) = make_dataset(&plan.dataset)?;
    train_on(plan, &train_set, test_set)
}

/// Like [`train`] with the dataset already materialized.
pub fn train_on(plan: &TrainPlan, train_set: &Dataset, test_set: Dataset) -> Result<TrainOutcome> {
    plan.validate()?;
    let mut model = Mlp::init(plan.model.clone(), &mut stream(plan.seed, Stream::Init));
    let mut shuffle_rng = stream(plan.seed, Stream::Shuffle);
    let mut mixup_rng = stream(plan.seed, Stream::Mixup);
    let loss_kind = LossKind::for_dataset(train_set);
    let targets = train_set.target_tensor();
    let k = plan.batch_size;

    let mut records = Vec::with_capacity(plan.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..plan.epochs {
        let lr = plan.lr_at(epoch);
        order.shuffle(&mut shuffle_rng);

        let module = match plan.method {
            Method::Coded { mu, gamma, schedule } if mu > 0.0 => Some((
                mu,
                CodedSmoothingModule::new(k, schedule_n(gamma, schedule, epoch, plan.epochs, k))?,
            )),
            _ => None,
        };

        let mut main_sum = 0.0;
        let mut coded_sum = 0.0;
        let mut steps = 0;
        for (step, idx) in order.chunks_exact(k).enumerate() {
            let mut x = train_set.x.select_rows(idx);
            let mut y = targets.select_rows(idx);
            if let Method::Mixup { alpha } = plan.method {
                (x, y) = mixup_batch(&x, &y, alpha, &mut mixup_rng)?;
                if matches!(train_set.target, Target::Reconstruction) {
                    y = x.clone();
                }
            }

            let tape = Tape::new();
            let params = model.bind(&tape);
            let xv = tape.constant(x.clone());
            let total = match &module {
                Some((mu, module)) => {
                    let l = dual_path_loss(&model, &params, module, xv, &y, loss_kind, *mu)?;
                    let main = match l.main {
                        Some(m) => m.value().item(),
                        None => loss_kind.value(&model.predict(&x)?, &y)?,
                    };
                    let coded = l.coded.expect("mu > 0").value().item();
                    guard(coded, epoch, step)?;
                    main_sum += main;
                    coded_sum += coded;
                    l.total
                }
                None => {
                    let l = loss_kind.apply(model.forward(&params, xv)?, &y)?;
                    main_sum += l.value().item();
                    l
                }
            };
            guard(total.value().item(), epoch, step)?;
            let grads = tape.backward(total)?;
            model.accumulate(&grads, &params);
            sgd_momentum_step(model.params_mut(), lr, plan.momentum);
            steps += 1;
        }

        records.push(EpochRecord {
            epoch,
            loss_main: main_sum / steps as f64,
            loss_coded: module.as_ref().map(|_| coded_sum / steps as f64),
            test_metric: evaluate(&model, &test_set)?,
            n: module.as_ref().map(|(_, m)| m.n()),
        });
    }

    let boundary = if plan.dataset.kind.is_classification() && plan.model.input_dim() == 2 {
        Some(boundary_smoothness(&model, &default_grid(21))?)
    } else {
        None
    };
    Ok(TrainOutcome {
        model,
        metrics: Metrics {
            epochs: records,
            boundary_smoothness: boundary,
        },
        test: test_set,
    })
}
