//! Subcommand bodies. Each one validates the whole configuration up front,
//! writes its artifacts plus the resolved config into the output directory
//! and returns a flat report for the terminal.

use std::path::Path;

use coded_smoothing::attack::{craft, score, AttackSpec, InferenceMode};
use coded_smoothing::codedsim::{fit_scaling_exponent, least_squares_slope, sweep as sim_sweep, SimReport};
use coded_smoothing::coded::{DecodingPoints, EncodingPoints};
use coded_smoothing::data::{make_dataset, DatasetKind, DatasetSpec};
use coded_smoothing::functions::{uniform_inputs, ScalarFn};
use coded_smoothing::model::{decode_model, encode_model};
use coded_smoothing::train::{self, Method, Metrics, NSchedule, TrainOutcome, TrainPlan};
use coded_smoothing::{Activation, CodedSmoothingModule, MlpSpec, StragglerPolicy, Tensor};
use rayon::prelude::*;

use crate::config::{Reader, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{csv_float, csv_opt, fmt_sig, write_file, Report, Table};
use crate::svg::LinePlot;

fn finish_dir(cfg: &RunConfig, out: &Path, report: &Report) -> Result<()> {
    cfg.write_to(out)?;
    write_file(&out.join("report.txt"), report.render().as_bytes())
}

fn scalar_fn(t: ScalarFn) -> impl Fn(&Tensor) -> coded_smoothing::Result<Tensor> {
    move |x: &Tensor| Ok(t.apply(x))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Points {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Points {
    /// Two sections, one value per line, 12 significant digits.
    pub fn render(&self) -> String {
        let mut s = format!("alpha K={}\n", self.alpha.len());
        for v in &self.alpha {
            s.push_str(&fmt_sig(*v, 12));
            s.push('\n');
        }
        s.push_str(&format!("beta N={}\n", self.beta.len()));
        for v in &self.beta {
            s.push_str(&fmt_sig(*v, 12));
            s.push('\n');
        }
        s
    }
}

pub fn points(cfg: &RunConfig) -> Result<Points> {
    let mut r = Reader::new(cfg);
    let k: Option<usize> = r.get("points.K");
    let n: Option<usize> = r.get("points.N");
    if let Some(k) = k {
        r.check(k >= 4, || format!("points.K must be >= 4, got {k}"));
    }
    if let Some(n) = n {
        r.check(n >= 4, || format!("points.N must be >= 4, got {n}"));
    }
    r.finish()?;
    Ok(Points {
        alpha: EncodingPoints::chebyshev_first(k.unwrap())?.values().to_vec(),
        beta: DecodingPoints::chebyshev_second(n.unwrap())?.values().to_vec(),
    })
}

#[derive(Clone, Debug)]
pub struct Lemma1 {
    pub rows: Vec<(usize, f64)>,
    /// `None` when every MSE is below `1e-18` (exact reconstruction).
    pub slope: Option<f64>,
    pub report: Report,
}

pub fn lemma1(cfg: &RunConfig, out: &Path) -> Result<Lemma1> {
    let mut r = Reader::new(cfg);
    let seed: Option<u64> = r.get("seed");
    let k: Option<usize> = r.get("lemma1.K");
    let ns: Option<Vec<usize>> = r.non_empty_list("lemma1.N");
    let func: Option<ScalarFn> = r.get("lemma1.fn");
    if let Some(k) = k {
        r.check(k >= 4, || format!("lemma1.K must be >= 4, got {k}"));
    }
    if let Some(ns) = &ns {
        r.check(ns.len() >= 2, || "lemma1.N needs at least two values".into());
        r.check(ns.iter().all(|&n| n >= 4), || "every lemma1.N must be >= 4".into());
    }
    r.finish()?;
    let (seed, k, ns, func) = (seed.unwrap(), k.unwrap(), ns.unwrap(), func.unwrap());

    let x = uniform_inputs(k, seed);
    let f = scalar_fn(func);
    let mut rows = Vec::with_capacity(ns.len());
    for &n in &ns {
        rows.push((n, CodedSmoothingModule::new(k, n)?.estimate_mse(&x, &f)?));
    }

    let exact = rows.iter().all(|&(_, m)| m < 1e-18);
    let slope = if exact {
        None
    } else {
        if let Some(&(n, m)) = rows.iter().find(|&&(_, m)| !(m > 0.0)) {
            return Err(CliError::Numeric(format!("MSE at N={n} is {m}; log-log slope undefined")));
        }
        let xs: Vec<f64> = rows.iter().map(|&(n, _)| (n as f64).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|&(_, m)| m.ln()).collect();
        Some(least_squares_slope(&xs, &ys))
    };

    let mut table = Table::new(&["N", "mse"]);
    for &(n, m) in &rows {
        table.push(vec![n.to_string(), csv_float(m)]);
    }
    table.write(&out.join("lemma1.csv"))?;
    let plot = LinePlot {
        title: format!("coded MSE vs N, f={func}, K={k}"),
        x_label: "N".into(),
        y_label: "mse".into(),
        log_x: true,
        log_y: true,
        series: vec![(func.to_string(), rows.iter().map(|&(n, m)| (n as f64, m)).collect())],
    };
    write_file(&out.join("lemma1.svg"), plot.render().as_bytes())?;

    let mut report = Report::default();
    report.add("fn", func);
    report.add("K", k);
    report.add("seed", seed);
    match slope {
        Some(s) => report.add("slope", format!("{s:.3}")),
        None => report.add("slope", "exact"),
    }
    finish_dir(cfg, out, &report)?;
    Ok(Lemma1 { rows, slope, report })
}

/// Builds and validates the training plan, listing every problem.
pub fn train_plan(cfg: &RunConfig) -> Result<TrainPlan> {
    let mut r = Reader::new(cfg);
    let seed: Option<u64> = r.get("seed");
    let kind: Option<DatasetKind> = r.get("train.dataset");
    let n_train: Option<usize> = r.get("train.n_train");
    let n_test: Option<usize> = r.get("train.n_test");
    let noise: Option<f64> = r.get("train.noise");
    let hidden: Option<Vec<usize>> = r.list("train.hidden");
    let activation: Option<Activation> = r.get("train.activation");
    let epochs: Option<usize> = r.get("train.epochs");
    let batch_size: Option<usize> = r.get("train.batch_size");
    let lr: Option<f64> = r.get("train.lr");
    let decay: Option<Vec<usize>> = r.list("train.lr_decay_epochs");
    let momentum: Option<f64> = r.get("train.momentum");
    let method_name: Option<String> = r.get("train.method");
    let mu: Option<f64> = r.get("train.mu");
    let gamma: Option<f64> = r.get("train.gamma");
    let schedule: Option<NSchedule> = r.get("train.schedule");
    let alpha: Option<f64> = r.get("train.mixup_alpha");

    let method = match method_name.as_deref() {
        Some("erm") => Some(Method::Erm),
        Some("mixup") => alpha.map(|alpha| Method::Mixup { alpha }),
        Some("coded") => match (mu, gamma, schedule) {
            (Some(mu), Some(gamma), Some(schedule)) => Some(Method::Coded { mu, gamma, schedule }),
            _ => None,
        },
        Some(other) => {
            r.problems
                .push(format!("train.method={other:?}: expected erm, mixup or coded"));
            None
        }
        None => None,
    };
    if let Some(h) = &hidden {
        r.check(h.iter().all(|&w| w > 0), || "train.hidden widths must be positive".into());
    }

    let (
        Some(seed),
        Some(kind),
        Some(n_train),
        Some(n_test),
        Some(noise),
        Some(hidden),
        Some(activation),
        Some(epochs),
        Some(batch_size),
        Some(lr),
        Some(decay),
        Some(momentum),
        Some(method),
    ) = (
        seed, kind, n_train, n_test, noise, hidden, activation, epochs, batch_size, lr, decay, momentum, method,
    )
    else {
        return Err(CliError::Validation(r.problems));
    };
    let mut widths = vec![kind.input_dim()];
    widths.extend(hidden.iter().copied().filter(|&w| w > 0));
    widths.push(kind.output_dim());
    let plan = TrainPlan {
        dataset: DatasetSpec {
            kind,
            n_train,
            n_test,
            noise,
            seed,
        },
        model: MlpSpec::new(widths, activation)?,
        epochs,
        batch_size,
        lr,
        lr_decay_epochs: decay,
        momentum,
        seed,
        method,
    };
    r.check(noise >= 0.0, || format!("train.noise must be >= 0, got {noise}"));
    r.problems.extend(plan.problems());
    r.finish()?;
    Ok(plan)
}

pub fn metrics_table(m: &Metrics) -> Table {
    let mut t = Table::new(&["epoch", "loss_main", "loss_coded", "test_metric", "N"]);
    for e in &m.epochs {
        t.push(vec![
            e.epoch.to_string(),
            csv_float(e.loss_main),
            csv_opt(e.loss_coded),
            csv_float(e.test_metric),
            e.n.map(|n| n.to_string()).unwrap_or_default(),
        ]);
    }
    t
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub outcome: TrainOutcome,
    pub report: Report,
}

pub fn train(cfg: &RunConfig, out: &Path) -> Result<Trained> {
    let plan = train_plan(cfg)?;
    let outcome = train::train(&plan)?;
    metrics_table(&outcome.metrics).write(&out.join("metrics.csv"))?;
    write_file(
        &out.join("model.bin"),
        &encode_model(&outcome.model, plan.seed, plan.method.name()),
    )?;

    let mut series = vec![(
        "main".to_string(),
        outcome.metrics.epochs.iter().map(|e| (e.epoch as f64, e.loss_main)).collect(),
    )];
    let coded: Vec<(f64, f64)> = outcome
        .metrics
        .epochs
        .iter()
        .filter_map(|e| Some((e.epoch as f64, e.loss_coded?)))
        .collect();
    if !coded.is_empty() {
        series.push(("coded".to_string(), coded));
    }
    let plot = LinePlot {
        title: format!("training loss, {} on {}", plan.method.name(), plan.dataset.kind),
        x_label: "epoch".into(),
        y_label: "loss".into(),
        log_x: false,
        log_y: true,
        series,
    };
    write_file(&out.join("loss.svg"), plot.render().as_bytes())?;

    let last = outcome.metrics.last();
    let mut report = Report::default();
    report.add("method", plan.method.name());
    report.add("dataset", plan.dataset.kind);
    report.add("seed", plan.seed);
    report.add("epochs", plan.epochs);
    report.add("test_metric", csv_float(last.test_metric));
    if let Some(s) = outcome.metrics.boundary_smoothness {
        report.add("boundary_smoothness", csv_float(s));
    }
    finish_dir(cfg, out, &report)?;
    Ok(Trained { outcome, report })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackRow {
    pub method: String,
    pub inference_mode: String,
    pub attack: String,
    pub epsilon: Option<f64>,
    pub steps: usize,
    pub n_prime: Option<usize>,
    pub seed: u64,
    pub accuracy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum AttackKind {
    None,
    Fgsm,
    Pgd,
}

impl std::str::FromStr for AttackKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(AttackKind::None),
            "fgsm" => Ok(AttackKind::Fgsm),
            "pgd" => Ok(AttackKind::Pgd),
            other => Err(format!("unknown attack {other:?} (none, fgsm, pgd)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ModeKind {
    Standard,
    Rci,
}

impl std::str::FromStr for ModeKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "standard" => Ok(ModeKind::Standard),
            "rci" => Ok(ModeKind::Rci),
            other => Err(format!("unknown inference mode {other:?} (standard, rci)")),
        }
    }
}

pub fn attack(cfg: &RunConfig, out: &Path) -> Result<Vec<AttackRow>> {
    let plan = train_plan(cfg)?;
    let mut r = Reader::new(cfg);
    let model_path: Option<String> = r.get("attack.model");
    let epsilon: Option<f64> = r.get("attack.epsilon");
    let pgd_steps: Option<usize> = r.get("attack.pgd_steps");
    let trials: Option<usize> = r.get("attack.trials");
    let k_prime: Option<usize> = r.get("attack.k_prime");
    let n_prime: Option<usize> = r.get("attack.n_prime");
    let attacks: Option<Vec<AttackKind>> = r.non_empty_list("attack.attacks");
    let modes: Option<Vec<ModeKind>> = r.non_empty_list("attack.modes");
    if let Some(p) = &model_path {
        r.check(!p.is_empty(), || "attack.model must name a model file".into());
    }
    if let Some(e) = epsilon {
        r.check(e > 0.0 && e.is_finite(), || format!("attack.epsilon must be > 0, got {e}"));
    }
    if let Some(s) = pgd_steps {
        r.check(s >= 1, || "attack.pgd_steps must be >= 1".into());
    }
    if let Some(t) = trials {
        r.check(t >= 1, || "attack.trials must be >= 1".into());
    }
    if let (Some(k), Some(n)) = (k_prime, n_prime) {
        r.check(k >= 4 && n >= 4, || format!("attack.k_prime and attack.n_prime must be >= 4, got {k} and {n}"));
        r.check(k <= plan.dataset.n_test, || {
            format!("attack.k_prime ({k}) exceeds train.n_test ({})", plan.dataset.n_test)
        });
    }
    r.check(plan.dataset.kind.is_classification(), || {
        format!("attacks need a classification dataset, got {}", plan.dataset.kind)
    });
    r.finish()?;
    let (model_path, epsilon, pgd_steps, trials, k_prime, n_prime, attacks, modes) = (
        model_path.unwrap(),
        epsilon.unwrap(),
        pgd_steps.unwrap(),
        trials.unwrap(),
        k_prime.unwrap(),
        n_prime.unwrap(),
        attacks.unwrap(),
        modes.unwrap(),
    );

    let bytes = std::fs::read(&model_path).map_err(|e| CliError::io(&model_path, e))?;
    let (header, model) = decode_model(&bytes)?;
    if header.spec != plan.model {
        return Err(CliError::invalid(format!(
            "model file {model_path} has widths {:?} ({}), config expects {:?} ({})",
            header.spec.widths, header.spec.activation, plan.model.widths, plan.model.activation
        )));
    }
    let (_, test) = make_dataset(&plan.dataset)?;
    let labels = test.labels().expect("classification dataset").to_vec();

    let mut rows = Vec::new();
    for kind in attacks {
        let (spec, name) = match kind {
            AttackKind::None => (None, "none".to_string()),
            AttackKind::Fgsm => (Some(AttackSpec::Fgsm { epsilon }), "fgsm".to_string()),
            AttackKind::Pgd => {
                let s = AttackSpec::pgd(epsilon, pgd_steps);
                (Some(s), s.to_string())
            }
        };
        let x = match &spec {
            Some(s) => craft(&model, &test, s, plan.seed)?,
            None => test.x.clone(),
        };
        for &mode in &modes {
            let (inference, n_col) = match mode {
                ModeKind::Standard => (InferenceMode::Standard, None),
                ModeKind::Rci => (
                    InferenceMode::Rci {
                        n_prime,
                        k_prime,
                        seed: plan.seed,
                    },
                    Some(n_prime),
                ),
            };
            rows.push(AttackRow {
                method: header.method.clone(),
                inference_mode: inference.name().to_string(),
                attack: name.clone(),
                epsilon: spec.map(|s| s.epsilon()),
                steps: spec.map(|s| s.steps()).unwrap_or(0),
                n_prime: n_col,
                seed: plan.seed,
                accuracy: score(&model, &x, &labels, inference, trials)?,
            });
        }
    }

    let mut table = Table::new(&[
        "method",
        "inference_mode",
        "attack",
        "epsilon",
        "steps",
        "N_prime",
        "seed",
        "accuracy",
    ]);
    for row in &rows {
        table.push(vec![
            row.method.clone(),
            row.inference_mode.clone(),
            row.attack.clone(),
            csv_opt(row.epsilon),
            row.steps.to_string(),
            row.n_prime.map(|n| n.to_string()).unwrap_or_default(),
            row.seed.to_string(),
            csv_float(row.accuracy),
        ]);
    }
    table.write(&out.join("attack.csv"))?;
    let mut report = Report::default();
    for row in &rows {
        report.add(&format!("{}.{}", row.inference_mode, row.attack), format!("{:.4}", row.accuracy));
    }
    finish_dir(cfg, out, &report)?;
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub report: SimReport,
    /// Over the whole grid; `None` when it cannot be fitted.
    pub exponent: Option<f64>,
    /// Over the `S = 0` cells only.
    pub exponent_s0: Option<f64>,
    pub summary: Report,
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Simulation> {
    let mut r = Reader::new(cfg);
    let seed: Option<u64> = r.get("seed");
    let k: Option<usize> = r.get("sim.K");
    let ns: Option<Vec<usize>> = r.non_empty_list("sim.N");
    let ss: Option<Vec<usize>> = r.non_empty_list("sim.S");
    let policy: Option<StragglerPolicy> = r.get("sim.policy");
    let func: Option<ScalarFn> = r.get("sim.fn");
    let num_seeds: Option<u64> = r.get("sim.num_seeds");
    if let Some(k) = k {
        r.check(k >= 4, || format!("sim.K must be >= 4, got {k}"));
    }
    if let Some(n) = num_seeds {
        r.check(n >= 1, || "sim.num_seeds must be >= 1".into());
    }
    if let (Some(ns), Some(ss)) = (&ns, &ss) {
        for &n in ns {
            r.check(n >= 4, || format!("sim.N entries must be >= 4, got {n}"));
            for &s in ss {
                r.check(n < 4 || s + 4 <= n, || format!("S={s} leaves fewer than 4 of N={n} results"));
            }
        }
    }
    r.finish()?;
    let (seed, k, ns, ss, policy, func, num_seeds) = (
        seed.unwrap(),
        k.unwrap(),
        ns.unwrap(),
        ss.unwrap(),
        policy.unwrap(),
        func.unwrap(),
        num_seeds.unwrap(),
    );

    let x = uniform_inputs(k, seed);
    let seeds: Vec<u64> = (0..num_seeds).map(|i| seed.wrapping_add(i)).collect();
    let report = sim_sweep(scalar_fn(func), &x, &ns, &ss, policy, &seeds)?;
    let exponent = fit_scaling_exponent(&report).ok();
    let exponent_s0 = fit_scaling_exponent(&report.filter(|c| c.s == 0)).ok();

    let mut table = Table::new(&["N", "S", "policy", "seed", "mse"]);
    for c in &report.cells {
        for &(sd, mse) in &c.runs {
            table.push(vec![
                c.n.to_string(),
                c.s.to_string(),
                policy.to_string(),
                sd.to_string(),
                csv_float(mse),
            ]);
        }
    }
    table.write(&out.join("sim.csv"))?;
    let series = ss
        .iter()
        .map(|&s| {
            let pts = report
                .cells
                .iter()
                .filter(|c| c.s == s)
                .map(|c| (c.ratio(), c.mean_mse))
                .collect();
            (format!("S={s}"), pts)
        })
        .collect();
    let plot = LinePlot {
        title: format!("straggler MSE, f={func}, K={k}, {policy}"),
        x_label: "(S+1)/N".into(),
        y_label: "mean mse".into(),
        log_x: true,
        log_y: true,
        series,
    };
    write_file(&out.join("sim.svg"), plot.render().as_bytes())?;

    let mut summary = Report::default();
    summary.add("fn", func);
    summary.add("K", k);
    summary.add("policy", policy);
    summary.add("seeds", num_seeds);
    let fmt = |e: Option<f64>| e.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into());
    summary.add("exponent", fmt(exponent));
    summary.add("exponent_S0", fmt(exponent_s0));
    finish_dir(cfg, out, &summary)?;
    Ok(Simulation {
        report,
        exponent,
        exponent_s0,
        summary,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Mu,
    N,
    Gamma,
    BatchSize,
}

impl std::str::FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mu" => Ok(SweepParam::Mu),
            "N" => Ok(SweepParam::N),
            "gamma" => Ok(SweepParam::Gamma),
            "batch_size" => Ok(SweepParam::BatchSize),
            other => Err(format!("unknown sweep parameter {other:?} (mu, N, gamma, batch_size)")),
        }
    }
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Mu => "mu",
            SweepParam::N => "N",
            SweepParam::Gamma => "gamma",
            SweepParam::BatchSize => "batch_size",
        }
    }

    fn is_integer(self) -> bool {
        matches!(self, SweepParam::N | SweepParam::BatchSize)
    }

    fn apply(self, base: &TrainPlan, value: f64) -> std::result::Result<TrainPlan, String> {
        let mut plan = base.clone();
        if self.is_integer() && (value.fract() != 0.0 || value < 1.0) {
            return Err(format!("{} values must be positive integers, got {value}", self.name()));
        }
        let coded = |plan: &TrainPlan| match plan.method {
            Method::Coded { mu, gamma, schedule } => Ok((mu, gamma, schedule)),
            _ => Err(format!("sweeping {} needs train.method=coded", self.name())),
        };
        match self {
            SweepParam::Mu => {
                let (_, gamma, schedule) = coded(&plan)?;
                plan.method = Method::Coded { mu: value, gamma, schedule };
            }
            SweepParam::Gamma => {
                let (mu, _, schedule) = coded(&plan)?;
                plan.method = Method::Coded { mu, gamma: value, schedule };
            }
            SweepParam::N => {
                let (mu, _, _) = coded(&plan)?;
                plan.method = Method::Coded {
                    mu,
                    gamma: value / plan.batch_size as f64,
                    schedule: NSchedule::Constant,
                };
            }
            SweepParam::BatchSize => plan.batch_size = value as usize,
        }
        match plan.problems().as_slice() {
            [] => Ok(plan),
            p => Err(format!("{}={value}: {}", self.name(), p.join("; "))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub seed: u64,
    pub test_metric: f64,
    pub boundary_smoothness: Option<f64>,
    pub loss_main: f64,
}

pub fn sweep(cfg: &RunConfig, out: &Path, threads: Option<usize>) -> Result<Vec<SweepRow>> {
    let base = train_plan(cfg)?;
    let mut r = Reader::new(cfg);
    let param: Option<SweepParam> = r.get("sweep.param");
    let values: Option<Vec<f64>> = r.non_empty_list("sweep.values");
    let num_seeds: Option<u64> = r.get("sweep.num_seeds");
    if let Some(n) = num_seeds {
        r.check(n >= 1, || "sweep.num_seeds must be >= 1".into());
    }
    if let Some(t) = threads {
        r.check(t >= 1, || "--threads must be >= 1".into());
    }
    let mut cells = Vec::new();
    if let (Some(param), Some(values), Some(num_seeds)) = (param, &values, num_seeds) {
        for &v in values {
            match param.apply(&base, v) {
                Ok(plan) => {
                    for i in 0..num_seeds {
                        let mut p = plan.clone();
                        p.seed = base.seed.wrapping_add(i);
                        p.dataset.seed = p.seed;
                        cells.push((v, p));
                    }
                }
                Err(e) => r.problems.push(e),
            }
        }
    }
    r.finish()?;
    let param = param.unwrap();

    let run = || -> Vec<coded_smoothing::Result<TrainOutcome>> {
        cells.par_iter().map(|(_, plan)| train::train(plan)).collect()
    };
    let results = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(run),
        None => run(),
    };

    let mut rows = Vec::with_capacity(cells.len());
    for ((value, plan), res) in cells.iter().zip(results) {
        let outcome = res?;
        let last = outcome.metrics.last();
        rows.push(SweepRow {
            param,
            value: *value,
            seed: plan.seed,
            test_metric: last.test_metric,
            boundary_smoothness: outcome.metrics.boundary_smoothness,
            loss_main: last.loss_main,
        });
    }

    let fmt_value = |v: f64| if param.is_integer() { format!("{}", v as u64) } else { csv_float(v) };
    let mut table = Table::new(&["param", "value", "seed", "test_metric", "boundary_smoothness", "loss_main"]);
    for row in &rows {
        table.push(vec![
            param.name().to_string(),
            fmt_value(row.value),
            row.seed.to_string(),
            csv_float(row.test_metric),
            csv_opt(row.boundary_smoothness),
            csv_float(row.loss_main),
        ]);
    }
    table.write(&out.join("sweep.csv"))?;

    let values = values.unwrap();
    let means: Vec<(f64, f64)> = values
        .iter()
        .map(|&v| {
            let hits: Vec<f64> = rows.iter().filter(|r| r.value == v).map(|r| r.test_metric).collect();
            (v, hits.iter().sum::<f64>() / hits.len() as f64)
        })
        .collect();
    let plot = LinePlot {
        title: format!("{} sweep, {}", param.name(), base.dataset.kind),
        x_label: param.name().into(),
        y_label: "mean test metric".into(),
        log_x: false,
        log_y: false,
        series: vec![("test".into(), means.clone())],
    };
    write_file(&out.join("sweep.svg"), plot.render().as_bytes())?;
    let mut report = Report::default();
    report.add("param", param.name());
    for (v, m) in means {
        report.add(&format!("mean_test_metric[{}]", fmt_value(v)), format!("{m:.4}"));
    }
    finish_dir(cfg, out, &report)?;
    Ok(rows)
}
