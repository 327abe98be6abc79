//! FGSM/PGD attacks and randomized coded inference (RCI).
//!
//! Adversarial examples are always crafted white-box against the plain,
//! deterministic forward pass. They are then scored either by that same
//! pass or by RCI, which shuffles each batch with a fresh uniform
//! permutation before encoding and restores the order after decoding.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::autodiff::Tape;
use crate::coded::CodedSmoothingModule;
use crate::data::{one_hot, Dataset};
use crate::error::{Error, Result};
use crate::model::Mlp;
use crate::rng::{indexed, stream, Stream};
use crate::tensor::Tensor;
use crate::train::accuracy;

/// A bijection on `0..k` stored with its inverse.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl Permutation {
    pub fn identity(k: usize) -> Self {
        let forward: Vec<usize> = (0..k).collect();
        Self {
            inverse: forward.clone(),
            forward,
        }
    }

    /// Uniform over the symmetric group (Fisher–Yates).
    pub fn random<R: Rng>(k: usize, rng: &mut R) -> Self {
        let mut forward: Vec<usize> = (0..k).collect();
        forward.shuffle(rng);
        Self::from_vec(forward).expect("shuffle yields a bijection")
    }

    pub fn from_vec(forward: Vec<usize>) -> Result<Self> {
        let k = forward.len();
        let mut inverse = vec![usize::MAX; k];
        for (i, &p) in forward.iter().enumerate() {
            if p >= k || inverse[p] != usize::MAX {
                return Err(Error::invalid("not a permutation"));
            }
            inverse[p] = i;
        }
        Ok(Self { forward, inverse })
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    /// Row `i` of the result is row `π(i)` of `x`.
    pub fn permute(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        Ok(x.select_rows(&self.forward))
    }

    /// Undoes [`Permutation::permute`].
    pub fn unpermute(&self, y: &Tensor) -> Result<Tensor> {
        self.check(y)?;
        Ok(y.select_rows(&self.inverse))
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.rows() != self.len() {
            return Err(Error::shape("permutation", &[self.len()], x.shape()));
        }
        Ok(())
    }
}

/// `π⁻¹ ∘ decode ∘ model ∘ encode ∘ π` for a given permutation.
pub fn rci_forward_with(
    model: &Mlp,
    module: &CodedSmoothingModule,
    x: &Tensor,
    perm: &Permutation,
) -> Result<Tensor> {
    let shuffled = perm.permute(x)?;
    let est = module.forward(&shuffled, |z| model.predict(z))?;
    perm.unpermute(&est)
}

/// RCI with a fresh permutation drawn from `rng`.
pub fn rci_forward<R: Rng>(
    model: &Mlp,
    module: &CodedSmoothingModule,
    x: &Tensor,
    rng: &mut R,
) -> Result<Tensor> {
    if x.rows() != module.k() {
        return Err(Error::shape("rci_forward", &[module.k()], x.shape()));
    }
    let perm = Permutation::random(module.k(), rng);
    rci_forward_with(model, module, x, &perm)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AttackSpec {
    Fgsm { epsilon: f64 },
    Pgd {
        epsilon: f64,
        steps: usize,
        step_size: f64,
        random_start: bool,
    },
}

impl AttackSpec {
    /// PGD with a random start and step `ε/4`.
    pub fn pgd(epsilon: f64, steps: usize) -> Self {
        AttackSpec::Pgd {
            epsilon,
            steps,
            step_size: epsilon / 4.0,
            random_start: true,
        }
    }

    pub fn epsilon(&self) -> f64 {
        match *self {
            AttackSpec::Fgsm { epsilon } | AttackSpec::Pgd { epsilon, .. } => epsilon,
        }
    }

    pub fn steps(&self) -> usize {
        match *self {
            AttackSpec::Fgsm { .. } => 1,
            AttackSpec::Pgd { steps, .. } => steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eps = self.epsilon();
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::invalid(format!("epsilon must be > 0, got {eps}")));
        }
        if let AttackSpec::Pgd { steps, step_size, .. } = *self {
            if steps == 0 {
                return Err(Error::invalid("PGD needs at least one step"));
            }
            if !(step_size > 0.0) {
                return Err(Error::invalid(format!("step_size must be > 0, got {step_size}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for AttackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackSpec::Fgsm { .. } => f.write_str("fgsm"),
            AttackSpec::Pgd { steps, .. } => write!(f, "pgd{steps}"),
        }
    }
}

/// Closed input box for clipping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputBox {
    pub lo: f64,
    pub hi: f64,
}

impl Default for InputBox {
    fn default() -> Self {
        Self { lo: -1.0, hi: 1.0 }
    }
}

/// Gradient of the mean cross-entropy with respect to the input.
pub fn input_gradient(model: &Mlp, x: &Tensor, target: &Tensor) -> Result<Tensor> {
    let tape = Tape::new();
    let params = model.bind_frozen(&tape);
    let xv = tape.var(x.clone());
    let loss = model.forward(&params, xv)?.softmax_cross_entropy(target)?;
    Ok(tape.backward(loss)?.wrt(xv))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `clip(x + ε·sign(∇ₓ ℓ), box)`.
pub fn fgsm(model: &Mlp, x: &Tensor, target: &Tensor, epsilon: f64, clip: InputBox) -> Result<Tensor> {
    let g = input_gradient(model, x, target)?;
    x.zip_map(&g, |x, g| (x + epsilon * sign(g)).clamp(clip.lo, clip.hi))
}

/// Projected gradient ascent in the `ℓ∞` ball of radius `ε` around `x`.
pub fn pgd<R: Rng>(
    model: &Mlp,
    x: &Tensor,
    target: &Tensor,
    spec: &AttackSpec,
    clip: InputBox,
    rng: &mut R,
) -> Result<Tensor> {
    spec.validate()?;
    let (epsilon, steps, step_size, random_start) = match *spec {
        AttackSpec::Fgsm { epsilon } => (epsilon, 1, epsilon, false),
        AttackSpec::Pgd {
            epsilon,
            steps,
            step_size,
            random_start,
        } => (epsilon, steps, step_size, random_start),
    };
    let mut adv = x.clone();
    if random_start {
        let u = Uniform::new_inclusive(-epsilon, epsilon);
        for v in adv.data_mut() {
            *v = (*v + u.sample(rng)).clamp(clip.lo, clip.hi);
        }
    }
    for _ in 0..steps {
        let g = input_gradient(model, &adv, target)?;
        let stepped = adv.zip_map(&g, |a, g| a + step_size * sign(g))?;
        adv = stepped.zip_map(x, |a, x0| {
            a.clamp(x0 - epsilon, x0 + epsilon).clamp(clip.lo, clip.hi)
        })?;
    }
    Ok(adv)
}

/// Crafts adversarial examples for a whole labelled set.
pub fn craft(model: &Mlp, data: &Dataset, attack: &AttackSpec, seed: u64) -> Result<Tensor> {
    attack.validate()?;
    let (labels, classes) = labelled(data)?;
    let target = one_hot(labels, classes);
    let clip = InputBox::default();
    match *attack {
        AttackSpec::Fgsm { epsilon } => fgsm(model, &data.x, &target, epsilon, clip),
        AttackSpec::Pgd { .. } => pgd(model, &data.x, &target, attack, clip, &mut stream(seed, Stream::Attack)),
    }
}

fn labelled(data: &Dataset) -> Result<(&[usize], usize)> {
    match &data.target {
        crate::data::Target::Labels { labels, classes } => Ok((labels, *classes)),
        _ => Err(Error::invalid("robust evaluation needs a classification dataset")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InferenceMode {
    Standard,
    Rci { n_prime: usize, k_prime: usize, seed: u64 },
}

impl InferenceMode {
    pub fn name(&self) -> &'static str {
        match self {
            InferenceMode::Standard => "standard",
            InferenceMode::Rci { .. } => "rci",
        }
    }
}

/// RCI predictions for every row of `x`, batching by `K′`.
///
/// A trailing partial batch is topped up with rows from the start of `x`;
/// predictions for those filler rows are discarded.
pub fn rci_predict(model: &Mlp, x: &Tensor, n_prime: usize, k_prime: usize, seed: u64, trial: u64) -> Result<Tensor> {
    let module = CodedSmoothingModule::new(k_prime, n_prime)?;
    let rows = x.rows();
    if rows < k_prime {
        return Err(Error::invalid(format!(
            "RCI needs at least K' = {k_prime} rows, got {rows}"
        )));
    }
    let mut parts = Vec::new();
    for (b, start) in (0..rows).step_by(k_prime).enumerate() {
        let real = k_prime.min(rows - start);
        let idx: Vec<usize> = (start..start + real).chain(0..k_prime - real).collect();
        let mut rng = indexed(seed.wrapping_add(trial.wrapping_mul(0x1000_0000_01B3)), Stream::Permutation, b as u64);
        let out = rci_forward(model, &module, &x.select_rows(&idx), &mut rng)?;
        let keep: Vec<usize> = (0..real).collect();
        parts.push(out.select_rows(&keep));
    }
    Tensor::concat_rows(&parts)
}

/// Accuracy of `mode` on `data`, optionally under attack.
///
/// RCI accuracy is averaged over `trials` independent permutation draws.
pub fn robust_eval(
    model: &Mlp,
    data: &Dataset,
    attack: Option<&AttackSpec>,
    mode: InferenceMode,
    trials: usize,
    attack_seed: u64,
) -> Result<f64> {
    let (labels, _) = labelled(data)?;
    let x = match attack {
        Some(a) => craft(model, data, a, attack_seed)?,
        None => data.x.clone(),
    };
    score(model, &x, labels, mode, trials)
}

/// Accuracy of `mode` on already prepared inputs.
pub fn score(model: &Mlp, x: &Tensor, labels: &[usize], mode: InferenceMode, trials: usize) -> Result<f64> {
    match mode {
        InferenceMode::Standard => Ok(accuracy(&model.predict(x)?, labels)),
        InferenceMode::Rci { n_prime, k_prime, seed } => {
            if trials == 0 {
                return Err(Error::invalid("RCI evaluation needs at least one trial"));
            }
            let mut total = 0.0;
            for t in 0..trials {
                let out = rci_predict(model, x, n_prime, k_prime, seed, t as u64)?;
                total += accuracy(&out, labels);
            }
            Ok(total / trials as f64)
        }
    }
}
