//! Fully connected networks and their on-disk format.
//!
//! File layout: the 8-byte magic `CSMODEL1`, a UTF-8 header of `key=value`
//! lines ending with an empty line, then every parameter as little-endian
//! `f64`, layer by layer (weights `[in × out]` row-major, then bias).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::autodiff::{Gradients, Parameter, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 8] = b"CSMODEL1";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::invalid(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid(format!("bad layer widths {widths:?}")));
        }
        Ok(Self { widths, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    pub fn num_parameters(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<Parameter>,
}

impl Mlp {
    /// Uniform fan-in initialization (He bound for ReLU, Glorot for tanh),
    /// zero biases.
    pub fn init<R: Rng>(spec: MlpSpec, rng: &mut R) -> Self {
        let mut params = Vec::new();
        for w in spec.widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = match spec.activation {
                Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                Activation::Tanh => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            };
            let dist = Uniform::new_inclusive(-bound, bound);
            let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
            params.push(Parameter::new(Tensor::raw(vec![fan_in, fan_out], data)));
            params.push(Parameter::new(Tensor::zeros(&[1, fan_out])));
        }
        Self { spec, params }
    }

    /// All-zero network; a constant map.
    pub fn zeros(spec: MlpSpec) -> Self {
        let params = spec
            .widths
            .windows(2)
            .flat_map(|w| [Tensor::zeros(&[w[0], w[1]]), Tensor::zeros(&[1, w[1]])])
            .map(Parameter::new)
            .collect();
        Self { spec, params }
    }

    /// Builds a network from explicit layer tensors `[W0, b0, W1, b1, …]`.
    pub fn from_tensors(spec: MlpSpec, tensors: Vec<Tensor>) -> Result<Self> {
        let expected: Vec<Vec<usize>> = spec
            .widths
            .windows(2)
            .flat_map(|w| [vec![w[0], w[1]], vec![1, w[1]]])
            .collect();
        if tensors.len() != expected.len()
            || tensors.iter().zip(&expected).any(|(t, e)| t.shape() != e.as_slice())
        {
            return Err(Error::invalid("parameter shapes do not match the layer widths"));
        }
        Ok(Self {
            spec,
            params: tensors.into_iter().map(Parameter::new).collect(),
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Registers every parameter as a differentiable leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params.iter().map(|p| tape.var(p.value.clone())).collect()
    }

    /// Registers the parameters as constants (no parameter gradients).
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params
            .iter()
            .map(|p| tape.constant(p.value.clone()))
            .collect()
    }

    pub fn forward<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>> {
        let layers = params.len() / 2;
        let mut h = x;
        for (l, wb) in params.chunks(2).enumerate() {
            h = h.matmul(wb[0])?.add_row(wb[1])?;
            if l + 1 < layers {
                h = match self.spec.activation {
                    Activation::Relu => h.relu(),
                    Activation::Tanh => h.tanh(),
                };
            }
        }
        Ok(h)
    }

    /// Gradient-free forward pass.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let params = self.bind_frozen(&tape);
        let out = self.forward(&params, tape.constant(x.clone()))?;
        let v = (*out.value()).clone();
        Ok(v)
    }

    /// Adds the gradients reached at `vars` into each parameter's accumulator.
    pub fn accumulate(&mut self, grads: &Gradients, vars: &[Var<'_>]) {
        for (p, v) in self.params.iter_mut().zip(vars) {
            if let Some(g) = grads.get(*v) {
                p.accumulate(g);
            }
        }
    }

    pub fn flat_parameters(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }

    fn set_flat_parameters(&mut self, flat: &[f64]) {
        let mut off = 0;
        for p in &mut self.params {
            let n = p.value.numel();
            p.value.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }
}

/// Text header of a model file.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelHeader {
    pub spec: MlpSpec,
    pub seed: u64,
    pub method: String,
}

pub fn encode_model(model: &Mlp, seed: u64, method: &str) -> Vec<u8> {
    let widths: Vec<String> = model.spec.widths.iter().map(usize::to_string).collect();
    let mut out = MODEL_MAGIC.to_vec();
    let header = format!(
        "version={MODEL_VERSION}\nwidths={}\nactivation={}\nseed={seed}\nmethod={method}\nparameters={}\n\n",
        widths.join(","),
        model.spec.activation,
        model.num_parameters()
    );
    out.extend_from_slice(header.as_bytes());
    for v in model.flat_parameters() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<(ModelHeader, Mlp)> {
    let bad = |m: &str| Error::invalid(format!("model file: {m}"));
    let rest = bytes
        .strip_prefix(MODEL_MAGIC.as_slice())
        .ok_or_else(|| bad("missing magic"))?;
    let end = rest
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| bad("unterminated header"))?;
    let header = std::str::from_utf8(&rest[..end]).map_err(|_| bad("header is not UTF-8"))?;
    let body = &rest[end + 2..];

    let mut version = None;
    let mut widths = None;
    let mut activation = None;
    let mut seed = None;
    let mut method = None;
    let mut count = None;
    for line in header.lines() {
        let (k, v) = line.split_once('=').ok_or_else(|| bad("malformed header line"))?;
        match k {
            "version" => version = v.parse::<u32>().ok(),
            "widths" => {
                widths = v
                    .split(',')
                    .map(|w| w.parse::<usize>().ok())
                    .collect::<Option<Vec<_>>>()
            }
            "activation" => activation = Some(v.parse::<Activation>()?),
            "seed" => seed = v.parse::<u64>().ok(),
            "method" => method = Some(v.to_string()),
            "parameters" => count = v.parse::<usize>().ok(),
            other => return Err(bad(&format!("unknown header key {other:?}"))),
        }
    }
    if version != Some(MODEL_VERSION) {
        return Err(bad("unsupported version"));
    }
    let spec = MlpSpec::new(
        widths.ok_or_else(|| bad("missing widths"))?,
        activation.ok_or_else(|| bad("missing activation"))?,
    )?;
    let count = count.ok_or_else(|| bad("missing parameter count"))?;
    if count != spec.num_parameters() || body.len() != count * 8 {
        return Err(bad("parameter block size does not match widths"));
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let mut model = Mlp::zeros(spec.clone());
    model.set_flat_parameters(&flat);
    Ok((
        ModelHeader {
            spec,
            seed: seed.ok_or_else(|| bad("missing seed"))?,
            method: method.ok_or_else(|| bad("missing method"))?,
        },
        model,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec() -> MlpSpec {
        MlpSpec::new(vec![2, 5, 3], Activation::Tanh).unwrap()
    }

    #[test]
    fn shapes_and_counts() {
        let m = Mlp::init(spec(), &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(m.num_parameters(), 2 * 5 + 5 + 5 * 3 + 3);
        assert_eq!(m.spec().num_parameters(), m.num_parameters());
        let y = m.predict(&Tensor::zeros(&[4, 2])).unwrap();
        assert_eq!(y.shape(), &[4, 3]);
        assert!(MlpSpec::new(vec![2], Activation::Relu).is_err());
    }

    #[test]
    fn file_round_trip() {
        let m = Mlp::init(spec(), &mut ChaCha8Rng::seed_from_u64(3));
        let bytes = encode_model(&m, 42, "coded");
        assert_eq!(&bytes[..8], MODEL_MAGIC);
        let (h, back) = decode_model(&bytes).unwrap();
        assert_eq!(h.seed, 42);
        assert_eq!(h.method, "coded");
        assert_eq!(h.spec, *m.spec());
        assert_eq!(back.flat_parameters(), m.flat_parameters());
    }

    #[test]
    fn file_rejects_corruption() {
        let m = Mlp::init(spec(), &mut ChaCha8Rng::seed_from_u64(3));
        let bytes = encode_model(&m, 1, "erm");
        assert!(decode_model(&bytes[1..]).is_err());
        assert!(decode_model(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn from_tensors_checks_shapes() {
        let s = MlpSpec::new(vec![2, 1], Activation::Relu).unwrap();
        assert!(Mlp::from_tensors(s.clone(), vec![Tensor::zeros(&[2, 1])]).is_err());
        let m = Mlp::from_tensors(s, vec![Tensor::zeros(&[2, 1]), Tensor::zeros(&[1, 1])]);
        assert!(m.is_ok());
    }
}
