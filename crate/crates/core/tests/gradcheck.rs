use std::sync::Arc;

use coded_smoothing::rng::{stream, Stream};
use coded_smoothing::{Activation, CodedSmoothingModule, Mlp, MlpSpec, Tape, Tensor};
use rand::Rng;

const H: f64 = 1e-5;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = stream(seed, Stream::Inputs);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn central_difference(x: &Tensor, f: impl Fn(&Tensor) -> f64) -> Tensor {
    let mut g = Tensor::zeros(x.shape());
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += H;
        let mut minus = x.clone();
        minus.data_mut()[i] -= H;
        g.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * H);
    }
    g
}

fn rel_err(analytic: &Tensor, numeric: &Tensor) -> f64 {
    analytic.sub(numeric).unwrap().norm() / numeric.norm().max(1e-12)
}

#[test]
fn matmul_sum_wrt_left() {
    let a = random(&[3, 4], 1);
    let b = random(&[4, 2], 2);
    let tape = Tape::new();
    let va = tape.var(a.clone());
    let out = va.matmul(tape.constant(b.clone())).unwrap().sum();
    let g = tape.backward(out).unwrap().wrt(va);
    let num = central_difference(&a, |a| a.matmul(&b).unwrap().sum());
    assert!(rel_err(&g, &num) <= 1e-6);
}

#[test]
fn linear_operator_wrt_input() {
    let a = Arc::new(random(&[5, 4], 3));
    let y = random(&[5, 3], 4);
    let w = random(&[4, 3], 5);
    let loss = |y: &Tensor| a.t_matmul(y).unwrap().zip_map(&w, |p, q| p * q).unwrap().sum();
    let tape = Tape::new();
    let vy = tape.var(y.clone());
    let out = vy
        .apply_linear_operator(&a)
        .unwrap()
        .mul(tape.constant(w.clone()))
        .unwrap()
        .sum();
    let g = tape.backward(out).unwrap().wrt(vy);
    assert!(rel_err(&g, &central_difference(&y, loss)) <= 1e-6);
}

#[test]
fn softmax_cross_entropy_wrt_logits() {
    let logits = random(&[4, 3], 6);
    let target = Tensor::from_rows(&[
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.2, 0.3, 0.5],
        vec![0.0, 0.0, 1.0],
    ])
    .unwrap();
    let value = |z: &Tensor| {
        let tape = Tape::new();
        tape.constant(z.clone()).softmax_cross_entropy(&target).unwrap().value().item()
    };
    let tape = Tape::new();
    let v = tape.var(logits.clone());
    let g = tape.backward(v.softmax_cross_entropy(&target).unwrap()).unwrap().wrt(v);
    assert!(rel_err(&g, &central_difference(&logits, value)) <= 1e-6);
}

#[test]
fn elementwise_chain() {
    let x = random(&[3, 3], 7);
    let value = |x: &Tensor| x.map(|v| (v.sin() * 1.5).tanh()).sum();
    let tape = Tape::new();
    let v = tape.var(x.clone());
    let out = v.sin().scale(1.5).tanh().sum();
    let g = tape.backward(out).unwrap().wrt(v);
    assert!(rel_err(&g, &central_difference(&x, value)) <= 1e-6);
}

fn coded_loss(module: &CodedSmoothingModule, model: &Mlp, x: &Tensor, target: &Tensor) -> f64 {
    let tape = Tape::new();
    let params = model.bind_frozen(&tape);
    module
        .forward_var(tape.constant(x.clone()), |z| model.forward(&params, z))
        .unwrap()
        .softmax_cross_entropy(target)
        .unwrap()
        .value()
        .item()
}

#[test]
fn through_encode_model_decode() {
    let spec = MlpSpec::new(vec![2, 8, 2], Activation::Tanh).unwrap();
    let model = Mlp::init(spec, &mut stream(11, Stream::Init));
    let module = CodedSmoothingModule::new(8, 12).unwrap();
    let x = random(&[8, 2], 12);
    let target = coded_smoothing::data::one_hot(&[0, 1, 1, 0, 1, 0, 0, 1], 2);

    let tape = Tape::new();
    let params = model.bind(&tape);
    let vx = tape.var(x.clone());
    let loss = module
        .forward_var(vx, |z| model.forward(&params, z))
        .unwrap()
        .softmax_cross_entropy(&target)
        .unwrap();
    let grads = tape.backward(loss).unwrap();

    let num_x = central_difference(&x, |x| coded_loss(&module, &model, x, &target));
    assert!(rel_err(&grads.wrt(vx), &num_x) <= 1e-5);

    for (i, p) in params.iter().enumerate() {
        let num = central_difference(&model.params()[i].value, |w| {
            let mut m = model.clone();
            m.params_mut()[i].value = w.clone();
            coded_loss(&module, &m, &x, &target)
        });
        let e = rel_err(&grads.wrt(*p), &num);
        assert!(e <= 1e-5, "parameter {i}: {e}");
    }
}
