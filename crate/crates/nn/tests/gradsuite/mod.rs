//! Central finite-difference checks of every backward pass in f64.

#![allow(dead_code)]

use chemimg_nn::blocks::{InceptionResNetBlock, ReductionBlock};
use chemimg_nn::layers::{Conv2d, Dense, GlobalAvgPool, MaxPool2d, Padding, Param};
use chemimg_nn::loss::{masked_bce_loss, masked_bce_with_logits, mse_loss, LossError, LossOutput};
use chemimg_nn::{Arch, Head, Network, NetworkConfig, Tensor};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
const TOLERANCE: f64 = 1e-4;
const PROBES: usize = 10;

/// |a − n| / max(|a|, |n|), with differences below 1e-7 treated as agreement
/// since round-off in the difference quotient is around 1e-9 here.
fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff < 1e-7 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs())
}

trait Layer {
    fn fwd(&mut self, x: &Tensor<f64>) -> Tensor<f64>;
    fn bwd(&mut self, dy: &Tensor<f64>) -> Tensor<f64>;
    fn params(&mut self) -> Vec<&mut Param<f64>>;
}

impl Layer for Conv2d<f64> {
    fn fwd(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.forward(x).unwrap()
    }
    fn bwd(&mut self, dy: &Tensor<f64>) -> Tensor<f64> {
        self.backward(dy).unwrap()
    }
    fn params(&mut self) -> Vec<&mut Param<f64>> {
        self.params_mut().into_iter().collect()
    }
}

impl Layer for Dense<f64> {
    fn fwd(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.forward(x).unwrap()
    }
    fn bwd(&mut self, dy: &Tensor<f64>) -> Tensor<f64> {
        self.backward(dy).unwrap()
    }
    fn params(&mut self) -> Vec<&mut Param<f64>> {
        self.params_mut().into_iter().collect()
    }
}

impl Layer for MaxPool2d {
    fn fwd(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.forward(x).unwrap()
    }
    fn bwd(&mut self, dy: &Tensor<f64>) -> Tensor<f64> {
        self.backward(dy).unwrap()
    }
    fn params(&mut self) -> Vec<&mut Param<f64>> {
        Vec::new()
    }
}

impl Layer for GlobalAvgPool {
    fn fwd(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.forward(x)
    }
    fn bwd(&mut self, dy: &Tensor<f64>) -> Tensor<f64> {
        self.backward(dy).unwrap()
    }
    fn params(&mut self) -> Vec<&mut Param<f64>> {
        Vec::new()
    }
}

impl Layer for InceptionResNetBlock<f64> {
    fn fwd(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.forward(x).unwrap()
    }
    fn bwd(&mut self, dy: &Tensor<f64>) -> Tensor<f64> {
        self.backward(dy).unwrap()
    }
    fn params(&mut self) -> Vec<&mut Param<f64>> {
        self.params_mut()
    }
}

impl Layer for ReductionBlock<f64> {
    fn fwd(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        self.forward(x).unwrap()
    }
    fn bwd(&mut self, dy: &Tensor<f64>) -> Tensor<f64> {
        self.backward(dy).unwrap()
    }
    fn params(&mut self) -> Vec<&mut Param<f64>> {
        self.params_mut()
    }
}

fn random_tensor(shape: [usize; 4], rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// Checks d(Σ r·f(x))/dx and every parameter gradient against central
/// differences at `PROBES` random coordinates each. Returns the worst error.
fn check_layer(layer: &mut dyn Layer, x: &Tensor<f64>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = layer.fwd(x);
    let r = random_tensor(y.shape, &mut rng);
    layer.params().into_iter().for_each(Param::zero_grad);
    let dx = layer.bwd(&r);
    let grads: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad.clone()).collect();
    let mut worst = 0.0f64;

    let mut xp = x.clone();
    for i in sample(&mut rng, x.data.len(), PROBES.min(x.data.len())) {
        let orig = xp.data[i];
        xp.data[i] = orig + STEP;
        let up = dot(&layer.fwd(&xp), &r);
        xp.data[i] = orig - STEP;
        let down = dot(&layer.fwd(&xp), &r);
        xp.data[i] = orig;
        let e = rel_error(dx.data[i], (up - down) / (2.0 * STEP));
        assert!(e < TOLERANCE, "input[{i}]: analytic {} vs numeric {}", dx.data[i], (up - down) / (2.0 * STEP));
        worst = worst.max(e);
    }

    for (k, grad) in grads.iter().enumerate() {
        for i in sample(&mut rng, grad.len(), PROBES.min(grad.len())) {
            let orig = layer.params()[k].value[i];
            layer.params()[k].value[i] = orig + STEP;
            let up = dot(&layer.fwd(x), &r);
            layer.params()[k].value[i] = orig - STEP;
            let down = dot(&layer.fwd(x), &r);
            layer.params()[k].value[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let e = rel_error(grad[i], numeric);
            assert!(e < TOLERANCE, "param {k}[{i}]: analytic {} vs numeric {numeric}", grad[i]);
            worst = worst.max(e);
        }
    }
    worst
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn conv_5x5_3x3() {
    for (stride, padding, relu) in [
        (1, Padding::Valid, false),
        (1, Padding::Same, false),
        (2, Padding::Same, true),
        (1, Padding::Same, true),
    ] {
        let mut conv = Conv2d::<f64>::new(2, 3, (3, 3), stride, padding, relu, &mut rng(1));
        conv.bias.value.iter_mut().for_each(|b| *b = 0.1);
        let x = random_tensor([2, 2, 5, 5], &mut rng(2));
        check_layer(&mut conv, &x, 3);
    }
}

pub fn conv_stem_and_pointwise() {
    let mut stem = Conv2d::<f64>::new(1, 4, (4, 4), 2, Padding::Same, true, &mut rng(4));
    check_layer(&mut stem, &random_tensor([2, 1, 9, 8], &mut rng(5)), 6);
    let mut pw = Conv2d::<f64>::new(3, 2, (1, 1), 1, Padding::Same, false, &mut rng(7));
    check_layer(&mut pw, &random_tensor([2, 3, 4, 5], &mut rng(8)), 9);
}

pub fn maxpool() {
    let mut pool = MaxPool2d::new(3, 2, Padding::Same);
    check_layer(&mut pool, &random_tensor([2, 3, 7, 6], &mut rng(10)), 11);
}

pub fn global_pool_and_dense() {
    check_layer(&mut GlobalAvgPool::default(), &random_tensor([3, 4, 5, 5], &mut rng(12)), 13);
    let mut dense = Dense::<f64>::new(6, 3, &mut rng(14));
    check_layer(&mut dense, &random_tensor([4, 6, 1, 1], &mut rng(15)), 16);
}

pub fn inception_resnet_block() {
    for scale in [1.0, 0.3] {
        let mut block = InceptionResNetBlock::<f64>::new(4, 3, scale, &mut rng(17));
        check_layer(&mut block, &random_tensor([2, 4, 6, 6], &mut rng(18)), 19);
    }
}

pub fn reduction_block() {
    let mut red = ReductionBlock::<f64>::new(3, 4, &mut rng(20));
    check_layer(&mut red, &random_tensor([2, 3, 7, 7], &mut rng(21)), 22);
}

type LossFn = fn(&[f64], &[f64], &[f64]) -> Result<LossOutput<f64>, LossError>;

fn check_loss(loss: LossFn, preds: &[f64], labels: &[f64], mask: &[f64]) {
    let out = loss(preds, labels, mask).unwrap();
    let mut p = preds.to_vec();
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + STEP;
        let up = loss(&p, labels, mask).unwrap().loss;
        p[i] = orig - STEP;
        let down = loss(&p, labels, mask).unwrap().loss;
        p[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        assert!(rel_error(out.grad[i], numeric) < TOLERANCE, "{i}: {} vs {numeric}", out.grad[i]);
    }
}

pub fn losses() {
    let mut r = rng(23);
    let n = 12;
    let labels: Vec<f64> = (0..n).map(|_| f64::from(r.gen_range(0..2u8))).collect();
    let mask: Vec<f64> = (0..n).map(|i| if i % 4 == 3 { 0.0 } else { 1.0 }).collect();
    let probs: Vec<f64> = (0..n).map(|_| r.gen_range(0.05..0.95)).collect();
    let logits: Vec<f64> = (0..n).map(|_| r.gen_range(-4.0..4.0)).collect();
    let targets: Vec<f64> = (0..n).map(|_| r.gen_range(-3.0..3.0)).collect();
    check_loss(masked_bce_loss, &probs, &labels, &mask);
    check_loss(masked_bce_with_logits, &logits, &labels, &mask);
    check_loss(mse_loss, &logits, &targets, &mask);
}

pub fn bce_matches_scalar_formula() {
    let mut r = rng(24);
    let p: Vec<f64> = (0..20).map(|_| r.gen_range(0.01..0.99)).collect();
    let y: Vec<f64> = (0..20).map(|_| f64::from(r.gen_range(0..2u8))).collect();
    let m: Vec<f64> = (0..20).map(|_| f64::from(r.gen_range(0..2u8))).collect();
    let mut sum = 0.0;
    let mut count = 0.0;
    for i in 0..20 {
        if m[i] == 1.0 {
            sum += if y[i] == 1.0 { -p[i].ln() } else { -(1.0 - p[i]).ln() };
            count += 1.0;
        }
    }
    let out = masked_bce_loss(&p, &y, &m).unwrap();
    assert!((out.loss - sum / count).abs() < 1e-12);
}

struct Whole {
    net: Network<f64>,
    labels: Vec<f64>,
    mask: Vec<f64>,
}

impl Whole {
    fn loss(&mut self, x: &Tensor<f64>) -> (f64, Tensor<f64>) {
        let raw = self.net.forward(x).unwrap();
        let out = masked_bce_with_logits(&raw.data, &self.labels, &self.mask).unwrap();
        (out.loss, Tensor::from_vec(raw.shape, out.grad).unwrap())
    }
}

pub fn t1_f4_end_to_end() {
    let mut cfg = NetworkConfig::new("T1_F4".parse::<Arch>().unwrap(), 1, 2, Head::Sigmoid);
    cfg.input_height = 16;
    cfg.input_width = 16;
    cfg.seed = 25;
    let mut r = rng(26);
    let x = Tensor::from_vec(
        [3, 1, 16, 16],
        (0..3 * 256).map(|_| r.gen_range(0.0..2.0)).collect(),
    )
    .unwrap();
    let mut net = Network::build(&cfg).unwrap();
    // zero biases put blank receptive fields exactly on the ReLU kink
    for p in net.params_mut().into_iter().filter(|p| p.shape.len() == 1) {
        p.value.iter_mut().for_each(|b| *b = r.gen_range(-0.1..0.1));
    }
    let mut whole = Whole {
        net,
        labels: vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        mask: vec![1.0, 1.0, 1.0, 0.0, 1.0, 1.0],
    };
    whole.net.zero_grad();
    let (_, dy) = whole.loss(&x);
    let dx = whole.net.backward(&dy).unwrap();
    let grads: Vec<Vec<f64>> = whole.net.params().iter().map(|p| p.grad.clone()).collect();
    assert!(grads.iter().flatten().any(|g| *g != 0.0));

    let mut xp = x.clone();
    for i in sample(&mut r, xp.data.len(), PROBES) {
        let orig = xp.data[i];
        xp.data[i] = orig + STEP;
        let up = whole.loss(&xp).0;
        xp.data[i] = orig - STEP;
        let down = whole.loss(&xp).0;
        xp.data[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        assert!(rel_error(dx.data[i], numeric) < TOLERANCE, "input[{i}]: {} vs {numeric}", dx.data[i]);
    }
    for (k, grad) in grads.iter().enumerate() {
        for i in sample(&mut r, grad.len(), PROBES.min(grad.len())) {
            let orig = whole.net.params()[k].value[i];
            whole.net.params_mut()[k].value[i] = orig + STEP;
            let up = whole.loss(&x).0;
            whole.net.params_mut()[k].value[i] = orig - STEP;
            let down = whole.loss(&x).0;
            whole.net.params_mut()[k].value[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            assert!(rel_error(grad[i], numeric) < TOLERANCE, "param {k}[{i}]: {} vs {numeric}", grad[i]);
        }
    }
}

/// Every finite-difference check, by name. Each panics on failure.
pub const CASES: &[(&str, fn())] = &[
    ("conv_5x5_3x3", conv_5x5_3x3),
    ("conv_stem_and_pointwise", conv_stem_and_pointwise),
    ("maxpool", maxpool),
    ("global_pool_and_dense", global_pool_and_dense),
    ("inception_resnet_block", inception_resnet_block),
    ("reduction_block", reduction_block),
    ("losses", losses),
    ("bce_matches_scalar_formula", bce_matches_scalar_formula),
    ("t1_f4_end_to_end", t1_f4_end_to_end),
];
