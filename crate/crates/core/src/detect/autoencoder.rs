//! Dense autoencoder with hand-written backpropagation.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

/// Encoder 100→32→8, decoder 8→32→100.
pub const DIMS: [usize; 5] = [100, 32, 8, 32, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    /// `n_out × n_in`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, y) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[o];
            *y = self.activation.apply(z);
        }
    }
}

/// Anything that maps a window to a reconstruction of the same length.
pub trait ReconstructionModel {
    fn window_len(&self) -> usize;
    fn reconstruct(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub layers: Vec<Dense>,
}

/// Gradient buffers shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros(net: &Autoencoder) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn clear(&mut self) {
        self.weights.iter_mut().chain(self.bias.iter_mut()).for_each(|g| g.fill(0.0));
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.bias) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

impl Autoencoder {
    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) || dims[0] != dims[dims.len() - 1] {
            return Err(Error::Config(format!("invalid autoencoder dims {dims:?}")));
        }
        let mut rng = stream_rng(seed, stream::WEIGHTS);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                let (n_in, n_out) = (d[0], d[1]);
                let lim = 1.0 / (n_in as f64).sqrt();
                let mut draw = || rng.random_range(-lim..lim);
                let weights = (0..n_in * n_out).map(|_| draw()).collect();
                let bias = (0..n_out).map(|_| draw()).collect();
                let activation = if i == last { Activation::Linear } else { Activation::Tanh };
                Dense { n_in, n_out, weights, bias, activation }
            })
            .collect();
        Ok(Autoencoder { layers })
    }

    pub fn standard(seed: u64) -> Self {
        Self::new(&DIMS, seed).expect("valid dims")
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].n_in];
        d.extend(self.layers.iter().map(|l| l.n_out));
        d
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Activations of every layer, input first.
    fn forward_all(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for l in &self.layers {
            let mut out = vec![0.0; l.n_out];
            l.forward(acts.last().expect("input present"), &mut out);
            acts.push(out);
        }
        acts
    }

    /// Mean squared reconstruction error of one window.
    pub fn loss(&self, x: &[f64]) -> f64 {
        let y = self.reconstruct(x);
        mse(&y, x)
    }

    /// Adds `scale ·` d(loss)/d(params) for one window to `grads` and
    /// returns the window's loss.
    pub fn accumulate_gradient(&self, x: &[f64], scale: f64, grads: &mut Gradients) -> f64 {
        let acts = self.forward_all(x);
        let y = acts.last().expect("output present");
        let n = x.len() as f64;
        let mut delta: Vec<f64> = y.iter().zip(x).map(|(y, x)| scale * 2.0 * (y - x) / n).collect();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let out = &acts[li + 1];
            for (d, a) in delta.iter_mut().zip(out) {
                *d *= l.activation.slope(*a);
            }
            let input = &acts[li];
            let gw = &mut grads.weights[li];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (g, v) in gw[o * l.n_in..(o + 1) * l.n_in].iter_mut().zip(input) {
                    *g += d * v;
                }
            }
            for (g, d) in grads.bias[li].iter_mut().zip(&delta) {
                *g += d;
            }
            if li > 0 {
                let mut back = vec![0.0; l.n_in];
                for (o, d) in delta.iter().enumerate() {
                    for (b, w) in back.iter_mut().zip(&l.weights[o * l.n_in..(o + 1) * l.n_in]) {
                        *b += d * w;
                    }
                }
                delta = back;
            }
        }
        mse(y, x)
    }

    pub fn gradient(&self, x: &[f64]) -> Gradients {
        let mut g = Gradients::zeros(self);
        self.accumulate_gradient(x, 1.0, &mut g);
        g
    }

    fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for l in &mut self.layers {
            if k < l.weights.len() {
                return &mut l.weights[k];
            }
            k -= l.weights.len();
            if k < l.bias.len() {
                return &mut l.bias[k];
            }
            k -= l.bias.len();
        }
        panic!("parameter index out of range")
    }
}

impl ReconstructionModel for Autoencoder {
    fn window_len(&self) -> usize {
        self.layers[0].n_in
    }

    fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for l in &self.layers {
            let mut out = vec![0.0; l.n_out];
            l.forward(&cur, &mut out);
            cur = out;
        }
        cur
    }
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.len() as f64
}

/// Largest relative disagreement between backpropagated gradients and
/// central differences, over every parameter. Disagreement is measured
/// against `max(|analytic|, |numeric|, 1e-6)` so that parameters with
/// vanishing gradients compare absolutely.
pub fn gradient_check(net: &Autoencoder, x: &[f64], epsilon: f64) -> f64 {
    let analytic = net.gradient(x).flatten();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (k, a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(k);
        *probe.param_mut(k) = orig + epsilon;
        let up = probe.loss(x);
        *probe.param_mut(k) = orig - epsilon;
        let down = probe.loss(x);
        *probe.param_mut(k) = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 1000, batch_size: 64, learning_rate: 1e-3, optimizer: Optimizer::Adam, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "training needs epochs >= 1, batch_size >= 1, learning_rate > 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub initial_msre: f64,
    pub final_msre: f64,
    /// Mean training loss seen during each epoch.
    pub history: Vec<f64>,
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn step(&mut self, net: &mut Autoencoder, g: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (li, l) in net.layers.iter_mut().enumerate() {
            let groups = [
                (&mut l.weights, &g.weights[li], &mut self.m.weights[li], &mut self.v.weights[li]),
                (&mut l.bias, &g.bias[li], &mut self.m.bias[li], &mut self.v.bias[li]),
            ];
            for (p, g, m, v) in groups {
                for i in 0..p.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                    p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

fn sgd_step(net: &mut Autoencoder, g: &Gradients, lr: f64) {
    for (li, l) in net.layers.iter_mut().enumerate() {
        for (p, d) in l.weights.iter_mut().zip(&g.weights[li]) {
            *p -= lr * d;
        }
        for (p, d) in l.bias.iter_mut().zip(&g.bias[li]) {
            *p -= lr * d;
        }
    }
}

pub fn mean_loss(net: &Autoencoder, data: &[Vec<f64>]) -> f64 {
    data.iter().map(|x| net.loss(x)).sum::<f64>() / data.len() as f64
}

/// Mini-batch training on already normalized windows. Batch order is a
/// seeded shuffle per epoch, so the result is a pure function of
/// `(data, cfg)`.
pub fn fit(net: &mut Autoencoder, data: &[Vec<f64>], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let n = net.window_len();
    if let Some(bad) = data.iter().find(|w| w.len() != n) {
        return Err(Error::WrongLength { expected: n, got: bad.len() });
    }
    let initial_msre = mean_loss(net, data);
    let mut rng = stream_rng(cfg.seed, stream::SHUFFLE);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads = Gradients::zeros(net);
    let mut adam = Adam { m: Gradients::zeros(net), v: Gradients::zeros(net), t: 0 };
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                total += net.accumulate_gradient(&data[i], scale, &mut grads);
            }
            match cfg.optimizer {
                Optimizer::Adam => adam.step(net, &grads, cfg.learning_rate),
                Optimizer::Sgd => sgd_step(net, &grads, cfg.learning_rate),
            }
        }
        let epoch_loss = total / data.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(epoch_loss);
    }
    let final_msre = mean_loss(net, data);
    if !final_msre.is_finite() {
        return Err(Error::Divergence { epoch: cfg.epochs });
    }
    Ok(TrainReport { initial_msre, final_msre, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_window(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = stream_rng(seed, 99);
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    #[test]
    fn dims_and_param_count() {
        let net = Autoencoder::standard(1);
        assert_eq!(net.dims(), DIMS.to_vec());
        assert_eq!(net.param_count(), 3200 + 32 + 256 + 8 + 256 + 32 + 3200 + 100);
        assert_eq!(net.layers[3].activation, Activation::Linear);
        assert!(net.layers[..3].iter().all(|l| l.activation == Activation::Tanh));
        assert!(Autoencoder::new(&[4, 2, 3], 0).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Autoencoder::standard(5);
        assert_eq!(a, Autoencoder::standard(5));
        assert_ne!(a, Autoencoder::standard(6));
        let lim = 1.0 / 100f64.sqrt();
        assert!(a.layers[0].weights.iter().all(|w| w.abs() <= lim));
    }

    #[test]
    fn gradient_check_small_net() {
        let net = Autoencoder::new(&[6, 4, 2, 4, 6], 3).unwrap();
        let x = random_window(1, 6);
        assert!(gradient_check(&net, &x, 1e-5) <= 1e-4);
        // a different step size gives a comparable answer
        let e2 = gradient_check(&net, &x, 2e-5);
        assert!(e2 <= 1e-4);
    }

    #[test]
    fn zero_model_on_zero_window() {
        let mut net = Autoencoder::new(&[5, 3, 5], 0).unwrap();
        for l in &mut net.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
        let x = vec![0.0; 5];
        assert_eq!(net.loss(&x), 0.0);
        assert!(net.gradient(&x).flatten().iter().all(|g| *g == 0.0));
        assert!(gradient_check(&net, &x, 1e-5) <= 1e-4);
    }

    #[test]
    fn identity_reconstruction_has_zero_loss() {
        // a single linear layer set to the identity
        let mut net = Autoencoder::new(&[4, 4], 0).unwrap();
        let l = &mut net.layers[0];
        l.weights.fill(0.0);
        l.bias.fill(0.0);
        for i in 0..4 {
            l.weights[i * 4 + i] = 1.0;
        }
        assert_eq!(net.loss(&[1.0, -2.0, 0.5, 3.0]), 0.0);
    }

    #[test]
    fn training_is_deterministic_and_descends() {
        let data: Vec<Vec<f64>> = (0..40).map(|s| random_window(s, 10).iter().map(|v| v * 0.3).collect()).collect();
        let cfg = TrainConfig { epochs: 30, batch_size: 8, seed: 2, ..TrainConfig::default() };
        let mut a = Autoencoder::new(&[10, 6, 3, 6, 10], 1).unwrap();
        let mut b = a.clone();
        let ra = fit(&mut a, &data, &cfg).unwrap();
        let rb = fit(&mut b, &data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert!(ra.final_msre < ra.initial_msre);
        let sgd = TrainConfig { optimizer: Optimizer::Sgd, learning_rate: 0.05, ..cfg };
        let mut c = Autoencoder::new(&[10, 6, 3, 6, 10], 1).unwrap();
        let rc = fit(&mut c, &data, &sgd).unwrap();
        assert!(rc.final_msre < rc.initial_msre);
    }

    #[test]
    fn divergence_is_reported() {
        let data = vec![vec![1e200; 4]; 4];
        let mut net = Autoencoder::new(&[4, 2, 4], 0).unwrap();
        let cfg = TrainConfig { epochs: 5, batch_size: 2, optimizer: Optimizer::Sgd, learning_rate: 1e10, seed: 0 };
        assert!(matches!(fit(&mut net, &data, &cfg), Err(Error::Divergence { .. })));
    }

    #[test]
    fn bad_config_and_lengths() {
        let mut net = Autoencoder::new(&[4, 2, 4], 0).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(fit(&mut net, &[vec![0.0; 4]], &cfg).is_err());
        let cfg = TrainConfig::default();
        assert!(matches!(fit(&mut net, &[vec![0.0; 3]], &cfg), Err(Error::WrongLength { .. })));
    }
}
