//! Dense feed-forward networks with explicit reverse-mode gradients, an
//! adaptive-moment optimizer, Polyak target blending, and a finite-difference
//! gradient checker.
//!
//! Everything runs batched in f64: inputs are (batch, in_dim) matrices. The
//! backward pass returns both parameter gradients and the gradient with
//! respect to the input, which the policy update needs to push the actor
//! through the critics' action inputs.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Rectifier,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply_inplace(&self, z: &mut Array2<f64>) {
        match self {
            Activation::Rectifier => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Sigmoid => z.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp())),
            Activation::Identity => {}
        }
    }

    /// Derivative expressed through the activated output, which both
    /// supported nonlinearities admit.
    fn derivative_from_output(&self, y: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Rectifier => y.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
            Activation::Sigmoid => y.mapv(|v| v * (1.0 - v)),
            Activation::Identity => Array2::ones(y.raw_dim()),
        }
    }
}

/// One affine layer plus its activation. Weights are (in, out).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

/// Fixed-topology multilayer perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

impl DenseNet {
    /// Initializes with fan-in uniform weights: each layer's parameters are
    /// drawn from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    pub fn init(dims: &[usize], activations: &[Activation], rng: &mut ChaCha12Rng) -> Self {
        assert!(dims.len() >= 2, "need at least one layer");
        assert_eq!(dims.len() - 1, activations.len(), "one activation per layer");
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(pair, &activation)| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights =
                    Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..=bound));
                let biases = Array1::from_shape_fn(fan_out, |_| rng.gen_range(-bound..=bound));
                Layer { weights, biases, activation }
            })
            .collect();
        DenseNet { layers }
    }

    /// Builds a net from explicit layers, validating the dimension chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(SimError::Contract("a net needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].weights.ncols() != pair[1].weights.nrows() {
                return Err(SimError::Contract("layer dimension chain mismatch".into()));
            }
        }
        Ok(DenseNet { layers })
    }

    /// Re-draws the final layer's parameters uniformly in [-scale, scale];
    /// keeps a bounded-output policy head near the middle of its range at
    /// the start of training.
    pub fn reinit_final(&mut self, scale: f64, rng: &mut ChaCha12Rng) {
        let last = self.layers.last_mut().expect("at least one layer");
        last.weights.mapv_inplace(|_| rng.gen_range(-scale..=scale));
        last.biases.mapv_inplace(|_| rng.gen_range(-scale..=scale));
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").weights.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Plain forward pass.
    pub fn forward(&self, input: ArrayView2<f64>) -> Array2<f64> {
        let mut x = input.to_owned();
        for layer in &self.layers {
            let mut z = x.dot(&layer.weights) + &layer.biases;
            layer.activation.apply_inplace(&mut z);
            x = z;
        }
        x
    }

    /// Single-sample convenience wrapper.
    pub fn forward_one(&self, input: &[f64]) -> Vec<f64> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        self.forward(x).row(0).to_vec()
    }

    /// Forward pass that keeps every layer's activated output for backprop.
    pub fn forward_trace(&self, input: Array2<f64>) -> ForwardTrace {
        let mut activated = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let mut z = x.dot(&layer.weights) + &layer.biases;
            layer.activation.apply_inplace(&mut z);
            activated.push(z.clone());
            x = z;
        }
        ForwardTrace { input, activated }
    }

    /// Reverse-mode gradients of sum(seed * output) with respect to every
    /// parameter and to the input. `seed` carries d(objective)/d(output) per
    /// batch row, including any 1/M factor.
    pub fn backward(&self, trace: &ForwardTrace, seed: &Array2<f64>) -> Result<(GradientTape, Array2<f64>)> {
        if trace.activated.len() != self.layers.len()
            || trace.input.ncols() != self.input_dim()
            || seed.raw_dim() != trace.output().raw_dim()
        {
            return Err(SimError::Contract("forward trace does not match this net".into()));
        }
        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(self.layers.len());
        let mut delta = seed.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let y = &trace.activated[idx];
            delta = delta * layer.activation.derivative_from_output(y);
            let layer_input = if idx == 0 { &trace.input } else { &trace.activated[idx - 1] };
            let grad_w = layer_input.t().dot(&delta);
            let grad_b = delta.sum_axis(Axis(0));
            grads.push((grad_w, grad_b));
            delta = delta.dot(&layer.weights.t());
        }
        grads.reverse();
        Ok((GradientTape { grads }, delta))
    }

    /// Errors if any parameter has left the finite range.
    pub fn assert_finite(&self, context: &str) -> Result<()> {
        for layer in &self.layers {
            let bad = layer.weights.iter().chain(layer.biases.iter()).any(|v| !v.is_finite());
            if bad {
                return Err(SimError::NonFinite(context.to_string()));
            }
        }
        Ok(())
    }
}

/// Cached activations from one forward pass, tied to its input.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    input: Array2<f64>,
    activated: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.activated.last().expect("nonempty net")
    }
}

/// Per-parameter gradients, shaped exactly like the net.
#[derive(Debug, Clone)]
pub struct GradientTape {
    grads: Vec<(Array2<f64>, Array1<f64>)>,
}

impl GradientTape {
    pub fn zeros_like(net: &DenseNet) -> Self {
        let grads = net
            .layers
            .iter()
            .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.biases.raw_dim())))
            .collect();
        GradientTape { grads }
    }

    pub fn layers(&self) -> &[(Array2<f64>, Array1<f64>)] {
        &self.grads
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in &mut self.grads {
            w.mapv_inplace(|v| v * factor);
            b.mapv_inplace(|v| v * factor);
        }
    }

    pub fn global_norm(&self) -> f64 {
        let mut sq = 0.0;
        for (w, b) in &self.grads {
            sq += w.iter().map(|v| v * v).sum::<f64>();
            sq += b.iter().map(|v| v * v).sum::<f64>();
        }
        sq.sqrt()
    }

    /// Rescales so the global norm does not exceed `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
    }
}

/// First/second-moment accumulators with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
    step: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(net: &DenseNet) -> Self {
        let zero = || {
            net.layers
                .iter()
                .map(|l| {
                    (
                        Array2::<f64>::zeros(l.weights.raw_dim()),
                        Array1::<f64>::zeros(l.biases.raw_dim()),
                    )
                })
                .collect::<Vec<_>>()
        };
        AdamState { m: zero(), v: zero(), step: 0 }
    }
}

/// One adaptive-moment descent step along `tape`.
pub fn adam_step(net: &mut DenseNet, state: &mut AdamState, tape: &GradientTape, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let corr1 = 1.0 - ADAM_BETA1.powi(t);
    let corr2 = 1.0 - ADAM_BETA2.powi(t);
    for (idx, layer) in net.layers.iter_mut().enumerate() {
        let (gw, gb) = &tape.grads[idx];
        let (mw, mb) = &mut state.m[idx];
        let (vw, vb) = &mut state.v[idx];
        azip_update(&mut layer.weights, mw, vw, gw, lr, corr1, corr2);
        for (((p, m), v), g) in
            layer.biases.iter_mut().zip(mb.iter_mut()).zip(vb.iter_mut()).zip(gb.iter())
        {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / corr1) / ((*v / corr2).sqrt() + ADAM_EPS);
        }
    }
}

fn azip_update(
    p: &mut Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    g: &Array2<f64>,
    lr: f64,
    corr1: f64,
    corr2: f64,
) {
    ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, g| {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        *p -= lr * (*m / corr1) / ((*v / corr2).sqrt() + ADAM_EPS);
    });
}

/// One plain gradient-descent step along `tape`.
pub fn sgd_step(net: &mut DenseNet, tape: &GradientTape, lr: f64) {
    for (idx, layer) in net.layers.iter_mut().enumerate() {
        let (gw, gb) = &tape.grads[idx];
        layer.weights.scaled_add(-lr, gw);
        layer.biases.scaled_add(-lr, gb);
    }
}

/// Optimizer choice carried alongside each net.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OptState {
    Adam(AdamState),
    Sgd,
}

impl OptState {
    pub fn new(net: &DenseNet, use_adam: bool) -> Self {
        if use_adam {
            OptState::Adam(AdamState::new(net))
        } else {
            OptState::Sgd
        }
    }

    pub fn step(&mut self, net: &mut DenseNet, tape: &GradientTape, lr: f64) {
        match self {
            OptState::Adam(state) => adam_step(net, state, tape, lr),
            OptState::Sgd => sgd_step(net, tape, lr),
        }
    }
}

/// Blends every target parameter toward the online net: phi = 1 copies,
/// phi = 0 leaves the target untouched.
pub fn soft_update(target: &mut DenseNet, online: &DenseNet, phi: f64) -> Result<()> {
    if target.layers.len() != online.layers.len() {
        return Err(SimError::Contract("target/online layer count mismatch".into()));
    }
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        if t.weights.raw_dim() != o.weights.raw_dim() {
            return Err(SimError::Contract("target/online shape mismatch".into()));
        }
        ndarray::Zip::from(&mut t.weights).and(&o.weights).for_each(|t, o| {
            *t = phi * o + (1.0 - phi) * *t;
        });
        ndarray::Zip::from(&mut t.biases).and(&o.biases).for_each(|t, o| {
            *t = phi * o + (1.0 - phi) * *t;
        });
    }
    Ok(())
}

/// Central-difference gradients of sum(seed * output) with respect to every
/// parameter; the oracle the analytic backward pass is checked against.
pub fn finite_difference_grads(
    net: &DenseNet,
    input: &Array2<f64>,
    seed: &Array2<f64>,
    h: f64,
) -> GradientTape {
    let objective = |n: &DenseNet| -> f64 { (n.forward(input.view()) * seed).sum() };
    let mut probe = net.clone();
    let mut grads = Vec::with_capacity(net.layers.len());
    for idx in 0..net.layers.len() {
        let mut gw = Array2::zeros(net.layers[idx].weights.raw_dim());
        for pos in 0..gw.len() {
            let (r, c) = (pos / gw.ncols(), pos % gw.ncols());
            let orig = probe.layers[idx].weights[[r, c]];
            probe.layers[idx].weights[[r, c]] = orig + h;
            let plus = objective(&probe);
            probe.layers[idx].weights[[r, c]] = orig - h;
            let minus = objective(&probe);
            probe.layers[idx].weights[[r, c]] = orig;
            gw[[r, c]] = (plus - minus) / (2.0 * h);
        }
        let mut gb = Array1::zeros(net.layers[idx].biases.raw_dim());
        for pos in 0..gb.len() {
            let orig = probe.layers[idx].biases[pos];
            probe.layers[idx].biases[pos] = orig + h;
            let plus = objective(&probe);
            probe.layers[idx].biases[pos] = orig - h;
            let minus = objective(&probe);
            probe.layers[idx].biases[pos] = orig;
            gb[pos] = (plus - minus) / (2.0 * h);
        }
        grads.push((gw, gb));
    }
    GradientTape { grads }
}

/// Largest mixed relative error between two tapes: |a - b| over
/// max(|a|, |b|, floor), the floor absorbing near-zero gradients.
pub fn max_relative_error(a: &GradientTape, b: &GradientTape, floor: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for ((aw, ab), (bw, bb)) in a.grads.iter().zip(&b.grads) {
        for (x, y) in aw.iter().zip(bw.iter()).chain(ab.iter().zip(bb.iter())) {
            let err = (x - y).abs() / x.abs().max(y.abs()).max(floor);
            worst = worst.max(err);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{labels, stream};
    use ndarray::array;

    fn identity_layer(dim: usize) -> Layer {
        Layer {
            weights: Array2::eye(dim),
            biases: Array1::zeros(dim),
            activation: Activation::Identity,
        }
    }

    #[test]
    fn identity_net_passes_input_through() {
        let net = DenseNet { layers: vec![identity_layer(3)] };
        let x = array![[1.0, -2.0, 0.5]];
        assert_eq!(net.forward(x.view()), x);
    }

    #[test]
    fn zero_sigmoid_layer_outputs_half() {
        let net = DenseNet {
            layers: vec![Layer {
                weights: Array2::zeros((4, 2)),
                biases: Array1::zeros(2),
                activation: Activation::Sigmoid,
            }],
        };
        let y = net.forward_one(&[3.0, -1.0, 2.0, 9.0]);
        assert_eq!(y, vec![0.5, 0.5]);
    }

    #[test]
    fn forward_is_pure() {
        let mut rng = stream(1, labels::WEIGHTS);
        let net = DenseNet::init(
            &[3, 8, 1],
            &[Activation::Rectifier, Activation::Identity],
            &mut rng,
        );
        let x = array![[0.3, -0.7, 1.1]];
        assert_eq!(net.forward(x.view()), net.forward(x.view()));
    }

    #[test]
    fn scalar_linear_gradients_are_analytic() {
        // y = w * x with w = 1.5, x = 2.0: dJ/dw = x, dJ/dx = w.
        let net = DenseNet {
            layers: vec![Layer {
                weights: array![[1.5]],
                biases: array![0.0],
                activation: Activation::Identity,
            }],
        };
        let trace = net.forward_trace(array![[2.0]]);
        let (tape, input_grad) = net.backward(&trace, &array![[1.0]]).unwrap();
        assert_eq!(tape.layers()[0].0, array![[2.0]]);
        assert_eq!(tape.layers()[0].1, array![1.0]);
        assert_eq!(input_grad, array![[1.5]]);
    }

    #[test]
    fn zero_seed_gives_zero_tape() {
        let mut rng = stream(2, labels::WEIGHTS);
        let net =
            DenseNet::init(&[2, 4, 1], &[Activation::Sigmoid, Activation::Identity], &mut rng);
        let trace = net.forward_trace(array![[0.2, 0.8]]);
        let (tape, input_grad) = net.backward(&trace, &Array2::zeros((1, 1))).unwrap();
        assert_eq!(tape.global_norm(), 0.0);
        assert_eq!(input_grad, Array2::<f64>::zeros((1, 2)));
    }

    #[test]
    fn backward_rejects_mismatched_trace() {
        let mut rng = stream(3, labels::WEIGHTS);
        let a = DenseNet::init(&[2, 4, 1], &[Activation::Rectifier, Activation::Identity], &mut rng);
        let b = DenseNet::init(&[3, 4, 1], &[Activation::Rectifier, Activation::Identity], &mut rng);
        let trace = a.forward_trace(array![[0.1, 0.2]]);
        assert!(b.backward(&trace, &Array2::zeros((1, 1))).is_err());
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = stream(4, labels::WEIGHTS);
        let configs: [(&[usize], &[Activation]); 3] = [
            (&[3, 8, 1], &[Activation::Rectifier, Activation::Identity]),
            (&[2, 6, 6, 1], &[Activation::Sigmoid, Activation::Rectifier, Activation::Identity]),
            (&[4, 5, 2], &[Activation::Rectifier, Activation::Sigmoid]),
        ];
        for (dims, acts) in configs {
            let net = DenseNet::init(dims, acts, &mut rng);
            let batch = 4;
            let input = Array2::from_shape_fn((batch, dims[0]), |_| rng.gen_range(-1.0..1.0));
            let seed = Array2::from_shape_fn((batch, *dims.last().unwrap()), |_| {
                rng.gen_range(-1.0..1.0)
            });
            let trace = net.forward_trace(input.clone());
            let (analytic, _) = net.backward(&trace, &seed).unwrap();
            let numeric = finite_difference_grads(&net, &input, &seed, 1e-6);
            let err = max_relative_error(&analytic, &numeric, 1e-3);
            assert!(err < 1e-5, "relative error {err}");
        }
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let mut rng = stream(5, labels::WEIGHTS);
        let net = DenseNet::init(
            &[3, 8, 1],
            &[Activation::Rectifier, Activation::Identity],
            &mut rng,
        );
        let input = Array2::from_shape_fn((2, 3), |_| rng.gen_range(-1.0..1.0));
        let seed = Array2::from_shape_fn((2, 1), |_| rng.gen_range(-1.0..1.0));
        let trace = net.forward_trace(input.clone());
        let (_, analytic) = net.backward(&trace, &seed).unwrap();
        let h = 1e-6;
        for r in 0..2 {
            for c in 0..3 {
                let mut plus = input.clone();
                plus[[r, c]] += h;
                let mut minus = input.clone();
                minus[[r, c]] -= h;
                let jp = (net.forward(plus.view()) * &seed).sum();
                let jm = (net.forward(minus.view()) * &seed).sum();
                let numeric = (jp - jm) / (2.0 * h);
                let a = analytic[[r, c]];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
                assert!(err < 1e-5, "input grad error {err}");
            }
        }
    }

    #[test]
    fn adam_ignores_zero_gradients() {
        let mut rng = stream(6, labels::WEIGHTS);
        let mut net =
            DenseNet::init(&[2, 3, 1], &[Activation::Rectifier, Activation::Identity], &mut rng);
        let before = net.clone();
        let mut state = AdamState::new(&net);
        let zero_tape = GradientTape::zeros_like(&net);
        adam_step(&mut net, &mut state, &zero_tape, 1e-2);
        assert_eq!(net, before);
    }

    #[test]
    fn adam_steps_against_the_gradient() {
        let mut net = DenseNet {
            layers: vec![Layer {
                weights: array![[1.0]],
                biases: array![0.0],
                activation: Activation::Identity,
            }],
        };
        let mut state = AdamState::new(&net);
        let mut tape = GradientTape::zeros_like(&net);
        tape.grads[0].0[[0, 0]] = 1.0;
        adam_step(&mut net, &mut state, &tape, 1e-2);
        assert!(net.layers()[0].weights[[0, 0]] < 1.0);
    }

    #[test]
    fn adam_converges_on_a_quadratic_bowl() {
        // f(w) = (w - 3)^2, df/dw = 2(w - 3). Start within unit distance:
        // per-step movement is bounded by roughly lr, so 500 steps cannot
        // cross distances much larger than 500 * lr * 0.6.
        let mut net = DenseNet {
            layers: vec![Layer {
                weights: array![[2.0]],
                biases: array![0.0],
                activation: Activation::Identity,
            }],
        };
        let mut state = AdamState::new(&net);
        for _ in 0..500 {
            let w = net.layers()[0].weights[[0, 0]];
            let mut tape = GradientTape::zeros_like(&net);
            tape.grads[0].0[[0, 0]] = 2.0 * (w - 3.0);
            adam_step(&mut net, &mut state, &tape, 1e-2);
        }
        let w = net.layers()[0].weights[[0, 0]];
        assert!((w - 3.0).abs() < 1e-2, "w = {w}");
    }

    #[test]
    fn sgd_takes_plain_steps() {
        let mut net = DenseNet {
            layers: vec![Layer {
                weights: array![[2.0]],
                biases: array![1.0],
                activation: Activation::Identity,
            }],
        };
        let mut tape = GradientTape::zeros_like(&net);
        tape.grads[0].0[[0, 0]] = 0.5;
        tape.grads[0].1[0] = -1.0;
        sgd_step(&mut net, &tape, 0.1);
        assert!((net.layers()[0].weights[[0, 0]] - 1.95).abs() < 1e-15);
        assert!((net.layers()[0].biases[0] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn clip_preserves_direction_and_caps_norm() {
        let net = DenseNet {
            layers: vec![Layer {
                weights: array![[3.0, 4.0]],
                biases: array![0.0, 0.0],
                activation: Activation::Identity,
            }],
        };
        let mut tape = GradientTape::zeros_like(&net);
        tape.grads[0].0 = array![[3.0, 4.0]];
        tape.clip_global_norm(1.0);
        assert!((tape.global_norm() - 1.0).abs() < 1e-12);
        assert!((tape.grads[0].0[[0, 0]] - 0.6).abs() < 1e-12);
        let mut small = GradientTape::zeros_like(&net);
        small.grads[0].0 = array![[0.3, 0.4]];
        small.clip_global_norm(1.0);
        assert!((small.global_norm() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn soft_update_blends_parameters() {
        let online = DenseNet {
            layers: vec![Layer {
                weights: array![[2.0]],
                biases: array![2.0],
                activation: Activation::Identity,
            }],
        };
        let zero = || DenseNet {
            layers: vec![Layer {
                weights: array![[0.0]],
                biases: array![0.0],
                activation: Activation::Identity,
            }],
        };
        let mut full = zero();
        soft_update(&mut full, &online, 1.0).unwrap();
        assert_eq!(full, online);
        let mut still = zero();
        soft_update(&mut still, &online, 0.0).unwrap();
        assert_eq!(still, zero());
        let mut mid = zero();
        soft_update(&mut mid, &online, 0.5).unwrap();
        assert_eq!(mid.layers()[0].weights[[0, 0]], 1.0);
    }

    #[test]
    fn soft_update_converges_geometrically() {
        let online = DenseNet {
            layers: vec![Layer {
                weights: array![[1.0]],
                biases: array![0.0],
                activation: Activation::Identity,
            }],
        };
        let mut target = DenseNet {
            layers: vec![Layer {
                weights: array![[0.0]],
                biases: array![0.0],
                activation: Activation::Identity,
            }],
        };
        let phi = 0.25;
        for k in 1..=20 {
            soft_update(&mut target, &online, phi).unwrap();
            let gap = (1.0 - target.layers()[0].weights[[0, 0]]).abs();
            let expect = (1.0 - phi_f(phi, k)).abs();
            assert!((gap - expect).abs() < 1e-12);
        }
        fn phi_f(phi: f64, k: u32) -> f64 {
            1.0 - (1.0 - phi).powi(k as i32)
        }
    }

    #[test]
    fn soft_update_rejects_shape_mismatch() {
        let mut rng = stream(7, labels::WEIGHTS);
        let online =
            DenseNet::init(&[2, 4, 1], &[Activation::Rectifier, Activation::Identity], &mut rng);
        let mut target =
            DenseNet::init(&[2, 5, 1], &[Activation::Rectifier, Activation::Identity], &mut rng);
        assert!(soft_update(&mut target, &online, 0.5).is_err());
    }

    #[test]
    fn nets_round_trip_through_json() {
        let mut rng = stream(8, labels::WEIGHTS);
        let net = DenseNet::init(
            &[3, 64, 64, 1],
            &[Activation::Rectifier, Activation::Rectifier, Activation::Identity],
            &mut rng,
        );
        let json = serde_json::to_string(&net).unwrap();
        let back: DenseNet = serde_json::from_str(&json).unwrap();
        assert_eq!(net, back);
        let x = array![[0.1, 0.9, 0.4]];
        assert_eq!(net.forward(x.view()), back.forward(x.view()));
    }

    #[test]
    fn adam_state_round_trips_through_json() {
        let mut rng = stream(9, labels::WEIGHTS);
        let mut net =
            DenseNet::init(&[2, 4, 1], &[Activation::Rectifier, Activation::Identity], &mut rng);
        let mut state = AdamState::new(&net);
        let mut tape = GradientTape::zeros_like(&net);
        tape.grads[0].0[[0, 0]] = 0.7;
        adam_step(&mut net, &mut state, &tape, 1e-3);
        let json = serde_json::to_string(&state).unwrap();
        let back: AdamState = serde_json::from_str(&json).unwrap();
        assert_eq!(state, back);
    }

    #[test]
    fn non_finite_parameters_are_detected() {
        let mut rng = stream(10, labels::WEIGHTS);
        let mut net =
            DenseNet::init(&[2, 4, 1], &[Activation::Rectifier, Activation::Identity], &mut rng);
        assert!(net.assert_finite("ok").is_ok());
        net.layers_mut()[0].weights[[0, 0]] = f64::NAN;
        assert!(matches!(net.assert_finite("critic"), Err(SimError::NonFinite(_))));
    }

    #[test]
    fn reinit_final_bounds_the_head() {
        let mut rng = stream(11, labels::WEIGHTS);
        let mut net = DenseNet::init(
            &[2, 64, 64, 1],
            &[Activation::Rectifier, Activation::Rectifier, Activation::Sigmoid],
            &mut rng,
        );
        net.reinit_final(3e-3, &mut rng);
        let last = net.layers().last().unwrap();
        assert!(last.weights.iter().chain(last.biases.iter()).all(|v| v.abs() <= 3e-3));
        // A sigmoid head with near-zero parameters starts near 0.5.
        let y = net.forward_one(&[0.5, 0.5]);
        assert!((y[0] - 0.5).abs() < 0.05);
    }
}
