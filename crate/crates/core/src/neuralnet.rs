//! Dense feed-forward Q-network with two ReLU hidden layers and two linear
//! output heads, hand-written backpropagation, and SGD/Adam optimizers.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HIDDEN1: usize = 25;
pub const HIDDEN2: usize = 15;
pub const HEAD_WIDTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    Action,
    Message,
}

/// Offsets of each parameter block inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    input_dim: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    wa: usize,
    ba: usize,
    wm: usize,
    bm: usize,
    len: usize,
}

impl Layout {
    fn new(input_dim: usize) -> Self {
        let w1 = 0;
        let b1 = w1 + HIDDEN1 * input_dim;
        let w2 = b1 + HIDDEN1;
        let b2 = w2 + HIDDEN2 * HIDDEN1;
        let wa = b2 + HIDDEN2;
        let ba = wa + HEAD_WIDTH * HIDDEN2;
        let wm = ba + HEAD_WIDTH;
        let bm = wm + HEAD_WIDTH * HIDDEN2;
        let len = bm + HEAD_WIDTH;
        Layout {
            input_dim,
            w1,
            b1,
            w2,
            b2,
            wa,
            ba,
            wm,
            bm,
            len,
        }
    }

    fn head_weights(&self, head: Head) -> (usize, usize) {
        match head {
            Head::Action => (self.wa, self.ba),
            Head::Message => (self.wm, self.bm),
        }
    }
}

/// Q-values of both heads for one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadOutputs {
    pub action: [f64; HEAD_WIDTH],
    pub message: [f64; HEAD_WIDTH],
}

impl HeadOutputs {
    pub fn head(&self, head: Head) -> &[f64; HEAD_WIDTH] {
        match head {
            Head::Action => &self.action,
            Head::Message => &self.message,
        }
    }
}

/// Hidden activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone, Copy)]
pub struct Activations {
    h1: [f64; HIDDEN1],
    h2: [f64; HIDDEN2],
    pub outputs: HeadOutputs,
}

/// Weights are stored row-major as `out x in` blocks in a single flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layout: Layout,
    params: Vec<f64>,
}

impl Mlp {
    /// He-style uniform fan-in initialization, zero biases.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, rng: &mut R) -> Self {
        assert!(input_dim >= 1, "input_dim must be positive");
        let mut net = Self::zeros(input_dim);
        let l = net.layout;
        let blocks = [
            (l.w1, HIDDEN1 * input_dim, input_dim),
            (l.w2, HIDDEN2 * HIDDEN1, HIDDEN1),
            (l.wa, HEAD_WIDTH * HIDDEN2, HIDDEN2),
            (l.wm, HEAD_WIDTH * HIDDEN2, HIDDEN2),
        ];
        for (start, count, fan_in) in blocks {
            let bound = (6.0 / fan_in as f64).sqrt();
            for w in &mut net.params[start..start + count] {
                *w = rng.random_range(-bound..bound);
            }
        }
        net
    }

    pub fn zeros(input_dim: usize) -> Self {
        let layout = Layout::new(input_dim);
        Mlp {
            layout,
            params: vec![0.0; layout.len],
        }
    }

    pub fn from_params(input_dim: usize, params: Vec<f64>) -> Result<Self> {
        let layout = Layout::new(input_dim);
        if params.len() != layout.len {
            return Err(Error::Parse(format!(
                "expected {} parameters for input_dim {input_dim}, got {}",
                layout.len,
                params.len()
            )));
        }
        Ok(Mlp { layout, params })
    }

    pub fn input_dim(&self) -> usize {
        self.layout.input_dim
    }

    pub fn layer_sizes(&self) -> [usize; 5] {
        [self.layout.input_dim, HIDDEN1, HIDDEN2, HEAD_WIDTH, HEAD_WIDTH]
    }

    pub fn param_count(&self) -> usize {
        self.layout.len
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, input: &[f64]) -> HeadOutputs {
        self.forward_cached(input).outputs
    }

    pub fn forward_cached(&self, input: &[f64]) -> Activations {
        let l = &self.layout;
        assert_eq!(input.len(), l.input_dim, "input dimension mismatch");
        let p = &self.params;

        let mut h1 = [0.0; HIDDEN1];
        for (j, h) in h1.iter_mut().enumerate() {
            let row = &p[l.w1 + j * l.input_dim..l.w1 + (j + 1) * l.input_dim];
            let z = p[l.b1 + j] + dot(row, input);
            *h = z.max(0.0);
        }
        let mut h2 = [0.0; HIDDEN2];
        for (j, h) in h2.iter_mut().enumerate() {
            let row = &p[l.w2 + j * HIDDEN1..l.w2 + (j + 1) * HIDDEN1];
            let z = p[l.b2 + j] + dot(row, &h1);
            *h = z.max(0.0);
        }
        let head = |w: usize, b: usize| {
            let mut out = [0.0; HEAD_WIDTH];
            for (k, o) in out.iter_mut().enumerate() {
                let row = &p[w + k * HIDDEN2..w + (k + 1) * HIDDEN2];
                *o = p[b + k] + dot(row, &h2);
            }
            out
        };
        let outputs = HeadOutputs {
            action: head(l.wa, l.ba),
            message: head(l.wm, l.bm),
        };
        Activations { h1, h2, outputs }
    }

    /// Gradient of `output[head][unit]` scaled by `loss_grad`.
    pub fn backward(&self, input: &[f64], head: Head, unit: usize, loss_grad: f64) -> Gradients {
        assert!(unit < HEAD_WIDTH, "unit index out of range");
        let acts = self.forward_cached(input);
        let mut d_action = [0.0; HEAD_WIDTH];
        let mut d_message = [0.0; HEAD_WIDTH];
        match head {
            Head::Action => d_action[unit] = loss_grad,
            Head::Message => d_message[unit] = loss_grad,
        }
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_gradients(input, &acts, &d_action, &d_message, &mut grads);
        grads
    }

    /// Adds the parameter gradient for the given output-space gradients of
    /// both heads into `grads`.
    pub fn accumulate_gradients(
        &self,
        input: &[f64],
        acts: &Activations,
        d_action: &[f64; HEAD_WIDTH],
        d_message: &[f64; HEAD_WIDTH],
        grads: &mut Gradients,
    ) {
        let l = &self.layout;
        let p = &self.params;
        let g = &mut grads.values;
        debug_assert_eq!(g.len(), l.len);

        let mut d_h2 = [0.0; HIDDEN2];
        for (head, d_out) in [(Head::Action, d_action), (Head::Message, d_message)] {
            let (w, b) = l.head_weights(head);
            for (k, &d) in d_out.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g[b + k] += d;
                let row = w + k * HIDDEN2;
                for j in 0..HIDDEN2 {
                    g[row + j] += d * acts.h2[j];
                    d_h2[j] += d * p[row + j];
                }
            }
        }

        let mut d_h1 = [0.0; HIDDEN1];
        for j in 0..HIDDEN2 {
            if acts.h2[j] <= 0.0 {
                continue;
            }
            let d = d_h2[j];
            g[l.b2 + j] += d;
            let row = l.w2 + j * HIDDEN1;
            for i in 0..HIDDEN1 {
                g[row + i] += d * acts.h1[i];
                d_h1[i] += d * p[row + i];
            }
        }

        for j in 0..HIDDEN1 {
            if acts.h1[j] <= 0.0 {
                continue;
            }
            let d = d_h1[j];
            g[l.b1 + j] += d;
            let row = l.w1 + j * l.input_dim;
            for (gi, &x) in g[row..row + l.input_dim].iter_mut().zip(input) {
                *gi += d * x;
            }
        }
    }

    /// Text dump: a `layers ...` header then one parameter per line.
    pub fn to_text(&self) -> String {
        let sizes = self.layer_sizes();
        let mut out = format!(
            "layers {} {} {} {} {}\n",
            sizes[0], sizes[1], sizes[2], sizes[3], sizes[4]
        );
        for v in &self.params {
            let _ = writeln!(out, "{v:e}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty parameter dump".into()))?;
        let sizes: Vec<usize> = header
            .strip_prefix("layers ")
            .ok_or_else(|| Error::Parse(format!("bad header `{header}`")))?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::Parse(format!("bad layer size `{s}`"))))
            .collect::<Result<_>>()?;
        if sizes.len() != 5 || sizes[1..] != [HIDDEN1, HIDDEN2, HEAD_WIDTH, HEAD_WIDTH] {
            return Err(Error::Parse(format!("unsupported layer sizes {sizes:?}")));
        }
        let params = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad parameter `{l}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_params(sizes[0], params)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Parameter-shaped gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            values: vec![0.0; net.param_count()],
        }
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Gradient entries belonging to one head's output weights and biases.
    pub fn head_block(&self, net: &Mlp, head: Head) -> &[f64] {
        let (w, b) = net.layout.head_weights(head);
        debug_assert_eq!(b, w + HEAD_WIDTH * HIDDEN2);
        &self.values[w..b + HEAD_WIDTH]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Sgd,
    Adam,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    algorithm: Algorithm,
    learning_rate: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    steps: i32,
}

impl OptimizerState {
    pub fn new(algorithm: Algorithm, learning_rate: f64, net: &Mlp) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::config(
                "learning_rate",
                format!("must be positive, got {learning_rate}"),
            ));
        }
        let n = match algorithm {
            Algorithm::Sgd => 0,
            Algorithm::Adam => net.param_count(),
        };
        Ok(OptimizerState {
            algorithm,
            learning_rate,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            steps: 0,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// Applies one update. Non-finite gradients abort without touching the net.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        assert_eq!(grads.values.len(), net.param_count(), "gradient shape mismatch");
        if let Some((i, v)) = grads.values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "gradient",
                detail: format!("entry {i} is {v} (step {})", self.steps),
            });
        }
        let lr = self.learning_rate;
        match self.algorithm {
            Algorithm::Sgd => {
                for (w, g) in net.params.iter_mut().zip(&grads.values) {
                    *w -= lr * g;
                }
            }
            Algorithm::Adam => {
                self.steps += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(self.steps);
                let c2 = 1.0 - ADAM_BETA2.powi(self.steps);
                for (((w, &g), m), v) in net
                    .params
                    .iter_mut()
                    .zip(&grads.values)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_count_for_nine_inputs() {
        let net = Mlp::init(9, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(9 * 25 + 25 + 25 * 15 + 15 + 2 * (15 * 4 + 4), 768);
        assert_eq!(net.param_count(), 768);
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = Mlp::init(9, &mut ChaCha8Rng::seed_from_u64(11));
        let b = Mlp::init(9, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
        let l = a.layout;
        assert!(a.params[l.b1..l.b1 + HIDDEN1].iter().all(|&v| v == 0.0));
        assert!(a.params[l.bm..].iter().all(|&v| v == 0.0));
        let bound = (6.0f64 / 9.0).sqrt();
        assert!(a.params[l.w1..l.b1].iter().all(|v| v.abs() < bound));
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(9);
        let out = net.forward(&[0.3, -1.0, 2.0, 0.0, 5.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(out.action, [0.0; 4]);
        assert_eq!(out.message, [0.0; 4]);
    }

    #[test]
    fn hand_computed_forward() {
        // one live path: x0 -> h1[0] -> h2[0] -> action[2] and message[1]
        let mut net = Mlp::zeros(2);
        let l = net.layout;
        let p = &mut net.params;
        p[l.w1] = 2.0; // h1[0] = relu(2*x0 - x1 + 0.5)
        p[l.w1 + 1] = -1.0;
        p[l.b1] = 0.5;
        p[l.w2] = 3.0; // h2[0] = relu(3*h1[0] - 1)
        p[l.b2] = -1.0;
        p[l.wa + 2 * HIDDEN2] = 0.5; // action[2] = 0.5*h2[0] + 0.25
        p[l.ba + 2] = 0.25;
        p[l.wm + HIDDEN2] = -2.0; // message[1] = -2*h2[0]
        let out = net.forward(&[1.0, 0.5]);
        // h1 = relu(2 - 0.5 + 0.5) = 2; h2 = relu(6 - 1) = 5
        assert_eq!(out.action, [0.0, 0.0, 2.75, 0.0]);
        assert_eq!(out.message, [0.0, -10.0, 0.0, 0.0]);
        // negative pre-activation is cut by relu: h1 = relu(-2 - 0.5 + 0.5) = 0 -> h2 = relu(-1) = 0
        let out = net.forward(&[-1.0, 0.5]);
        assert_eq!(out.action, [0.0, 0.0, 0.25, 0.0]);
    }

    #[test]
    fn positive_homogeneity_without_biases() {
        let net = Mlp::init(9, &mut ChaCha8Rng::seed_from_u64(3));
        let x: Vec<f64> = (0..9).map(|i| (i as f64 - 4.0) * 0.3).collect();
        let scaled: Vec<f64> = x.iter().map(|v| v * 2.5).collect();
        let a = net.forward(&x);
        let b = net.forward(&scaled);
        for k in 0..4 {
            assert!((b.action[k] - 2.5 * a.action[k]).abs() < 1e-12);
            assert!((b.message[k] - 2.5 * a.message[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_zero_grad_is_zero() {
        let net = Mlp::init(9, &mut ChaCha8Rng::seed_from_u64(3));
        let g = net.backward(&[0.5; 9], Head::Action, 1, 0.0);
        assert!(g.is_zero());
    }

    #[test]
    fn other_head_block_is_untouched() {
        let net = Mlp::init(9, &mut ChaCha8Rng::seed_from_u64(8));
        let g = net.backward(&[0.5; 9], Head::Action, 2, 1.0);
        assert!(g.head_block(&net, Head::Message).iter().all(|&v| v == 0.0));
        let g = net.backward(&[0.5; 9], Head::Message, 0, 1.0);
        assert!(g.head_block(&net, Head::Action).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sgd_step() {
        let mut net = Mlp::zeros(1);
        net.params[0] = 1.0;
        let mut opt = OptimizerState::new(Algorithm::Sgd, 0.1, &net).unwrap();
        let mut g = Gradients::zeros_like(&net);
        g.values[0] = 1.0;
        opt.step(&mut net, &g).unwrap();
        assert!((net.params[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut net = Mlp::zeros(1);
        let mut opt = OptimizerState::new(Algorithm::Adam, 1e-3, &net).unwrap();
        let mut g = Gradients::zeros_like(&net);
        g.values[0] = 0.37;
        g.values[1] = -4.0;
        opt.step(&mut net, &g).unwrap();
        // m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps)
        assert!((net.params[0] + 1e-3 * 0.37 / (0.37 + ADAM_EPS)).abs() < 1e-15);
        assert!((net.params[1] - 1e-3).abs() < 1e-10);
        assert_eq!(net.params[2], 0.0);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = Mlp::init(9, &mut ChaCha8Rng::seed_from_u64(2));
        let before = net.clone();
        for alg in [Algorithm::Sgd, Algorithm::Adam] {
            let mut opt = OptimizerState::new(alg, 0.01, &net).unwrap();
            opt.step(&mut net, &Gradients::zeros_like(&before)).unwrap();
            assert_eq!(net, before);
        }
    }

    #[test]
    fn non_finite_gradient_fails_fast() {
        let mut net = Mlp::zeros(2);
        let before = net.clone();
        let mut opt = OptimizerState::new(Algorithm::Adam, 0.01, &net).unwrap();
        let mut g = Gradients::zeros_like(&net);
        g.values[5] = f64::NAN;
        let err = opt.step(&mut net, &g).unwrap_err();
        assert!(err.to_string().contains("entry 5"));
        assert_eq!(net, before);
    }

    #[test]
    fn bad_learning_rate_is_rejected() {
        let net = Mlp::zeros(2);
        assert!(OptimizerState::new(Algorithm::Adam, 0.0, &net).is_err());
        assert!(OptimizerState::new(Algorithm::Sgd, f64::NAN, &net).is_err());
    }

    #[test]
    fn text_dump_round_trip() {
        let net = Mlp::init(9, &mut ChaCha8Rng::seed_from_u64(21));
        let text = net.to_text();
        assert!(text.starts_with("layers 9 25 15 4 4\n"));
        assert_eq!(Mlp::from_text(&text).unwrap(), net);
        assert!(Mlp::from_text("layers 9 20 15 4 4\n").is_err());
    }

    fn squared_error(net: &Mlp, x: &[f64], head: Head, unit: usize, target: f64) -> f64 {
        let q = net.forward(x).head(head)[unit];
        (q - target).powi(2)
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..5 {
            let mut net = Mlp::init(9, &mut rng);
            for v in net.params_mut() {
                *v += rng.random_range(-0.05..0.05);
            }
            let x: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
            let head = if trial % 2 == 0 { Head::Action } else { Head::Message };
            let unit = trial % HEAD_WIDTH;
            let q = net.forward(&x).head(head)[unit];
            let grads = net.backward(&x, head, unit, 2.0 * (q - 0.3));
            let h = 1e-5;
            for i in 0..net.param_count() {
                let orig = net.params()[i];
                net.params_mut()[i] = orig + h;
                let up = squared_error(&net, &x, head, unit, 0.3);
                net.params_mut()[i] = orig - h;
                let down = squared_error(&net, &x, head, unit, 0.3);
                net.params_mut()[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.values[i];
                let scale = analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    (analytic - numeric).abs() / scale < 1e-4,
                    "trial {trial} param {i}: {analytic} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn adam_fits_a_single_target() {
        let mut net = Mlp::init(9, &mut ChaCha8Rng::seed_from_u64(8));
        let mut opt = OptimizerState::new(Algorithm::Adam, 1e-3, &net).unwrap();
        let x = [1.0, 0.0, 1.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25];
        let target = 0.8;
        let mut converged_at = None;
        for it in 0..5000 {
            let q = net.forward(&x).action[2];
            if (q - target).abs() < 1e-3 {
                converged_at = Some(it);
                break;
            }
            let g = net.backward(&x, Head::Action, 2, 2.0 * (q - target));
            opt.step(&mut net, &g).unwrap();
        }
        assert!(converged_at.is_some(), "no convergence in 5000 steps");
    }
}
