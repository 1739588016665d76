//! MLP building blocks, parameter registry and the Adam optimizer.

use rand::rngs::StdRng;
use rand::Rng;

use crate::array::Array;
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

/// Fully connected network with one activation kind on hidden layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub widths: Vec<usize>,
    pub weights: Vec<Array>,
    pub biases: Vec<Array>,
    pub activation: Activation,
}

impl Mlp {
    /// Zero-initialized network; weights come from [`Mlp::init`].
    pub fn new(widths: &[usize], activation: Activation) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in widths.windows(2) {
            weights.push(Array::zeros(&[pair[0], pair[1]]));
            biases.push(Array::zeros(&[pair[1]]));
        }
        Mlp { widths: widths.to_vec(), weights, biases, activation }
    }

    /// Uniform fan-average initialization: W ~ U(-a, a) with
    /// a = sqrt(6 / (fan_in + fan_out)); biases zero. Deterministic per rng.
    pub fn init(widths: &[usize], activation: Activation, rng: &mut StdRng) -> Self {
        let mut net = Mlp::new(widths, activation);
        for (k, pair) in widths.windows(2).enumerate() {
            let a = (6.0 / (pair[0] + pair[1]) as f64).sqrt();
            for w in net.weights[k].data_mut() {
                *w = rng.gen_range(-a..a);
            }
        }
        net
    }

    pub fn in_width(&self) -> usize {
        self.widths[0]
    }

    pub fn out_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Stage parameters on a tape as differentiable leaves.
    pub fn stage<'t>(&self, tape: &'t Tape) -> MlpVars<'t> {
        self.stage_with(tape, true)
    }

    /// Stage parameters as constants (no gradient flow into this net).
    pub fn stage_frozen<'t>(&self, tape: &'t Tape) -> MlpVars<'t> {
        self.stage_with(tape, false)
    }

    fn stage_with<'t>(&self, tape: &'t Tape, differentiable: bool) -> MlpVars<'t> {
        let lift = |a: &Array| {
            if differentiable {
                tape.leaf(a.clone())
            } else {
                tape.constant(a.clone())
            }
        };
        MlpVars {
            weights: self.weights.iter().map(lift).collect(),
            biases: self.biases.iter().map(lift).collect(),
            activation: self.activation,
            in_width: self.in_width(),
        }
    }

    /// Forward pass on a fresh tape for non-training use.
    pub fn forward_value(&self, input: &Array) -> Result<Array> {
        let tape = Tape::new();
        let x = tape.constant(input.clone());
        let staged = self.stage_frozen(&tape);
        let out = staged.forward(x)?;
        tape.eval(out)
    }

    /// Named parameter walk in a stable order, matching [`Mlp::stage`].
    pub fn visit_params(&self, prefix: &str, f: &mut impl FnMut(String, &Array)) {
        for (k, w) in self.weights.iter().enumerate() {
            f(format!("{prefix}.w{k}"), w);
        }
        for (k, b) in self.biases.iter().enumerate() {
            f(format!("{prefix}.b{k}"), b);
        }
    }

    pub fn visit_params_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut Array)) {
        for (k, w) in self.weights.iter_mut().enumerate() {
            f(format!("{prefix}.w{k}"), w);
        }
        for (k, b) in self.biases.iter_mut().enumerate() {
            f(format!("{prefix}.b{k}"), b);
        }
    }
}

/// Tape-staged MLP parameters.
pub struct MlpVars<'t> {
    pub weights: Vec<Var<'t>>,
    pub biases: Vec<Var<'t>>,
    activation: Activation,
    in_width: usize,
}

impl<'t> MlpVars<'t> {
    /// `input` is `[batch, in_width]`; output is `[batch, out_width]`.
    pub fn forward(&self, input: Var<'t>) -> Result<Var<'t>> {
        let shape = input.shape();
        if shape.len() != 2 || shape[1] != self.in_width {
            return Err(Error::Shape(format!(
                "mlp input shape {:?} does not match input width {}",
                shape, self.in_width
            )));
        }
        let depth = self.weights.len();
        let mut h = input;
        for k in 0..depth {
            h = h.matmul(self.weights[k]) + self.biases[k];
            if k + 1 < depth {
                h = match self.activation {
                    Activation::Tanh => h.tanh(),
                    Activation::Identity => h,
                };
            }
        }
        Ok(h)
    }

    /// All staged vars in the same order as `visit_params`.
    pub fn params(&self) -> Vec<Var<'t>> {
        self.weights.iter().chain(self.biases.iter()).copied().collect()
    }
}

/// Adam with bias correction. Moments are kept per parameter index, so the
/// caller must pass parameters in a stable order.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Array>,
    v: Vec<Array>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Begin a visitor-driven step over `count` parameters; pair with one
    /// [`Adam::update`] call per parameter in a stable order.
    pub fn begin(&mut self, count: usize) {
        if self.m.is_empty() && count > 0 {
            self.m.reserve(count);
            self.v.reserve(count);
        }
        self.step += 1;
    }

    /// Update one parameter within a visitor-driven step.
    pub fn update(&mut self, idx: usize, name: &str, p: &mut Array, g: &Array) -> Result<()> {
        if !g.all_finite() {
            return Err(Error::Diverged(name.to_string()));
        }
        if g.shape() != p.shape() {
            return Err(Error::Shape(format!(
                "gradient shape {:?} does not match parameter '{}' shape {:?}",
                g.shape(),
                name,
                p.shape()
            )));
        }
        if idx == self.m.len() {
            self.m.push(Array::zeros(p.shape()));
            self.v.push(Array::zeros(p.shape()));
        }
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let m = self.m[idx].data_mut();
        let v = self.v[idx].data_mut();
        let pd = p.data_mut();
        let gd = g.data();
        for i in 0..pd.len() {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gd[i];
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gd[i] * gd[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            pd[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }

    /// One update over `(name, param, grad)` triples. Returns
    /// [`Error::Diverged`] naming the parameter if a gradient is non-finite.
    pub fn step(&mut self, params: &mut [(&str, &mut Array, &Array)]) -> Result<()> {
        if self.m.is_empty() {
            for (_, p, _) in params.iter() {
                self.m.push(Array::zeros(p.shape()));
                self.v.push(Array::zeros(p.shape()));
            }
        }
        assert_eq!(self.m.len(), params.len(), "parameter set changed between steps");
        for (name, p, g) in params.iter() {
            if !g.all_finite() {
                return Err(Error::Diverged(name.to_string()));
            }
            if g.shape() != p.shape() {
                return Err(Error::Shape(format!(
                    "gradient shape {:?} does not match parameter '{}' shape {:?}",
                    g.shape(),
                    name,
                    p.shape()
                )));
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (idx, (_, p, g)) in params.iter_mut().enumerate() {
            let m = self.m[idx].data_mut();
            let v = self.v[idx].data_mut();
            let pd = p.data_mut();
            let gd = g.data();
            for i in 0..pd.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gd[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gd[i] * gd[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                pd[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{central_diff, max_rel_err, random_vec, seeded_rng};

    #[test]
    fn zero_weights_yield_bias() {
        let mut net = Mlp::new(&[3, 4], Activation::Identity);
        net.biases[0] = Array::vector(&[1.0, -2.0, 0.5, 3.0]);
        let out = net
            .forward_value(&Array::from_vec(&[2, 3], vec![0.3, 1.0, -0.7, 2.0, 0.1, 0.9]).unwrap())
            .unwrap();
        for i in 0..2 {
            for (j, want) in [1.0, -2.0, 0.5, 3.0].iter().enumerate() {
                assert_eq!(out.at(i, j), *want);
            }
        }
    }

    #[test]
    fn identity_net_passes_input_through() {
        let mut net = Mlp::new(&[3, 3], Activation::Identity);
        for k in 0..3 {
            *net.weights[0].at_mut(k, k) = 1.0;
        }
        let x = Array::from_vec(&[2, 3], vec![0.1, 0.2, 0.3, -0.4, 0.5, -0.6]).unwrap();
        assert_eq!(net.forward_value(&x).unwrap(), x);
    }

    #[test]
    fn forward_width_mismatch_is_shape_error() {
        let net = Mlp::new(&[3, 2], Activation::Tanh);
        let tape = Tape::new();
        let x = tape.constant(Array::from_vec(&[1, 4], vec![0.0; 4]).unwrap());
        let err = net.stage(&tape).forward(x).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{err}");
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let mut rng = seeded_rng(5);
        let net = Mlp::init(&[3, 8, 2], Activation::Tanh, &mut rng);
        let input = Array::from_vec(&[4, 3], random_vec(&mut rng, 12, -1.0, 1.0)).unwrap();

        let flat = |net: &Mlp| -> Vec<f64> {
            let mut all = Vec::new();
            net.visit_params("net", &mut |_, a| all.extend_from_slice(a.data()));
            all
        };
        let unflat = |template: &Mlp, v: &[f64]| -> Mlp {
            let mut net = template.clone();
            let mut pos = 0;
            net.visit_params_mut("net", &mut |_, a| {
                let n = a.numel();
                a.data_mut().copy_from_slice(&v[pos..pos + n]);
                pos += n;
            });
            net
        };
        let loss_of = |net: &Mlp| -> f64 {
            let tape = Tape::new();
            let x = tape.constant(input.clone());
            let out = net.stage(&tape).forward(x).unwrap();
            out.square().sum().item().unwrap()
        };

        let tape = Tape::new();
        let x = tape.constant(input.clone());
        let staged = net.stage(&tape);
        let loss = staged.forward(x).unwrap().square().sum();
        let grads = tape.grad(loss, &staged.params()).unwrap();
        let mut got = Vec::new();
        for g in grads {
            got.extend_from_slice(g.value().unwrap().data());
        }

        let x0 = flat(&net);
        let want = central_diff(|v| loss_of(&unflat(&net, v)), &x0, 1e-5);
        assert!(max_rel_err(&got, &want, 1e-6) < 1e-4);
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = Mlp::init(&[5, 16, 2], Activation::Tanh, &mut seeded_rng(9));
        let b = Mlp::init(&[5, 16, 2], Activation::Tanh, &mut seeded_rng(9));
        let c = Mlp::init(&[5, 16, 2], Activation::Tanh, &mut seeded_rng(10));
        assert_eq!(a.weights[0], b.weights[0]);
        assert_ne!(a.weights[0], c.weights[0]);
        for bias in &a.biases {
            assert!(bias.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn init_scale_matches_fan_average_rule() {
        // U(-a, a) has std a/sqrt(3); check the empirical std on a wide layer.
        let net = Mlp::init(&[256, 256], Activation::Tanh, &mut seeded_rng(1));
        let a = (6.0 / 512.0f64).sqrt();
        let target = a / 3.0f64.sqrt();
        let data = net.weights[0].data();
        let mean: f64 = data.iter().sum::<f64>() / data.len() as f64;
        let std =
            (data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / data.len() as f64).sqrt();
        assert!((std - target).abs() / target < 0.2, "std {std}, target {target}");
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut p = Array::vector(&[1.0, -2.0]);
        let g = Array::zeros(&[2]);
        let snapshot = p.clone();
        let mut opt = Adam::new(1e-3);
        opt.step(&mut [("p", &mut p, &g)]).unwrap();
        assert_eq!(p, snapshot);
    }

    #[test]
    fn adam_first_step_is_bias_corrected() {
        // g = 1, lr = 1e-3: mhat = 1, vhat = 1 => dp ~= -lr.
        let mut p = Array::scalar(0.0);
        let g = Array::scalar(1.0);
        let mut opt = Adam::new(1e-3);
        opt.step(&mut [("p", &mut p, &g)]).unwrap();
        let want = -1e-3 / (1.0 + 1e-8);
        assert!((p.item() - want).abs() < 1e-12);
    }

    #[test]
    fn adam_constant_gradient_approaches_lr_magnitude() {
        // Closed-form fixed point: with constant g, mhat -> g, vhat -> g^2,
        // so |dp| -> lr * |g| / (|g| + eps) ~= lr, independent of |g|.
        for &scale in &[0.01, 1.0, 100.0] {
            let mut p = Array::scalar(0.0);
            let g = Array::scalar(scale);
            let mut opt = Adam::new(1e-3);
            let mut last = 0.0;
            for _ in 0..500 {
                let before = p.item();
                opt.step(&mut [("p", &mut p, &g)]).unwrap();
                last = p.item() - before;
            }
            assert!(last < 0.0);
            assert!((last.abs() - 1e-3).abs() < 1e-5, "scale {scale}: step {last}");
        }
    }

    #[test]
    fn adam_nan_gradient_names_parameter() {
        let mut p = Array::scalar(0.0);
        let g = Array::scalar(f64::NAN);
        let mut opt = Adam::new(1e-3);
        let err = opt.step(&mut [("theta.w0", &mut p, &g)]).unwrap_err();
        assert!(err.to_string().contains("theta.w0"), "{err}");
    }
}
