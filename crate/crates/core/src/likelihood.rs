//! Per-type log-likelihoods and samplers for real, positive-real, binary and
//! categorical features, plus the fixed-variance Gaussian likelihood used by
//! the dependency decoder.

use rand::rngs::StdRng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tape::Var;

/// Variance of every fixed-noise Gaussian likelihood.
pub const GAUSSIAN_NOISE_VAR: f64 = 0.1;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureType {
    Real,
    /// Strictly positive reals, modeled as a Gaussian over log-values.
    Positive,
    Binary,
    Categorical(usize),
}

impl FeatureType {
    pub fn is_continuous(&self) -> bool {
        matches!(self, FeatureType::Real | FeatureType::Positive)
    }

    /// Number of natural parameters of the likelihood head.
    pub fn param_len(&self) -> usize {
        match self {
            FeatureType::Real | FeatureType::Positive | FeatureType::Binary => 1,
            FeatureType::Categorical(k) => *k,
        }
    }

    /// Width of the network input/imputation representation: scalar for
    /// continuous and binary kinds, one-hot for categorical.
    pub fn repr_len(&self) -> usize {
        match self {
            FeatureType::Categorical(k) => *k,
            _ => 1,
        }
    }

    pub fn check_support(&self, name: &str, x: f64) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::Domain { feature: name.to_string(), value: x, reason: reason.into() })
        };
        if !x.is_finite() {
            return fail("non-finite value");
        }
        match self {
            FeatureType::Real => Ok(()),
            FeatureType::Positive => {
                if x > 0.0 {
                    Ok(())
                } else {
                    fail("positive kind requires x > 0")
                }
            }
            FeatureType::Binary => {
                if x == 0.0 || x == 1.0 {
                    Ok(())
                } else {
                    fail("binary kind requires x in {0, 1}")
                }
            }
            FeatureType::Categorical(k) => {
                if x >= 0.0 && x.fract() == 0.0 && (x as usize) < *k {
                    Ok(())
                } else {
                    fail("categorical kind requires an index in 0..K")
                }
            }
        }
    }
}

/// Natural parameters with plain numeric values (sampling, metrics).
#[derive(Clone, Debug)]
pub enum ParamsValue {
    /// Mean of a fixed-variance Gaussian in model space.
    Gaussian { mean: f64, var: f64 },
    Bernoulli { logit: f64 },
    Categorical { logits: Vec<f64> },
}

impl ParamsValue {
    /// Interpret a parameter slice produced by a decoder head.
    pub fn from_slice(kind: FeatureType, params: &[f64]) -> Self {
        match kind {
            FeatureType::Real | FeatureType::Positive => {
                ParamsValue::Gaussian { mean: params[0], var: GAUSSIAN_NOISE_VAR }
            }
            FeatureType::Binary => ParamsValue::Bernoulli { logit: params[0] },
            FeatureType::Categorical(k) => {
                ParamsValue::Categorical { logits: params[..k].to_vec() }
            }
        }
    }

    /// Mean (continuous/binary) or argmax class (categorical), in model space.
    pub fn mean(&self) -> f64 {
        match self {
            ParamsValue::Gaussian { mean, .. } => *mean,
            ParamsValue::Bernoulli { logit } => sigmoid(*logit),
            ParamsValue::Categorical { logits } => {
                let mut best = 0;
                for (k, &v) in logits.iter().enumerate() {
                    if v > logits[best] {
                        best = k;
                    }
                }
                best as f64
            }
        }
    }
}

/// Exact log density/mass of `x` (model-space value) under numeric params.
pub fn log_prob_value(params: &ParamsValue, x: f64) -> f64 {
    match params {
        ParamsValue::Gaussian { mean, var } => {
            -0.5 * (LN_2PI + var.ln()) - (x - mean) * (x - mean) / (2.0 * var)
        }
        ParamsValue::Bernoulli { logit } => x * logit - softplus(*logit),
        ParamsValue::Categorical { logits } => {
            let lse = logsumexp(logits);
            logits[x as usize] - lse
        }
    }
}

/// Log density of a data-space value `x`, including the log-transform
/// Jacobian for the positive kind so NLL metrics compare in raw space.
pub fn log_prob_data_space(kind: FeatureType, params: &ParamsValue, name: &str, x: f64) -> Result<f64> {
    kind.check_support(name, x)?;
    let u = to_model_space(kind, x);
    let base = log_prob_value(params, u);
    Ok(match kind {
        FeatureType::Positive => base - x.ln(),
        _ => base,
    })
}

/// Sample in model space (continuous kinds) or class/bit space.
pub fn sample(params: &ParamsValue, rng: &mut StdRng) -> f64 {
    match params {
        ParamsValue::Gaussian { mean, var } => {
            let z: f64 = StandardNormal.sample(rng);
            mean + var.sqrt() * z
        }
        ParamsValue::Bernoulli { logit } => {
            if rng.gen::<f64>() < sigmoid(*logit) {
                1.0
            } else {
                0.0
            }
        }
        ParamsValue::Categorical { logits } => {
            let lse = logsumexp(logits);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (k, &l) in logits.iter().enumerate() {
                acc += (l - lse).exp();
                if u < acc {
                    return k as f64;
                }
            }
            (logits.len() - 1) as f64
        }
    }
}

/// Map a data-space value into the homogeneous model space: log for the
/// positive kind, identity otherwise (categorical values stay as indices).
pub fn to_model_space(kind: FeatureType, x: f64) -> f64 {
    match kind {
        FeatureType::Positive => x.ln(),
        _ => x,
    }
}

/// Inverse of [`to_model_space`]; categorical/binary values are rounded back
/// onto their support.
pub fn from_model_space(kind: FeatureType, u: f64) -> f64 {
    match kind {
        FeatureType::Positive => u.exp(),
        FeatureType::Binary => {
            if u >= 0.5 {
                1.0
            } else {
                0.0
            }
        }
        FeatureType::Categorical(k) => u.round().clamp(0.0, (k - 1) as f64),
        FeatureType::Real => u,
    }
}

/// Graph log-density of a fixed-variance Gaussian, elementwise.
pub fn gaussian_logpdf<'t>(x: Var<'t>, mean: Var<'t>, var: f64) -> Var<'t> {
    let q = (x - mean).square() * (-0.5 / var);
    q + (-0.5 * (LN_2PI + var.ln()))
}

/// Graph log-density of a diagonal Gaussian with graph-valued std.
pub fn gaussian_logpdf_std<'t>(x: Var<'t>, mean: Var<'t>, std: Var<'t>) -> Var<'t> {
    let z = (x - mean) * std.recip();
    -(z.square() * 0.5) - std.log() - 0.5 * LN_2PI
}

/// Graph Bernoulli log-mass: `x * logit - softplus(logit)`, elementwise,
/// with `x` a constant 0/1 array.
pub fn bernoulli_logpmf<'t>(x: Var<'t>, logit: Var<'t>) -> Var<'t> {
    x * logit - logit.softplus()
}

/// Graph categorical log-mass per row: `onehot` and `logits` are `[B, K]`;
/// result is `[B, 1]`.
pub fn categorical_logpmf<'t>(onehot: Var<'t>, logits: Var<'t>) -> Var<'t> {
    let rows = logits.shape()[0];
    (onehot * logits).sum_to_shape(&[rows, 1]) - logits.logsumexp()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Numerically stable log of the mean of exponentials.
pub fn log_mean_exp(v: &[f64]) -> f64 {
    logsumexp(v) - (v.len() as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::Array;
    use crate::tape::Tape;
    use crate::testkit::{central_diff, max_rel_err, seeded_rng};

    #[test]
    fn known_log_probs() {
        let g = ParamsValue::Gaussian { mean: 0.0, var: 1.0 };
        assert!((log_prob_value(&g, 0.0) + 0.9189385332046727).abs() < 1e-10);

        let b = ParamsValue::Bernoulli { logit: 0.0 };
        assert!((log_prob_value(&b, 1.0) + core::f64::consts::LN_2).abs() < 1e-10);

        let c = ParamsValue::Categorical { logits: vec![0.0; 4] };
        for k in 0..4 {
            assert!((log_prob_value(&c, k as f64) + 4.0f64.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn categorical_mass_sums_to_one() {
        let c = ParamsValue::Categorical { logits: vec![0.3, -1.2, 2.0, 0.0, -0.4] };
        let total: f64 = (0..5).map(|k| log_prob_value(&c, k as f64).exp()).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn support_violations_name_feature_and_value() {
        let err = FeatureType::Positive.check_support("income", -3.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("income") && msg.contains("-3"), "{msg}");
        assert!(FeatureType::Categorical(3).check_support("cat", 3.0).is_err());
        assert!(FeatureType::Categorical(3).check_support("cat", 2.0).is_ok());
        assert!(FeatureType::Binary.check_support("flag", 0.5).is_err());
    }

    #[test]
    fn model_space_round_trips() {
        assert_eq!(to_model_space(FeatureType::Positive, 1.0), 0.0);
        assert_eq!(to_model_space(FeatureType::Real, 2.5), 2.5);
        let x = 7.3;
        let u = to_model_space(FeatureType::Positive, x);
        assert!((from_model_space(FeatureType::Positive, u) - x).abs() < 1e-12);
    }

    #[test]
    fn saturated_heads_sample_deterministically() {
        let mut rng = seeded_rng(0);
        let b = ParamsValue::Bernoulli { logit: 20.0 };
        let ones = (0..10_000).filter(|_| sample(&b, &mut rng) == 1.0).count();
        assert!(ones as f64 / 10_000.0 > 0.999);

        let mut logits = vec![0.0; 4];
        logits[2] = 30.0;
        let c = ParamsValue::Categorical { logits };
        for _ in 0..100 {
            assert_eq!(sample(&c, &mut rng), 2.0);
        }
    }

    #[test]
    fn gaussian_sampler_clt_bound() {
        let mut rng = seeded_rng(13);
        let g = ParamsValue::Gaussian { mean: 5.0, var: 0.1 };
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| sample(&g, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 5.0).abs() < 0.02, "sample mean {mean}");
    }

    #[test]
    fn sampler_frequencies_pass_chi_square() {
        // chi^2 goodness of fit at alpha = 0.01 on fixed seeds.
        let mut rng = seeded_rng(21);
        let logits = vec![0.5, -0.3, 1.2, 0.0];
        let c = ParamsValue::Categorical { logits: logits.clone() };
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample(&c, &mut rng) as usize] += 1;
        }
        let lse = logsumexp(&logits);
        let mut chi2 = 0.0;
        for k in 0..4 {
            let expect = (logits[k] - lse).exp() * n as f64;
            let diff = counts[k] as f64 - expect;
            chi2 += diff * diff / expect;
        }
        // chi^2_{3, 0.99} = 11.345
        assert!(chi2 < 11.345, "chi2 {chi2}");

        let b = ParamsValue::Bernoulli { logit: -0.7 };
        let p = sigmoid(-0.7);
        let ones = (0..n).filter(|_| sample(&b, &mut rng) == 1.0).count() as f64;
        let expect = [n as f64 * (1.0 - p), n as f64 * p];
        let obs = [n as f64 - ones, ones];
        let chi2b: f64 =
            (0..2).map(|k| (obs[k] - expect[k]) * (obs[k] - expect[k]) / expect[k]).sum();
        // chi^2_{1, 0.99} = 6.635
        assert!(chi2b < 6.635, "chi2 {chi2b}");
    }

    #[test]
    fn graph_heads_match_numeric_and_finite_differences() {
        // Gaussian head gradient wrt mean.
        let want_fd = central_diff(
            |m| log_prob_value(&ParamsValue::Gaussian { mean: m[0], var: 0.1 }, 0.8),
            &[0.3],
            1e-6,
        );
        let t = Tape::new();
        let mean = t.leaf(Array::scalar(0.3));
        let x = t.constant(Array::scalar(0.8));
        let lp = gaussian_logpdf(x, mean, 0.1).sum();
        assert!(
            (lp.item().unwrap() - log_prob_value(&ParamsValue::Gaussian { mean: 0.3, var: 0.1 }, 0.8))
                .abs()
                < 1e-12
        );
        let g = t.grad(lp, &[mean]).unwrap()[0].value().unwrap();
        assert!(max_rel_err(g.data(), &want_fd, 1e-8) < 1e-6);

        // Bernoulli head gradient wrt logit.
        let want_fd = central_diff(
            |l| log_prob_value(&ParamsValue::Bernoulli { logit: l[0] }, 1.0),
            &[0.4],
            1e-6,
        );
        let t = Tape::new();
        let logit = t.leaf(Array::scalar(0.4));
        let x = t.constant(Array::scalar(1.0));
        let lp = bernoulli_logpmf(x, logit).sum();
        let g = t.grad(lp, &[logit]).unwrap()[0].value().unwrap();
        assert!(max_rel_err(g.data(), &want_fd, 1e-8) < 1e-6);

        // Categorical head gradient wrt logits.
        let logits0 = vec![0.2, -0.5, 0.9];
        let want_fd = central_diff(
            |l| log_prob_value(&ParamsValue::Categorical { logits: l.to_vec() }, 2.0),
            &logits0,
            1e-6,
        );
        let t = Tape::new();
        let logits = t.leaf(Array::from_vec(&[1, 3], logits0.clone()).unwrap());
        let onehot = t.constant(Array::from_vec(&[1, 3], vec![0.0, 0.0, 1.0]).unwrap());
        let lp = categorical_logpmf(onehot, logits).sum();
        assert!(
            (lp.item().unwrap()
                - log_prob_value(&ParamsValue::Categorical { logits: logits0.clone() }, 2.0))
            .abs()
                < 1e-12
        );
        let g = t.grad(lp, &[logits]).unwrap()[0].value().unwrap();
        assert!(max_rel_err(g.data(), &want_fd, 1e-8) < 1e-6);
    }

    #[test]
    fn positive_kind_includes_jacobian_in_data_space() {
        let params = ParamsValue::Gaussian { mean: 0.0, var: 1.0 };
        let x = 2.0;
        let got = log_prob_data_space(FeatureType::Positive, &params, "p", x).unwrap();
        let want = log_prob_value(&params, x.ln()) - x.ln();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn log_mean_exp_basics() {
        let v = vec![-1000.0, -1001.0];
        let lme = log_mean_exp(&v);
        assert!(lme.is_finite());
        // k = 1 identity
        assert!((log_mean_exp(&[-3.7]) + 3.7).abs() < 1e-12);
        // Jensen: lme >= mean of logs
        let mean: f64 = v.iter().sum::<f64>() / v.len() as f64;
        assert!(lme >= mean);
    }
}
