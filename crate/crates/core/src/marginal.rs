//! Per-feature one-dimensional VAEs that homogenize mixed-type features into
//! unidimensional Gaussian latent codes. Each feature gets an independent
//! encoder/decoder pair trained only on its observed entries.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::array::Array;
use crate::data::{MixedDataset, Standardizer};
use crate::error::Result;
use crate::likelihood::{
    bernoulli_logpmf, categorical_logpmf, gaussian_logpdf, softplus, FeatureType, ParamsValue,
    GAUSSIAN_NOISE_VAR,
};
use crate::nn::{Activation, Adam, Mlp, MlpVars};
use crate::tape::{Tape, Var};

/// Lower bound on every network-produced standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Network-input representation of a model-space value: scalar for
/// continuous/binary kinds, one-hot for categorical.
pub fn value_repr(kind: FeatureType, v: f64) -> Vec<f64> {
    match kind {
        FeatureType::Categorical(k) => {
            let mut out = vec![0.0; k];
            out[(v as usize).min(k - 1)] = 1.0;
            out
        }
        _ => vec![v],
    }
}

/// One-dimensional VAE for a single feature column.
#[derive(Clone, Debug)]
pub struct MarginalVae {
    pub kind: FeatureType,
    /// repr -> (mean, raw std) of q(z|x).
    pub encoder: Mlp,
    /// z -> natural parameters of p(x|z).
    pub decoder: Mlp,
    /// False for the identity-prior fallback used on all-missing columns.
    pub trained: bool,
}

impl MarginalVae {
    pub fn init(kind: FeatureType, hidden: usize, rng: &mut StdRng) -> Self {
        let encoder = Mlp::init(&[kind.repr_len(), hidden, 2], Activation::Tanh, rng);
        let decoder = Mlp::init(&[1, hidden, kind.param_len()], Activation::Tanh, rng);
        MarginalVae { kind, encoder, decoder, trained: false }
    }

    /// Posterior parameters for one model-space value.
    pub fn encode_params(&self, v: f64) -> (f64, f64) {
        let repr = value_repr(self.kind, v);
        let out = self
            .encoder
            .forward_value(&Array::from_vec(&[1, repr.len()], repr).unwrap())
            .expect("encoder widths fixed at init");
        (out.data()[0], softplus(out.data()[1]) + SIGMA_FLOOR)
    }

    /// Reparameterized code sample; missing values encode to exactly zero.
    pub fn encode_value(&self, v: f64, observed: bool, rng: &mut StdRng) -> (f64, f64, f64) {
        if !observed {
            return (0.0, 0.0, 0.0);
        }
        let (mu, sigma) = self.encode_params(v);
        let xi: f64 = StandardNormal.sample(rng);
        (mu + sigma * xi, mu, sigma)
    }

    /// Likelihood parameters decoded from a code value.
    pub fn decode_value(&self, z: f64) -> ParamsValue {
        let out = self
            .decoder
            .forward_value(&Array::from_vec(&[1, 1], vec![z]).unwrap())
            .expect("decoder widths fixed at init");
        ParamsValue::from_slice(self.kind, out.data())
    }

    /// Graph reconstruction term `log p(x|z)` for a batch of observed
    /// model-space values against a staged decoder.
    fn recon_logprob<'t>(
        &self,
        tape: &'t Tape,
        dec: &MlpVars<'t>,
        z: Var<'t>,
        values: &[f64],
    ) -> Result<Var<'t>> {
        let b = values.len();
        let params = dec.forward(z)?;
        Ok(match self.kind {
            FeatureType::Real | FeatureType::Positive => {
                let x = tape.constant(Array::from_vec(&[b, 1], values.to_vec())?);
                gaussian_logpdf(x, params, GAUSSIAN_NOISE_VAR)
            }
            FeatureType::Binary => {
                let x = tape.constant(Array::from_vec(&[b, 1], values.to_vec())?);
                bernoulli_logpmf(x, params)
            }
            FeatureType::Categorical(k) => {
                let mut onehot = vec![0.0; b * k];
                for (i, &v) in values.iter().enumerate() {
                    onehot[i * k + (v as usize).min(k - 1)] = 1.0;
                }
                let oh = tape.constant(Array::from_vec(&[b, k], onehot)?);
                categorical_logpmf(oh, params)
            }
        })
    }

    /// Single-sample ELBO rows for a batch of observed model-space values:
    /// `log p(x|z) - KL(q(z|x) || N(0,1))` with `z = mu + sigma * xi`.
    pub fn elbo_rows<'t>(
        &self,
        tape: &'t Tape,
        enc: &MlpVars<'t>,
        dec: &MlpVars<'t>,
        values: &[f64],
        rng: &mut StdRng,
    ) -> Result<Var<'t>> {
        let b = values.len();
        let mut repr = Vec::with_capacity(b * self.kind.repr_len());
        for &v in values {
            repr.extend(value_repr(self.kind, v));
        }
        let x = tape.constant(Array::from_vec(&[b, self.kind.repr_len()], repr)?);
        let heads = enc.forward(x)?;
        let mu = heads.slice(1, 0, 1);
        let sigma = heads.slice(1, 1, 1).softplus() + SIGMA_FLOOR;
        let noise: Vec<f64> = (0..b).map(|_| StandardNormal.sample(rng)).collect();
        let xi = tape.constant(Array::from_vec(&[b, 1], noise)?);
        let z = mu + sigma * xi;
        let recon = self.recon_logprob(tape, dec, z, values)?;
        let kl = gaussian_kl_rows(mu, sigma);
        Ok(recon - kl)
    }

    /// Spec-facing scalar ELBO for one value. Returns an exact zero node when
    /// the value is unobserved, so missing entries contribute no gradient.
    pub fn marginal_elbo<'t>(
        &self,
        tape: &'t Tape,
        value: f64,
        observed: bool,
        rng: &mut StdRng,
    ) -> Result<Var<'t>> {
        if !observed {
            return Ok(tape.zeros(&[]));
        }
        let enc = self.encoder.stage(tape);
        let dec = self.decoder.stage(tape);
        Ok(self.elbo_rows(tape, &enc, &dec, &[value], rng)?.sum())
    }
}

/// Closed-form KL(N(mu, sigma^2) || N(0,1)) per row for `[B,1]` heads.
pub fn gaussian_kl_rows<'t>(mu: Var<'t>, sigma: Var<'t>) -> Var<'t> {
    (mu.square() + sigma.square() - sigma.square().log() - 1.0) * 0.5
}

/// Observed model-space values of one feature column.
fn observed_column(ds: &MixedDataset, st: &Standardizer, col: usize) -> Vec<f64> {
    (0..ds.n)
        .filter(|&r| ds.x_observed(r, col))
        .map(|r| st.x_to_model(ds.feature_kinds[col], col, ds.x_at(r, col)))
        .collect()
}

/// Train the D marginal VAEs (Stage 1). Each feature owns an rng stream keyed
/// by `(seed, column)`, so training order cannot influence results. Returns
/// the VAEs plus warnings for all-missing columns that got the untrained
/// identity-prior fallback.
pub fn train_marginals(
    ds: &MixedDataset,
    st: &Standardizer,
    hidden: usize,
    steps: usize,
    batch: usize,
    lr: f64,
    seed: u64,
) -> Result<(Vec<MarginalVae>, Vec<String>)> {
    let mut vaes = Vec::with_capacity(ds.d());
    let mut warnings = Vec::new();
    for col in 0..ds.d() {
        let mut rng = StdRng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(col as u64 + 1)));
        let mut vae = MarginalVae::init(ds.feature_kinds[col], hidden, &mut rng);
        let values = observed_column(ds, st, col);
        if values.is_empty() {
            warnings.push(format!(
                "column '{}' has no observed values; using identity-prior fallback",
                ds.feature_names[col]
            ));
            vaes.push(vae);
            continue;
        }
        let mut opt = Adam::new(lr);
        for _ in 0..steps {
            let batch_vals: Vec<f64> =
                (0..batch.min(values.len())).map(|_| values[rng.gen_range(0..values.len())]).collect();
            let tape = Tape::new();
            let enc = vae.encoder.stage(&tape);
            let dec = vae.decoder.stage(&tape);
            let elbo = vae.elbo_rows(&tape, &enc, &dec, &batch_vals, &mut rng)?;
            let loss = -elbo.mean();
            let mut leaves = enc.params();
            leaves.extend(dec.params());
            let grads = tape.grad(loss, &leaves)?;
            let grad_values: Vec<Array> =
                grads.iter().map(|g| g.value()).collect::<Result<_>>()?;

            let mut names = Vec::new();
            vae.encoder.visit_params("enc", &mut |n, _| names.push(n));
            vae.decoder.visit_params("dec", &mut |n, _| names.push(n));
            let mut slots: Vec<&mut Array> = Vec::new();
            for w in vae.encoder.weights.iter_mut() {
                slots.push(w);
            }
            for b in vae.encoder.biases.iter_mut() {
                slots.push(b);
            }
            for w in vae.decoder.weights.iter_mut() {
                slots.push(w);
            }
            for b in vae.decoder.biases.iter_mut() {
                slots.push(b);
            }
            let mut triples: Vec<(&str, &mut Array, &Array)> = names
                .iter()
                .map(|n| n.as_str())
                .zip(slots)
                .zip(grad_values.iter())
                .map(|((n, p), g)| (n, p, g))
                .collect();
            opt.step(&mut triples)?;
        }
        vae.trained = steps > 0;
        vaes.push(vae);
    }
    Ok((vaes, warnings))
}

/// Encode one row's features into zero-filled codes using the dataset's
/// current masks. Returns the `[D]` code vector.
pub fn encode_row(
    vaes: &[MarginalVae],
    ds: &MixedDataset,
    st: &Standardizer,
    row: usize,
    rng: &mut StdRng,
) -> Vec<f64> {
    (0..ds.d())
        .map(|c| {
            let observed = ds.x_observed(row, c);
            let v = if observed {
                st.x_to_model(ds.feature_kinds[c], c, ds.x_at(row, c))
            } else {
                0.0
            };
            vaes[c].encode_value(v, observed, rng).0
        })
        .collect()
}
