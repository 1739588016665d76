//! The dependency model: bottom-up Gaussian encoder over L layers, a
//! top-down reparameterized generative path `h_l = f_mu(h_{l+1}) +
//! f_sigma(h_{l+1}) * eps_l`, a fixed-variance decoder over marginal codes,
//! a predictor consuming the imputed feature vector, the weighted ELBO and
//! KL balancing.
//!
//! Inference runs over the independent standard-normal variables `eps`, not
//! over `h` directly; the autoregressive parameterization is kept only as an
//! ablation target because its density is hostile to leapfrog integration.

use rand::rngs::StdRng;
use rand_distr::{Distribution, StandardNormal};

use crate::array::Array;
use crate::data::{MixedDataset, Standardizer};
use crate::error::{Error, Result};
use crate::likelihood::{
    bernoulli_logpmf, categorical_logpmf, gaussian_logpdf, FeatureType, GAUSSIAN_NOISE_VAR,
};
use crate::marginal::{encode_row, value_repr, MarginalVae, SIGMA_FLOOR};
use crate::nn::{Activation, Mlp, MlpVars};
use crate::tape::{Tape, Var};

/// Hierarchical latent model. Layer `l` runs 1..=L bottom-up; vectors are
/// indexed `l-1`. The top layer has no reparameterization nets: `h_L = eps_L`.
#[derive(Clone, Debug)]
pub struct HierLatentModel {
    /// Latent widths m_1..m_L.
    pub dims: Vec<usize>,
    /// Number of feature columns (marginal codes).
    pub data_dim: usize,
    pub feature_kinds: Vec<FeatureType>,
    pub y_kind: FeatureType,
    /// theta: decoder m_1 -> D (means of codes).
    pub decoder: Mlp,
    /// theta: predictor (x-repr + m_1) -> target params.
    pub predictor: Mlp,
    /// theta: f_mu_l, f_sigma_l for l = 1..L-1 (input m_{l+1}, output m_l).
    pub reparam_mu: Vec<Mlp>,
    pub reparam_sigma: Vec<Mlp>,
    /// psi: bottom-up path nets r_{l-1} -> r_l and per-layer heads.
    pub enc_path: Vec<Mlp>,
    pub enc_mu: Vec<Mlp>,
    pub enc_sigma: Vec<Mlp>,
}

impl HierLatentModel {
    pub fn init(
        dims: &[usize],
        feature_kinds: &[FeatureType],
        y_kind: FeatureType,
        hidden: usize,
        r_dim: usize,
        rng: &mut StdRng,
    ) -> Self {
        assert!(!dims.is_empty());
        let d = feature_kinds.len();
        let x_repr: usize = feature_kinds.iter().map(|k| k.repr_len()).sum();
        let y_repr = y_kind.repr_len();
        let enc_in = 2 * d + y_repr + 1;
        let l = dims.len();

        let decoder = Mlp::init(&[dims[0], hidden, d], Activation::Tanh, rng);
        let predictor =
            Mlp::init(&[x_repr + dims[0], hidden, y_kind.param_len()], Activation::Tanh, rng);
        let mut reparam_mu = Vec::new();
        let mut reparam_sigma = Vec::new();
        for i in 0..l.saturating_sub(1) {
            reparam_mu.push(Mlp::init(&[dims[i + 1], hidden, dims[i]], Activation::Tanh, rng));
            reparam_sigma.push(Mlp::init(&[dims[i + 1], hidden, dims[i]], Activation::Tanh, rng));
        }
        let mut enc_path = Vec::new();
        let mut enc_mu = Vec::new();
        let mut enc_sigma = Vec::new();
        let mut prev = enc_in;
        for i in 0..l {
            enc_path.push(Mlp::init(&[prev, hidden, r_dim], Activation::Tanh, rng));
            enc_mu.push(Mlp::init(&[r_dim, hidden, dims[i]], Activation::Tanh, rng));
            enc_sigma.push(Mlp::init(&[r_dim, hidden, dims[i]], Activation::Tanh, rng));
            prev = r_dim;
        }
        HierLatentModel {
            dims: dims.to_vec(),
            data_dim: d,
            feature_kinds: feature_kinds.to_vec(),
            y_kind,
            decoder,
            predictor,
            reparam_mu,
            reparam_sigma,
            enc_path,
            enc_mu,
            enc_sigma,
        }
    }

    pub fn layer_count(&self) -> usize {
        self.dims.len()
    }

    /// Total latent dimension M.
    pub fn latent_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn x_repr_dim(&self) -> usize {
        self.feature_kinds.iter().map(|k| k.repr_len()).sum()
    }

    /// Stage parameters on a tape. `gen_diff` / `enc_diff` control whether
    /// theta / psi become differentiable leaves or constants; the marginal
    /// decoders are always frozen (trained in stage 1 only).
    pub fn stage<'t>(
        &self,
        tape: &'t Tape,
        vaes: &[MarginalVae],
        gen_diff: bool,
        enc_diff: bool,
    ) -> StagedModel<'t> {
        let gen = |m: &Mlp| if gen_diff { m.stage(tape) } else { m.stage_frozen(tape) };
        let enc = |m: &Mlp| if enc_diff { m.stage(tape) } else { m.stage_frozen(tape) };
        StagedModel {
            dims: self.dims.clone(),
            feature_kinds: self.feature_kinds.clone(),
            y_kind: self.y_kind,
            decoder: gen(&self.decoder),
            predictor: gen(&self.predictor),
            reparam_mu: self.reparam_mu.iter().map(gen).collect(),
            reparam_sigma: self.reparam_sigma.iter().map(gen).collect(),
            enc_path: self.enc_path.iter().map(enc).collect(),
            enc_mu: self.enc_mu.iter().map(enc).collect(),
            enc_sigma: self.enc_sigma.iter().map(enc).collect(),
            marg_dec: vaes.iter().map(|v| v.decoder.stage_frozen(tape)).collect(),
        }
    }

    /// Generative parameter walk (theta), stable order matching `stage`.
    pub fn visit_gen_params(&self, f: &mut impl FnMut(String, &Array)) {
        self.decoder.visit_params("dep.gen.decoder", &mut |n, a| f(n, a));
        self.predictor.visit_params("dep.pred", &mut |n, a| f(n, a));
        for (i, m) in self.reparam_mu.iter().enumerate() {
            m.visit_params(&format!("dep.gen.mu{i}"), &mut |n, a| f(n, a));
        }
        for (i, m) in self.reparam_sigma.iter().enumerate() {
            m.visit_params(&format!("dep.gen.sigma{i}"), &mut |n, a| f(n, a));
        }
    }

    pub fn visit_gen_params_mut(&mut self, f: &mut impl FnMut(String, &mut Array)) {
        self.decoder.visit_params_mut("dep.gen.decoder", &mut |n, a| f(n, a));
        self.predictor.visit_params_mut("dep.pred", &mut |n, a| f(n, a));
        for (i, m) in self.reparam_mu.iter_mut().enumerate() {
            m.visit_params_mut(&format!("dep.gen.mu{i}"), &mut |n, a| f(n, a));
        }
        for (i, m) in self.reparam_sigma.iter_mut().enumerate() {
            m.visit_params_mut(&format!("dep.gen.sigma{i}"), &mut |n, a| f(n, a));
        }
    }

    /// Encoder parameter walk (psi).
    pub fn visit_enc_params(&self, f: &mut impl FnMut(String, &Array)) {
        for (i, m) in self.enc_path.iter().enumerate() {
            m.visit_params(&format!("dep.encoder.path{i}"), &mut |n, a| f(n, a));
        }
        for (i, m) in self.enc_mu.iter().enumerate() {
            m.visit_params(&format!("dep.encoder.mu{i}"), &mut |n, a| f(n, a));
        }
        for (i, m) in self.enc_sigma.iter().enumerate() {
            m.visit_params(&format!("dep.encoder.sigma{i}"), &mut |n, a| f(n, a));
        }
    }

    pub fn visit_enc_params_mut(&mut self, f: &mut impl FnMut(String, &mut Array)) {
        for (i, m) in self.enc_path.iter_mut().enumerate() {
            m.visit_params_mut(&format!("dep.encoder.path{i}"), &mut |n, a| f(n, a));
        }
        for (i, m) in self.enc_mu.iter_mut().enumerate() {
            m.visit_params_mut(&format!("dep.encoder.mu{i}"), &mut |n, a| f(n, a));
        }
        for (i, m) in self.enc_sigma.iter_mut().enumerate() {
            m.visit_params_mut(&format!("dep.encoder.sigma{i}"), &mut |n, a| f(n, a));
        }
    }
}

/// Tape-staged model parameters.
pub struct StagedModel<'t> {
    pub dims: Vec<usize>,
    pub feature_kinds: Vec<FeatureType>,
    pub y_kind: FeatureType,
    pub decoder: MlpVars<'t>,
    pub predictor: MlpVars<'t>,
    pub reparam_mu: Vec<MlpVars<'t>>,
    pub reparam_sigma: Vec<MlpVars<'t>>,
    pub enc_path: Vec<MlpVars<'t>>,
    pub enc_mu: Vec<MlpVars<'t>>,
    pub enc_sigma: Vec<MlpVars<'t>>,
    pub marg_dec: Vec<MlpVars<'t>>,
}

impl<'t> StagedModel<'t> {
    pub fn gen_params(&self) -> Vec<Var<'t>> {
        let mut out = self.decoder.params();
        out.extend(self.predictor.params());
        for m in &self.reparam_mu {
            out.extend(m.params());
        }
        for m in &self.reparam_sigma {
            out.extend(m.params());
        }
        out
    }

    pub fn enc_params(&self) -> Vec<Var<'t>> {
        let mut out = Vec::new();
        for m in &self.enc_path {
            out.extend(m.params());
        }
        for m in &self.enc_mu {
            out.extend(m.params());
        }
        for m in &self.enc_sigma {
            out.extend(m.params());
        }
        out
    }

    fn layer_count(&self) -> usize {
        self.dims.len()
    }

    fn latent_dim(&self) -> usize {
        self.dims.iter().sum()
    }
}

/// One numeric minibatch in model space: marginal codes, masks and
/// representations, ready to be staged as constants on any tape.
#[derive(Clone, Debug)]
pub struct Batch {
    pub b: usize,
    /// `[B, D]` zero-filled marginal codes.
    pub z: Array,
    /// `[B, D]` feature observation flags.
    pub x_mask: Array,
    /// `[B, x_repr]` observed-feature representation, zero-filled.
    pub obs_repr: Array,
    /// `[B, x_repr]` x_mask expanded to representation width.
    pub repr_mask: Array,
    /// `[B, y_repr]` zero-filled target representation (doubles as the
    /// likelihood value: scalar or one-hot).
    pub y_repr: Array,
    /// `[B, 1]` target observation flag.
    pub y_mask: Array,
}

impl Batch {
    pub fn stage<'t>(&self, tape: &'t Tape) -> StagedBatch<'t> {
        let z = tape.constant(self.z.clone());
        let x_mask = tape.constant(self.x_mask.clone());
        let obs_repr = tape.constant(self.obs_repr.clone());
        let repr_mask = tape.constant(self.repr_mask.clone());
        let y_repr = tape.constant(self.y_repr.clone());
        let y_mask = tape.constant(self.y_mask.clone());
        let enc_input = tape.concat(&[z, x_mask, y_repr, y_mask], 1);
        StagedBatch { b: self.b, z, x_mask, obs_repr, repr_mask, y_repr, y_mask, enc_input }
    }
}

pub struct StagedBatch<'t> {
    pub b: usize,
    pub z: Var<'t>,
    pub x_mask: Var<'t>,
    pub obs_repr: Var<'t>,
    pub repr_mask: Var<'t>,
    pub y_repr: Var<'t>,
    pub y_mask: Var<'t>,
    pub enc_input: Var<'t>,
}

/// Build a numeric batch from dataset rows under their current masks.
/// Marginal codes are fresh reparameterized samples (zero for missing).
pub fn make_batch(
    model: &HierLatentModel,
    vaes: &[MarginalVae],
    ds: &MixedDataset,
    st: &Standardizer,
    rows: &[usize],
    rng: &mut StdRng,
) -> Batch {
    let b = rows.len();
    let d = model.data_dim;
    let x_repr = model.x_repr_dim();
    let y_repr_len = model.y_kind.repr_len();

    let mut z = Vec::with_capacity(b * d);
    let mut x_mask = Vec::with_capacity(b * d);
    let mut obs_repr = Vec::with_capacity(b * x_repr);
    let mut repr_mask = Vec::with_capacity(b * x_repr);
    let mut y_repr = Vec::with_capacity(b * y_repr_len);
    let mut y_mask = Vec::with_capacity(b);

    for &r in rows {
        z.extend(encode_row(vaes, ds, st, r, rng));
        for c in 0..d {
            let obs = ds.x_observed(r, c);
            x_mask.push(obs as u8 as f64);
            let kind = model.feature_kinds[c];
            let repr = if obs {
                value_repr(kind, st.x_to_model(kind, c, ds.x_at(r, c)))
            } else {
                vec![0.0; kind.repr_len()]
            };
            repr_mask.extend(std::iter::repeat(obs as u8 as f64).take(kind.repr_len()));
            obs_repr.extend(repr);
        }
        let y_obs = ds.y_observed(r);
        y_mask.push(y_obs as u8 as f64);
        if y_obs {
            y_repr.extend(value_repr(model.y_kind, st.y_to_model(model.y_kind, ds.y_at(r))));
        } else {
            y_repr.extend(std::iter::repeat(0.0).take(y_repr_len));
        }
    }
    Batch {
        b,
        z: Array::from_vec(&[b, d], z).unwrap(),
        x_mask: Array::from_vec(&[b, d], x_mask).unwrap(),
        obs_repr: Array::from_vec(&[b, x_repr], obs_repr).unwrap(),
        repr_mask: Array::from_vec(&[b, x_repr], repr_mask).unwrap(),
        y_repr: Array::from_vec(&[b, y_repr_len], y_repr).unwrap(),
        y_mask: Array::from_vec(&[b, 1], y_mask).unwrap(),
    }
}

/// Per-layer posterior heads from the bottom-up encoder.
pub fn encode<'t>(
    staged: &StagedModel<'t>,
    input: Var<'t>,
) -> Result<(Vec<Var<'t>>, Vec<Var<'t>>)> {
    let mut mus = Vec::new();
    let mut sigmas = Vec::new();
    let mut r = input;
    for i in 0..staged.layer_count() {
        r = staged.enc_path[i].forward(r)?;
        mus.push(staged.enc_mu[i].forward(r)?);
        sigmas.push(staged.enc_sigma[i].forward(r)?.softplus() + SIGMA_FLOOR);
    }
    Ok((mus, sigmas))
}

/// Standard-normal noise arrays for each layer.
pub fn draw_noise(b: usize, dims: &[usize], rng: &mut StdRng) -> Vec<Array> {
    dims.iter()
        .map(|&m| {
            let data: Vec<f64> = (0..b * m).map(|_| StandardNormal.sample(rng)).collect();
            Array::from_vec(&[b, m], data).unwrap()
        })
        .collect()
}

/// Reparameterized per-layer samples `eps_l = mu_l + sigma_l * xi_l`,
/// concatenated into `[B, M]` (bottom layer first).
pub fn sample_eps<'t>(
    tape: &'t Tape,
    mus: &[Var<'t>],
    sigmas: &[Var<'t>],
    noise: &[Array],
) -> Var<'t> {
    let parts: Vec<Var<'t>> = mus
        .iter()
        .zip(sigmas)
        .zip(noise)
        .map(|((&mu, &sigma), xi)| mu + sigma * tape.constant(xi.clone()))
        .collect();
    tape.concat(&parts, 1)
}

/// Split a `[B, M]` latent block into per-layer `[B, m_l]` columns.
pub fn split_layers<'t>(eps: Var<'t>, dims: &[usize]) -> Vec<Var<'t>> {
    let mut out = Vec::with_capacity(dims.len());
    let mut offset = 0;
    for &m in dims {
        out.push(eps.slice(1, offset, m));
        offset += m;
    }
    out
}

/// Top-down reparameterized path: `h_L = eps_L`, then
/// `h_l = f_mu_l(h_{l+1}) + f_sigma_l(h_{l+1}) * eps_l`.
pub fn decode_path<'t>(staged: &StagedModel<'t>, eps: Var<'t>) -> Result<Vec<Var<'t>>> {
    let layers = split_layers(eps, &staged.dims);
    let l = staged.layer_count();
    let mut h = vec![layers[l - 1]; l];
    for i in (0..l - 1).rev() {
        let mu = staged.reparam_mu[i].forward(h[i + 1])?;
        let sigma = staged.reparam_sigma[i].forward(h[i + 1])?.softplus() + SIGMA_FLOOR;
        h[i] = mu + sigma * layers[i];
    }
    Ok(h)
}

/// Imputed feature representation: observed slots copied, missing slots
/// filled with marginal-decoder distribution means decoded from `h_1`.
pub fn xhat_repr<'t>(
    staged: &StagedModel<'t>,
    batch: &StagedBatch<'t>,
    h1: Var<'t>,
) -> Result<Var<'t>> {
    let z_means = staged.decoder.forward(h1)?;
    let mut parts: Vec<Var<'t>> = Vec::with_capacity(staged.feature_kinds.len());
    for (c, kind) in staged.feature_kinds.iter().enumerate() {
        let z_col = z_means.slice(1, c, 1);
        let params = staged.marg_dec[c].forward(z_col)?;
        let repr = match kind {
            FeatureType::Real | FeatureType::Positive => params,
            FeatureType::Binary => params.sigmoid(),
            FeatureType::Categorical(_) => {
                // Distribution mean of the one-hot representation.
                (params - params.logsumexp().broadcast(&params.shape())).exp()
            }
        };
        parts.push(repr);
    }
    let decoded = parts[0].concat_with(&parts[1..]);
    let ones_minus = -batch.repr_mask + 1.0;
    Ok(batch.obs_repr * batch.repr_mask + decoded * ones_minus)
}

/// Observation-masked likelihood rows
/// `log p(z_O | h_1) + log p(y_O | xhat, h_1)`, shape `[B, 1]`.
pub fn likelihood_rows<'t>(
    staged: &StagedModel<'t>,
    batch: &StagedBatch<'t>,
    h1: Var<'t>,
) -> Result<Var<'t>> {
    let b = batch.b;
    let z_means = staged.decoder.forward(h1)?;
    let recon =
        (gaussian_logpdf(batch.z, z_means, GAUSSIAN_NOISE_VAR) * batch.x_mask).sum_to_shape(&[b, 1]);

    let xhat = xhat_repr(staged, batch, h1)?;
    let pred_in = xhat.concat_with(&[h1]);
    let y_params = staged.predictor.forward(pred_in)?;
    let y_loglik = match staged.y_kind {
        FeatureType::Real | FeatureType::Positive => {
            gaussian_logpdf(batch.y_repr, y_params, GAUSSIAN_NOISE_VAR).sum_to_shape(&[b, 1])
        }
        FeatureType::Binary => bernoulli_logpmf(batch.y_repr, y_params).sum_to_shape(&[b, 1]),
        FeatureType::Categorical(_) => categorical_logpmf(batch.y_repr, y_params),
    };
    Ok(recon + y_loglik * batch.y_mask)
}

/// Unnormalized posterior rows over the reparameterized latents:
/// `log p(z_O|h_1) + log p(y_O|xhat,h_1) + sum_l log N(eps_l; 0, I)`.
pub fn log_joint_rows<'t>(
    staged: &StagedModel<'t>,
    batch: &StagedBatch<'t>,
    eps: Var<'t>,
) -> Result<Var<'t>> {
    let shape = eps.shape();
    if shape.len() != 2 || shape[1] != staged.latent_dim() {
        return Err(Error::Shape(format!(
            "latent block shape {:?} does not match M = {}",
            shape,
            staged.latent_dim()
        )));
    }
    let h = decode_path(staged, eps)?;
    let lik = likelihood_rows(staged, batch, h[0])?;
    let tape_zeros = eps * 0.0;
    let prior = gaussian_logpdf(eps, tape_zeros, 1.0).sum_to_shape(&[batch.b, 1]);
    Ok(lik + prior)
}

/// Ablation target: the same joint density expressed over the autoregressive
/// variables `h` directly, `sum_l log N(h_l; f_mu(h_{l+1}), f_sigma^2)` plus
/// the same likelihood terms. Leapfrog over this density diverges where the
/// conditional scales shrink; kept to reproduce that failure mode.
pub fn log_joint_ar_rows<'t>(
    staged: &StagedModel<'t>,
    batch: &StagedBatch<'t>,
    h_flat: Var<'t>,
) -> Result<Var<'t>> {
    let b = batch.b;
    let h = split_layers(h_flat, &staged.dims);
    let l = staged.layer_count();
    let mut prior = {
        let top = h[l - 1];
        gaussian_logpdf(top, top * 0.0, 1.0).sum_to_shape(&[b, 1])
    };
    for i in (0..l - 1).rev() {
        let mu = staged.reparam_mu[i].forward(h[i + 1])?;
        let sigma = staged.reparam_sigma[i].forward(h[i + 1])?.softplus() + SIGMA_FLOOR;
        let z = (h[i] - mu) * sigma.recip();
        let rows = (-(z.square() * 0.5) - sigma.log() - 0.5 * 1.8378770664093453)
            .sum_to_shape(&[b, 1]);
        prior = prior + rows;
    }
    let lik = likelihood_rows(staged, batch, h[0])?;
    Ok(lik + prior)
}

/// ELBO pieces: the scalar KL-weighted single-sample bound averaged over the
/// batch, plus per-layer KL rows for balancing.
pub struct ElboParts<'t> {
    pub elbo: Var<'t>,
    pub kl_rows: Vec<Var<'t>>,
}

/// Single-sample reparameterized ELBO (Eq. style: likelihood minus weighted
/// closed-form Gaussian KLs). `gammas` has one weight per layer.
pub fn elbo_vi<'t>(
    tape: &'t Tape,
    staged: &StagedModel<'t>,
    batch: &StagedBatch<'t>,
    noise: &[Array],
    gammas: &[f64],
) -> Result<ElboParts<'t>> {
    let (mus, sigmas) = encode(staged, batch.enc_input)?;
    let eps = sample_eps(tape, &mus, &sigmas, noise);
    let h = decode_path(staged, eps)?;
    let lik = likelihood_rows(staged, batch, h[0])?;

    let mut kl_rows = Vec::with_capacity(staged.layer_count());
    for (mu, sigma) in mus.iter().zip(&sigmas) {
        let per_dim = (mu.square() + sigma.square() - sigma.square().log() - 1.0) * 0.5;
        kl_rows.push(per_dim.sum_to_shape(&[batch.b, 1]));
    }
    let mut elbo_rows = lik;
    for (kl, &g) in kl_rows.iter().zip(gammas) {
        elbo_rows = elbo_rows - *kl * g;
    }
    Ok(ElboParts { elbo: elbo_rows.mean(), kl_rows })
}

/// KL-balancing weights: `gamma_l` proportional to `d_l * E[KL_l]`,
/// normalized to sum to one. Degenerate all-zero KLs give the uniform 1/L.
pub fn kl_balance(kl_means: &[f64], dims: &[usize]) -> Vec<f64> {
    let l = kl_means.len();
    let weighted: Vec<f64> =
        kl_means.iter().zip(dims).map(|(&k, &d)| (k * d as f64).max(0.0)).collect();
    let total: f64 = weighted.iter().sum();
    if total <= 0.0 {
        return vec![1.0 / l as f64; l];
    }
    weighted.iter().map(|w| w / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_mixed;
    use crate::testkit::{central_diff, max_rel_err, seeded_rng};

    fn tiny_setup(
        dims: &[usize],
        d: usize,
        seed: u64,
    ) -> (HierLatentModel, Vec<MarginalVae>, Batch, MixedDataset, Standardizer) {
        let (mut ds, _) = synth_mixed("linear-gaussian", 24, d, seed).unwrap();
        let mut rng = seeded_rng(seed);
        crate::data::inject_rows(
            &mut ds,
            crate::data::MissingnessMode::Train,
            &mut rng,
            (0.2, 0.6),
            None,
        );
        let st = Standardizer::fit(&ds).unwrap();
        let (vaes, _) = crate::marginal::train_marginals(&ds, &st, 8, 20, 8, 1e-3, seed).unwrap();
        let model = HierLatentModel::init(
            dims,
            &ds.feature_kinds,
            ds.target_kind,
            12,
            10,
            &mut rng,
        );
        let rows: Vec<usize> = (0..8).collect();
        let batch = make_batch(&model, &vaes, &ds, &st, &rows, &mut rng);
        (model, vaes, batch, ds, st)
    }

    #[test]
    fn fully_missing_input_encodes_identically_across_rows() {
        let (model, vaes, _, mut ds, st) = tiny_setup(&[4, 2], 3, 5);
        for m in ds.x_mask.iter_mut() {
            *m = 0;
        }
        for m in ds.y_mask.iter_mut() {
            *m = 0;
        }
        let mut rng = seeded_rng(9);
        let rows: Vec<usize> = (0..6).collect();
        let batch = make_batch(&model, &vaes, &ds, &st, &rows, &mut rng);
        let tape = Tape::new();
        let staged = model.stage(&tape, &vaes, false, false);
        let sbatch = batch.stage(&tape);
        let (mus, _) = encode(&staged, sbatch.enc_input).unwrap();
        let mu = mus[0].value().unwrap();
        for r in 1..6 {
            for c in 0..mu.cols() {
                assert_eq!(mu.at(r, c), mu.at(0, c));
            }
        }
    }

    #[test]
    fn encoder_sample_mean_matches_mu_by_clt() {
        let (model, vaes, batch, _, _) = tiny_setup(&[3, 2], 3, 7);
        let tape = Tape::new();
        let staged = model.stage(&tape, &vaes, false, false);
        let sbatch = batch.stage(&tape);
        let (mus, sigmas) = encode(&staged, sbatch.enc_input).unwrap();
        let mu = mus[0].value().unwrap();
        let sigma = sigmas[0].value().unwrap();
        let mut rng = seeded_rng(3);
        let n = 10_000;
        let mut acc = vec![0.0; mu.cols()];
        for _ in 0..n {
            let noise = draw_noise(batch.b, &model.dims, &mut rng);
            for c in 0..mu.cols() {
                acc[c] += mu.at(0, c) + sigma.at(0, c) * noise[0].at(0, c);
            }
        }
        for c in 0..mu.cols() {
            let mean = acc[c] / n as f64;
            let se = sigma.at(0, c) / (n as f64).sqrt();
            assert!((mean - mu.at(0, c)).abs() < 4.0 * se, "col {c}");
        }
    }

    #[test]
    fn identity_reparam_nets_pass_eps_through() {
        let (mut model, vaes, batch, _, _) = tiny_setup(&[3, 2], 3, 11);
        // f_mu = 0, f_sigma = softplus-inverse of (1 - floor) so sigma = 1.
        for net in model.reparam_mu.iter_mut() {
            for w in net.weights.iter_mut() {
                *w = Array::zeros(w.shape());
            }
            for b in net.biases.iter_mut() {
                *b = Array::zeros(b.shape());
            }
        }
        let raw = (1.0f64 - SIGMA_FLOOR).exp_m1().ln();
        for net in model.reparam_sigma.iter_mut() {
            for w in net.weights.iter_mut() {
                *w = Array::zeros(w.shape());
            }
            let last = net.biases.len() - 1;
            net.biases[last] = Array::full(net.biases[last].shape(), raw);
        }
        let tape = Tape::new();
        let staged = model.stage(&tape, &vaes, false, false);
        let mut rng = seeded_rng(2);
        let noise = draw_noise(batch.b, &model.dims, &mut rng);
        let parts: Vec<Var> = noise.iter().map(|a| tape.constant(a.clone())).collect();
        let eps = tape.concat(&parts, 1);
        let h = decode_path(&staged, eps).unwrap();
        let h1 = h[0].value().unwrap();
        for r in 0..batch.b {
            for c in 0..model.dims[0] {
                assert!((h1.at(r, c) - noise[0].at(r, c)).abs() < 1e-9);
            }
        }
        // eps_l = 0 gives h_l = f_mu(h_{l+1}) = 0 here.
        let zeros = tape.zeros(&[batch.b, model.latent_dim()]);
        let h0 = decode_path(&staged, zeros).unwrap()[0].value().unwrap();
        assert!(h0.data().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn log_joint_prior_only_when_nothing_observed() {
        let (model, vaes, _, mut ds, st) = tiny_setup(&[3, 2], 3, 13);
        for m in ds.x_mask.iter_mut() {
            *m = 0;
        }
        for m in ds.y_mask.iter_mut() {
            *m = 0;
        }
        let mut rng = seeded_rng(1);
        let rows: Vec<usize> = (0..4).collect();
        let batch = make_batch(&model, &vaes, &ds, &st, &rows, &mut rng);
        let tape = Tape::new();
        let staged = model.stage(&tape, &vaes, false, false);
        let sbatch = batch.stage(&tape);
        let m = model.latent_dim();
        let eps_data = crate::testkit::random_vec(&mut rng, 4 * m, -1.5, 1.5);
        let eps = tape.constant(Array::from_vec(&[4, m], eps_data.clone()).unwrap());
        let got = log_joint_rows(&staged, &sbatch, eps).unwrap().value().unwrap();
        for r in 0..4 {
            let mut want = -(m as f64) * 0.5 * 1.8378770664093453;
            for c in 0..m {
                want -= 0.5 * eps_data[r * m + c] * eps_data[r * m + c];
            }
            assert!((got.at(r, 0) - want).abs() < 1e-10, "row {r}");
        }
    }

    #[test]
    fn log_joint_gradient_matches_finite_differences() {
        let (model, vaes, batch, _, _) = tiny_setup(&[3, 2], 3, 17);
        let m = model.latent_dim();
        let mut rng = seeded_rng(8);
        let eps0 = crate::testkit::random_vec(&mut rng, 2 * m, -1.0, 1.0);
        let small = Batch {
            b: 2,
            z: batch.z.slice(0, 0, 2).unwrap(),
            x_mask: batch.x_mask.slice(0, 0, 2).unwrap(),
            obs_repr: batch.obs_repr.slice(0, 0, 2).unwrap(),
            repr_mask: batch.repr_mask.slice(0, 0, 2).unwrap(),
            y_repr: batch.y_repr.slice(0, 0, 2).unwrap(),
            y_mask: batch.y_mask.slice(0, 0, 2).unwrap(),
        };

        let f = |e: &[f64]| -> f64 {
            let tape = Tape::new();
            let staged = model.stage(&tape, &vaes, false, false);
            let sbatch = small.stage(&tape);
            let eps = tape.leaf(Array::from_vec(&[2, m], e.to_vec()).unwrap());
            log_joint_rows(&staged, &sbatch, eps).unwrap().sum().item().unwrap()
        };

        let tape = Tape::new();
        let staged = model.stage(&tape, &vaes, false, false);
        let sbatch = small.stage(&tape);
        let eps = tape.leaf(Array::from_vec(&[2, m], eps0.clone()).unwrap());
        let root = log_joint_rows(&staged, &sbatch, eps).unwrap().sum();
        let g = tape.grad(root, &[eps]).unwrap()[0].value().unwrap();
        let want = central_diff(f, &eps0, 1e-5);
        let err = max_rel_err(g.data(), &want, 1e-6);
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn jacobian_of_path_matches_finite_differences() {
        // dh_1/d eps entries via autodiff on a scalar projection.
        let (model, vaes, batch, _, _) = tiny_setup(&[3, 2], 3, 19);
        let m = model.latent_dim();
        let mut rng = seeded_rng(12);
        let eps0 = crate::testkit::random_vec(&mut rng, m, -1.0, 1.0);
        let w: Vec<f64> = crate::testkit::random_vec(&mut rng, model.dims[0], -1.0, 1.0);
        let _ = batch;

        let f = |e: &[f64]| -> f64 {
            let tape = Tape::new();
            let staged = model.stage(&tape, &vaes, false, false);
            let eps = tape.leaf(Array::from_vec(&[1, m], e.to_vec()).unwrap());
            let h1 = decode_path(&staged, eps).unwrap()[0];
            let wv = tape.constant(Array::from_vec(&[model.dims[0], 1], w.clone()).unwrap());
            h1.matmul(wv).sum().item().unwrap()
        };
        let tape = Tape::new();
        let staged = model.stage(&tape, &vaes, false, false);
        let eps = tape.leaf(Array::from_vec(&[1, m], eps0.clone()).unwrap());
        let h1 = decode_path(&staged, eps).unwrap()[0];
        let wv = tape.constant(Array::from_vec(&[model.dims[0], 1], w.clone()).unwrap());
        let root = h1.matmul(wv).sum();
        let g = tape.grad(root, &[eps]).unwrap()[0].value().unwrap();
        let want = central_diff(f, &eps0, 1e-5);
        assert!(max_rel_err(g.data(), &want, 1e-6) < 1e-4);
    }

    #[test]
    fn elbo_weights_reduce_to_unweighted_at_one() {
        let (model, vaes, batch, _, _) = tiny_setup(&[3, 2], 3, 23);
        let mut rng = seeded_rng(4);
        let noise = draw_noise(batch.b, &model.dims, &mut rng);
        let tape = Tape::new();
        let staged = model.stage(&tape, &vaes, true, true);
        let sbatch = batch.stage(&tape);
        let parts = elbo_vi(&tape, &staged, &sbatch, &noise, &[1.0, 1.0]).unwrap();
        let weighted = parts.elbo.item().unwrap();

        // Unweighted reference: likelihood minus plain sum of KLs.
        let tape2 = Tape::new();
        let staged2 = model.stage(&tape2, &vaes, true, true);
        let sbatch2 = batch.stage(&tape2);
        let (mus, sigmas) = encode(&staged2, sbatch2.enc_input).unwrap();
        let eps = sample_eps(&tape2, &mus, &sigmas, &noise);
        let h = decode_path(&staged2, eps).unwrap();
        let lik = likelihood_rows(&staged2, &sbatch2, h[0]).unwrap();
        let mut rows = lik;
        for (mu, sigma) in mus.iter().zip(&sigmas) {
            let kl = ((mu.square() + sigma.square() - sigma.square().log() - 1.0) * 0.5)
                .sum_to_shape(&[batch.b, 1]);
            rows = rows - kl;
        }
        let want = rows.mean().item().unwrap();
        assert!((weighted - want).abs() < 1e-10);
    }

    #[test]
    fn missing_target_rows_leave_predictor_untouched() {
        let (model, vaes, _, mut ds, st) = tiny_setup(&[3, 2], 3, 29);
        for m in ds.y_mask.iter_mut() {
            *m = 0;
        }
        let mut rng = seeded_rng(6);
        let rows: Vec<usize> = (0..6).collect();
        let batch = make_batch(&model, &vaes, &ds, &st, &rows, &mut rng);
        let noise = draw_noise(batch.b, &model.dims, &mut rng);
        let tape = Tape::new();
        let staged = model.stage(&tape, &vaes, true, true);
        let sbatch = batch.stage(&tape);
        let parts = elbo_vi(&tape, &staged, &sbatch, &noise, &[1.0, 1.0]).unwrap();
        let loss = -parts.elbo;
        let pred_params = staged.predictor.params();
        let grads = tape.grad(loss, &pred_params).unwrap();
        for g in grads {
            let arr = g.value().unwrap();
            assert!(arr.data().iter().all(|&v| v == 0.0), "predictor gradient leaked");
        }
    }

    #[test]
    fn kl_balance_formula() {
        // Symmetric case.
        let g = kl_balance(&[1.0, 1.0], &[5, 5]);
        assert!((g[0] - 0.5).abs() < 1e-12 && (g[1] - 0.5).abs() < 1e-12);
        // Spec example: d = (10, 5), KLs = (1, 2) -> (0.5, 0.5).
        let g = kl_balance(&[1.0, 2.0], &[10, 5]);
        assert!((g[0] - 0.5).abs() < 1e-12 && (g[1] - 0.5).abs() < 1e-12);
        // Sums to one.
        let g = kl_balance(&[0.3, 2.5, 0.9], &[4, 8, 2]);
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Degenerate rule.
        let g = kl_balance(&[0.0, 0.0], &[4, 2]);
        assert_eq!(g, vec![0.5, 0.5]);
    }

    #[test]
    fn flat_vae_elbo_matches_straight_line_implementation() {
        // L = 1: the model reduces to a flat VAE. Recompute the single-sample
        // ELBO with plain loops over the same staged numbers.
        let (model, vaes, batch, _, _) = tiny_setup(&[4], 3, 31);
        let mut rng = seeded_rng(14);
        let noise = draw_noise(batch.b, &model.dims, &mut rng);
        let tape = Tape::new();
        let staged = model.stage(&tape, &vaes, true, true);
        let sbatch = batch.stage(&tape);
        let parts = elbo_vi(&tape, &staged, &sbatch, &noise, &[1.0]).unwrap();
        let got = parts.elbo.item().unwrap();

        let want = straight_line_flat_elbo(&model, &vaes, &batch, &noise[0]);
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }

    fn straight_line_flat_elbo(
        model: &HierLatentModel,
        vaes: &[MarginalVae],
        batch: &Batch,
        noise: &Array,
    ) -> f64 {
        let b = batch.b;
        let d = model.data_dim;
        let m1 = model.dims[0];
        let ln2pi = 1.8378770664093453;
        let mut total = 0.0;
        for r in 0..b {
            // encoder input row
            let mut input = Vec::new();
            for c in 0..d {
                input.push(batch.z.at(r, c));
            }
            for c in 0..d {
                input.push(batch.x_mask.at(r, c));
            }
            for c in 0..batch.y_repr.cols() {
                input.push(batch.y_repr.at(r, c));
            }
            input.push(batch.y_mask.at(r, 0));

            let r1 = mlp_scalar(&model.enc_path[0], &input);
            let mu = mlp_scalar(&model.enc_mu[0], &r1);
            let sig: Vec<f64> = mlp_scalar(&model.enc_sigma[0], &r1)
                .iter()
                .map(|&v| crate::likelihood::softplus(v) + SIGMA_FLOOR)
                .collect();
            let eps: Vec<f64> =
                (0..m1).map(|c| mu[c] + sig[c] * noise.at(r, c)).collect();
            // L = 1: h1 = eps
            let z_mean = mlp_scalar(&model.decoder, &eps);
            let mut lik = 0.0;
            for c in 0..d {
                if batch.x_mask.at(r, c) == 1.0 {
                    let diff = batch.z.at(r, c) - z_mean[c];
                    lik += -0.5 * (ln2pi + GAUSSIAN_NOISE_VAR.ln())
                        - diff * diff / (2.0 * GAUSSIAN_NOISE_VAR);
                }
            }
            // xhat representation
            let mut xhat = Vec::new();
            for c in 0..d {
                let obs = batch.x_mask.at(r, c) == 1.0;
                if obs {
                    xhat.push(batch.obs_repr.at(r, c));
                } else {
                    let params = mlp_scalar(&vaes[c].decoder, &[z_mean[c]]);
                    xhat.push(params[0]);
                }
            }
            let mut pred_in = xhat.clone();
            pred_in.extend_from_slice(&eps);
            let y_params = mlp_scalar(&model.predictor, &pred_in);
            if batch.y_mask.at(r, 0) == 1.0 {
                let diff = batch.y_repr.at(r, 0) - y_params[0];
                lik += -0.5 * (ln2pi + GAUSSIAN_NOISE_VAR.ln())
                    - diff * diff / (2.0 * GAUSSIAN_NOISE_VAR);
            }
            let mut kl = 0.0;
            for c in 0..m1 {
                kl += 0.5 * (mu[c] * mu[c] + sig[c] * sig[c] - (sig[c] * sig[c]).ln() - 1.0);
            }
            total += lik - kl;
        }
        total / b as f64
    }

    fn mlp_scalar(net: &Mlp, input: &[f64]) -> Vec<f64> {
        let mut h = input.to_vec();
        let depth = net.weights.len();
        for k in 0..depth {
            let w = &net.weights[k];
            let (ins, outs) = (w.shape()[0], w.shape()[1]);
            let mut next = vec![0.0; outs];
            for j in 0..outs {
                let mut acc = net.biases[k].data()[j];
                for i in 0..ins {
                    acc += h[i] * w.at(i, j);
                }
                next[j] = acc;
            }
            if k + 1 < depth {
                for v in next.iter_mut() {
                    *v = v.tanh();
                }
            }
            h = next;
        }
        h
    }
}
