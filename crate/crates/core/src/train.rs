//! Three-stage training: per-feature marginal VAEs, the dependency model by
//! variational inference with KL balancing, then joint tuning where the
//! encoder keeps learning from the ELBO, the generative parameters and the
//! step-size matrix follow the chain-endpoint objective, and the proposal
//! inflation follows the sliced Stein discrepancy.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::array::Array;
use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{inject_rows, MissingnessMode, MixedDataset, Standardizer};
use crate::error::{Error, Result};
use crate::hmc::{build_chain_graph, sksd, HmcConfig};
use crate::likelihood::FeatureType;
use crate::marginal::{train_marginals, MarginalVae};
use crate::model::{
    draw_noise, elbo_vi, encode, kl_balance, log_joint_rows, make_batch, Batch, HierLatentModel,
};
use crate::nn::Adam;
use crate::tape::{Tape, Var};

/// A trained pipeline: everything needed for evaluation, imputation,
/// prediction and acquisition.
#[derive(Clone, Debug)]
pub struct Trained {
    pub config: RunConfig,
    pub standardizer: Standardizer,
    pub marginals: Vec<MarginalVae>,
    pub model: HierLatentModel,
    pub hmc: HmcConfig,
    pub feature_kinds: Vec<FeatureType>,
    pub feature_names: Vec<String>,
    pub target_kind: FeatureType,
    pub cat_labels: Vec<Vec<String>>,
    pub target_labels: Vec<String>,
}

/// Line-oriented training log: `step<TAB>metric<TAB>value`.
#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub entries: Vec<(usize, String, f64)>,
}

impl TrainLog {
    pub fn push(&mut self, step: usize, metric: &str, value: f64) {
        self.entries.push((step, metric.to_string(), value));
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (step, metric, value) in &self.entries {
            out.push_str(&format!("{step}\t{metric}\t{value}\n"));
        }
        out
    }

    /// Values of one metric in log order.
    pub fn series(&self, metric: &str) -> Vec<f64> {
        self.entries.iter().filter(|(_, m, _)| m == metric).map(|(_, _, v)| *v).collect()
    }
}

fn sample_rows(n: usize, batch: usize, rng: &mut StdRng) -> Vec<usize> {
    (0..batch.min(n)).map(|_| rng.gen_range(0..n)).collect()
}

/// Fresh train-mode masks for a batch of rows, resampled every call.
fn masked_batch(
    model: &HierLatentModel,
    vaes: &[MarginalVae],
    train: &MixedDataset,
    st: &Standardizer,
    cfg: &RunConfig,
    rng: &mut StdRng,
) -> Batch {
    let rows = sample_rows(train.n, cfg.batch_size, rng);
    let mut scratch = train.select_rows(&rows);
    inject_rows(&mut scratch, MissingnessMode::Train, rng, cfg.train_missing_interval, None);
    let all: Vec<usize> = (0..scratch.n).collect();
    make_batch(model, vaes, &scratch, st, &all, rng)
}

fn eval_grads(tape: &Tape, loss: Var<'_>, leaves: &[Var<'_>]) -> Result<Vec<Array>> {
    let grads = tape.grad(loss, leaves)?;
    grads.iter().map(|g| g.value()).collect()
}

/// Visitor-driven Adam step over model parameter groups in staging order.
/// `extra` lets callers append loose arrays (step sizes, inflation).
fn apply_visited(
    opt: &mut Adam,
    grads: &[Array],
    context: &str,
    visit: impl FnOnce(&mut dyn FnMut(String, &mut Array)),
    extra: &mut [(&str, &mut Array)],
) -> Result<()> {
    opt.begin(grads.len());
    let mut idx = 0usize;
    let mut failure: Option<Error> = None;
    visit(&mut |name, param| {
        if failure.is_some() {
            return;
        }
        if let Err(e) = opt.update(idx, &name, param, &grads[idx]) {
            failure = Some(e);
        }
        idx += 1;
    });
    for (name, param) in extra.iter_mut() {
        if failure.is_some() {
            break;
        }
        if let Err(e) = opt.update(idx, name, param, &grads[idx]) {
            failure = Some(e);
        }
        idx += 1;
    }
    match failure {
        Some(Error::Diverged(name)) => Err(Error::Diverged(format!("{context}: {name}"))),
        Some(other) => Err(other),
        None => {
            debug_assert_eq!(idx, grads.len());
            Ok(())
        }
    }
}

/// Run all enabled training stages on an already-loaded training table.
pub fn run_train(cfg: &RunConfig, train: &MixedDataset) -> Result<(Trained, TrainLog)> {
    let mut log = TrainLog::default();
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let st = Standardizer::fit(train)?;

    // Stage 1: independent marginal VAEs per feature.
    let (vaes, warnings) = train_marginals(
        train,
        &st,
        cfg.marginal_hidden,
        cfg.steps_marginal,
        cfg.batch_size,
        cfg.lr,
        cfg.seed,
    )?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let dims = cfg.resolved_dims();
    let mut model = HierLatentModel::init(
        &dims,
        &train.feature_kinds,
        train.target_kind,
        cfg.hidden,
        cfg.r_dim,
        &mut rng,
    );
    let layers = dims.len();

    // Stage 2: dependency model by variational inference.
    let mut opt = Adam::new(cfg.lr);
    let warmup_steps = (cfg.warmup_fraction * cfg.steps_vi as f64).round() as usize;
    let mut gammas = vec![1.0 / layers as f64; layers];
    for step in 0..cfg.steps_vi {
        let batch = masked_batch(&model, &vaes, train, &st, cfg, &mut rng);
        let noise = draw_noise(batch.b, &dims, &mut rng);
        let tape = Tape::new();
        let staged = model.stage(&tape, &vaes, true, true);
        let sbatch = batch.stage(&tape);
        let weights: Vec<f64> = if step < warmup_steps { gammas.clone() } else { vec![1.0; layers] };
        let parts = elbo_vi(&tape, &staged, &sbatch, &noise, &weights)?;
        let loss = -parts.elbo;

        let mut leaves = staged.gen_params();
        leaves.extend(staged.enc_params());
        let grad_vals = eval_grads(&tape, loss, &leaves)?;

        if step < warmup_steps {
            let kl_means: Vec<f64> = parts
                .kl_rows
                .iter()
                .map(|kl| kl.value().map(|a| a.sum() / batch.b as f64))
                .collect::<Result<_>>()?;
            gammas = kl_balance(&kl_means, &dims);
            if step % 50 == 0 {
                for (l, g) in gammas.iter().enumerate() {
                    log.push(step, &format!("stage2.gamma{l}"), *g);
                }
            }
        }

        apply_visited(
            &mut opt,
            &grad_vals,
            &format!("stage2 step {step}"),
            |f| {
                model.visit_gen_params_mut(&mut |n, a| f(n, a));
                model.visit_enc_params_mut(&mut |n, a| f(n, a));
            },
            &mut [],
        )?;
        if step % 50 == 0 {
            log.push(step, "stage2.loss", loss.item()?);
        }
    }

    // Stage 3: joint VAE + chain tuning.
    let m_total: usize = dims.iter().sum();
    let steps_hmc = cfg.resolved_steps_hmc();
    let mut hmc_cfg = HmcConfig {
        chain_len: cfg.hmc_chain_len,
        leapfrog: cfg.hmc_leapfrog,
        step_sizes: {
            let data: Vec<f64> = (0..cfg.hmc_chain_len * m_total)
                .map(|_| rng.gen_range(cfg.phi_init.0..cfg.phi_init.1))
                .collect();
            Array::from_vec(&[cfg.hmc_chain_len, m_total], data)?
        },
        mass_diag: vec![1.0; m_total],
        inflation: vec![1.0; layers],
    };

    if cfg.variant.uses_hmc() && steps_hmc > 0 {
        let mut phi_log = hmc_cfg.step_sizes.map(f64::ln);
        let mut s_log = Array::vector(&vec![0.0; layers]);
        let mut opt_psi = Adam::new(cfg.lr);
        let mut opt_theta_phi = Adam::new(cfg.lr);
        let mut opt_s = Adam::new(cfg.lr_inflation);

        for step in 0..steps_hmc {
            // (a) encoder from the ELBO, generative parameters frozen.
            {
                let batch = masked_batch(&model, &vaes, train, &st, cfg, &mut rng);
                let noise = draw_noise(batch.b, &dims, &mut rng);
                let tape = Tape::new();
                let staged = model.stage(&tape, &vaes, false, true);
                let sbatch = batch.stage(&tape);
                let parts = elbo_vi(&tape, &staged, &sbatch, &noise, &vec![1.0; layers])?;
                let loss = -parts.elbo;
                let leaves = staged.enc_params();
                let grad_vals = eval_grads(&tape, loss, &leaves)?;
                apply_visited(
                    &mut opt_psi,
                    &grad_vals,
                    &format!("stage3-vi step {step}"),
                    |f| model.visit_enc_params_mut(&mut |n, a| f(n, a)),
                    &mut [],
                )?;
            }

            // (b) generative parameters and step sizes from the endpoint
            // objective; encoder and inflation influence only the constant
            // start positions.
            let accept_rate;
            {
                let batch = masked_batch(&model, &vaes, train, &st, cfg, &mut rng);
                let tape = Tape::new();
                let staged = model.stage(&tape, &vaes, true, false);
                let sbatch = batch.stage(&tape);
                let start_vals =
                    inflated_proposal_values(&staged, &sbatch, &s_log, &dims, &mut rng)?;
                let start = tape.constant(start_vals);
                let phi_leaf = tape.leaf(phi_log.clone());
                let phi_rows: Vec<Var<'_>> =
                    (0..cfg.hmc_chain_len).map(|t| phi_leaf.slice(0, t, 1).exp()).collect();
                let target = |eps| log_joint_rows(&staged, &sbatch, eps);
                let chain = build_chain_graph(
                    &tape,
                    &target,
                    start,
                    &phi_rows,
                    cfg.hmc_leapfrog,
                    &hmc_cfg.mass_diag,
                    &mut rng,
                )?;
                accept_rate = chain.stats.accept_rate();
                let objective = target(chain.endpoint)?.mean();
                let loss = -objective;
                let mut leaves = staged.gen_params();
                leaves.push(phi_leaf);
                let grad_vals = eval_grads(&tape, loss, &leaves)?;
                apply_visited(
                    &mut opt_theta_phi,
                    &grad_vals,
                    &format!("stage3-hmc step {step}"),
                    |f| model.visit_gen_params_mut(&mut |n, a| f(n, a)),
                    &mut [("hmc.phi_log", &mut phi_log)],
                )?;
                hmc_cfg.step_sizes = phi_log.map(f64::exp);
                if step % 10 == 0 {
                    log.push(step, "stage3.objective", objective.item()?);
                }
                log.push(step, "stage3.accept_rate", accept_rate);
            }

            // (c) inflation from the Stein discrepancy on a small row set.
            {
                let rows = sample_rows(train.n, cfg.sksd_rows.max(1), &mut rng);
                let mut scratch = train.select_rows(&rows);
                inject_rows(
                    &mut scratch,
                    MissingnessMode::Train,
                    &mut rng,
                    cfg.train_missing_interval,
                    None,
                );
                let tape = Tape::new();
                let staged = model.stage(&tape, &vaes, false, false);
                let s_leaf = tape.leaf(s_log.clone());
                let mut total = tape.zeros(&[]);
                for r in 0..scratch.n {
                    let tiled: Vec<usize> = vec![r; cfg.sksd_samples];
                    let batch = make_batch(&model, &vaes, &scratch, &st, &tiled, &mut rng);
                    let sbatch = batch.stage(&tape);
                    let (mus, sigmas) = encode(&staged, sbatch.enc_input)?;
                    let noise = draw_noise(batch.b, &dims, &mut rng);
                    // eps0 = mu + exp(s_l) * sigma * xi, differentiable in s only.
                    let parts: Vec<Var<'_>> = (0..layers)
                        .map(|l| {
                            let s_l = s_leaf.slice(0, l, 1).exp();
                            mus[l].detach()
                                + s_l * sigmas[l].detach() * tape.constant(noise[l].clone())
                        })
                        .collect();
                    let start = tape.concat(&parts, 1);
                    let phi_rows: Vec<Var<'_>> = (0..cfg.hmc_chain_len)
                        .map(|t| tape.constant(
                            Array::from_vec(
                                &[m_total],
                                hmc_cfg.step_sizes.slice(0, t, 1).unwrap().data().to_vec(),
                            )
                            .unwrap(),
                        ))
                        .collect();
                    let target = |eps| log_joint_rows(&staged, &sbatch, eps);
                    let chain = build_chain_graph(
                        &tape,
                        &target,
                        start,
                        &phi_rows,
                        cfg.hmc_leapfrog,
                        &hmc_cfg.mass_diag,
                        &mut rng,
                    )?;
                    total = total + sksd(&tape, chain.endpoint, &target)?;
                }
                let loss = total * (1.0 / scratch.n as f64);
                let loss_val = loss.item()?;
                let grad_vals = eval_grads(&tape, loss, &[s_leaf])?;
                apply_visited(
                    &mut opt_s,
                    &grad_vals,
                    &format!("stage3-sksd step {step}"),
                    |_| {},
                    &mut [("hmc.s_log", &mut s_log)],
                )?;
                hmc_cfg.inflation = s_log.data().iter().map(|v| v.exp()).collect();
                if step % 10 == 0 {
                    log.push(step, "stage3.sksd", loss_val);
                    for (l, v) in s_log.data().iter().enumerate() {
                        log.push(step, &format!("stage3.inflation{l}"), v.exp());
                    }
                }
            }
        }
    }

    let trained = Trained {
        config: cfg.clone(),
        standardizer: st,
        marginals: vaes,
        model,
        hmc: hmc_cfg,
        feature_kinds: train.feature_kinds.clone(),
        feature_names: train.feature_names.clone(),
        target_kind: train.target_kind,
        cat_labels: train.cat_labels.clone(),
        target_labels: train.target_labels.clone(),
    };
    Ok((trained, log))
}

/// Numeric start positions `mu + s * sigma * xi` from the encoder proposal.
fn inflated_proposal_values(
    staged: &crate::model::StagedModel<'_>,
    sbatch: &crate::model::StagedBatch<'_>,
    s_log: &Array,
    dims: &[usize],
    rng: &mut StdRng,
) -> Result<Array> {
    let (mus, sigmas) = encode(staged, sbatch.enc_input)?;
    let b = sbatch.b;
    let mut cols: Vec<Array> = Vec::with_capacity(dims.len());
    for l in 0..dims.len() {
        let mu = mus[l].value()?;
        let sigma = sigmas[l].value()?;
        let s = s_log.data()[l].exp();
        let mut data = Vec::with_capacity(b * dims[l]);
        for r in 0..b {
            for c in 0..dims[l] {
                let xi: f64 = StandardNormal.sample(rng);
                data.push(mu.at(r, c) + s * sigma.at(r, c) * xi);
            }
        }
        cols.push(Array::from_vec(&[b, dims[l]], data)?);
    }
    let refs: Vec<&Array> = cols.iter().collect();
    Array::concat(&refs, 1)
}

/// Posterior latent draws for evaluation: chain endpoints when the variant
/// samples by HMC, encoder draws otherwise. Rows are tiled `k` times, giving
/// `[rows*k, M]` (row-major by row then sample).
pub fn posterior_samples(
    tr: &Trained,
    ds: &MixedDataset,
    rows: &[usize],
    k: usize,
    rng: &mut StdRng,
) -> Result<(Batch, Array)> {
    let tiled: Vec<usize> = rows.iter().flat_map(|&r| std::iter::repeat(r).take(k)).collect();
    let batch = make_batch(&tr.model, &tr.marginals, ds, &tr.standardizer, &tiled, rng);
    let dims = tr.model.dims.clone();

    let tape = Tape::new();
    let staged = tr.model.stage(&tape, &tr.marginals, false, false);
    let sbatch = batch.stage(&tape);
    let (mus, sigmas) = encode(&staged, sbatch.enc_input)?;
    let b = batch.b;
    let mut cols: Vec<Array> = Vec::with_capacity(dims.len());
    for l in 0..dims.len() {
        let mu = mus[l].value()?;
        let sigma = sigmas[l].value()?;
        let s = if tr.config.variant.uses_hmc() { tr.hmc.inflation[l] } else { 1.0 };
        let mut data = Vec::with_capacity(b * dims[l]);
        for r in 0..b {
            for c in 0..dims[l] {
                let xi: f64 = StandardNormal.sample(rng);
                data.push(mu.at(r, c) + s * sigma.at(r, c) * xi);
            }
        }
        cols.push(Array::from_vec(&[b, dims[l]], data)?);
    }
    let refs: Vec<&Array> = cols.iter().collect();
    let start = Array::concat(&refs, 1)?;

    if !tr.config.variant.uses_hmc() {
        return Ok((batch, start));
    }
    let positions = {
        let target = model_target(tr, &batch);
        crate::hmc::run_chain(&target, &start, &tr.hmc, false, rng)?.positions
    };
    Ok((batch, positions))
}

fn hrtb_target<F>(dim: usize, f: F) -> (usize, F)
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    (dim, f)
}

/// The model posterior over latents for a fixed batch, usable by the numeric
/// chain runner (fresh tape per gradient evaluation).
pub fn model_target<'a>(
    tr: &'a Trained,
    batch: &'a Batch,
) -> (usize, impl for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>> + 'a) {
    hrtb_target(tr.model.latent_dim(), move |tape, eps| {
        let staged = tr.model.stage(tape, &tr.marginals, false, false);
        let sbatch = batch.stage(tape);
        log_joint_rows(&staged, &sbatch, eps)
    })
}

/// Save a trained pipeline as a checkpoint directory.
pub fn save_trained(tr: &Trained, dir: &std::path::Path) -> Result<()> {
    let mut ck = Checkpoint::default();
    for (c, vae) in tr.marginals.iter().enumerate() {
        vae.encoder.visit_params(&format!("marginal.{c}.enc"), &mut |n, a| {
            ck.insert(n, a.clone());
        });
        vae.decoder.visit_params(&format!("marginal.{c}.dec"), &mut |n, a| {
            ck.insert(n, a.clone());
        });
    }
    tr.model.visit_gen_params(&mut |n, a| ck.insert(n, a.clone()));
    tr.model.visit_enc_params(&mut |n, a| ck.insert(n, a.clone()));
    ck.insert("hmc.step_sizes", tr.hmc.step_sizes.clone());
    ck.insert("hmc.mass_diag", Array::vector(&tr.hmc.mass_diag));
    ck.insert("hmc.inflation", Array::vector(&tr.hmc.inflation));
    ck.insert("standardizer.x_mean", Array::vector(&tr.standardizer.x_mean));
    ck.insert("standardizer.x_std", Array::vector(&tr.standardizer.x_std));
    ck.insert(
        "standardizer.y",
        Array::vector(&[tr.standardizer.y_mean, tr.standardizer.y_std]),
    );

    for (k, v) in tr.config.to_map() {
        ck.set_meta(format!("config.{k}"), v);
    }
    let mut schema = String::new();
    for (name, kind) in tr.feature_names.iter().zip(&tr.feature_kinds) {
        schema.push_str(&format!("{name}:{};", kind_tag(*kind)));
    }
    ck.set_meta("schema.features", schema);
    ck.set_meta("schema.target", kind_tag(tr.target_kind));
    for (c, labels) in tr.cat_labels.iter().enumerate() {
        if !labels.is_empty() {
            ck.set_meta(format!("labels.{c}"), labels.join("\u{1f}"));
        }
    }
    if !tr.target_labels.is_empty() {
        ck.set_meta("labels.target", tr.target_labels.join("\u{1f}"));
    }
    ck.set_meta("hmc.chain_len", tr.hmc.chain_len.to_string());
    ck.set_meta("hmc.leapfrog", tr.hmc.leapfrog.to_string());
    ck.save(dir)
}

fn kind_tag(kind: FeatureType) -> String {
    match kind {
        FeatureType::Real => "real".into(),
        FeatureType::Positive => "positive".into(),
        FeatureType::Binary => "binary".into(),
        FeatureType::Categorical(k) => format!("categorical({k})"),
    }
}

fn parse_kind_tag(tag: &str) -> Result<FeatureType> {
    match tag {
        "real" => Ok(FeatureType::Real),
        "positive" => Ok(FeatureType::Positive),
        "binary" => Ok(FeatureType::Binary),
        other => {
            if let Some(k) = other.strip_prefix("categorical(").and_then(|s| s.strip_suffix(')')) {
                Ok(FeatureType::Categorical(k.parse().map_err(|_| {
                    Error::Parse { location: "schema".into(), reason: format!("bad tag '{other}'") }
                })?))
            } else {
                Err(Error::Parse {
                    location: "schema".into(),
                    reason: format!("bad kind tag '{other}'"),
                })
            }
        }
    }
}

/// Rebuild a trained pipeline from a checkpoint directory.
pub fn load_trained(dir: &std::path::Path) -> Result<Trained> {
    let ck = Checkpoint::load(dir)?;
    let mut cfg = RunConfig::default();
    for (key, value) in &ck.meta {
        if let Some(k) = key.strip_prefix("config.") {
            cfg.set(k, value)?;
        }
    }

    let mut feature_names = Vec::new();
    let mut feature_kinds = Vec::new();
    for part in ck.meta("schema.features")?.split(';').filter(|p| !p.is_empty()) {
        let (name, tag) = part.split_once(':').ok_or_else(|| Error::Parse {
            location: "schema.features".into(),
            reason: format!("bad entry '{part}'"),
        })?;
        feature_names.push(name.to_string());
        feature_kinds.push(parse_kind_tag(tag)?);
    }
    let target_kind = parse_kind_tag(ck.meta("schema.target")?)?;

    let standardizer = Standardizer {
        x_mean: ck.get("standardizer.x_mean")?.data().to_vec(),
        x_std: ck.get("standardizer.x_std")?.data().to_vec(),
        y_mean: ck.get("standardizer.y")?.data()[0],
        y_std: ck.get("standardizer.y")?.data()[1],
    };

    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let mut marginals = Vec::with_capacity(feature_kinds.len());
    for (c, &kind) in feature_kinds.iter().enumerate() {
        let mut vae = MarginalVae::init(kind, cfg.marginal_hidden, &mut rng);
        vae.encoder.visit_params_mut(&format!("marginal.{c}.enc"), &mut |n, a| {
            *a = ck.get(&n).expect("checkpoint parameter").clone();
        });
        vae.decoder.visit_params_mut(&format!("marginal.{c}.dec"), &mut |n, a| {
            *a = ck.get(&n).expect("checkpoint parameter").clone();
        });
        vae.trained = true;
        marginals.push(vae);
    }
    let dims = cfg.resolved_dims();
    let mut model = HierLatentModel::init(
        &dims,
        &feature_kinds,
        target_kind,
        cfg.hidden,
        cfg.r_dim,
        &mut rng,
    );
    model.visit_gen_params_mut(&mut |n, a| {
        *a = ck.get(&n).expect("checkpoint parameter").clone();
    });
    model.visit_enc_params_mut(&mut |n, a| {
        *a = ck.get(&n).expect("checkpoint parameter").clone();
    });

    let hmc = HmcConfig {
        chain_len: ck.meta("hmc.chain_len")?.parse().unwrap_or(cfg.hmc_chain_len),
        leapfrog: ck.meta("hmc.leapfrog")?.parse().unwrap_or(cfg.hmc_leapfrog),
        step_sizes: ck.get("hmc.step_sizes")?.clone(),
        mass_diag: ck.get("hmc.mass_diag")?.data().to_vec(),
        inflation: ck.get("hmc.inflation")?.data().to_vec(),
    };

    let mut cat_labels = vec![Vec::new(); feature_kinds.len()];
    for (c, slot) in cat_labels.iter_mut().enumerate() {
        if let Ok(joined) = ck.meta(&format!("labels.{c}")) {
            *slot = joined.split('\u{1f}').map(|s| s.to_string()).collect();
        }
    }
    let target_labels = ck
        .meta("labels.target")
        .map(|j| j.split('\u{1f}').map(|s| s.to_string()).collect())
        .unwrap_or_default();

    Ok(Trained {
        config: cfg,
        standardizer,
        marginals,
        model,
        hmc,
        feature_kinds,
        feature_names,
        target_kind,
        cat_labels,
        target_labels,
    })
}
