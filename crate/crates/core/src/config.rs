//! Run configuration: flat `key = value` text with dotted keys, plus the
//! ablation-variant mapping.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};

/// Model/HMC ablation variants. The hierarchy flag selects L=2 over L=1;
/// the hmc flag enables stage 3 and posterior sampling by chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Vaem,
    Hvaem,
    HmcVaem,
    HhVaem,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "vaem" => Ok(Variant::Vaem),
            "hvaem" => Ok(Variant::Hvaem),
            "hmcvaem" => Ok(Variant::HmcVaem),
            "hhvaem" => Ok(Variant::HhVaem),
            other => Err(Error::Config(format!(
                "unknown variant '{other}' (expected vaem|hvaem|hmcvaem|hhvaem)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Vaem => "vaem",
            Variant::Hvaem => "hvaem",
            Variant::HmcVaem => "hmcvaem",
            Variant::HhVaem => "hhvaem",
        }
    }

    pub fn hierarchical(&self) -> bool {
        matches!(self, Variant::Hvaem | Variant::HhVaem)
    }

    pub fn uses_hmc(&self) -> bool {
        matches!(self, Variant::HmcVaem | Variant::HhVaem)
    }
}

/// Resolved run configuration with spec defaults.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub data_csv: PathBuf,
    pub data_types: PathBuf,
    pub split_seed: u64,
    pub train_fraction: f64,
    pub variant: Variant,

    /// Latent widths for L = 2; L = 1 variants use the sum.
    pub dims: Vec<usize>,
    pub hidden: usize,
    pub r_dim: usize,
    pub marginal_hidden: usize,

    pub steps_marginal: usize,
    pub steps_vi: usize,
    /// Stage-3 step count; resolved as 10% of (steps_vi + steps_hmc) when
    /// left at the default marker.
    pub steps_hmc: Option<usize>,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_inflation: f64,
    /// Fraction of stage-2 steps with KL balancing active.
    pub warmup_fraction: f64,

    pub hmc_chain_len: usize,
    pub hmc_leapfrog: usize,
    pub phi_init: (f64, f64),
    pub sksd_samples: usize,
    pub sksd_rows: usize,

    pub eval_samples: usize,
    pub train_missing_interval: (f64, f64),

    pub saia_mi_samples: usize,
    pub saia_bins: usize,

    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_csv: PathBuf::from("data.csv"),
            data_types: PathBuf::from("types.spec"),
            split_seed: 0,
            train_fraction: 0.8,
            variant: Variant::HhVaem,
            dims: vec![10, 5],
            hidden: 256,
            r_dim: 256,
            marginal_hidden: 16,
            steps_marginal: 1000,
            steps_vi: 4500,
            steps_hmc: None,
            batch_size: 100,
            lr: 1e-3,
            lr_inflation: 1e-2,
            warmup_fraction: 0.1,
            hmc_chain_len: 5,
            hmc_leapfrog: 5,
            phi_init: (0.05, 0.2),
            sksd_samples: 30,
            sksd_rows: 4,
            eval_samples: 100,
            train_missing_interval: (0.01, 0.99),
            saia_mi_samples: 1000,
            saia_bins: 20,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Stage-3 step count: explicit, or 10% of the total training budget.
    pub fn resolved_steps_hmc(&self) -> usize {
        match self.steps_hmc {
            Some(n) => n,
            None => ((self.steps_vi as f64) / 9.0).round() as usize,
        }
    }

    /// Latent widths after applying the hierarchy flag.
    pub fn resolved_dims(&self) -> Vec<usize> {
        if self.variant.hierarchical() {
            self.dims.clone()
        } else {
            vec![self.dims.iter().sum()]
        }
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                location: format!("config line {}", lineno + 1),
                reason: "expected `key = value`".into(),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                location: format!("config line {}", lineno + 1),
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value '{value}' for {what}"));
        match key {
            "data.csv" => self.data_csv = PathBuf::from(value),
            "data.types" => self.data_types = PathBuf::from(value),
            "data.split_seed" => {
                self.split_seed = value.parse().map_err(|_| bad("data.split_seed"))?
            }
            "data.train_fraction" => {
                self.train_fraction = value.parse().map_err(|_| bad("data.train_fraction"))?
            }
            "model.variant" => self.variant = Variant::parse(value)?,
            "model.dims" => {
                self.dims = value
                    .split(',')
                    .map(|d| d.trim().parse().map_err(|_| bad("model.dims")))
                    .collect::<Result<_>>()?;
                if self.dims.is_empty() || self.dims.iter().any(|&d| d == 0) {
                    return Err(bad("model.dims"));
                }
            }
            "model.hidden" => self.hidden = value.parse().map_err(|_| bad("model.hidden"))?,
            "model.r_dim" => self.r_dim = value.parse().map_err(|_| bad("model.r_dim"))?,
            "model.marginal_hidden" => {
                self.marginal_hidden = value.parse().map_err(|_| bad("model.marginal_hidden"))?
            }
            "train.steps.marginal" => {
                self.steps_marginal = value.parse().map_err(|_| bad("train.steps.marginal"))?
            }
            "train.steps.vi" => self.steps_vi = value.parse().map_err(|_| bad("train.steps.vi"))?,
            "train.steps.hmc" => {
                self.steps_hmc = Some(value.parse().map_err(|_| bad("train.steps.hmc"))?)
            }
            "train.batch_size" => {
                self.batch_size = value.parse().map_err(|_| bad("train.batch_size"))?
            }
            "train.lr" => self.lr = value.parse().map_err(|_| bad("train.lr"))?,
            "train.lr_inflation" => {
                self.lr_inflation = value.parse().map_err(|_| bad("train.lr_inflation"))?
            }
            "train.warmup_fraction" => {
                self.warmup_fraction = value.parse().map_err(|_| bad("train.warmup_fraction"))?
            }
            "train.missing_low" => {
                self.train_missing_interval.0 =
                    value.parse().map_err(|_| bad("train.missing_low"))?
            }
            "train.missing_high" => {
                self.train_missing_interval.1 =
                    value.parse().map_err(|_| bad("train.missing_high"))?
            }
            "hmc.chain_len" => {
                self.hmc_chain_len = value.parse().map_err(|_| bad("hmc.chain_len"))?
            }
            "hmc.leapfrog" => self.hmc_leapfrog = value.parse().map_err(|_| bad("hmc.leapfrog"))?,
            "hmc.phi_init_low" => {
                self.phi_init.0 = value.parse().map_err(|_| bad("hmc.phi_init_low"))?
            }
            "hmc.phi_init_high" => {
                self.phi_init.1 = value.parse().map_err(|_| bad("hmc.phi_init_high"))?
            }
            "hmc.sksd_samples" => {
                self.sksd_samples = value.parse().map_err(|_| bad("hmc.sksd_samples"))?
            }
            "hmc.sksd_rows" => self.sksd_rows = value.parse().map_err(|_| bad("hmc.sksd_rows"))?,
            "eval.samples" => self.eval_samples = value.parse().map_err(|_| bad("eval.samples"))?,
            "saia.mi_samples" => {
                self.saia_mi_samples = value.parse().map_err(|_| bad("saia.mi_samples"))?
            }
            "saia.bins" => self.saia_bins = value.parse().map_err(|_| bad("saia.bins"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Full resolved key set, used to make every output self-describing.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("data.csv".into(), self.data_csv.display().to_string());
        m.insert("data.types".into(), self.data_types.display().to_string());
        m.insert("data.split_seed".into(), self.split_seed.to_string());
        m.insert("data.train_fraction".into(), self.train_fraction.to_string());
        m.insert("model.variant".into(), self.variant.name().into());
        m.insert(
            "model.dims".into(),
            self.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","),
        );
        m.insert("model.hidden".into(), self.hidden.to_string());
        m.insert("model.r_dim".into(), self.r_dim.to_string());
        m.insert("model.marginal_hidden".into(), self.marginal_hidden.to_string());
        m.insert("train.steps.marginal".into(), self.steps_marginal.to_string());
        m.insert("train.steps.vi".into(), self.steps_vi.to_string());
        m.insert("train.steps.hmc".into(), self.resolved_steps_hmc().to_string());
        m.insert("train.batch_size".into(), self.batch_size.to_string());
        m.insert("train.lr".into(), self.lr.to_string());
        m.insert("train.lr_inflation".into(), self.lr_inflation.to_string());
        m.insert("train.warmup_fraction".into(), self.warmup_fraction.to_string());
        m.insert("train.missing_low".into(), self.train_missing_interval.0.to_string());
        m.insert("train.missing_high".into(), self.train_missing_interval.1.to_string());
        m.insert("hmc.chain_len".into(), self.hmc_chain_len.to_string());
        m.insert("hmc.leapfrog".into(), self.hmc_leapfrog.to_string());
        m.insert("hmc.phi_init_low".into(), self.phi_init.0.to_string());
        m.insert("hmc.phi_init_high".into(), self.phi_init.1.to_string());
        m.insert("hmc.sksd_samples".into(), self.sksd_samples.to_string());
        m.insert("hmc.sksd_rows".into(), self.sksd_rows.to_string());
        m.insert("eval.samples".into(), self.eval_samples.to_string());
        m.insert("saia.mi_samples".into(), self.saia_mi_samples.to_string());
        m.insert("saia.bins".into(), self.saia_bins.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m
    }

    /// Self-describing header block for output files.
    pub fn header_comment(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_map() {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_mapping_is_exact() {
        assert!(!Variant::Vaem.hierarchical() && !Variant::Vaem.uses_hmc());
        assert!(Variant::Hvaem.hierarchical() && !Variant::Hvaem.uses_hmc());
        assert!(!Variant::HmcVaem.hierarchical() && Variant::HmcVaem.uses_hmc());
        assert!(Variant::HhVaem.hierarchical() && Variant::HhVaem.uses_hmc());
        assert!(Variant::parse("nope").is_err());
    }

    #[test]
    fn parse_and_defaults() {
        let cfg = RunConfig::parse(
            "# comment\nmodel.dims = 4, 2\ntrain.steps.vi = 900\nmodel.variant = vaem\nseed = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.dims, vec![4, 2]);
        assert_eq!(cfg.steps_vi, 900);
        assert_eq!(cfg.resolved_steps_hmc(), 100); // 10% of total budget
        assert_eq!(cfg.resolved_dims(), vec![6]); // flat variant collapses dims
        assert_eq!(cfg.batch_size, 100);
        assert_eq!(cfg.seed, 7);
        assert!(RunConfig::parse("bogus.key = 3\n").is_err());
        assert!(RunConfig::parse("no equals sign\n").is_err());
    }

    #[test]
    fn header_embeds_every_key() {
        let cfg = RunConfig::default();
        let header = cfg.header_comment();
        assert!(header.contains("# model.variant = hhvaem"));
        assert!(header.contains("# hmc.leapfrog = 5"));
        assert!(header.contains("# train.steps.hmc = 500"));
    }
}
