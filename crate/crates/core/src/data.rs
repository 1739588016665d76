//! Typed tabular data with observation masks: CSV ingestion, standardization
//! over observed training cells, train/test splits, the missingness-injection
//! protocol, and synthetic dataset generators used by the test oracles.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::likelihood::{sigmoid, to_model_space, FeatureType};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Feature,
    Target,
}

#[derive(Clone, Debug)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: FeatureType,
    pub role: Role,
}

/// Ordered column descriptors. Text format: one line per column,
/// `name kind [K] role`, e.g. `age real feature` or `color categorical 3 feature`.
#[derive(Clone, Debug)]
pub struct TypeSpec {
    pub columns: Vec<ColumnSpec>,
}

impl TypeSpec {
    pub fn parse(text: &str) -> Result<TypeSpec> {
        let mut columns = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let err = |reason: &str| Error::Parse {
                location: format!("typespec line {}", lineno + 1),
                reason: reason.to_string(),
            };
            if toks.len() < 3 {
                return Err(err("expected `name kind [K] role`"));
            }
            let name = toks[0].to_string();
            let (kind, role_tok) = match toks[1] {
                "real" => (FeatureType::Real, toks[2]),
                "positive" => (FeatureType::Positive, toks[2]),
                "binary" => (FeatureType::Binary, toks[2]),
                "categorical" => {
                    if toks.len() < 4 {
                        return Err(err("categorical needs a class count"));
                    }
                    let k: usize = toks[2]
                        .parse()
                        .map_err(|_| err("class count must be an integer"))?;
                    if k < 2 {
                        return Err(err("categorical needs K >= 2"));
                    }
                    (FeatureType::Categorical(k), toks[3])
                }
                other => return Err(err(&format!("unknown kind '{other}'"))),
            };
            let role = match role_tok {
                "feature" => Role::Feature,
                "target" => Role::Target,
                other => return Err(err(&format!("unknown role '{other}'"))),
            };
            columns.push(ColumnSpec { name, kind, role });
        }
        let spec = TypeSpec { columns };
        if spec.target_index().is_none() {
            return Err(Error::Config("typespec needs exactly one target column".into()));
        }
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.columns {
            let role = match c.role {
                Role::Feature => "feature",
                Role::Target => "target",
            };
            match c.kind {
                FeatureType::Real => out.push_str(&format!("{} real {}\n", c.name, role)),
                FeatureType::Positive => out.push_str(&format!("{} positive {}\n", c.name, role)),
                FeatureType::Binary => out.push_str(&format!("{} binary {}\n", c.name, role)),
                FeatureType::Categorical(k) => {
                    out.push_str(&format!("{} categorical {} {}\n", c.name, k, role))
                }
            }
        }
        out
    }

    pub fn feature_columns(&self) -> Vec<usize> {
        (0..self.columns.len()).filter(|&i| self.columns[i].role == Role::Feature).collect()
    }

    fn target_index(&self) -> Option<usize> {
        let targets: Vec<usize> =
            (0..self.columns.len()).filter(|&i| self.columns[i].role == Role::Target).collect();
        match targets.as_slice() {
            [one] => Some(*one),
            _ => None,
        }
    }
}

/// Column-typed table with observation masks. Masked-out cells hold NaN so
/// accidental reads fail loudly in arithmetic.
#[derive(Clone, Debug)]
pub struct MixedDataset {
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureType>,
    pub target_name: String,
    pub target_kind: FeatureType,
    pub n: usize,
    /// `n x d` feature values (categorical cells store class indices).
    pub x: Vec<f64>,
    /// `n x d`; 1 = observed.
    pub x_mask: Vec<u8>,
    pub y: Vec<f64>,
    pub y_mask: Vec<u8>,
    /// Per-feature category labels in first-seen order (empty for
    /// non-categorical columns).
    pub cat_labels: Vec<Vec<String>>,
    pub target_labels: Vec<String>,
}

pub const MISSING: f64 = f64::NAN;

impl MixedDataset {
    pub fn d(&self) -> usize {
        self.feature_kinds.len()
    }

    pub fn x_at(&self, row: usize, col: usize) -> f64 {
        self.x[row * self.d() + col]
    }

    pub fn x_observed(&self, row: usize, col: usize) -> bool {
        self.x_mask[row * self.d() + col] == 1
    }

    pub fn y_at(&self, row: usize) -> f64 {
        self.y[row]
    }

    pub fn y_observed(&self, row: usize) -> bool {
        self.y_mask[row] == 1
    }

    /// New dataset containing the listed rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> MixedDataset {
        let d = self.d();
        let mut out = MixedDataset {
            feature_names: self.feature_names.clone(),
            feature_kinds: self.feature_kinds.clone(),
            target_name: self.target_name.clone(),
            target_kind: self.target_kind,
            n: rows.len(),
            x: Vec::with_capacity(rows.len() * d),
            x_mask: Vec::with_capacity(rows.len() * d),
            y: Vec::with_capacity(rows.len()),
            y_mask: Vec::with_capacity(rows.len()),
            cat_labels: self.cat_labels.clone(),
            target_labels: self.target_labels.clone(),
        };
        for &r in rows {
            out.x.extend_from_slice(&self.x[r * d..(r + 1) * d]);
            out.x_mask.extend_from_slice(&self.x_mask[r * d..(r + 1) * d]);
            out.y.push(self.y[r]);
            out.y_mask.push(self.y_mask[r]);
        }
        out
    }

    pub fn typespec(&self) -> TypeSpec {
        let mut columns: Vec<ColumnSpec> = self
            .feature_names
            .iter()
            .zip(&self.feature_kinds)
            .map(|(n, k)| ColumnSpec { name: n.clone(), kind: *k, role: Role::Feature })
            .collect();
        columns.push(ColumnSpec {
            name: self.target_name.clone(),
            kind: self.target_kind,
            role: Role::Target,
        });
        TypeSpec { columns }
    }

    /// Write values and masks back out as CSV (missing cells empty).
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
        let mut header: Vec<String> = self.feature_names.clone();
        header.push(self.target_name.clone());
        w.write_record(&header).map_err(csv_io)?;
        for r in 0..self.n {
            let mut rec: Vec<String> = Vec::with_capacity(self.d() + 1);
            for c in 0..self.d() {
                rec.push(self.render_cell(self.x_at(r, c), self.x_observed(r, c), self.feature_kinds[c], &self.cat_labels[c]));
            }
            rec.push(self.render_cell(self.y_at(r), self.y_observed(r), self.target_kind, &self.target_labels));
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    fn render_cell(&self, v: f64, observed: bool, kind: FeatureType, labels: &[String]) -> String {
        if !observed {
            return String::new();
        }
        match kind {
            FeatureType::Categorical(_) => labels
                .get(v as usize)
                .cloned()
                .unwrap_or_else(|| format!("{}", v as usize)),
            _ => format!("{v:.17}"),
        }
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Parse { location: "csv".into(), reason: e.to_string() }
}

/// Load a CSV with a header row against a typespec. Empty cells and the
/// literal token `NaN` become missing; categorical labels map to indices in
/// first-seen order.
pub fn load_csv(data_path: &Path, spec: &TypeSpec) -> Result<MixedDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(data_path)
        .map_err(csv_io)?;
    let headers = reader.headers().map_err(csv_io)?.clone();
    if headers.len() != spec.columns.len() {
        return Err(Error::Parse {
            location: format!("{}", data_path.display()),
            reason: format!(
                "header has {} columns, typespec has {}",
                headers.len(),
                spec.columns.len()
            ),
        });
    }
    for (i, col) in spec.columns.iter().enumerate() {
        if headers[i] != col.name {
            return Err(Error::Parse {
                location: format!("{} header column {}", data_path.display(), i + 1),
                reason: format!("expected '{}', found '{}'", col.name, &headers[i]),
            });
        }
    }

    let target = spec.target_index().ok_or_else(|| {
        Error::Config("typespec needs exactly one target column".into())
    })?;
    let features = spec.feature_columns();
    let d = features.len();

    let mut ds = MixedDataset {
        feature_names: features.iter().map(|&i| spec.columns[i].name.clone()).collect(),
        feature_kinds: features.iter().map(|&i| spec.columns[i].kind).collect(),
        target_name: spec.columns[target].name.clone(),
        target_kind: spec.columns[target].kind,
        n: 0,
        x: Vec::new(),
        x_mask: Vec::new(),
        y: Vec::new(),
        y_mask: Vec::new(),
        cat_labels: vec![Vec::new(); d],
        target_labels: Vec::new(),
    };
    let mut label_maps: Vec<HashMap<String, usize>> = vec![HashMap::new(); d];
    let mut target_label_map: HashMap<String, usize> = HashMap::new();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_io)?;
        for (slot, &col) in features.iter().enumerate() {
            let cell = &record[col];
            let colspec = &spec.columns[col];
            let (value, observed) = parse_cell(
                cell,
                colspec,
                row_idx,
                &mut label_maps[slot],
                &mut ds.cat_labels[slot],
            )?;
            ds.x.push(value);
            ds.x_mask.push(observed as u8);
        }
        let cell = &record[target];
        let (value, observed) = parse_cell(
            cell,
            &spec.columns[target],
            row_idx,
            &mut target_label_map,
            &mut ds.target_labels,
        )?;
        ds.y.push(value);
        ds.y_mask.push(observed as u8);
        ds.n += 1;
    }
    Ok(ds)
}

fn parse_cell(
    cell: &str,
    col: &ColumnSpec,
    row: usize,
    label_map: &mut HashMap<String, usize>,
    labels: &mut Vec<String>,
) -> Result<(f64, bool)> {
    if cell.is_empty() || cell == "NaN" {
        return Ok((MISSING, false));
    }
    let loc = || format!("row {}, column '{}'", row + 2, col.name);
    match col.kind {
        FeatureType::Categorical(k) => {
            let idx = match label_map.get(cell) {
                Some(&i) => i,
                None => {
                    if labels.len() >= k {
                        return Err(Error::Parse {
                            location: loc(),
                            reason: format!(
                                "unknown category '{}' ({} classes already seen)",
                                cell,
                                labels.len()
                            ),
                        });
                    }
                    let i = labels.len();
                    labels.push(cell.to_string());
                    label_map.insert(cell.to_string(), i);
                    i
                }
            };
            Ok((idx as f64, true))
        }
        kind => {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                location: loc(),
                reason: format!("unparseable cell '{cell}'"),
            })?;
            kind.check_support(&col.name, v).map_err(|e| Error::Parse {
                location: loc(),
                reason: e.to_string(),
            })?;
            Ok((v, true))
        }
    }
}

/// Map category labels of `ds` onto the label tables of `reference`,
/// erroring on labels unseen at training time.
pub fn align_categories(ds: &mut MixedDataset, reference: &MixedDataset) -> Result<()> {
    let d = ds.d();
    for c in 0..d {
        if !matches!(ds.feature_kinds[c], FeatureType::Categorical(_)) {
            continue;
        }
        let remap: Vec<Option<usize>> = ds.cat_labels[c]
            .iter()
            .map(|l| reference.cat_labels[c].iter().position(|r| r == l))
            .collect();
        for r in 0..ds.n {
            if ds.x_observed(r, c) {
                let old = ds.x_at(r, c) as usize;
                match remap[old] {
                    Some(new) => ds.x[r * d + c] = new as f64,
                    None => {
                        return Err(Error::Parse {
                            location: format!("row {}, column '{}'", r + 2, ds.feature_names[c]),
                            reason: format!("unknown category '{}'", ds.cat_labels[c][old]),
                        })
                    }
                }
            }
        }
        ds.cat_labels[c] = reference.cat_labels[c].clone();
    }
    Ok(())
}

/// Per-column affine transform fitted on observed training cells in model
/// space (positive columns after log).
#[derive(Clone, Debug)]
pub struct Standardizer {
    /// mean/std per feature column; identity (0, 1) for discrete kinds.
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

impl Standardizer {
    pub fn fit(ds: &MixedDataset) -> Result<Standardizer> {
        let d = ds.d();
        let mut x_mean = vec![0.0; d];
        let mut x_std = vec![1.0; d];
        for c in 0..d {
            if !ds.feature_kinds[c].is_continuous() {
                continue;
            }
            let vals: Vec<f64> = (0..ds.n)
                .filter(|&r| ds.x_observed(r, c))
                .map(|r| to_model_space(ds.feature_kinds[c], ds.x_at(r, c)))
                .collect();
            let (m, s) = mean_std(&vals, &ds.feature_names[c])?;
            x_mean[c] = m;
            x_std[c] = s;
        }
        let (y_mean, y_std) = if ds.target_kind.is_continuous() {
            let vals: Vec<f64> = (0..ds.n)
                .filter(|&r| ds.y_observed(r))
                .map(|r| to_model_space(ds.target_kind, ds.y_at(r)))
                .collect();
            mean_std(&vals, &ds.target_name)?
        } else {
            (0.0, 1.0)
        };
        Ok(Standardizer { x_mean, x_std, y_mean, y_std })
    }

    /// Observed data-space feature value -> standardized model space.
    pub fn x_to_model(&self, kind: FeatureType, col: usize, v: f64) -> f64 {
        if kind.is_continuous() {
            (to_model_space(kind, v) - self.x_mean[col]) / self.x_std[col]
        } else {
            v
        }
    }

    /// Standardized model-space value -> data space.
    pub fn x_from_model(&self, kind: FeatureType, col: usize, u: f64) -> f64 {
        if kind.is_continuous() {
            crate::likelihood::from_model_space(kind, u * self.x_std[col] + self.x_mean[col])
        } else {
            crate::likelihood::from_model_space(kind, u)
        }
    }

    pub fn y_to_model(&self, kind: FeatureType, v: f64) -> f64 {
        if kind.is_continuous() {
            (to_model_space(kind, v) - self.y_mean) / self.y_std
        } else {
            v
        }
    }

    pub fn y_from_model(&self, kind: FeatureType, u: f64) -> f64 {
        if kind.is_continuous() {
            crate::likelihood::from_model_space(kind, u * self.y_std + self.y_mean)
        } else {
            crate::likelihood::from_model_space(kind, u)
        }
    }
}

fn mean_std(vals: &[f64], name: &str) -> Result<(f64, f64)> {
    if vals.is_empty() {
        return Ok((0.0, 1.0));
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 0.0 {
        return Err(Error::Config(format!("column '{name}' is constant; cannot standardize")));
    }
    Ok((mean, std))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MissingnessMode {
    /// One rate per datapoint drawn from U(lo, hi); target masked at the
    /// same per-row rate. Re-invoked every batch during training.
    Train,
    /// Fixed feature rate of 0.5 and a fully hidden target.
    Test,
}

/// Inject extra missingness on top of a dataset's own missing cells.
pub fn inject_missingness(
    ds: &MixedDataset,
    mode: MissingnessMode,
    seed: u64,
    train_interval: (f64, f64),
) -> MixedDataset {
    let mut out = ds.clone();
    let mut rng = StdRng::seed_from_u64(seed);
    inject_rows(&mut out, mode, &mut rng, train_interval, None);
    out
}

/// In-place injection for a subset of rows; used per batch in training so
/// masks differ across steps.
pub fn inject_rows(
    ds: &mut MixedDataset,
    mode: MissingnessMode,
    rng: &mut StdRng,
    train_interval: (f64, f64),
    rows: Option<&[usize]>,
) {
    let d = ds.d();
    let all_rows: Vec<usize>;
    let rows = match rows {
        Some(r) => r,
        None => {
            all_rows = (0..ds.n).collect();
            &all_rows
        }
    };
    for &r in rows {
        match mode {
            MissingnessMode::Train => {
                let (lo, hi) = train_interval;
                let p = if hi > lo { rng.gen_range(lo..hi) } else { lo };
                for c in 0..d {
                    if ds.x_mask[r * d + c] == 1 && rng.gen::<f64>() < p {
                        ds.x_mask[r * d + c] = 0;
                    }
                }
                if ds.y_mask[r] == 1 && rng.gen::<f64>() < p {
                    ds.y_mask[r] = 0;
                }
            }
            MissingnessMode::Test => {
                for c in 0..d {
                    if ds.x_mask[r * d + c] == 1 && rng.gen::<f64>() < 0.5 {
                        ds.x_mask[r * d + c] = 0;
                    }
                }
                ds.y_mask[r] = 0;
            }
        }
    }
}

/// Seeded index split; `train_fraction` of rows go to the first list.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let cut = ((n as f64) * train_fraction).round() as usize;
    let (train, test) = idx.split_at(cut.min(n));
    (train.to_vec(), test.to_vec())
}

pub fn save_split(path: &Path, rows: &[usize]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for r in rows {
        writeln!(f, "{r}")?;
    }
    Ok(())
}

pub fn load_split(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        rows.push(line.parse().map_err(|_| Error::Parse {
            location: format!("{} line {}", path.display(), lineno + 1),
            reason: format!("expected a row index, found '{line}'"),
        })?);
    }
    Ok(rows)
}

/// Ground truth of a synthetic recipe, for oracle tests.
#[derive(Clone, Debug)]
pub struct SynthTruth {
    pub recipe: String,
    /// Linear weights for recipes with a linear target.
    pub weights: Vec<f64>,
    pub noise_std: f64,
}

/// Built-in generator recipes:
/// - `linear-gaussian`: correlated real features, y = w.x + noise;
/// - `mixed-logit`: real + binary + categorical features, logistic target;
/// - `informative-one`: y = x1 + 0.05 noise, all other features independent.
pub fn synth_mixed(recipe: &str, n: usize, d: usize, seed: u64) -> Result<(MixedDataset, SynthTruth)> {
    let mut rng = StdRng::seed_from_u64(seed);
    match recipe {
        "linear-gaussian" => Ok(synth_linear_gaussian(n, d, &mut rng)),
        "mixed-logit" => Ok(synth_mixed_logit(n, d, &mut rng)),
        "informative-one" => Ok(synth_informative_one(n, d, &mut rng)),
        other => Err(Error::Config(format!("unknown synth recipe '{other}'"))),
    }
}

fn empty_dataset(
    feature_names: Vec<String>,
    feature_kinds: Vec<FeatureType>,
    target_name: &str,
    target_kind: FeatureType,
) -> MixedDataset {
    let d = feature_kinds.len();
    let cat_labels = feature_kinds
        .iter()
        .map(|k| match k {
            FeatureType::Categorical(kk) => (0..*kk).map(|i| format!("c{i}")).collect(),
            FeatureType::Binary => Vec::new(),
            _ => Vec::new(),
        })
        .collect();
    let target_labels = match target_kind {
        FeatureType::Categorical(kk) => (0..kk).map(|i| format!("c{i}")).collect(),
        _ => Vec::new(),
    };
    MixedDataset {
        feature_names,
        feature_kinds,
        target_name: target_name.to_string(),
        target_kind,
        n: 0,
        x: Vec::with_capacity(d),
        x_mask: Vec::new(),
        y: Vec::new(),
        y_mask: Vec::new(),
        cat_labels,
        target_labels,
    }
}

fn push_row(ds: &mut MixedDataset, x: &[f64], y: f64) {
    ds.x.extend_from_slice(x);
    ds.x_mask.extend(std::iter::repeat(1u8).take(x.len()));
    ds.y.push(y);
    ds.y_mask.push(1);
    ds.n += 1;
}

fn synth_linear_gaussian(n: usize, d: usize, rng: &mut StdRng) -> (MixedDataset, SynthTruth) {
    let d = d.max(2);
    let names = (0..d).map(|i| format!("x{}", i + 1)).collect();
    let kinds = vec![FeatureType::Real; d];
    let mut ds = empty_dataset(names, kinds, "y", FeatureType::Real);

    // Mixing matrix with a shared factor makes the features correlated.
    let weights: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let noise_std = 0.3;
    let loadings: Vec<f64> = (0..d).map(|_| rng.gen_range(0.4..0.9)).collect();
    for _ in 0..n {
        let shared: f64 = StandardNormal.sample(rng);
        let mut x = vec![0.0; d];
        for c in 0..d {
            let own: f64 = StandardNormal.sample(rng);
            x[c] = loadings[c] * shared + (1.0 - loadings[c] * loadings[c]).sqrt() * own;
        }
        let noise: f64 = StandardNormal.sample(rng);
        let y = weights.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + noise_std * noise;
        push_row(&mut ds, &x, y);
    }
    (ds, SynthTruth { recipe: "linear-gaussian".into(), weights, noise_std })
}

fn synth_mixed_logit(n: usize, d: usize, rng: &mut StdRng) -> (MixedDataset, SynthTruth) {
    let d = d.max(4);
    // Round-robin kinds: real, real, binary, categorical(3), ...
    let mut kinds = Vec::with_capacity(d);
    for c in 0..d {
        kinds.push(match c % 4 {
            0 | 1 => FeatureType::Real,
            2 => FeatureType::Binary,
            _ => FeatureType::Categorical(3),
        });
    }
    let names = (0..d).map(|i| format!("x{}", i + 1)).collect();
    let mut ds = empty_dataset(names, kinds.clone(), "y", FeatureType::Binary);

    let weights: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.2..1.2)).collect();
    for _ in 0..n {
        let shared: f64 = StandardNormal.sample(rng);
        let mut x = vec![0.0; d];
        let mut score = 0.0;
        for c in 0..d {
            let own: f64 = StandardNormal.sample(rng);
            let latent = 0.6 * shared + 0.8 * own;
            match kinds[c] {
                FeatureType::Real => {
                    x[c] = latent;
                    score += weights[c] * latent;
                }
                FeatureType::Binary => {
                    x[c] = if latent > 0.0 { 1.0 } else { 0.0 };
                    score += weights[c] * (x[c] - 0.5);
                }
                FeatureType::Categorical(k) => {
                    let idx = (((latent / 1.2) + 1.5).floor().clamp(0.0, (k - 1) as f64)) as usize;
                    x[c] = idx as f64;
                    score += weights[c] * (idx as f64 - 1.0);
                }
                FeatureType::Positive => unreachable!(),
            }
        }
        let y = if rng.gen::<f64>() < sigmoid(1.5 * score) { 1.0 } else { 0.0 };
        push_row(&mut ds, &x, y);
    }
    (ds, SynthTruth { recipe: "mixed-logit".into(), weights, noise_std: 0.0 })
}

fn synth_informative_one(n: usize, d: usize, rng: &mut StdRng) -> (MixedDataset, SynthTruth) {
    let d = d.max(2);
    let names = (0..d).map(|i| format!("x{}", i + 1)).collect();
    let kinds = vec![FeatureType::Real; d];
    let mut ds = empty_dataset(names, kinds, "y", FeatureType::Real);
    let noise_std = 0.05;
    for _ in 0..n {
        let mut x = vec![0.0; d];
        for v in x.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let noise: f64 = StandardNormal.sample(rng);
        let y = x[0] + noise_std * noise;
        push_row(&mut ds, &x, y);
    }
    let mut weights = vec![0.0; d];
    weights[0] = 1.0;
    (ds, SynthTruth { recipe: "informative-one".into(), weights, noise_std })
}
