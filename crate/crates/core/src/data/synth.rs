//! A seeded stand-in for a pair of clinical tables that share a handful of
//! demographic and diagnostic columns.
//!
//! Every row has one latent factor `z ~ N(0, 1)`. Shared columns, the
//! columns unique to each table and the binary label are all functions of
//! `z`; Gaussian noise of standard deviation `noise` is added to each
//! feature's score before it is squashed or bucketed. The label is
//! `z >= threshold` (a survival-months column crossing 24 carries the same
//! information).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::schema::{table1_schema, Cell, Dataset, FeatureSpec};
use crate::{math, Error, Result, RngState};

/// Which shared columns to generate.
#[derive(Clone, Debug, PartialEq)]
pub enum CommonFeatures {
    /// The seven clinical columns (27 encoded).
    Table1,
    /// `k` numeric columns named `c0..`.
    Numeric(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub rows_a: usize,
    pub rows_b: usize,
    pub common: CommonFeatures,
    /// Target encoded widths of the unique blocks.
    pub unique_a: usize,
    pub unique_b: usize,
    pub noise: f64,
    /// Slope scale of the unique columns on each side.
    pub signal_a: f64,
    pub signal_b: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// 522 recipient rows with 27 + 41 encoded columns and a donor with
    /// 27 + 51; about 72% positive labels.
    pub fn gdc_seer(rows_b: usize, seed: u64) -> Self {
        SynthConfig {
            rows_a: 522,
            rows_b,
            common: CommonFeatures::Table1,
            unique_a: 41,
            unique_b: 51,
            noise: 1.0,
            signal_a: 0.3,
            signal_b: 2.0,
            threshold: -0.58,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct UniqueFeature {
    name: String,
    slope: f64,
    offset: f64,
    /// `None` for numeric columns; otherwise the three category labels.
    categories: Option<[String; 3]>,
    scale: f64,
}

/// The sampled coefficients of one generated pair.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentModel {
    common: CommonFeatures,
    common_slopes: Vec<f64>,
    unique_a: Vec<UniqueFeature>,
    unique_b: Vec<UniqueFeature>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPair {
    pub a: Dataset,
    pub b: Dataset,
    pub common: Vec<String>,
    pub latent_a: Vec<f64>,
    pub latent_b: Vec<f64>,
    /// Survival months per row; label 1 iff >= 24.
    pub months_a: Vec<f64>,
    pub months_b: Vec<f64>,
    pub model: LatentModel,
}

// Bucket cut points for the clinical categorical columns, in units of the
// column's score.
const RACE_CUTS: [f64; 4] = [-1.5, -0.7, 0.2, 1.2];
const ICD_CUTS: [f64; 5] = [-1.2, -0.5, 0.0, 0.5, 1.2];
const HISTOLOGY_CUTS: [f64; 8] = [-1.75, -1.25, -0.75, -0.25, 0.25, 0.75, 1.25, 1.75];
const LATERALITY_CUTS: [f64; 2] = [-0.5, 0.5];
// Terciles of a standard normal.
const TERCILE: f64 = 0.4307;

fn bucket(score: f64, cuts: &[f64]) -> usize {
    cuts.iter().filter(|&&c| score >= c).count()
}

fn categories_of(schema_index: usize) -> Vec<String> {
    match &table1_schema().features[schema_index].spec {
        FeatureSpec::Categorical { categories } => categories.clone(),
        FeatureSpec::Numerical { .. } => Vec::new(),
    }
}

fn unique_block(prefix: &str, width: usize, signal: f64, rng: &mut RngState) -> Vec<UniqueFeature> {
    let n_cat = width / 4;
    let n_num = width - 3 * n_cat;
    let mut out = Vec::with_capacity(n_cat + n_num);
    for j in 0..n_cat + n_num {
        let sign = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
        let slope = sign * signal * rng.uniform(0.5, 1.0);
        let offset = rng.uniform(-0.5, 0.5);
        let categorical = j < n_cat;
        out.push(UniqueFeature {
            name: if categorical { format!("{prefix}_cat{j}") } else { format!("{prefix}_num{}", j - n_cat) },
            slope,
            offset,
            categories: categorical.then(|| ["low".to_string(), "mid".to_string(), "high".to_string()]),
            scale: rng.uniform(1.0, 100.0),
        });
    }
    out
}

impl LatentModel {
    fn sample(cfg: &SynthConfig, rng: &mut RngState) -> Self {
        let common_slopes = match cfg.common {
            CommonFeatures::Table1 => alloc::vec![1.0, 0.9, -0.7, 0.8, -0.6, 1.1, 0.5],
            CommonFeatures::Numeric(k) => (0..k).map(|_| rng.uniform(0.5, 1.5)).collect(),
        };
        LatentModel {
            common: cfg.common.clone(),
            common_slopes,
            unique_a: unique_block("a", cfg.unique_a, cfg.signal_a, rng),
            unique_b: unique_block("b", cfg.unique_b, cfg.signal_b, rng),
        }
    }

    pub fn common_names(&self) -> Vec<String> {
        match self.common {
            CommonFeatures::Table1 => table1_schema().features.into_iter().map(|f| f.name).collect(),
            CommonFeatures::Numeric(k) => (0..k).map(|i| format!("c{i}")).collect(),
        }
    }

    fn common_cells(&self, z: f64, noise: f64, rng: &mut RngState) -> Vec<Cell> {
        let s: Vec<f64> = self.common_slopes.iter().map(|a| a * z + noise * rng.normal()).collect();
        match self.common {
            CommonFeatures::Table1 => {
                let pick = |i: usize, k: usize| Cell::Text(categories_of(i)[k].clone());
                alloc::vec![
                    pick(0, usize::from(s[0] >= 0.0)),
                    Cell::Num(1957.0 + 60.0 * math::sigmoid(s[1])),
                    Cell::Num(88.0 * math::sigmoid(s[2] + 0.3)),
                    pick(3, bucket(s[3], &RACE_CUTS)),
                    pick(4, bucket(s[4], &ICD_CUTS)),
                    pick(5, bucket(s[5], &HISTOLOGY_CUTS)),
                    pick(6, bucket(s[6], &LATERALITY_CUTS)),
                ]
            }
            CommonFeatures::Numeric(_) => s.iter().map(|&v| Cell::Num(math::sigmoid(v))).collect(),
        }
    }

    fn unique_cells(block: &[UniqueFeature], z: f64, noise: f64, rng: &mut RngState) -> Vec<Cell> {
        block
            .iter()
            .map(|f| {
                let score = f.slope * z + noise * rng.normal();
                match &f.categories {
                    Some(cats) => {
                        let spread = math::sqrt(f.slope * f.slope + noise * noise);
                        Cell::Text(cats[bucket(score, &[-TERCILE * spread, TERCILE * spread])].clone())
                    }
                    None => Cell::Num(f.scale * math::sigmoid(score + f.offset)),
                }
            })
            .collect()
    }

    /// Noise-free donor-unique values for latent `z`.
    pub fn unique_b_at(&self, z: f64) -> Vec<Cell> {
        Self::unique_cells(&self.unique_b, z, 0.0, &mut RngState::new(0))
    }

    /// Recovers `z` from a noise-free row of shared columns (via the first
    /// numeric shared column).
    pub fn latent_from_common(&self, common: &[Cell]) -> Result<f64> {
        let (i, v) = match self.common {
            CommonFeatures::Table1 => (1, (common_num(common, 1)? - 1957.0) / 60.0),
            CommonFeatures::Numeric(_) => (0, common_num(common, 0)?),
        };
        Ok(math::ln(v / (1.0 - v)) / self.common_slopes[i])
    }
}

fn common_num(cells: &[Cell], i: usize) -> Result<f64> {
    match cells.get(i) {
        Some(Cell::Num(v)) => Ok(*v),
        _ => Err(Error::Domain(format!("shared column {i} is not numeric"))),
    }
}

/// Offset added to donor row ids so the two tables never share an id.
pub const DONOR_ID_OFFSET: u64 = 1 << 40;

fn build_side(
    name: &str,
    rows: usize,
    model: &LatentModel,
    unique: &[UniqueFeature],
    cfg: &SynthConfig,
    rng: &mut RngState,
    id_offset: u64,
) -> Result<(Dataset, Vec<f64>, Vec<f64>)> {
    let mut columns = model.common_names();
    columns.extend(unique.iter().map(|f| f.name.clone()));
    let mut cells = Vec::with_capacity(rows);
    let mut labels = Vec::with_capacity(rows);
    let mut latent = Vec::with_capacity(rows);
    let mut months = Vec::with_capacity(rows);
    for _ in 0..rows {
        let z = rng.normal();
        let mut row = model.common_cells(z, cfg.noise, rng);
        row.extend(LatentModel::unique_cells(unique, z, cfg.noise, rng));
        cells.push(row);
        let m = 24.0 * math::exp(0.8 * (z - cfg.threshold));
        labels.push(super::schema::survival_label(m));
        latent.push(z);
        months.push(m);
    }
    let ds = Dataset::new(name, columns, cells, labels)?.with_row_ids((0..rows as u64).map(|i| i + id_offset).collect())?;
    Ok((ds, latent, months))
}

/// Generates a recipient table `a` and a donor table `b`.
pub fn make_synthetic_pair(cfg: &SynthConfig) -> Result<SyntheticPair> {
    if cfg.rows_a == 0 || cfg.rows_b == 0 {
        return Err(Error::Config("synthetic tables need at least one row each".into()));
    }
    if let CommonFeatures::Numeric(0) = cfg.common {
        return Err(Error::Config("at least one shared column is required".into()));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(Error::Config(format!("noise must be a non-negative number, got {}", cfg.noise)));
    }
    let root = RngState::new(cfg.seed);
    let model = LatentModel::sample(cfg, &mut root.fork(1));
    let (a, latent_a, months_a) = build_side("gdc", cfg.rows_a, &model, &model.unique_a, cfg, &mut root.fork(2), 0)?;
    let (b, latent_b, months_b) =
        build_side("seer", cfg.rows_b, &model, &model.unique_b, cfg, &mut root.fork(3), DONOR_ID_OFFSET)?;
    Ok(SyntheticPair {
        a,
        b,
        common: model.common_names(),
        latent_a,
        latent_b,
        months_a,
        months_b,
        model,
    })
}
