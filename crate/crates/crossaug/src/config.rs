//! TOML run configuration. Every key has a default, unknown keys are
//! rejected, and the resolved document (defaults and command-line overrides
//! applied, `auto` values replaced) is what gets echoed into the output
//! directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crossaug_core::augment::AugmentationPlan;
use crossaug_core::autoencoder::{Sampling, Variant};
use crossaug_core::data::{CommonFeatures, LabelSource, Side, SynthConfig};
use crossaug_core::eval::{Arm, Averaging, ClassifierConfig, ClassifierKind};
use crossaug_core::nn::{LossKind, TrainConfig};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    /// Procedurally drawn 28x28 digits.
    SyntheticDigits,
    ImageIdx,
    TabularCsv,
    /// Latent-factor tabular pair shaped like the GDC/SEER data.
    SyntheticPair,
}

impl Source {
    pub fn is_image(self) -> bool {
        matches!(self, Source::SyntheticDigits | Source::ImageIdx)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// error | warn | info | debug
    pub log_level: String,
    pub data: DataConfig,
    pub image: ImageConfig,
    pub mapping: MappingConfig,
    pub classifier: ClassifierSection,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            log_level: "info".into(),
            data: DataConfig::default(),
            image: ImageConfig::default(),
            mapping: MappingConfig::default(),
            classifier: ClassifierSection::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: Source,
    /// Seed for the synthetic generators.
    pub seed: u64,
    /// synthetic-digits: number of images.
    pub rows: usize,
    /// image-idx: one grayscale/RGB file or three channel files.
    pub images: Vec<PathBuf>,
    pub labels: PathBuf,
    /// image-idx: keep only the first `limit` images (0 keeps all).
    pub limit: usize,
    /// tabular-csv: the two tables. `a` is the first dataset, `b` the second.
    pub a: TableConfig,
    pub b: TableConfig,
    /// Shared feature names; empty means every column present in both.
    pub common: Vec<String>,
    pub synthetic: SyntheticSection,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: Source::SyntheticDigits,
            seed: 0,
            rows: 14_000,
            images: Vec::new(),
            labels: PathBuf::new(),
            limit: 0,
            a: TableConfig::named("A"),
            b: TableConfig::named("B"),
            common: Vec::new(),
            synthetic: SyntheticSection::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    /// Integer class ids.
    Class,
    /// Survival months, labelled 1 when at least 24.
    SurvivalMonths,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableConfig {
    pub path: PathBuf,
    pub name: String,
    pub label_column: String,
    pub label: LabelKind,
    /// Empty means the table has no id column.
    pub id_column: String,
    pub categorical: Vec<String>,
}

impl TableConfig {
    fn named(name: &str) -> Self {
        TableConfig {
            path: PathBuf::new(),
            name: name.into(),
            label_column: "label".into(),
            label: LabelKind::Class,
            id_column: String::new(),
            categorical: Vec::new(),
        }
    }

    pub fn label_source(&self) -> LabelSource {
        match self.label {
            LabelKind::Class => LabelSource::Column(self.label_column.clone()),
            LabelKind::SurvivalMonths => LabelSource::SurvivalMonths(self.label_column.clone()),
        }
    }
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig::named("")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub rows_a: usize,
    pub rows_b: usize,
    /// 0 uses the seven demographic/tumour features; k > 0 uses k numeric ones.
    pub common_numeric: usize,
    pub unique_a: usize,
    pub unique_b: usize,
    pub noise: f64,
    pub signal_a: f64,
    pub signal_b: f64,
    pub threshold: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection::from_synth(&SynthConfig::gdc_seer(5000, 0))
    }
}

impl SyntheticSection {
    fn from_synth(s: &SynthConfig) -> Self {
        SyntheticSection {
            rows_a: s.rows_a,
            rows_b: s.rows_b,
            common_numeric: match s.common {
                CommonFeatures::Table1 => 0,
                CommonFeatures::Numeric(k) => k,
            },
            unique_a: s.unique_a,
            unique_b: s.unique_b,
            noise: s.noise,
            signal_a: s.signal_a,
            signal_b: s.signal_b,
            threshold: s.threshold,
        }
    }

    pub fn to_synth(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            rows_a: self.rows_a,
            rows_b: self.rows_b,
            common: match self.common_numeric {
                0 => CommonFeatures::Table1,
                k => CommonFeatures::Numeric(k),
            },
            unique_a: self.unique_a,
            unique_b: self.unique_b,
            noise: self.noise,
            signal_a: self.signal_a,
            signal_b: self.signal_b,
            threshold: self.threshold,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageConfig {
    /// Number of shared centre columns (even, 2..=W-2).
    pub common: usize,
    /// Side kept by the recipient: "A" (left) or "B" (right).
    pub side: String,
}

impl Default for ImageConfig {
    fn default() -> Self {
        ImageConfig {
            common: 8,
            side: "A".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// mse | bce | softmax_ce
    pub loss: String,
    pub validation_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            loss: t.loss.name().into(),
            validation_fraction: t.validation_fraction,
        }
    }
}

impl TrainSection {
    fn classifier_default() -> Self {
        TrainSection {
            loss: "softmax_ce".into(),
            ..TrainSection::default()
        }
    }

    pub fn to_train(&self, key: &str, seed: u64) -> Result<TrainConfig> {
        let loss: LossKind = self
            .loss
            .parse()
            .map_err(|_| CliError::Config(format!("{key}.loss: unknown loss `{}`", self.loss)))?;
        let t = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            seed,
            loss,
            validation_fraction: self.validation_fraction,
        };
        t.validate(usize::MAX).map_err(|e| CliError::Config(format!("{key}: {e}")))?;
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MappingConfig {
    /// ae | vae (used by fit-mapping and augment; experiments take
    /// `experiment.variants`).
    pub variant: String,
    /// KL weight for the vae.
    pub beta: f64,
    /// sample | mean_only
    pub sampling: String,
    /// Hidden widths; empty uses [max(64, 2 * latent)].
    pub hidden: Vec<usize>,
    /// 0 uses max(8, input / 2).
    pub latent_dim: usize,
    pub train: TrainSection,
}

impl Default for MappingConfig {
    fn default() -> Self {
        MappingConfig {
            variant: "ae".into(),
            beta: 1.0,
            sampling: "sample".into(),
            hidden: Vec::new(),
            latent_dim: 0,
            train: TrainSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSection {
    pub conv_filters: [usize; 2],
    pub dense_units: usize,
    pub conv_dropout: f64,
    pub dense_dropout: f64,
    pub mlp_hidden: Vec<usize>,
    pub mlp_dropout: f64,
    /// auto | macro | binary_positive; auto is macro for images and
    /// binary_positive for tables.
    pub averaging: String,
    pub train: TrainSection,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let c = ClassifierConfig::image();
        ClassifierSection {
            conv_filters: c.conv_filters,
            dense_units: c.dense_units,
            conv_dropout: c.conv_dropout,
            dense_dropout: c.dense_dropout,
            mlp_hidden: c.mlp_hidden,
            mlp_dropout: c.mlp_dropout,
            averaging: "auto".into(),
            train: TrainSection::classifier_default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    AugmentA,
    AugmentB,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Grid values: common column counts for images, donor row counts for
    /// tables (0 = every donor row). Empty means a single cell at
    /// `image.common` or the full donor.
    pub values: Vec<usize>,
    pub variants: Vec<String>,
    pub direction: Direction,
    pub folds: usize,
    pub test_fraction: f64,
    /// One grid per seed; empty means `[seed]`.
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            values: Vec::new(),
            variants: vec!["baseline".into(), "ae".into(), "vae".into()],
            direction: Direction::AugmentA,
            folds: 5,
            test_fraction: 0.2,
            seeds: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every field and replaces `auto` / empty defaults with
    /// concrete values.
    pub fn resolve(mut self) -> Result<Self> {
        let bad = |m: String| Err(CliError::Config(m));
        if !["error", "warn", "info", "debug", "trace"].contains(&self.log_level.as_str()) {
            return bad(format!("log_level: unknown level `{}`", self.log_level));
        }
        self.side()?;
        self.plan()?;
        self.classifier_config()?;
        if self.classifier.averaging == "auto" {
            self.classifier.averaging = if self.data.source.is_image() { "macro" } else { "binary_positive" }.into();
        }
        self.averaging()?;
        self.arms()?;
        let e = &self.experiment;
        if e.folds == 0 {
            return bad("experiment.folds: must be at least 1".into());
        }
        if !(e.test_fraction > 0.0 && e.test_fraction < 1.0) {
            return bad(format!("experiment.test_fraction: {} is not in (0, 1)", e.test_fraction));
        }
        if self.experiment.seeds.is_empty() {
            self.experiment.seeds = vec![self.seed];
        }
        if self.experiment.values.is_empty() {
            self.experiment.values = vec![if self.data.source.is_image() { self.image.common } else { 0 }];
        }
        if self.data.source.is_image() {
            for &n in std::iter::once(&self.image.common).chain(&self.experiment.values) {
                if n < 2 || n % 2 != 0 {
                    return bad(format!("experiment.values / image.common: {n} is not an even count >= 2"));
                }
            }
        }
        match self.data.source {
            Source::ImageIdx if self.data.images.is_empty() || self.data.labels.as_os_str().is_empty() => {
                return bad("data.images / data.labels: required for source image-idx".into())
            }
            Source::TabularCsv if self.data.a.path.as_os_str().is_empty() || self.data.b.path.as_os_str().is_empty() => {
                return bad("data.a.path / data.b.path: required for source tabular-csv".into())
            }
            Source::TabularCsv | Source::SyntheticPair if self.data.a.name == self.data.b.name => {
                return bad(format!("data.a.name / data.b.name: both are `{}`", self.data.a.name))
            }
            _ => {}
        }
        Ok(self)
    }

    pub fn side(&self) -> Result<Side> {
        self.image
            .side
            .parse()
            .map_err(|_| CliError::Config(format!("image.side: expected A or B, got `{}`", self.image.side)))
    }

    /// Mapping plan with `B` as donor and `A` as recipient; callers rename.
    pub fn plan(&self) -> Result<AugmentationPlan> {
        let m = &self.mapping;
        let variant: Variant = m
            .variant
            .parse()
            .map_err(|_| CliError::Config(format!("mapping.variant: expected ae or vae, got `{}`", m.variant)))?;
        let sampling: Sampling = m.sampling.parse().map_err(|_| {
            CliError::Config(format!("mapping.sampling: expected sample or mean_only, got `{}`", m.sampling))
        })?;
        if !(m.beta >= 0.0 && m.beta.is_finite()) {
            return Err(CliError::Config(format!("mapping.beta: {} is not a non-negative number", m.beta)));
        }
        if m.hidden.contains(&0) {
            return Err(CliError::Config("mapping.hidden: widths must be positive".into()));
        }
        Ok(AugmentationPlan {
            beta: m.beta,
            train: m.train.to_train("mapping.train", self.seed)?,
            sampling,
            hidden: (!m.hidden.is_empty()).then(|| m.hidden.clone()),
            latent_dim: (m.latent_dim > 0).then_some(m.latent_dim),
            seed: self.seed,
            ..AugmentationPlan::new("B", "A", variant)
        })
    }

    pub fn classifier_config(&self) -> Result<ClassifierConfig> {
        let c = &self.classifier;
        for (key, rate) in [("conv_dropout", c.conv_dropout), ("dense_dropout", c.dense_dropout), ("mlp_dropout", c.mlp_dropout)] {
            if !(0.0..1.0).contains(&rate) {
                return Err(CliError::Config(format!("classifier.{key}: {rate} is not in [0, 1)")));
            }
        }
        if c.conv_filters.contains(&0) || c.dense_units == 0 || c.mlp_hidden.contains(&0) {
            return Err(CliError::Config("classifier: layer widths must be positive".into()));
        }
        Ok(ClassifierConfig {
            kind: if self.data.source.is_image() { ClassifierKind::ImageCnn } else { ClassifierKind::TabularMlp },
            conv_filters: c.conv_filters,
            dense_units: c.dense_units,
            conv_dropout: c.conv_dropout,
            dense_dropout: c.dense_dropout,
            mlp_hidden: c.mlp_hidden.clone(),
            mlp_dropout: c.mlp_dropout,
            train: c.train.to_train("classifier.train", self.seed)?,
        })
    }

    pub fn averaging(&self) -> Result<Averaging> {
        match self.classifier.averaging.as_str() {
            "auto" if self.data.source.is_image() => Ok(Averaging::Macro),
            "auto" => Ok(Averaging::BinaryPositive),
            other => other.parse().map_err(|_| {
                CliError::Config(format!("classifier.averaging: expected auto, macro or binary_positive, got `{other}`"))
            }),
        }
    }

    pub fn arms(&self) -> Result<Vec<Arm>> {
        if self.experiment.variants.is_empty() {
            return Err(CliError::Config("experiment.variants: at least one variant is required".into()));
        }
        let mut arms = self
            .experiment
            .variants
            .iter()
            .map(|v| {
                v.parse::<Arm>().map_err(|_| {
                    CliError::Config(format!("experiment.variants: expected baseline, ae or vae, got `{v}`"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        arms.sort();
        arms.dedup();
        Ok(arms)
    }

    pub fn synth(&self) -> SynthConfig {
        self.data.synthetic.to_synth(self.data.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let r = cfg.resolve().unwrap();
        assert_eq!(r.classifier.averaging, "macro");
        assert_eq!(r.experiment.values, vec![8]);
    }

    #[test]
    fn resolved_echo_round_trips() {
        let cfg = RunConfig::from_toml("[data]\nsource = \"synthetic-pair\"\n[experiment]\nvalues = [250, 1000]\n")
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(cfg.classifier.averaging, "binary_positive");
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml(&text).unwrap().resolve().unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::from_toml("[mapping]\nlatnet_dim = 4\n").unwrap_err();
        assert!(err.to_string().contains("latnet_dim"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let err = RunConfig::from_toml("[data]\nsource = \"mnist\"\n").unwrap_err();
        assert!(err.to_string().contains("source"), "{err}");
    }

    #[test]
    fn bad_values_are_named() {
        let check = |doc: &str, key: &str| {
            let err = RunConfig::from_toml(doc).unwrap().resolve().unwrap_err();
            assert!(err.to_string().contains(key), "{err}");
            assert_eq!(err.exit_code(), 2);
        };
        check("[mapping]\nvariant = \"gan\"\n", "mapping.variant");
        check("[image]\ncommon = 7\n", "image.common");
        check("[image]\nside = \"left\"\n", "image.side");
        check("[experiment]\nvariants = [\"ae\", \"x\"]\n", "experiment.variants");
        check("[classifier.train]\nloss = \"hinge\"\n", "classifier.train.loss");
        check("[mapping.train]\nbatch_size = 0\n", "mapping.train");
        check("[data]\nsource = \"image-idx\"\n", "data.images");
    }
}
