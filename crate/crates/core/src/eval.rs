//! F1 scoring, the downstream classifiers, and single grid-cell runners for
//! the image and tabular experiments.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::augment::{apply_mapping, augment_images, fit_donor_mapping, fit_image_mapping, AugmentationPlan};
use crate::autoencoder::Variant;
use crate::data::{mask_images, partition, undersample, AlignedPair, ImageMaskSpec, ImageSet, Scheme, Side};
use crate::nn::{one_hot, train, Activation, Conv2d, Dense, Layer, LossKind, Network, TrainConfig, TrainHistory};
use crate::{Error, Result, RngState, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Averaging {
    /// Unweighted mean over every class, including classes that never occur.
    Macro,
    /// F1 of class 1 in a two-class problem.
    BinaryPositive,
}

impl core::str::FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro" => Ok(Averaging::Macro),
            "binary_positive" => Ok(Averaging::BinaryPositive),
            other => Err(Error::Config(format!("unknown averaging `{other}`"))),
        }
    }
}

fn class_f1(pred: &[usize], truth: &[usize], class: usize) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == class, t == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// F1 over `classes` classes (labels must be below `classes`).
pub fn f1_with_classes(pred: &[usize], truth: &[usize], averaging: Averaging, classes: usize) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape("f1", &[pred.len()], &[truth.len()]));
    }
    if pred.is_empty() {
        return Err(Error::Empty("f1 needs at least one prediction".into()));
    }
    if let Some(l) = pred.iter().chain(truth).find(|&&l| l >= classes) {
        return Err(Error::Domain(format!("label {l} is not below the class count {classes}")));
    }
    match averaging {
        Averaging::Macro => Ok((0..classes).map(|c| class_f1(pred, truth, c)).sum::<f64>() / classes as f64),
        Averaging::BinaryPositive => {
            if classes != 2 {
                return Err(Error::Domain(format!("binary F1 needs 2 classes, got {classes}")));
            }
            Ok(class_f1(pred, truth, 1))
        }
    }
}

/// F1 with the class count taken from the labels present (at least 2).
pub fn f1(pred: &[usize], truth: &[usize], averaging: Averaging) -> Result<f64> {
    let classes = pred.iter().chain(truth).max().map_or(2, |m| (m + 1).max(2));
    f1_with_classes(pred, truth, averaging, classes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassifierKind {
    ImageCnn,
    TabularMlp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub conv_filters: [usize; 2],
    pub dense_units: usize,
    pub conv_dropout: f64,
    pub dense_dropout: f64,
    pub mlp_hidden: Vec<usize>,
    pub mlp_dropout: f64,
    pub train: TrainConfig,
}

impl ClassifierConfig {
    /// conv16 -> pool -> conv32 -> pool -> dropout .25 -> dense128 ->
    /// dropout .5 -> softmax.
    pub fn image() -> Self {
        ClassifierConfig {
            kind: ClassifierKind::ImageCnn,
            conv_filters: [16, 32],
            dense_units: 128,
            conv_dropout: 0.25,
            dense_dropout: 0.5,
            mlp_hidden: vec![64, 32],
            mlp_dropout: 0.3,
            train: TrainConfig {
                loss: LossKind::SoftmaxCe,
                ..TrainConfig::default()
            },
        }
    }

    /// dense64 -> dropout .3 -> dense32 -> dropout .3 -> softmax.
    pub fn tabular() -> Self {
        ClassifierConfig {
            kind: ClassifierKind::TabularMlp,
            ..Self::image()
        }
    }
}

/// Builds an untrained classifier for per-example inputs of `input_shape`
/// (`[H, W, C]` for images, `[d]` for tables).
pub fn build_classifier(cfg: &ClassifierConfig, input_shape: &[usize], classes: usize, rng: &mut RngState) -> Result<Network> {
    let mut layers = Vec::new();
    match cfg.kind {
        ClassifierKind::ImageCnn => {
            let [h, w, c] = <[usize; 3]>::try_from(input_shape)
                .map_err(|_| Error::Config(format!("image classifier needs [H, W, C] input, got {input_shape:?}")))?;
            let [f1, f2] = cfg.conv_filters;
            layers.push(Layer::Conv2d(Conv2d::glorot(3, c, f1, rng)?));
            layers.push(Layer::Activation(Activation::Relu));
            layers.push(Layer::MaxPool2x2);
            layers.push(Layer::Conv2d(Conv2d::glorot(3, f1, f2, rng)?));
            layers.push(Layer::Activation(Activation::Relu));
            layers.push(Layer::MaxPool2x2);
            layers.push(Layer::Flatten);
            layers.push(Layer::dropout(cfg.conv_dropout)?);
            let flat = (h / 4) * (w / 4) * f2;
            layers.push(Layer::Dense(Dense::glorot(flat, cfg.dense_units, rng)));
            layers.push(Layer::Activation(Activation::Relu));
            layers.push(Layer::dropout(cfg.dense_dropout)?);
            layers.push(Layer::Dense(Dense::glorot(cfg.dense_units, classes, rng)));
        }
        ClassifierKind::TabularMlp => {
            let [d] = <[usize; 1]>::try_from(input_shape)
                .map_err(|_| Error::Config(format!("tabular classifier needs [d] input, got {input_shape:?}")))?;
            let mut width = d;
            for &h in &cfg.mlp_hidden {
                layers.push(Layer::Dense(Dense::glorot(width, h, rng)));
                layers.push(Layer::Activation(Activation::Relu));
                layers.push(Layer::dropout(cfg.mlp_dropout)?);
                width = h;
            }
            layers.push(Layer::Dense(Dense::glorot(width, classes, rng)));
        }
    }
    layers.push(Layer::Activation(Activation::Softmax));
    Network::new(input_shape, layers)
}

/// Trains a fresh classifier on `x` (`[N, ...]`) and returns it frozen.
pub fn train_classifier(
    cfg: &ClassifierConfig,
    x: &Tensor,
    labels: &[usize],
    classes: usize,
    rng: &mut RngState,
) -> Result<(Network, TrainHistory)> {
    if labels.len() != x.rows() {
        return Err(Error::shape("train_classifier", &[labels.len()], &[x.rows()]));
    }
    let first = labels.first().copied();
    if labels.iter().all(|&l| Some(l) == first) {
        return Err(Error::DegenerateLabels(format!(
            "training labels contain a single class ({first:?})"
        )));
    }
    let net = build_classifier(cfg, &x.shape()[1..], classes, rng)?;
    let y = one_hot(labels, classes)?;
    let tc = TrainConfig {
        loss: LossKind::SoftmaxCe,
        ..cfg.train.clone()
    };
    train(net, x, &y, &tc, rng)
}

pub fn predict_classes(net: &Network, x: &Tensor) -> Result<Vec<usize>> {
    Ok(net.predict(x)?.argmax_rows())
}

/// One arm of a comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Arm {
    Baseline,
    Ae,
    Vae,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::Ae => "ae",
            Arm::Vae => "vae",
        }
    }

    fn variant(self) -> Option<Variant> {
        match self {
            Arm::Baseline => None,
            Arm::Ae => Some(Variant::Ae),
            Arm::Vae => Some(Variant::Vae),
        }
    }
}

impl core::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Arm::Baseline),
            "ae" => Ok(Arm::Ae),
            "vae" => Ok(Arm::Vae),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmScores {
    pub arm: Arm,
    pub fold_f1: Vec<f64>,
}

impl ArmScores {
    pub fn mean(&self) -> f64 {
        self.fold_f1.iter().sum::<f64>() / self.fold_f1.len().max(1) as f64
    }
}

/// Settings shared by both cell runners.
#[derive(Clone, Debug, PartialEq)]
pub struct CellConfig {
    pub arms: Vec<Arm>,
    pub folds: usize,
    /// Fraction of rows held out for testing.
    pub test_fraction: f64,
    pub classifier: ClassifierConfig,
    /// Mapping settings; `variant`, `donor` and `recipient` are filled in per
    /// arm.
    pub plan: AugmentationPlan,
    pub averaging: Averaging,
}

fn fold_rows(n: usize, folds: usize, fold: usize, rng: &RngState) -> Result<Vec<usize>> {
    if folds == 1 {
        return Ok((0..n).collect());
    }
    Ok(partition(n, Scheme::KFold { k: folds, fold }, &mut rng.clone())?.0)
}

fn assert_disjoint(train: &[u64], test: &[u64], what: &str) -> Result<()> {
    let mut sorted = test.to_vec();
    sorted.sort_unstable();
    match train.iter().find(|id| sorted.binary_search(id).is_ok()) {
        Some(id) => Err(Error::Consistency(format!("row {id} appears in both {what}"))),
        None => Ok(()),
    }
}

fn score(cfg: &CellConfig, train_x: &Tensor, train_y: &[usize], test_x: &Tensor, test_y: &[usize], classes: usize, rng: &mut RngState) -> Result<f64> {
    let (net, _) = train_classifier(&cfg.classifier, train_x, train_y, classes, rng)?;
    let pred = predict_classes(&net, test_x)?;
    f1_with_classes(&pred, test_y, cfg.averaging, classes)
}

fn arm_plan(cfg: &CellConfig, variant: Variant, donor: &str, recipient: &str) -> AugmentationPlan {
    AugmentationPlan {
        variant,
        donor: donor.into(),
        recipient: recipient.into(),
        ..cfg.plan.clone()
    }
}

/// Image cell: hold out a test split, split the rest into halves by index
/// (A first, B second), mask the recipient (`side`) and donor (opposite
/// side), then per fold score each arm on the held-out test images.
pub fn run_image_cell(images: &ImageSet, common: usize, side: Side, cfg: &CellConfig, rng: &RngState) -> Result<Vec<ArmScores>> {
    let (h, w, c) = images.dims();
    let spec = ImageMaskSpec::new(w, h, c, common, side)?;
    let (pool, test_idx) = partition(images.len(), Scheme::Holdout(cfg.test_fraction), &mut rng.fork(0))?;
    let pool_set = images.select(&pool);
    let (a_idx, b_idx) = partition(pool_set.len(), Scheme::AbHalves, &mut rng.fork(1))?;
    let (recipient, donor) = match side {
        Side::A => (pool_set.select(&a_idx), pool_set.select(&b_idx)),
        Side::B => (pool_set.select(&b_idx), pool_set.select(&a_idx)),
    };
    let test = images.select(&test_idx);
    assert_disjoint(&recipient.ids, &test.ids, "recipient training and test data")?;
    assert_disjoint(&donor.ids, &test.ids, "donor and test data")?;
    assert_disjoint(&recipient.ids, &donor.ids, "donor and recipient halves")?;

    let classes = images.labels.iter().max().map_or(2, |m| (m + 1).max(2));
    let (masked_rec, _) = mask_images(&recipient.images, &spec)?;
    let (masked_test, _) = mask_images(&test.images, &spec)?;
    let names = match side {
        Side::A => ("B", "A"),
        Side::B => ("A", "B"),
    };

    let mut out: Vec<ArmScores> = cfg.arms.iter().map(|&arm| ArmScores { arm, fold_f1: Vec::new() }).collect();
    for fold in 0..cfg.folds {
        let fold_rng = rng.fork(100 + fold as u64);
        let rows = fold_rows(recipient.len(), cfg.folds, fold, &fold_rng.fork(0))?;
        let train_y: Vec<usize> = rows.iter().map(|&i| recipient.labels[i]).collect();
        let train_masked = masked_rec.select_rows(&rows);
        for scores in out.iter_mut() {
            let arm = scores.arm;
            let mut arm_rng = fold_rng.fork(10 + arm as u64);
            let (train_x, test_x) = match arm.variant() {
                None => (train_masked.clone(), masked_test.clone()),
                Some(v) => {
                    let plan = arm_plan(cfg, v, names.0, names.1);
                    let (model, _) = fit_image_mapping(&donor.images, &spec, &plan, &mut arm_rng)?;
                    (
                        augment_images(&train_masked, &spec, &model, plan.sampling, &mut arm_rng)?,
                        augment_images(&masked_test, &spec, &model, plan.sampling, &mut arm_rng)?,
                    )
                }
            };
            let f = score(cfg, &train_x, &train_y, &test_x, &test.labels, classes, &mut arm_rng)?;
            log::info!("event=fold_scored arm={} fold={} f1={}", arm.name(), fold, f);
            scores.fold_f1.push(f);
        }
    }
    Ok(out)
}

/// Tabular cell: `pair.a` is the recipient and `pair.b` the donor. The
/// recipient is split into a held-out test set and training folds; the donor
/// is undersampled to `donor_count` rows before fitting the mapping.
pub fn run_tabular_cell(pair: &AlignedPair, donor_count: Option<usize>, cfg: &CellConfig, rng: &RngState) -> Result<Vec<ArmScores>> {
    let rec = pair.a.encoded().ok_or_else(|| Error::Usage("recipient is not encoded".into()))?;
    let (pool, test_idx) = partition(rec.rows(), Scheme::Holdout(cfg.test_fraction), &mut rng.fork(0))?;
    let donor_rows = match donor_count {
        Some(n) => undersample(pair.b.len(), n, &mut rng.fork(1))?,
        None => (0..pair.b.len()).collect(),
    };
    let donor_pair = pair.select(&pool, &donor_rows);
    if let (Some(a), Some(b)) = (pair.a.row_ids(), pair.b.row_ids()) {
        let test_ids: Vec<u64> = test_idx.iter().map(|&i| a[i]).collect();
        let pool_ids: Vec<u64> = pool.iter().map(|&i| a[i]).collect();
        let donor_ids: Vec<u64> = donor_rows.iter().map(|&i| b[i]).collect();
        assert_disjoint(&pool_ids, &test_ids, "recipient training and test data")?;
        assert_disjoint(&donor_ids, &test_ids, "donor and test data")?;
        assert_disjoint(&donor_ids, &pool_ids, "donor and recipient data")?;
    }
    let pool_x = rec.select_rows(&pool);
    let pool_y: Vec<usize> = pool.iter().map(|&i| pair.a.labels()[i]).collect();
    let test_x = rec.select_rows(&test_idx);
    let test_y: Vec<usize> = test_idx.iter().map(|&i| pair.a.labels()[i]).collect();
    let classes = pair.a.labels().iter().max().map_or(2, |m| (m + 1).max(2));

    let mut out: Vec<ArmScores> = cfg.arms.iter().map(|&arm| ArmScores { arm, fold_f1: Vec::new() }).collect();
    for fold in 0..cfg.folds {
        let fold_rng = rng.fork(100 + fold as u64);
        let rows = fold_rows(pool.len(), cfg.folds, fold, &fold_rng.fork(0))?;
        let train_x = pool_x.select_rows(&rows);
        let train_y: Vec<usize> = rows.iter().map(|&i| pool_y[i]).collect();
        for scores in out.iter_mut() {
            let arm = scores.arm;
            let mut arm_rng = fold_rng.fork(10 + arm as u64);
            let (tx, vx) = match arm.variant() {
                None => (train_x.clone(), test_x.clone()),
                Some(v) => {
                    let plan = arm_plan(cfg, v, &pair.b.name, &pair.a.name);
                    let (model, _) = fit_donor_mapping(&donor_pair, &plan, &mut arm_rng)?;
                    let s = plan.sampling;
                    (
                        apply_mapping(&train_x, &pair.common_in_a, &pair.unique_in_b, &model, s, &mut arm_rng)?,
                        apply_mapping(&test_x, &pair.common_in_a, &pair.unique_in_b, &model, s, &mut arm_rng)?,
                    )
                }
            };
            let f = score(cfg, &tx, &train_y, &vx, &test_y, classes, &mut arm_rng)?;
            log::info!("event=fold_scored arm={} fold={} f1={}", arm.name(), fold, f);
            scores.fold_f1.push(f);
        }
    }
    Ok(out)
}

/// A cell outcome as plain strings, for error reporting.
pub fn describe(scores: &[ArmScores]) -> String {
    let parts: Vec<String> = scores.iter().map(|s| format!("{}={:.4}", s.arm.name(), s.mean())).collect();
    parts.join(" ")
}
