//! Cross-dataset augmentation: fit a shared-to-full mapping on the donor,
//! push the recipient's shared columns through it, and append the donor's
//! unique columns to the recipient.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autoencoder::{
    build_mapping, fit_mapping, generate_features, FitHistory, MappingModel, MappingSpec, Sampling, Variant,
};
use crate::data::{compose_augmented_image, AlignedPair, ImageMaskSpec};
use crate::nn::TrainConfig;
use crate::{Error, Result, RngState, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentationPlan {
    /// Dataset whose features are learned ("B").
    pub donor: String,
    /// Dataset that receives synthetic columns ("A").
    pub recipient: String,
    pub variant: Variant,
    pub beta: f64,
    pub train: TrainConfig,
    pub sampling: Sampling,
    /// Hidden widths; `None` uses the default architecture.
    pub hidden: Option<Vec<usize>>,
    pub latent_dim: Option<usize>,
    pub seed: u64,
}

impl AugmentationPlan {
    pub fn new(donor: &str, recipient: &str, variant: Variant) -> Self {
        AugmentationPlan {
            donor: donor.into(),
            recipient: recipient.into(),
            variant,
            beta: 1.0,
            train: TrainConfig::default(),
            sampling: Sampling::Sample,
            hidden: None,
            latent_dim: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.donor == self.recipient {
            return Err(Error::Config(format!(
                "donor and recipient must differ, both are `{}`",
                self.donor
            )));
        }
        Ok(())
    }

    pub fn mapping_spec(&self, input_width: usize, output_width: usize) -> MappingSpec {
        let mut spec = MappingSpec::with_defaults(self.variant, input_width, output_width);
        if let Some(l) = self.latent_dim {
            spec.latent_dim = l;
            spec.hidden = alloc::vec![(2 * l).max(64)];
        }
        if let Some(h) = &self.hidden {
            spec.hidden = h.clone();
        }
        spec
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ColumnSource {
    Real,
    Synthetic,
}

/// Where one encoded column of an augmented dataset came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnProvenance {
    pub name: String,
    pub source: ColumnSource,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedDataset {
    pub name: String,
    pub data: Tensor,
    pub labels: Vec<usize>,
    pub row_ids: Option<Vec<u64>>,
    pub columns: Vec<ColumnProvenance>,
}

impl AugmentedDataset {
    pub fn synthetic_count(&self) -> usize {
        self.columns.iter().filter(|c| c.source == ColumnSource::Synthetic).count()
    }
}

fn check_disjoint(pair: &AlignedPair) -> Result<()> {
    if let (Some(a), Some(b)) = (pair.a.row_ids(), pair.b.row_ids()) {
        let mut sorted = b.to_vec();
        sorted.sort_unstable();
        if let Some(id) = a.iter().find(|id| sorted.binary_search(id).is_ok()) {
            return Err(Error::Consistency(format!(
                "row id {id} appears in both donor and recipient"
            )));
        }
    }
    Ok(())
}

/// Fits the donor's shared-to-full mapping (`pair.b` is the donor).
pub fn fit_donor_mapping(
    pair: &AlignedPair,
    plan: &AugmentationPlan,
    rng: &mut RngState,
) -> Result<(MappingModel, FitHistory)> {
    let donor = pair
        .b
        .encoded()
        .ok_or_else(|| Error::Usage("donor dataset is not encoded".into()))?;
    let x = donor.select_cols(&pair.common_in_b)?;
    let spec = plan.mapping_spec(x.shape()[1], donor.shape()[1]);
    let model = build_mapping(&spec, rng)?;
    fit_mapping(model, &x, donor, &plan.train, plan.beta, rng)
}

/// Appends the donor-unique outputs of `model` to recipient rows.
pub fn apply_mapping(
    recipient: &Tensor,
    common_in_recipient: &[usize],
    unique_in_donor: &[usize],
    model: &MappingModel,
    sampling: Sampling,
    rng: &mut RngState,
) -> Result<Tensor> {
    if unique_in_donor.is_empty() {
        return Ok(recipient.clone());
    }
    let x = recipient.select_cols(common_in_recipient)?;
    let synthetic = generate_features(model, &x, rng, sampling)?;
    recipient.concat_cols(&synthetic.select_cols(unique_in_donor)?)
}

/// The full procedure on `pair.a` (recipient) and `pair.b` (donor).
pub fn run_augmentation(
    pair: &AlignedPair,
    plan: &AugmentationPlan,
    rng: &mut RngState,
) -> Result<(AugmentedDataset, MappingModel, FitHistory)> {
    check_plan(pair, plan)?;
    let (model, history) = fit_donor_mapping(pair, plan, rng)?;
    let out = augment_with_model(pair, plan, &model, rng)?;
    Ok((out, model, history))
}

fn check_plan(pair: &AlignedPair, plan: &AugmentationPlan) -> Result<()> {
    plan.validate()?;
    if pair.a.name != plan.recipient || pair.b.name != plan.donor {
        return Err(Error::Config(format!(
            "plan expects donor `{}` and recipient `{}`, pair has `{}` and `{}`",
            plan.donor, plan.recipient, pair.b.name, pair.a.name
        )));
    }
    check_disjoint(pair)?;
    if pair.unique_in_b.is_empty() {
        log::warn!("event=no_unique_donor_features donor={}", plan.donor);
    }
    Ok(())
}

/// Generation and append with an already fitted (e.g. loaded) mapping.
pub fn augment_with_model(
    pair: &AlignedPair,
    plan: &AugmentationPlan,
    model: &MappingModel,
    rng: &mut RngState,
) -> Result<AugmentedDataset> {
    check_plan(pair, plan)?;
    let (wa, wb) = (pair.schema_a().encoded_width(), pair.schema_b().encoded_width());
    if model.input_width() != pair.common_in_a.len() || model.output_width() != wb {
        return Err(Error::Consistency(format!(
            "mapping is {} -> {}, the pair needs {} -> {wb}",
            model.input_width(),
            model.output_width(),
            pair.common_in_a.len()
        )));
    }
    let recipient = pair
        .a
        .encoded()
        .ok_or_else(|| Error::Usage("recipient dataset is not encoded".into()))?;
    let data = apply_mapping(recipient, &pair.common_in_a, &pair.unique_in_b, model, plan.sampling, rng)?;

    let expected = wa + wb - pair.common_in_b.len();
    if data.shape()[1] != expected || pair.common_in_a.len() != pair.common_in_b.len() {
        return Err(Error::Consistency(format!(
            "augmented width {} != {wa} + {wb} - {}",
            data.shape()[1],
            pair.common_in_b.len()
        )));
    }
    let names_b = pair.schema_b().encoded_names();
    let mut columns: Vec<ColumnProvenance> = pair
        .schema_a()
        .encoded_names()
        .into_iter()
        .map(|name| ColumnProvenance {
            name,
            source: ColumnSource::Real,
        })
        .collect();
    columns.extend(pair.unique_in_b.iter().map(|&c| ColumnProvenance {
        name: format!("{}:{}", plan.donor, names_b[c]),
        source: ColumnSource::Synthetic,
    }));
    Ok(AugmentedDataset {
        name: format!("{}+{}", plan.recipient, plan.donor),
        data,
        labels: pair.a.labels().to_vec(),
        row_ids: pair.a.row_ids().map(<[u64]>::to_vec),
        columns,
    })
}

/// Fits the image mapping: donor common band -> donor kept band. `spec`
/// describes the recipient side; the donor is the opposite side.
pub fn fit_image_mapping(
    donor_images: &Tensor,
    spec: &ImageMaskSpec,
    plan: &AugmentationPlan,
    rng: &mut RngState,
) -> Result<(MappingModel, FitHistory)> {
    let donor_spec = spec.with_side(spec.side.opposite());
    let common: Vec<usize> = donor_spec.common_cols().collect();
    let kept: Vec<usize> = donor_spec.kept_cols().collect();
    let x = donor_spec.flatten_cols(donor_images, &common)?;
    let y = donor_spec.flatten_cols(donor_images, &kept)?;
    let model = build_mapping(&plan.mapping_spec(x.shape()[1], y.shape()[1]), rng)?;
    fit_mapping(model, &x, &y, &plan.train, plan.beta, rng)
}

/// Fills the masked-out columns of recipient images from the mapping.
pub fn augment_images(
    masked: &Tensor,
    spec: &ImageMaskSpec,
    model: &MappingModel,
    sampling: Sampling,
    rng: &mut RngState,
) -> Result<Tensor> {
    if model.input_width() != spec.common_width() {
        return Err(Error::Composition(format!(
            "mapping input width {} does not match the common band width {}",
            model.input_width(),
            spec.common_width()
        )));
    }
    let common: Vec<usize> = spec.common_cols().collect();
    let x = spec.flatten_cols(masked, &common)?;
    let synthetic = generate_features(model, &x, rng, sampling)?;
    compose_augmented_image(masked, &synthetic, spec)
}
