//! Tabular schemas and encoding, partitions, image masking, and the two
//! synthetic data sources.

pub mod digits;
mod image;
mod partition;
mod schema;
pub mod synth;

pub use digits::synth_digits;
pub use image::{compose_augmented_image, mask_images, ImageMaskSpec, ImageSet, Side};
pub use partition::{partition, undersample, Scheme};
pub use schema::{
    drop_missing, encode, fit_union_schema, survival_label, table1_schema, AlignedPair, Cell, Dataset, Feature,
    FeatureKind, FeatureSchema, FeatureSpec, LabelSource,
};
pub use synth::{make_synthetic_pair, CommonFeatures, SynthConfig, SyntheticPair};
