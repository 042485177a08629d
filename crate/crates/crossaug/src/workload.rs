//! Turns the `[data]` section into images or an aligned table pair.

use crossaug_core::data::{fit_union_schema, make_synthetic_pair, synth_digits, AlignedPair, Dataset, ImageSet};

use crate::config::{RunConfig, Source, TableConfig};
use crate::error::{CliError, Result};
use crate::io::{idx, tabular};

pub enum Workload {
    Images(ImageSet),
    /// `a` is the first dataset, `b` the second.
    Tabular(AlignedPair),
}

pub fn load_images(cfg: &RunConfig) -> Result<ImageSet> {
    let set = match cfg.data.source {
        Source::SyntheticDigits => synth_digits(cfg.data.rows, cfg.data.seed)?,
        Source::ImageIdx => idx::load_image_set(&cfg.data.images, &cfg.data.labels)?,
        other => return Err(CliError::Config(format!("data.source: {other:?} does not provide images"))),
    };
    let set = if cfg.data.limit > 0 && cfg.data.limit < set.len() {
        set.select(&(0..cfg.data.limit).collect::<Vec<_>>())
    } else {
        set
    };
    log::info!("event=images_loaded rows={} dims={:?}", set.len(), set.dims());
    Ok(set)
}

fn read(t: &TableConfig) -> Result<Dataset> {
    let opts = tabular::TableOptions {
        id_column: (!t.id_column.is_empty()).then(|| t.id_column.clone()),
        categorical: t.categorical.clone(),
    };
    tabular::read_table(&t.path, &t.name, &t.label_source(), &opts)
}

/// Both raw tables and the shared column names.
pub fn load_tables(cfg: &RunConfig) -> Result<(Dataset, Dataset, Vec<String>)> {
    let (a, b, default_common) = match cfg.data.source {
        Source::SyntheticPair => {
            let p = make_synthetic_pair(&cfg.synth())?;
            (p.a, p.b, p.common)
        }
        Source::TabularCsv => {
            let (a, b) = (read(&cfg.data.a)?, read(&cfg.data.b)?);
            let shared = a.columns().iter().filter(|c| b.columns().contains(c)).cloned().collect();
            (a, b, shared)
        }
        other => return Err(CliError::Config(format!("data.source: {other:?} does not provide tables"))),
    };
    let common = if cfg.data.common.is_empty() { default_common } else { cfg.data.common.clone() };
    if common.is_empty() {
        return Err(CliError::Config("data.common: the two tables share no columns".into()));
    }
    Ok((a, b, common))
}

pub fn load_pair(cfg: &RunConfig) -> Result<AlignedPair> {
    let (a, b, common) = load_tables(cfg)?;
    let pair = fit_union_schema(&a, &b, &common)?;
    log::info!(
        "event=tables_aligned a={} rows_a={} width_a={} b={} rows_b={} width_b={} common={}",
        pair.a.name,
        pair.a.len(),
        pair.schema_a().encoded_width(),
        pair.b.name,
        pair.b.len(),
        pair.schema_b().encoded_width(),
        pair.common_in_a.len()
    );
    Ok(pair)
}

pub fn load(cfg: &RunConfig) -> Result<Workload> {
    if cfg.data.source.is_image() {
        load_images(cfg).map(Workload::Images)
    } else {
        load_pair(cfg).map(Workload::Tabular)
    }
}
