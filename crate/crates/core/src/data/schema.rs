use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::{Error, Result, Tensor};

/// A raw, pre-encoding cell value.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Missing,
}

impl Cell {
    /// Empty (after trimming) is missing; anything that parses as a finite
    /// number is numeric; everything else is text.
    pub fn parse(raw: &str) -> Cell {
        let t = raw.trim();
        if t.is_empty() {
            return Cell::Missing;
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Cell::Num(v),
            _ => Cell::Text(t.to_string()),
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    fn as_text(&self) -> Option<String> {
        match self {
            Cell::Num(v) => Some(format!("{v}")),
            Cell::Text(s) => Some(s.clone()),
            Cell::Missing => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Numerical,
    Categorical,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureSpec {
    Numerical { min: f64, max: f64 },
    Categorical { categories: Vec<String> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub name: String,
    pub spec: FeatureSpec,
}

impl Feature {
    pub fn numerical(name: &str, min: f64, max: f64) -> Self {
        Feature {
            name: name.into(),
            spec: FeatureSpec::Numerical { min, max },
        }
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        Feature {
            name: name.into(),
            spec: FeatureSpec::Categorical {
                categories: categories.iter().map(|c| c.to_string()).collect(),
            },
        }
    }

    pub fn kind(&self) -> FeatureKind {
        match self.spec {
            FeatureSpec::Numerical { .. } => FeatureKind::Numerical,
            FeatureSpec::Categorical { .. } => FeatureKind::Categorical,
        }
    }

    pub fn width(&self) -> usize {
        match &self.spec {
            FeatureSpec::Numerical { .. } => 1,
            FeatureSpec::Categorical { categories } => categories.len(),
        }
    }

    /// Min-max scaling, clamped to `[0, 1]`; a zero-range feature maps to 0.
    pub fn scale(&self, x: f64) -> f64 {
        match self.spec {
            FeatureSpec::Numerical { min, max } => {
                if max > min {
                    ((x - min) / (max - min)).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            }
            FeatureSpec::Categorical { .. } => f64::NAN,
        }
    }

    /// Inverse of [`Feature::scale`] for in-range values.
    pub fn unscale(&self, v: f64) -> f64 {
        match self.spec {
            FeatureSpec::Numerical { min, max } => min + v * (max - min),
            FeatureSpec::Categorical { .. } => f64::NAN,
        }
    }

    fn encode_into(&self, cell: &Cell, out: &mut [f64]) -> Result<()> {
        let err = |message: String| Error::Encoding {
            feature: self.name.clone(),
            message,
        };
        match (&self.spec, cell) {
            (_, Cell::Missing) => Err(err("missing value; drop incomplete rows before encoding".into())),
            (FeatureSpec::Numerical { .. }, Cell::Num(v)) => {
                out[0] = self.scale(*v);
                Ok(())
            }
            (FeatureSpec::Numerical { .. }, Cell::Text(t)) => Err(err(format!("`{t}` is not numeric"))),
            (FeatureSpec::Categorical { categories }, c) => {
                let t = c.as_text().unwrap_or_default();
                let k = categories
                    .iter()
                    .position(|x| *x == t)
                    .ok_or_else(|| err(format!("category `{t}` is not in the schema; refit it")))?;
                out.iter_mut().for_each(|v| *v = 0.0);
                out[k] = 1.0;
                Ok(())
            }
        }
    }
}

/// Ordered feature descriptions; the encoded layout follows this order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureSchema {
    pub features: Vec<Feature>,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        let s = FeatureSchema { features };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for f in &self.features {
            let bad = |m: &str| Error::Encoding {
                feature: f.name.clone(),
                message: m.into(),
            };
            if !seen.insert(f.name.as_str()) {
                return Err(bad("duplicate feature name"));
            }
            match &f.spec {
                FeatureSpec::Numerical { min, max } if !(min <= max) => return Err(bad("min exceeds max")),
                FeatureSpec::Categorical { categories } if categories.is_empty() => {
                    return Err(bad("empty category list"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn encoded_width(&self) -> usize {
        self.features.iter().map(Feature::width).sum()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Encoded column range of feature `i`.
    pub fn block(&self, i: usize) -> Range<usize> {
        let start: usize = self.features[..i].iter().map(Feature::width).sum();
        start..start + self.features[i].width()
    }

    /// `age` for numerical features, `race=Black` for one-hot columns.
    pub fn encoded_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.encoded_width());
        for f in &self.features {
            match &f.spec {
                FeatureSpec::Numerical { .. } => names.push(f.name.clone()),
                FeatureSpec::Categorical { categories } => {
                    names.extend(categories.iter().map(|c| format!("{}={}", f.name, c)))
                }
            }
        }
        names
    }

    /// Raw values back from one encoded row: inverse min-max for numbers,
    /// arg-max category for one-hot blocks.
    pub fn decode_row(&self, row: &[f64]) -> Result<Vec<Cell>> {
        if row.len() != self.encoded_width() {
            return Err(Error::shape("decode_row", &[row.len()], &[self.encoded_width()]));
        }
        let mut out = Vec::with_capacity(self.features.len());
        for (i, f) in self.features.iter().enumerate() {
            let r = self.block(i);
            out.push(match &f.spec {
                FeatureSpec::Numerical { .. } => Cell::Num(f.unscale(row[r.start])),
                FeatureSpec::Categorical { categories } => {
                    let block = &row[r];
                    let mut best = 0;
                    for (k, v) in block.iter().enumerate() {
                        if *v > block[best] {
                            best = k;
                        }
                    }
                    Cell::Text(categories[best].clone())
                }
            });
        }
        Ok(out)
    }
}

/// The seven shared clinical features (sex, year and age at diagnosis,
/// race, ICD-10 site, histology, laterality); encodes to 27 columns.
pub fn table1_schema() -> FeatureSchema {
    FeatureSchema {
        features: vec![
            Feature::categorical("sex", &["Female", "Male"]),
            Feature::numerical("year_of_diagnosis", 1957.0, 2017.0),
            Feature::numerical("age_at_diagnosis", 0.0, 88.0),
            Feature::categorical(
                "race",
                &[
                    "American Indian/Alaska Native",
                    "Asian or Pacific Islander",
                    "Black",
                    "White",
                    "Unknown",
                ],
            ),
            Feature::categorical(
                "icd10",
                &["Main bronchus", "Upper lobe", "Middle lobe", "Lower lobe", "Overlapping lesion", "Lung (NOS)"],
            ),
            Feature::categorical(
                "histology",
                &[
                    "Adenocarcinoma",
                    "Bronchiolo-alveolar carcinoma, non-mucinous",
                    "Invasive mucinous adenocarcinoma",
                    "Adenocarcinoma with mixed subtypes",
                    "Papillary adenocarcinoma (NOS)",
                    "Clear cell adenocarcinoma (NOS)",
                    "Mucinous adenocarcinoma",
                    "Signet ring cell carcinoma",
                    "Acinar cell carcinoma",
                ],
            ),
            Feature::categorical("laterality", &["Left", "Right", "Other"]),
        ],
    }
}

/// Survival target: 1 iff the patient survived 24 months or longer.
pub fn survival_label(months: f64) -> usize {
    usize::from(months >= 24.0)
}

/// Where a table's class labels come from.
#[derive(Clone, Debug, PartialEq)]
pub enum LabelSource {
    /// A column of non-negative integer class ids.
    Column(String),
    /// A survival-months column, thresholded with [`survival_label`].
    SurvivalMonths(String),
}

impl LabelSource {
    pub fn column(&self) -> &str {
        match self {
            LabelSource::Column(c) | LabelSource::SurvivalMonths(c) => c,
        }
    }
}

/// Named feature columns plus labels, optionally with a fitted schema and
/// its encoded matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    columns: Vec<String>,
    kinds: Vec<FeatureKind>,
    rows: Vec<Vec<Cell>>,
    labels: Vec<usize>,
    row_ids: Option<Vec<u64>>,
    schema: Option<FeatureSchema>,
    encoded: Option<Tensor>,
}

fn infer_kind(rows: &[Vec<Cell>], col: usize) -> FeatureKind {
    if rows.iter().any(|r| matches!(r[col], Cell::Text(_))) {
        FeatureKind::Categorical
    } else {
        FeatureKind::Numerical
    }
}

impl Dataset {
    /// Builds a raw dataset. A column is numerical when every non-missing
    /// cell is a number; otherwise its numbers are reread as category text.
    pub fn new(name: &str, columns: Vec<String>, mut rows: Vec<Vec<Cell>>, labels: Vec<usize>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::shape("dataset labels", &[rows.len()], &[labels.len()]));
        }
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.as_str()) {
                return Err(Error::Encoding {
                    feature: c.clone(),
                    message: "duplicate column name".into(),
                });
            }
        }
        if let Some(i) = rows.iter().position(|r| r.len() != columns.len()) {
            return Err(Error::shape("dataset row", &[rows[i].len()], &[columns.len()]));
        }
        let kinds: Vec<FeatureKind> = (0..columns.len()).map(|c| infer_kind(&rows, c)).collect();
        for (c, k) in kinds.iter().enumerate() {
            if *k == FeatureKind::Categorical {
                for r in rows.iter_mut() {
                    if let Cell::Num(v) = r[c] {
                        r[c] = Cell::Text(format!("{v}"));
                    }
                }
            }
        }
        Ok(Dataset {
            name: name.into(),
            columns,
            kinds,
            rows,
            labels,
            row_ids: None,
            schema: None,
            encoded: None,
        })
    }

    /// Builds a dataset from a header and string records (as read from a
    /// delimited file). Line numbers in errors count the header as line 1.
    pub fn from_records(name: &str, header: &[String], records: &[Vec<String>], label: &LabelSource) -> Result<Self> {
        let label_col = header.iter().position(|h| h == label.column()).ok_or_else(|| Error::Encoding {
            feature: label.column().into(),
            message: "label column not found in header".into(),
        })?;
        let mut rows = Vec::with_capacity(records.len());
        let mut labels = Vec::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            let line = i + 2;
            if rec.len() != header.len() {
                return Err(Error::Encoding {
                    feature: String::new(),
                    message: format!("line {line}: expected {} fields, found {}", header.len(), rec.len()),
                });
            }
            let bad = |m: String| Error::Encoding {
                feature: label.column().into(),
                message: format!("line {line}: {m}"),
            };
            let y = match (label, Cell::parse(&rec[label_col])) {
                (_, Cell::Missing) => return Err(bad("missing label".into())),
                (LabelSource::SurvivalMonths(_), Cell::Num(m)) => survival_label(m),
                (LabelSource::Column(_), Cell::Num(v)) if v >= 0.0 && v == crate::math::floor(v) => v as usize,
                (_, _) => return Err(bad(format!("invalid label `{}`", rec[label_col].trim()))),
            };
            labels.push(y);
            rows.push(
                rec.iter()
                    .enumerate()
                    .filter(|(c, _)| *c != label_col)
                    .map(|(_, s)| Cell::parse(s))
                    .collect(),
            );
        }
        let columns = header
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != label_col)
            .map(|(_, h)| h.clone())
            .collect();
        Dataset::new(name, columns, rows, labels)
    }

    /// Treats a numerically-coded column as categorical.
    pub fn with_categorical(mut self, column: &str) -> Result<Self> {
        let c = self.column_index(column)?;
        self.kinds[c] = FeatureKind::Categorical;
        for r in self.rows.iter_mut() {
            if let Cell::Num(v) = r[c] {
                r[c] = Cell::Text(format!("{v}"));
            }
        }
        self.schema = None;
        self.encoded = None;
        Ok(self)
    }

    pub fn with_row_ids(mut self, ids: Vec<u64>) -> Result<Self> {
        if ids.len() != self.rows.len() {
            return Err(Error::shape("row ids", &[ids.len()], &[self.rows.len()]));
        }
        self.row_ids = Some(ids);
        Ok(self)
    }

    fn column_index(&self, name: &str) -> Result<usize> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| Error::Alignment {
            feature: name.into(),
            message: format!("not a column of `{}`", self.name),
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn kind_of(&self, name: &str) -> Option<FeatureKind> {
        self.columns.iter().position(|c| c == name).map(|i| self.kinds[i])
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row_ids(&self) -> Option<&[u64]> {
        self.row_ids.as_deref()
    }

    pub fn schema(&self) -> Option<&FeatureSchema> {
        self.schema.as_ref()
    }

    pub fn encoded(&self) -> Option<&Tensor> {
        self.encoded.as_ref()
    }

    /// Number of missing cells.
    pub fn missing_count(&self) -> usize {
        self.rows.iter().flatten().filter(|c| c.is_missing()).count()
    }

    /// Row subset in the given order; encodings and ids follow along.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            columns: self.columns.clone(),
            kinds: self.kinds.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            row_ids: self.row_ids.as_ref().map(|ids| idx.iter().map(|&i| ids[i]).collect()),
            schema: self.schema.clone(),
            encoded: self.encoded.as_ref().map(|t| t.select_rows(idx)),
        }
    }

    /// Raw values of a column (mainly for schema fitting and tests).
    pub fn column(&self, name: &str) -> Result<Vec<Cell>> {
        let c = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[c].clone()).collect())
    }

    /// Attaches an already encoded matrix (e.g. from a cache file).
    pub fn with_encoding(mut self, schema: FeatureSchema, encoded: Tensor) -> Result<Self> {
        if encoded.shape() != [self.rows.len(), schema.encoded_width()] {
            return Err(Error::shape(
                "with_encoding",
                encoded.shape(),
                &[self.rows.len(), schema.encoded_width()],
            ));
        }
        self.schema = Some(schema);
        self.encoded = Some(encoded);
        Ok(self)
    }
}

/// Keeps only rows without missing cells, in their original order.
pub fn drop_missing(ds: &Dataset) -> Dataset {
    let keep: Vec<usize> = (0..ds.len()).filter(|&i| !ds.rows[i].iter().any(Cell::is_missing)).collect();
    if keep.is_empty() && !ds.is_empty() {
        log::warn!("event=all_rows_dropped dataset={} rows={}", ds.name, ds.len());
    }
    ds.select_rows(&keep)
}

/// Encodes every row against `schema` (matched to columns by name).
pub fn encode(ds: &Dataset, schema: &FeatureSchema) -> Result<Dataset> {
    schema.validate()?;
    let cols: Vec<usize> = schema
        .features
        .iter()
        .map(|f| ds.column_index(&f.name))
        .collect::<Result<_>>()?;
    if let Some(extra) = ds.columns.iter().find(|c| schema.position(c).is_none()) {
        return Err(Error::Encoding {
            feature: extra.clone(),
            message: "column has no schema entry".into(),
        });
    }
    let width = schema.encoded_width();
    let mut data = vec![0.0; ds.len() * width];
    let blocks: Vec<Range<usize>> = (0..schema.features.len()).map(|i| schema.block(i)).collect();
    for (r, row) in ds.rows.iter().enumerate() {
        let out = &mut data[r * width..(r + 1) * width];
        for ((f, &c), b) in schema.features.iter().zip(&cols).zip(&blocks) {
            f.encode_into(&row[c], &mut out[b.clone()]).map_err(|e| match e {
                Error::Encoding { feature, message } => Error::Encoding {
                    feature,
                    message: format!("row {r}: {message}"),
                },
                other => other,
            })?;
        }
    }
    let mut out = ds.clone();
    out.encoded = Some(Tensor::new(vec![ds.len(), width], data)?);
    out.schema = Some(schema.clone());
    Ok(out)
}

/// Two encoded datasets plus the column bookkeeping that links them.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedPair {
    pub a: Dataset,
    pub b: Dataset,
    pub common: Vec<String>,
    pub common_in_a: Vec<usize>,
    pub common_in_b: Vec<usize>,
    pub unique_in_a: Vec<usize>,
    pub unique_in_b: Vec<usize>,
}

impl AlignedPair {
    pub fn schema_a(&self) -> &FeatureSchema {
        self.a.schema.as_ref().expect("aligned datasets are encoded")
    }

    pub fn schema_b(&self) -> &FeatureSchema {
        self.b.schema.as_ref().expect("aligned datasets are encoded")
    }

    /// The same pair with the two sides exchanged.
    pub fn swapped(self) -> AlignedPair {
        AlignedPair {
            a: self.b,
            b: self.a,
            common: self.common,
            common_in_a: self.common_in_b,
            common_in_b: self.common_in_a,
            unique_in_a: self.unique_in_b,
            unique_in_b: self.unique_in_a,
        }
    }

    /// Row subsets of both sides; the column bookkeeping is unchanged.
    pub fn select(&self, rows_a: &[usize], rows_b: &[usize]) -> AlignedPair {
        AlignedPair {
            a: self.a.select_rows(rows_a),
            b: self.b.select_rows(rows_b),
            ..self.clone()
        }
    }
}

fn fit_feature(name: &str, kind: FeatureKind, sources: &[&Dataset]) -> Result<Feature> {
    let mut cells = Vec::new();
    for ds in sources {
        cells.extend(ds.column(name)?.into_iter().filter(|c| !c.is_missing()));
    }
    match kind {
        FeatureKind::Numerical => {
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for c in &cells {
                if let Cell::Num(v) = c {
                    min = min.min(*v);
                    max = max.max(*v);
                }
            }
            if cells.is_empty() {
                min = 0.0;
                max = 0.0;
            }
            Ok(Feature::numerical(name, min, max))
        }
        FeatureKind::Categorical => {
            let cats: BTreeSet<String> = cells.iter().filter_map(Cell::as_text).collect();
            if cats.is_empty() {
                return Err(Error::Alignment {
                    feature: name.into(),
                    message: "no observed categories".into(),
                });
            }
            Ok(Feature {
                name: name.into(),
                spec: FeatureSpec::Categorical {
                    categories: cats.into_iter().collect(),
                },
            })
        }
    }
}

/// Fits both schemas and encodes both datasets. Common features get their
/// ranges and (sorted) category lists from the union of A and B; the other
/// features are fitted on their own dataset. Column order of each dataset
/// is kept; the common index lists follow the order of `common`.
pub fn fit_union_schema(a: &Dataset, b: &Dataset, common: &[String]) -> Result<AlignedPair> {
    let mut seen = BTreeSet::new();
    for name in common {
        if !seen.insert(name.as_str()) {
            return Err(Error::Alignment {
                feature: name.clone(),
                message: "listed twice as a common feature".into(),
            });
        }
        let (ka, kb) = (a.kind_of(name), b.kind_of(name));
        match (ka, kb) {
            (None, _) | (_, None) => {
                return Err(Error::Alignment {
                    feature: name.clone(),
                    message: format!(
                        "present only in `{}`",
                        if ka.is_some() { &a.name } else if kb.is_some() { &b.name } else { "neither dataset" }
                    ),
                })
            }
            (Some(x), Some(y)) if x != y => {
                return Err(Error::Alignment {
                    feature: name.clone(),
                    message: format!("kind conflict: {x:?} in `{}`, {y:?} in `{}`", a.name, b.name),
                })
            }
            _ => {}
        }
    }
    let fit = |ds: &Dataset| -> Result<FeatureSchema> {
        let mut features = Vec::with_capacity(ds.columns.len());
        for (name, &kind) in ds.columns.iter().zip(&ds.kinds) {
            if seen.contains(name.as_str()) {
                features.push(fit_feature(name, kind, &[a, b])?);
            } else {
                features.push(fit_feature(name, kind, &[ds])?);
            }
        }
        FeatureSchema::new(features)
    };
    let (sa, sb) = (fit(a)?, fit(b)?);
    let ea = encode(a, &sa)?;
    let eb = encode(b, &sb)?;
    let split = |s: &FeatureSchema| {
        let mut common_cols = Vec::new();
        for name in common {
            common_cols.extend(s.block(s.position(name).expect("checked above")));
        }
        let unique: Vec<usize> = (0..s.encoded_width()).filter(|c| !common_cols.contains(c)).collect();
        (common_cols, unique)
    };
    let (common_in_a, unique_in_a) = split(&sa);
    let (common_in_b, unique_in_b) = split(&sb);
    Ok(AlignedPair {
        a: ea,
        b: eb,
        common: common.to_vec(),
        common_in_a,
        common_in_b,
        unique_in_a,
        unique_in_b,
    })
}
