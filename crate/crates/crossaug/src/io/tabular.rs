//! Comma-separated tables: first row is the header, UTF-8, an empty cell is
//! missing. Rows with any missing feature are dropped on load.

use std::path::{Path, PathBuf};

use crossaug_core::augment::{AugmentedDataset, ColumnSource};
use crossaug_core::data::{drop_missing, Cell, Dataset, LabelSource};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Default)]
pub struct TableOptions {
    /// Column holding stable row ids; it is not used as a feature.
    pub id_column: Option<String>,
    /// Numerically coded columns to treat as categories.
    pub categorical: Vec<String>,
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    CliError::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

pub fn read_table(path: &Path, name: &str, label: &LabelSource, opts: &TableOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut records: Vec<Vec<String>> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        records.push(rec.iter().map(str::to_string).collect());
    }

    let mut ids = None;
    if let Some(id_col) = &opts.id_column {
        let c = header
            .iter()
            .position(|h| h == id_col)
            .ok_or_else(|| CliError::Config(format!("id_column `{id_col}` is not in {}", path.display())))?;
        header.remove(c);
        let parsed = records
            .iter_mut()
            .enumerate()
            .map(|(i, r)| {
                let raw = r.remove(c);
                raw.trim().parse::<u64>().map_err(|_| CliError::Parse {
                    path: path.to_path_buf(),
                    line: i + 2,
                    message: format!("row id `{raw}` is not an unsigned integer"),
                })
            })
            .collect::<Result<Vec<u64>>>()?;
        ids = Some(parsed);
    }

    let mut ds = Dataset::from_records(name, &header, &records, label)?;
    if let Some(ids) = ids {
        ds = ds.with_row_ids(ids)?;
    }
    for c in &opts.categorical {
        ds = ds.with_categorical(c)?;
    }
    let before = ds.len();
    let ds = drop_missing(&ds);
    if ds.len() < before {
        log::info!("event=rows_dropped dataset={name} dropped={} kept={}", before - ds.len(), ds.len());
    }
    Ok(ds)
}

fn cell_text(c: &Cell) -> String {
    match c {
        Cell::Num(v) => format!("{v}"),
        Cell::Text(s) => s.clone(),
        Cell::Missing => String::new(),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

/// Writes the raw cells plus extra trailing columns (labels, ids, ...).
pub fn write_table(path: &Path, ds: &Dataset, extra: &[(&str, Vec<String>)]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<&str> = ds.columns().iter().map(String::as_str).collect();
    header.extend(extra.iter().map(|(n, _)| *n));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, row) in ds.rows().iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(cell_text).collect();
        rec.extend(extra.iter().map(|(_, v)| v[i].clone()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `out.csv` -> `out.provenance.csv`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.provenance.csv"))
}

/// Writes the encoded augmented matrix with `label` (and `id`) columns, plus
/// a `column,source` sidecar marking every feature real or synthetic.
pub fn write_augmented(path: &Path, aug: &AugmentedDataset) -> Result<PathBuf> {
    let mut w = writer(path)?;
    let mut header: Vec<&str> = aug.columns.iter().map(|c| c.name.as_str()).collect();
    header.push("label");
    if aug.row_ids.is_some() {
        header.push("id");
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for i in 0..aug.data.rows() {
        let mut rec: Vec<String> = aug.data.row(i).iter().map(|v| format!("{v}")).collect();
        rec.push(aug.labels[i].to_string());
        if let Some(ids) = &aug.row_ids {
            rec.push(ids[i].to_string());
        }
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;

    let side = sidecar_path(path);
    let mut s = writer(&side)?;
    s.write_record(["column", "source"]).map_err(|e| csv_err(&side, e))?;
    for c in &aug.columns {
        let src = match c.source {
            ColumnSource::Real => "real",
            ColumnSource::Synthetic => "synthetic",
        };
        s.write_record([c.name.as_str(), src]).map_err(|e| csv_err(&side, e))?;
    }
    s.flush().map_err(|e| CliError::io(&side, e))?;
    Ok(side)
}

/// Reads a provenance sidecar back as `(column, is_synthetic)`.
pub fn read_sidecar(path: &Path) -> Result<Vec<(String, bool)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let synthetic = match &rec[1] {
                "real" => false,
                "synthetic" => true,
                other => {
                    return Err(CliError::Parse {
                        path: path.to_path_buf(),
                        line: i + 2,
                        message: format!("unknown source `{other}`"),
                    })
                }
            };
            Ok((rec[0].to_string(), synthetic))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn reads_labels_ids_and_drops_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(&p, "id,age,race,grade,months\n10,40,white,1,30\n11,,black,2,5\n12,70,black,2,24\n").unwrap();
        let opts = TableOptions {
            id_column: Some("id".into()),
            categorical: vec!["grade".into()],
        };
        let ds = read_table(&p, "t", &LabelSource::SurvivalMonths("months".into()), &opts).unwrap();
        assert_eq!(ds.columns(), &["age", "race", "grade"]);
        assert_eq!(ds.labels(), &[1, 1]);
        assert_eq!(ds.row_ids(), Some(&[10u64, 12][..]));
        assert_eq!(ds.rows()[1][2], Cell::Text("2".into()));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(&p, "a,label\n1,0\n2\n").unwrap();
        match read_table(&p, "t", &LabelSource::Column("label".into()), &TableOptions::default()) {
            Err(CliError::Parse { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        fs::write(&p, "a,label\n1,0\n2,x\n").unwrap();
        let err = read_table(&p, "t", &LabelSource::Column("label".into()), &TableOptions::default()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn augmented_export_has_sidecar() {
        use crossaug_core::augment::ColumnProvenance;
        use crossaug_core::Tensor;
        let dir = tempfile::tempdir().unwrap();
        let aug = AugmentedDataset {
            name: "A+B".into(),
            data: Tensor::new(vec![2, 2], vec![0.1, 0.2, 0.3, 1.0 / 3.0]).unwrap(),
            labels: vec![0, 1],
            row_ids: Some(vec![5, 6]),
            columns: vec![
                ColumnProvenance { name: "x".into(), source: ColumnSource::Real },
                ColumnProvenance { name: "B:y".into(), source: ColumnSource::Synthetic },
            ],
        };
        let p = dir.path().join("aug.csv");
        let side = write_augmented(&p, &aug).unwrap();
        assert_eq!(side, dir.path().join("aug.provenance.csv"));
        assert_eq!(read_sidecar(&side).unwrap(), vec![("x".into(), false), ("B:y".into(), true)]);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("x,B:y,label,id\n0.1,0.2,0,5\n"));
        let third: f64 = text.lines().nth(2).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(third, 1.0 / 3.0);
    }
}
