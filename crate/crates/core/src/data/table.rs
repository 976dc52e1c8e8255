//! CSV datasets: header `label,f0,f1,...`, one sample per row.

use std::collections::BTreeSet;
use std::path::Path;

use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .clone();
    if headers.get(0) != Some("label") || headers.len() < 2 {
        return Err(Error::Format(format!(
            "{}: header must be `label,f0,f1,...`",
            path.display()
        )));
    }

    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if record.len() != headers.len() {
            return Err(Error::Format(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                line + 2,
                record.len(),
                headers.len()
            )));
        }
        let values = record
            .iter()
            .skip(1)
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!(
                        "{}: row {}: `{cell}` is not a number",
                        path.display(),
                        line + 2
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((record[0].to_string(), values));
    }
    if rows.is_empty() {
        return Err(Error::Dataset(format!("{}: no data rows", path.display())));
    }

    let names: Vec<String> = rows
        .iter()
        .map(|(l, _)| l.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let samples = rows
        .into_iter()
        .map(|(label, values)| Sample {
            label: names.binary_search(&label).expect("collected above"),
            x: Tensor::vector(values),
        })
        .collect();
    Dataset::new(samples, names, format!("csv:{}", path.display()))
}

/// Writes samples flattened, 17 significant digits per value.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let width = dataset.sample_shape().map_or(0, |s| s.iter().product());
    let mut out = String::from("label");
    for i in 0..width {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for s in dataset.samples() {
        let name = &dataset.class_names()[s.label];
        if name.contains([',', '"', '\n']) {
            return Err(Error::Format(format!("class name `{name}` cannot be written unquoted")));
        }
        out.push_str(name);
        for v in s.x.data() {
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows_two_classes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "label,f0,f1\ncat,1,2\nant,3,4\ncat,5,6\n").unwrap();
        let ds = load_csv(&p).unwrap();
        assert_eq!(ds.class_names(), &["ant".to_string(), "cat".to_string()]);
        assert_eq!(ds.labels(), vec![1, 0, 1]);
        assert_eq!(ds.samples()[1].x.data(), &[3.0, 4.0]);
    }

    #[test]
    fn empty_body() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "label,f0\n").unwrap();
        assert!(matches!(load_csv(&p), Err(Error::Dataset(_))));
    }

    #[test]
    fn ragged_and_non_numeric() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "label,f0,f1\na,1,2\nb,3\n").unwrap();
        assert!(matches!(load_csv(&p), Err(Error::Format(_))));
        std::fs::write(&p, "label,f0,f1\na,1,x\n").unwrap();
        assert!(matches!(load_csv(&p), Err(Error::Parse(_))));
    }

    #[test]
    fn round_trip_full_precision() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let vals = [
            0.1,
            1.0 / 3.0,
            -2.718281828459045e-300,
            6.02214076e23,
            f64::MIN_POSITIVE,
        ];
        let samples = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| Sample {
                x: Tensor::vector(vec![v, -v]),
                label: i % 2,
            })
            .collect();
        let ds = Dataset::new(samples, vec!["a".into(), "b".into()], "mem").unwrap();
        write_csv(&ds, &p).unwrap();
        let back = load_csv(&p).unwrap();
        for (a, b) in ds.samples().iter().zip(back.samples()) {
            assert_eq!(a.x.data(), b.x.data());
            assert_eq!(a.label, b.label);
        }
    }
}
