//! CSV reports.
//!
//! Scores: `sample_id,score,predicted_class,true_class,is_novel` with an
//! empty `true_class` for novel samples. ROC: `threshold,fpr,tpr` rows and a
//! closing `auc,<value>` line.

use std::path::Path;

use super::roc::RocResult;
use super::{ScoreRecord, Truth};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const SCORE_HEADER: &str = "sample_id,score,predicted_class,true_class,is_novel";
pub const ROC_HEADER: &str = "threshold,fpr,tpr";

pub fn write_score_csv(records: &[ScoreRecord], path: &Path) -> Result<()> {
    let mut out = String::with_capacity(48 * (records.len() + 1));
    out.push_str(SCORE_HEADER);
    out.push('\n');
    for r in records {
        let (truth, novel) = match r.truth {
            Truth::Known(y) => (y.to_string(), 0),
            Truth::Novel => (String::new(), 1),
        };
        out.push_str(&format!(
            "{},{:?},{},{},{}\n",
            r.sample_id, r.score, r.predicted_class, truth, novel
        ));
    }
    write_atomic(path, out.as_bytes())
}

fn parse<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad {what} `{s}`")))
}

pub fn read_score_csv(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(SCORE_HEADER) {
        return Err(Error::Format(format!("{}: missing score header", path.display())));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let n = i + 2;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Format(format!("line {n}: expected 5 fields")));
            }
            let truth = match f[4] {
                "1" => Truth::Novel,
                "0" => Truth::Known(parse(f[3], "true_class", n)?),
                other => return Err(Error::Parse(format!("line {n}: bad is_novel `{other}`"))),
            };
            Ok(ScoreRecord {
                sample_id: parse(f[0], "sample_id", n)?,
                score: parse(f[1], "score", n)?,
                predicted_class: parse(f[2], "predicted_class", n)?,
                truth,
            })
        })
        .collect()
}

pub fn write_roc_csv(roc: &RocResult, path: &Path) -> Result<()> {
    let mut out = String::from(ROC_HEADER);
    out.push('\n');
    for &(t, fpr, tpr) in &roc.points {
        out.push_str(&format!("{t:?},{fpr:?},{tpr:?}\n"));
    }
    out.push_str(&format!("auc,{:?}\n", roc.auc));
    write_atomic(path, out.as_bytes())
}

pub fn read_roc_csv(path: &Path) -> Result<RocResult> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(ROC_HEADER) {
        return Err(Error::Format(format!("{}: missing ROC header", path.display())));
    }
    let mut points = Vec::new();
    let mut auc = None;
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let n = i + 2;
        if let Some(v) = line.strip_prefix("auc,") {
            auc = Some(parse(v, "auc", n)?);
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::Format(format!("line {n}: expected 3 fields")));
        }
        points.push((
            parse(f[0], "threshold", n)?,
            parse(f[1], "fpr", n)?,
            parse(f[2], "tpr", n)?,
        ));
    }
    let auc = auc.ok_or_else(|| Error::Format(format!("{}: missing auc trailer", path.display())))?;
    Ok(RocResult { points, auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::roc_auc;

    #[test]
    fn score_and_roc_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![
            ScoreRecord {
                sample_id: 0,
                score: 0.1 + 0.2,
                predicted_class: 2,
                truth: Truth::Known(2),
            },
            ScoreRecord {
                sample_id: 1,
                score: -1.0 / 3.0,
                predicted_class: 0,
                truth: Truth::Novel,
            },
        ];
        let p = dir.path().join("scores.csv");
        write_score_csv(&records, &p).unwrap();
        assert_eq!(read_score_csv(&p).unwrap(), records);

        let roc = roc_auc(&[0.3, 1.2, 0.3], &[0.1, 0.3]).unwrap();
        let p = dir.path().join("roc.csv");
        write_roc_csv(&roc, &p).unwrap();
        assert_eq!(read_roc_csv(&p).unwrap(), roc);
    }
}
