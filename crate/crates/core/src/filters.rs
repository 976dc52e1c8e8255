//! Sign analysis of the final dense layer over pooled filter responses.
//!
//! With `f_i = W_i . GAP(g)`, a filter `j` with `W[i][j] > 0` is evidence for
//! class `i` (positive filter) and `W[i][j] < 0` evidence against it
//! (negative filter). A filter negative for every known class is globally
//! negative.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterSign {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassFilters {
    pub class: usize,
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub classes: Vec<ClassFilters>,
    pub globally_negative: Vec<usize>,
    /// Head weights, one row per class.
    pub weights: Vec<Vec<f64>>,
}

fn dims(w: &Tensor) -> Result<(usize, usize)> {
    match *w.shape() {
        [c, k] => Ok((c, k)),
        _ => Err(Error::Dimension(format!(
            "weight matrix must be [classes, filters], got {:?}",
            w.shape()
        ))),
    }
}

fn class_row(w: &Tensor, class: usize) -> Result<&[f64]> {
    let (c, _) = dims(w)?;
    if class >= c {
        return Err(Error::Index(format!("class {class} outside [0, {c})")));
    }
    Ok(w.row(class))
}

/// `(positive, negative)` filter indices for `class`; zero weights belong to
/// neither.
pub fn classify_filters(w: &Tensor, class: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let row = class_row(w, class)?;
    let positive = (0..row.len()).filter(|&j| row[j] > 0.0).collect();
    let negative = (0..row.len()).filter(|&j| row[j] < 0.0).collect();
    Ok((positive, negative))
}

/// Filters whose weight is strictly negative for every class.
pub fn globally_negative_filters(w: &Tensor) -> Result<Vec<usize>> {
    let (c, k) = dims(w)?;
    if c == 0 {
        return Err(Error::Dimension("weight matrix has no classes".into()));
    }
    Ok((0..k).filter(|&j| (0..c).all(|i| w.data()[i * k + j] < 0.0)).collect())
}

/// The `k_top` largest (`Positive`) or most negative (`Negative`) weights of
/// a class, lower index first on ties.
pub fn top_filters(w: &Tensor, class: usize, k_top: usize, sign: FilterSign) -> Result<Vec<usize>> {
    let row = class_row(w, class)?;
    if k_top == 0 || k_top > row.len() {
        return Err(Error::Config(format!("top-k {k_top} outside [1, {}]", row.len())));
    }
    let mut idx: Vec<usize> = (0..row.len()).collect();
    match sign {
        FilterSign::Positive => idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b))),
        FilterSign::Negative => idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b))),
    }
    idx.truncate(k_top);
    Ok(idx)
}

pub fn filter_report(w: &Tensor) -> Result<FilterReport> {
    let (c, _) = dims(w)?;
    let classes = (0..c)
        .map(|class| {
            let (positive, negative) = classify_filters(w, class)?;
            Ok(ClassFilters {
                class,
                positive,
                negative,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FilterReport {
        classes,
        globally_negative: globally_negative_filters(w)?,
        weights: (0..c).map(|i| w.row(i).to_vec()).collect(),
    })
}

impl FilterReport {
    /// Intersection of the per-class negative sets.
    pub fn negative_intersection(&self) -> Vec<usize> {
        let mut sets = self
            .classes
            .iter()
            .map(|c| c.negative.iter().copied().collect::<BTreeSet<_>>());
        let Some(first) = sets.next() else {
            return Vec::new();
        };
        sets.fold(first, |acc, s| acc.intersection(&s).copied().collect())
            .into_iter()
            .collect()
    }
}
