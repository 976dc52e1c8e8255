//! Dense row-major `f64` tensor.
//!
//! Only the handful of operations the layer stack needs are provided here;
//! the arithmetic itself lives next to the layers that use it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Rank-1 tensor owning `data`.
    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Rank-2 tensor from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(vec![rows.len(), width], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Size of axis 0.
    pub fn batch_len(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Number of values per leading-axis entry.
    pub fn row_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    /// Slice of the `i`-th entry along axis 0.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.row_len();
        &mut self.data[i * w..(i + 1) * w]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stacks per-sample tensors of identical shape into a batch `[n, ...shape]`.
    pub fn stack<'a, I>(items: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Tensor>,
    {
        let mut iter = items.into_iter().peekable();
        let inner = match iter.peek() {
            Some(t) => t.shape.clone(),
            None => return Err(Error::Dimension("cannot stack zero tensors".into())),
        };
        let mut data = Vec::new();
        let mut n = 0;
        for t in iter {
            if t.shape != inner {
                return Err(Error::Dimension(format!(
                    "stack: shape {:?} differs from {:?}",
                    t.shape, inner
                )));
            }
            data.extend_from_slice(&t.data);
            n += 1;
        }
        let mut shape = vec![n];
        shape.extend(inner);
        Self::new(shape, data)
    }

    /// Concatenates two tensors along axis 0.
    pub fn concat_batch(a: &Tensor, b: &Tensor) -> Result<Self> {
        if a.shape[1..] != b.shape[1..] {
            return Err(Error::Dimension(format!("concat: {:?} vs {:?}", a.shape, b.shape)));
        }
        let mut shape = a.shape.clone();
        shape[0] += b.shape[0];
        let mut data = Vec::with_capacity(a.len() + b.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Self::new(shape, data)
    }

    /// Splits along axis 0 into `[0, at)` and `[at, n)`.
    pub fn split_batch(&self, at: usize) -> Result<(Tensor, Tensor)> {
        let n = self.batch_len();
        if at > n {
            return Err(Error::Dimension(format!("split at {at} of {n}")));
        }
        let w = self.row_len();
        let mut left = self.shape.clone();
        left[0] = at;
        let mut right = self.shape.clone();
        right[0] = n - at;
        Ok((
            Tensor::new(left, self.data[..at * w].to_vec())?,
            Tensor::new(right, self.data[at * w..].to_vec())?,
        ))
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!("add: {:?} vs {:?}", self.shape, other.shape)));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, other: &Tensor, s: f64) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!("axpy: {:?} vs {:?}", self.shape, other.shape)));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
