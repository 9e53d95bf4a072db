use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major `f64` tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_string()))
        }
    }

    pub fn expect_shape(&self, expected: &[usize], context: &str) -> Result<()> {
        if self.shape == expected {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{context}: expected {expected:?}, got {:?}",
                self.shape
            )))
        }
    }

    /// Rows `[start, start + count)` along the leading axis.
    pub fn slice_outer(&self, start: usize, count: usize) -> Result<Tensor> {
        let outer = *self.shape.first().unwrap_or(&0);
        if start + count > outer {
            return Err(Error::shape(format!(
                "rows {start}..{} out of range for leading dim {outer}",
                start + count
            )));
        }
        let stride: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = count;
        Ok(Tensor {
            shape,
            data: self.data[start * stride..(start + count) * stride].to_vec(),
        })
    }

    /// Gathers rows along the leading axis.
    pub fn gather_outer(&self, rows: &[usize]) -> Result<Tensor> {
        let outer = *self.shape.first().unwrap_or(&0);
        let stride: usize = self.shape[1..].iter().product();
        let mut data = Vec::with_capacity(rows.len() * stride);
        for &r in rows {
            if r >= outer {
                return Err(Error::shape(format!("row {r} out of range for {outer}")));
            }
            data.extend_from_slice(&self.data[r * stride..(r + 1) * stride]);
        }
        let mut shape = self.shape.clone();
        shape[0] = rows.len();
        Ok(Tensor { shape, data })
    }

    /// Concatenates 4-d `[N, C, 1, L]` tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("nothing to concatenate"))?;
        if first.rank() != 4 {
            return Err(Error::shape(format!("expected [N, C, 1, L], got {:?}", first.shape)));
        }
        let (n, h, l) = (first.dim(0), first.dim(2), first.dim(3));
        for p in parts {
            if p.rank() != 4 || p.dim(0) != n || p.dim(2) != h || p.dim(3) != l {
                return Err(Error::shape(format!(
                    "cannot concatenate {:?} with {:?}",
                    first.shape, p.shape
                )));
            }
        }
        let channels: usize = parts.iter().map(|p| p.dim(1)).sum();
        let mut data = Vec::with_capacity(n * channels * h * l);
        for s in 0..n {
            for p in parts {
                let block = p.dim(1) * h * l;
                data.extend_from_slice(&p.data[s * block..(s + 1) * block]);
            }
        }
        Tensor::new(vec![n, channels, h, l], data)
    }

    /// Splits a 4-d tensor along channels into consecutive groups.
    pub fn split_channels(&self, sizes: &[usize]) -> Result<Vec<Tensor>> {
        if self.rank() != 4 || sizes.iter().sum::<usize>() != self.dim(1) {
            return Err(Error::shape(format!(
                "cannot split {:?} into channel groups {sizes:?}",
                self.shape
            )));
        }
        let (n, c, h, l) = (self.dim(0), self.dim(1), self.dim(2), self.dim(3));
        let mut out: Vec<Vec<f64>> = sizes.iter().map(|&s| Vec::with_capacity(n * s * h * l)).collect();
        for s in 0..n {
            let mut offset = s * c * h * l;
            for (g, &size) in sizes.iter().enumerate() {
                let len = size * h * l;
                out[g].extend_from_slice(&self.data[offset..offset + len]);
                offset += len;
            }
        }
        out.into_iter()
            .zip(sizes)
            .map(|(data, &size)| Tensor::new(vec![n, size, h, l], data))
            .collect()
    }
}
