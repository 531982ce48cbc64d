//! Dense row-major f64 tensors.
//!
//! Shape convention is (batch, channels, spatial...) with 2 or 3 spatial
//! axes. All network activations and gradients are carried in this type.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        let len = shape.iter().product();
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        })
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_shape(shape)?;
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::BadShape(shape.to_vec()));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn filled(shape: &[usize], value: f64) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        t.data.iter_mut().for_each(|v| *v = value);
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    /// Spatial extents, i.e. the shape without batch and channel axes.
    pub fn spatial(&self) -> &[usize] {
        &self.shape[2..]
    }

    /// Number of spatial axes (2 or 3 for network tensors).
    pub fn spatial_dims(&self) -> usize {
        self.shape.len().saturating_sub(2)
    }

    /// Cells per channel slab.
    pub fn spatial_len(&self) -> usize {
        self.spatial().iter().product()
    }

    /// Contiguous slab for one (batch, channel) pair.
    pub fn slab(&self, b: usize, c: usize) -> &[f64] {
        let n = self.spatial_len();
        let start = (b * self.channels() + c) * n;
        &self.data[start..start + n]
    }

    pub fn slab_mut(&mut self, b: usize, c: usize) -> &mut [f64] {
        let n = self.spatial_len();
        let start = (b * self.channels() + c) * n;
        &mut self.data[start..start + n]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.iter().any(|&e| e == 0) {
        return Err(Error::BadShape(shape.to_vec()));
    }
    Ok(())
}
