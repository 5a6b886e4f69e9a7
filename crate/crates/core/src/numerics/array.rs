use crate::error::{Error, Result};

/// Dense row-major array of `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct DArray {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl DArray {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != values.len() {
            return Err(Error::Shape(format!(
                "shape {:?} holds {} values, got {}",
                shape,
                count,
                values.len()
            )));
        }
        Ok(DArray { shape, values })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let count = shape.iter().product();
        DArray {
            shape: shape.to_vec(),
            values: vec![0.0; count],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let count = shape.iter().product();
        DArray {
            shape: shape.to_vec(),
            values: vec![value; count],
        }
    }

    pub fn scalar(value: f64) -> Self {
        DArray {
            shape: vec![1],
            values: vec![value],
        }
    }

    /// Builds a `[rows, cols]` matrix from row slices.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let values = rows.iter().flatten().copied().collect();
        DArray::new(vec![rows.len(), cols], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Leading dimension; 1 for rank-0/1 arrays treated as a single row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    /// Trailing dimension.
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != self.values.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn get2(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.values[row * c..(row + 1) * c]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &DArray) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
