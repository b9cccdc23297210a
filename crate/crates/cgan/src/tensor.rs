use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CganError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("dataset has {got} pairs, at least {min} required")]
    DatasetTooSmall { min: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
}

impl CganError {
    pub fn kind(&self) -> &'static str {
        match self {
            CganError::ShapeMismatch(_) => "ShapeMismatch",
            CganError::NonFinite(_) => "NonFinite",
            CganError::DatasetTooSmall { .. } => "DatasetTooSmall",
            CganError::Checkpoint(_) => "CheckpointInvalid",
            CganError::Config(_) => "ConfigInvalid",
        }
    }
}

/// Dense `(batch, channels, height, width)` tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Tensor4 {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<f64>) -> Result<Self, CganError> {
        let want: usize = dims.iter().product();
        if data.len() != want {
            return Err(CganError::ShapeMismatch(format!(
                "{} values for dims {dims:?} ({want} expected)",
                data.len()
            )));
        }
        Ok(Tensor4 { dims, data })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn sample_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    pub fn sample(&self, b: usize) -> &[f64] {
        let len = self.sample_len();
        &self.data[b * len..(b + 1) * len]
    }

    /// Stacks equally shaped `(c, h, w)` samples into a batch.
    pub fn from_samples(chw: [usize; 3], samples: &[Vec<f64>]) -> Result<Self, CganError> {
        let len = chw.iter().product::<usize>();
        let mut data = Vec::with_capacity(len * samples.len());
        for s in samples {
            if s.len() != len {
                return Err(CganError::ShapeMismatch(format!("sample of {} values, expected {len}", s.len())));
            }
            data.extend_from_slice(s);
        }
        Ok(Tensor4 {
            dims: [samples.len(), chw[0], chw[1], chw[2]],
            data,
        })
    }

    pub fn check_finite(&self, what: &str) -> Result<(), CganError> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(CganError::NonFinite(what.to_string()))
        }
    }
}
