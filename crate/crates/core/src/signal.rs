//! Complex baseband sample buffers.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A finite sequence of complex baseband samples taken every `sample_period` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    samples: Vec<Complex64>,
    sample_period: f64,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>, sample_period: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Argument(
                "signal must contain at least one sample".into(),
            ));
        }
        if !(sample_period.is_finite() && sample_period > 0.0) {
            return Err(Error::Argument(format!(
                "sample period must be positive, got {sample_period}"
            )));
        }
        if samples
            .iter()
            .any(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::Argument("signal contains non-finite samples".into()));
        }
        Ok(Self {
            samples,
            sample_period,
        })
    }

    /// Builds a signal without validating the samples. Callers guarantee finiteness.
    pub(crate) fn from_parts(samples: Vec<Complex64>, sample_period: f64) -> Self {
        debug_assert!(!samples.is_empty());
        Self {
            samples,
            sample_period,
        }
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.sample_period
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean of `|x|²` over all samples.
    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self::from_parts(
            self.samples.iter().map(|z| z * gain).collect(),
            self.sample_period,
        )
    }

    /// Sub-range of samples as a new signal.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.samples.len() {
            return Err(Error::Framing {
                expected: start + len.max(1),
                actual: self.samples.len(),
            });
        }
        Ok(Self::from_parts(
            self.samples[start..start + len].to_vec(),
            self.sample_period,
        ))
    }
}

pub(crate) fn mean_power(samples: &[Complex64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / samples.len() as f64
}
