use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered bin boundaries from 0 to 1. Bins are half-open `[b_i, b_{i+1})`
/// except the last, which includes 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BinningSpec {
    boundaries: Vec<f64>,
}

impl BinningSpec {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::Config(
                "a binning needs at least two boundaries".into(),
            ));
        }
        if boundaries[0] != 0.0 || *boundaries.last().unwrap() != 1.0 {
            return Err(Error::Config(
                "bin boundaries must start at 0 and end at 1".into(),
            ));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "bin boundaries must be strictly increasing".into(),
            ));
        }
        Ok(Self { boundaries })
    }

    /// Lexical-score bins: steps of 0.2.
    pub fn lexical() -> Self {
        Self::new(vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).expect("valid literal")
    }

    /// Linker-probability bins, finer towards 1.
    pub fn probability() -> Self {
        Self::new(vec![
            0.0, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95, 0.96, 0.97, 0.98,
            0.99, 1.0,
        ])
        .expect("valid literal")
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn bins(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// Bin of `x`, clamping values outside `[0, 1]`. NaN goes to bin 0.
    pub fn bin_index(&self, x: f64) -> usize {
        let last = self.bins() - 1;
        if x.is_nan() || x < self.boundaries[1] {
            return 0;
        }
        if x >= self.boundaries[last] {
            return last;
        }
        self.boundaries.partition_point(|&b| b <= x) - 1
    }
}

impl TryFrom<Vec<f64>> for BinningSpec {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BinningSpec> for Vec<f64> {
    fn from(b: BinningSpec) -> Self {
        b.boundaries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexical_bins() {
        let b = BinningSpec::lexical();
        assert_eq!(b.bins(), 5);
        assert_eq!(b.bin_index(0.3), 1);
        assert_eq!(b.bin_index(0.0), 0);
        assert_eq!(b.bin_index(1.0), 4);
        assert_eq!(b.bin_index(0.2), 1);
        assert_eq!(b.bin_index(-0.5), 0);
        assert_eq!(b.bin_index(7.0), 4);
        assert_eq!(b.bin_index(0.8), 4);
        assert_eq!(b.bin_index(0.79), 3);
    }

    #[test]
    fn probability_bins() {
        let b = BinningSpec::probability();
        assert_eq!(b.bins(), 16);
        assert_eq!(b.bin_index(0.95), 11);
        assert_eq!(b.bin_index(0.39), 0);
        assert_eq!(b.bin_index(0.999), 15);
        assert_eq!(b.bin_index(1.0), 15);
    }

    #[test]
    fn invalid_specs() {
        assert!(BinningSpec::new(vec![0.0]).is_err());
        assert!(BinningSpec::new(vec![0.1, 1.0]).is_err());
        assert!(BinningSpec::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(serde_json::from_str::<BinningSpec>("[0.0, 2.0]").is_err());
        let b: BinningSpec = serde_json::from_str("[0.0, 0.5, 1.0]").unwrap();
        assert_eq!(b.bins(), 2);
    }
}
