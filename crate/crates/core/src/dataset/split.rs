use serde::{Deserialize, Serialize};

use super::DatasetError;

/// Fractions of a time-sorted segment assigned to initialization, training and test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub init: f64,
    pub train: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { init: 0.1, train: 0.7, test: 0.2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSizes {
    pub init: usize,
    pub train: usize,
    pub test: usize,
}

impl SplitFractions {
    /// Floor the init and train shares; the remainder goes to test.
    pub fn sizes(&self, n: usize) -> Result<SplitSizes, DatasetError> {
        let all = [self.init, self.train, self.test];
        if all.iter().any(|f| !(0.0..=1.0).contains(f)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Split(format!("fractions {all:?} must be in [0,1] and sum to 1")));
        }
        if n < 3 {
            return Err(DatasetError::Split(format!("need at least 3 nodes, got {n}")));
        }
        // the epsilon absorbs products like 0.7 * 2000 = 1399.9999...
        let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
        let init = floor(self.init).max(1);
        let train = floor(self.train).min(n - init);
        Ok(SplitSizes { init, train, test: n - init - train })
    }
}

/// Contiguous `(init, train, test)` partition of time-sorted items.
pub fn split_segment<T: Clone>(items: &[T], fractions: SplitFractions) -> Result<(Vec<T>, Vec<T>, Vec<T>), DatasetError> {
    let s = fractions.sizes(items.len())?;
    Ok((
        items[..s.init].to_vec(),
        items[s.init..s.init + s.train].to_vec(),
        items[s.init + s.train..].to_vec(),
    ))
}
