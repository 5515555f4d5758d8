use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-coefficient mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn fit<'a>(train: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<Self> {
        let mut dims = None;
        let mut n = 0usize;
        let mut sum = Vec::new();
        let mut sq = Vec::new();
        let mut mats = Vec::new();
        for m in train {
            let d = *dims.get_or_insert(m.dims);
            if m.dims != d {
                return Err(Error::Shape {
                    op: "fit_normalizer",
                    lhs: vec![d],
                    rhs: vec![m.dims],
                });
            }
            if sum.is_empty() {
                sum = vec![0.0; d];
            }
            for t in 0..m.frames {
                for (s, &v) in sum.iter_mut().zip(m.row(t)) {
                    *s += v as f64;
                }
            }
            n += m.frames;
            mats.push(m);
        }
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "normalizer needs at least 2 training frames, got {n}"
            )));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        // second pass about the mean for accuracy
        sq.resize(mean.len(), 0.0);
        for m in mats {
            for t in 0..m.frames {
                for ((s, &v), mu) in sq.iter_mut().zip(m.row(t)).zip(&mean) {
                    let d = v as f64 - mu;
                    *s += d * d;
                }
            }
        }
        let std = sq.iter().map(|s| (s / n as f64).sqrt().max(STD_FLOOR)).collect();
        Ok(NormStats { mean, std })
    }

    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        if m.dims != self.mean.len() {
            return Err(Error::Shape {
                op: "normalize",
                lhs: vec![self.mean.len()],
                rhs: vec![m.dims],
            });
        }
        let data = m
            .data
            .chunks(m.dims)
            .flat_map(|row| {
                row.iter()
                    .zip(self.mean.iter().zip(&self.std))
                    .map(|(&v, (mu, sd))| ((v as f64 - mu) / sd) as f32)
            })
            .collect();
        FeatureMatrix::new(m.frames, m.dims, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[[f32; 2]]) -> FeatureMatrix {
        FeatureMatrix::new(rows.len(), 2, rows.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn constant_column_normalizes_to_zero() {
        let m = mat(&[[3.0, 1.0], [3.0, 2.0], [3.0, 6.0]]);
        let s = NormStats::fit([&m]).unwrap();
        assert_eq!(s.std[0], STD_FLOOR);
        let z = s.apply(&m).unwrap();
        assert!((0..3).all(|t| z.get(t, 0) == 0.0));
    }

    #[test]
    fn shifted_copy_moves_by_c_over_std() {
        let m = mat(&[[1.0, 1.0], [2.0, 5.0], [6.0, 3.0]]);
        let s = NormStats::fit([&m]).unwrap();
        let c = 2.5f32;
        let shifted = FeatureMatrix::new(3, 2, m.data.iter().map(|v| v + c).collect()).unwrap();
        let z = s.apply(&shifted).unwrap();
        for d in 0..2 {
            let mean: f64 = (0..3).map(|t| z.get(t, d) as f64).sum::<f64>() / 3.0;
            assert!((mean - c as f64 / s.std[d]).abs() < 1e-5);
        }
    }

    #[test]
    fn needs_two_frames() {
        let m = mat(&[[1.0, 2.0]]);
        assert!(NormStats::fit([&m]).is_err());
    }
}
