//! Per-feature min-max scaling fitted on training data only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Maps each feature column into [0, 1] using the range observed at
/// fit time. A constant feature maps to 0.5 everywhere so downstream
/// sigmoids see a neutral input instead of a division by zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl Normalizer {
    /// Fits column ranges over every row of every matrix.
    pub fn fit<'a>(mats: impl IntoIterator<Item = &'a Mat>) -> Result<Self> {
        let mut mins: Vec<f64> = Vec::new();
        let mut maxs: Vec<f64> = Vec::new();
        let mut seen_rows = 0usize;
        for m in mats {
            if mins.is_empty() {
                mins = vec![f64::INFINITY; m.cols()];
                maxs = vec![f64::NEG_INFINITY; m.cols()];
            } else if m.cols() != mins.len() {
                return Err(Error::Shape(format!(
                    "normalizer fit: widths differ ({} vs {})",
                    mins.len(),
                    m.cols()
                )));
            }
            for r in 0..m.rows() {
                seen_rows += 1;
                for (c, v) in m.row(r).iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::non_finite(format!("normalizer fit, column {c}")));
                    }
                    mins[c] = mins[c].min(*v);
                    maxs[c] = maxs[c].max(*v);
                }
            }
        }
        if seen_rows == 0 {
            return Err(Error::Data("normalizer fit needs at least one row".into()));
        }
        Ok(Normalizer { mins, maxs })
    }

    pub fn width(&self) -> usize {
        self.mins.len()
    }

    fn check_width(&self, cols: usize) -> Result<()> {
        if cols != self.width() {
            return Err(Error::Shape(format!(
                "normalizer fitted on {} columns, applied to {cols}",
                self.width()
            )));
        }
        Ok(())
    }

    pub fn apply_row(&self, row: &mut [f64]) -> Result<()> {
        self.check_width(row.len())?;
        for (c, v) in row.iter_mut().enumerate() {
            let span = self.maxs[c] - self.mins[c];
            *v = if span > 0.0 { (*v - self.mins[c]) / span } else { 0.5 };
        }
        Ok(())
    }

    pub fn invert_row(&self, row: &mut [f64]) -> Result<()> {
        self.check_width(row.len())?;
        for (c, v) in row.iter_mut().enumerate() {
            let span = self.maxs[c] - self.mins[c];
            *v = if span > 0.0 { self.mins[c] + *v * span } else { self.mins[c] };
        }
        Ok(())
    }

    pub fn apply_mat(&self, m: &Mat) -> Result<Mat> {
        let mut out = m.clone();
        for r in 0..out.rows() {
            self.apply_row(out.row_mut(r))?;
        }
        Ok(out)
    }

    pub fn invert_mat(&self, m: &Mat) -> Result<Mat> {
        let mut out = m.clone();
        for r in 0..out.rows() {
            self.invert_row(out.row_mut(r))?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Normalizer, Mat) {
        let m = Mat::from_rows(&[vec![0.0, 10.0, 7.0], vec![5.0, 20.0, 7.0], vec![2.5, 12.0, 7.0]])
            .unwrap();
        (Normalizer::fit([&m]).unwrap(), m)
    }

    #[test]
    fn maps_training_range_to_unit_interval() {
        let (n, m) = fixture();
        let out = n.apply_mat(&m).unwrap();
        assert_eq!(out.get(0, 0), 0.0);
        assert_eq!(out.get(1, 0), 1.0);
        assert_eq!(out.get(2, 0), 0.5);
        assert_eq!(out.get(0, 1), 0.0);
        assert_eq!(out.get(1, 1), 1.0);
    }

    #[test]
    fn constant_feature_maps_to_half() {
        let (n, m) = fixture();
        let out = n.apply_mat(&m).unwrap();
        for r in 0..3 {
            assert_eq!(out.get(r, 2), 0.5);
        }
        // And inverts back to the constant.
        let back = n.invert_mat(&out).unwrap();
        assert_eq!(back.get(0, 2), 7.0);
    }

    #[test]
    fn invert_round_trips_in_range_values() {
        let (n, m) = fixture();
        let back = n.invert_mat(&n.apply_mat(&m).unwrap()).unwrap();
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                assert!((back.get(r, c) - m.get(r, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_range_values_extrapolate_linearly() {
        let (n, _) = fixture();
        let mut row = vec![10.0, 15.0, 7.0];
        n.apply_row(&mut row).unwrap();
        assert!((row[0] - 2.0).abs() < 1e-12);
        assert!((row[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_empty_ragged_and_non_finite() {
        assert!(Normalizer::fit(std::iter::empty::<&Mat>()).is_err());
        let a = Mat::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Mat::from_rows(&[vec![1.0]]).unwrap();
        assert!(Normalizer::fit([&a, &b]).is_err());
        let bad = Mat::from_rows(&[vec![f64::NAN, 0.0]]).unwrap();
        assert!(Normalizer::fit([&bad]).is_err());
        let (n, _) = fixture();
        assert!(n.apply_mat(&b).is_err());
    }
}
