//! Median absolute deviation and one-sided X84 rejection of high-intensity
//! points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 5.2;

/// Median of a non-empty list; the mean of the two central order statistics
/// for even lengths.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("median of an empty list"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("median of a list containing NaN"));
    }
    let mut buf = values.to_vec();
    Ok(median_in_place(&mut buf))
}

fn median_in_place(buf: &mut [f64]) -> f64 {
    let n = buf.len();
    let mid = n / 2;
    let (lower, m, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
    let m = *m;
    if n % 2 == 1 {
        m
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (below + m) / 2.0
    }
}

/// `med_i |v_i - med_j v_j|`.
pub fn mad(values: &[f64]) -> Result<f64> {
    let med = median(values)?;
    let mut dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    Ok(median_in_place(&mut dev))
}

/// Form of the X84 rejection test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum X84Rule {
    /// Reject `I > med + alpha * MAD`.
    #[default]
    MedianCentered,
    /// Reject `I > alpha * MAD`.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierReport {
    pub kept_indices: Vec<usize>,
    pub removed_indices: Vec<usize>,
    pub median_intensity: f64,
    pub mad: f64,
    pub threshold: f64,
    /// MAD was zero; see [`x84_filter`] for the fallback.
    pub degenerate: bool,
}

/// Splits point indices into kept and removed sets by their response
/// intensity.
///
/// When MAD is zero the threshold collapses onto the median: values strictly
/// above it are removed and everything else kept, and the report is flagged
/// as degenerate. A constant list therefore keeps every point.
pub fn x84_filter(intensities: &[f64], alpha: f64, rule: X84Rule) -> Result<OutlierReport> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    let med = median(intensities)?;
    let spread = mad(intensities)?;
    let degenerate = spread == 0.0;
    let threshold = if degenerate {
        med
    } else {
        match rule {
            X84Rule::MedianCentered => med + alpha * spread,
            X84Rule::Literal => alpha * spread,
        }
    };
    let (removed_indices, kept_indices): (Vec<usize>, Vec<usize>) =
        (0..intensities.len()).partition(|&i| intensities[i] > threshold);
    Ok(OutlierReport {
        kept_indices,
        removed_indices,
        median_intensity: med,
        mad: spread,
        threshold,
        degenerate,
    })
}

/// `(v - med) / MAD` for every value. Falls back to the mean absolute
/// deviation, then to 1, when the spread is zero.
pub fn standardize(values: &[f64]) -> Result<Vec<f64>> {
    let (center, scale) = robust_location_scale(values)?;
    Ok(values.iter().map(|v| (v - center) / scale).collect())
}

/// Median and a non-zero robust scale (MAD, else mean absolute deviation,
/// else 1).
pub fn robust_location_scale(values: &[f64]) -> Result<(f64, f64)> {
    let center = median(values)?;
    let mut scale = mad(values)?;
    if scale == 0.0 {
        scale = values.iter().map(|v| (v - center).abs()).sum::<f64>() / values.len() as f64;
    }
    if scale == 0.0 || !scale.is_finite() {
        scale = 1.0;
    }
    Ok((center, scale))
}

/// Linear-interpolated quantile `q` in `[0, 1]` of a non-empty list.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("quantile of an empty list"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mad_examples() {
        assert_eq!(mad(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), 1.0);
        assert_eq!(mad(&[4.2, 4.2, 4.2]).unwrap(), 0.0);
        assert_eq!(mad(&[1.0, 1.0, 1.0, 1.0, 100.0]).unwrap(), 0.0);
        assert!(mad(&[]).is_err());
    }

    #[test]
    fn even_median_averages_central_pair() {
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
        assert_eq!(median(&[7.0]).unwrap(), 7.0);
    }

    #[test]
    fn constant_intensities_keep_everything() {
        let r = x84_filter(&[0.3; 6], DEFAULT_ALPHA, X84Rule::MedianCentered).unwrap();
        assert!(r.degenerate);
        assert!(r.removed_indices.is_empty());
        assert_eq!(r.kept_indices.len(), 6);
    }

    #[test]
    fn degenerate_mad_removes_values_above_median() {
        let v = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 100.0];
        for rule in [X84Rule::MedianCentered, X84Rule::Literal] {
            let r = x84_filter(&v, DEFAULT_ALPHA, rule).unwrap();
            assert!(r.degenerate);
            assert_eq!(r.removed_indices, vec![7]);
        }
    }

    #[test]
    fn threshold_follows_rule() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 50.0];
        let r = x84_filter(&v, 2.0, X84Rule::MedianCentered).unwrap();
        assert_eq!(r.median_intensity, 3.5);
        assert_eq!(r.mad, 1.5);
        assert_eq!(r.threshold, 3.5 + 2.0 * 1.5);
        assert_eq!(r.removed_indices, vec![5]);
        let lit = x84_filter(&v, 2.0, X84Rule::Literal).unwrap();
        assert_eq!(lit.threshold, 3.0);
        assert_eq!(lit.removed_indices, vec![3, 4, 5]);
        assert!(x84_filter(&v, 0.0, X84Rule::Literal).is_err());
    }

    #[test]
    fn standardize_guards_zero_spread() {
        let s = standardize(&[2.0, 2.0, 2.0, 5.0]).unwrap();
        assert!(s.iter().all(|v| v.is_finite()));
        assert_eq!(standardize(&[1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
    }
}
