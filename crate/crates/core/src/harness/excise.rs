//! Removing a suspect window from a trace and bridging it linearly.

use std::ops::Range;

use crate::error::{invalid, Result};
use crate::internet::{FeatureDecomposition, FeatureId, FeatureTable};
use crate::Error;

/// Replace `series[window]` with the straight line joining
/// `series[window.start - 1]` and `series[window.end]`.
pub fn excise_and_interpolate(series: &[f64], window: Range<usize>) -> Result<Vec<f64>> {
    if window.is_empty() {
        return Err(invalid("excision window is empty"));
    }
    if window.start == 0 || window.end >= series.len() {
        return Err(invalid(format!(
            "excision window {}..{} must lie strictly inside a series of length {}",
            window.start,
            window.end,
            series.len()
        )));
    }
    let left = window.start - 1;
    let right = window.end;
    let (a, b) = (series[left], series[right]);
    let span = (right - left) as f64;
    let mut out = series.to_vec();
    for v in window {
        let t = (v - left) as f64 / span;
        out[v] = a + t * (b - a);
    }
    Ok(out)
}

/// Excise `window` from one feature of a decomposition. The observed trace
/// and its systematic noise are bridged; the signal is left alone and the
/// random residual absorbs the rest so that f = sig + ns + nr still holds.
pub fn excise_feature_window(
    decomp: &FeatureDecomposition,
    id: FeatureId,
    window: Range<usize>,
) -> Result<FeatureDecomposition> {
    let k = decomp.features.position(id).ok_or(Error::MissingFeature(id))?;
    let f = excise_and_interpolate(&decomp.f()[k], window.clone())?;
    let ns = excise_and_interpolate(&decomp.ns[k], window)?;
    let nr = f
        .iter()
        .zip(&decomp.sig[k])
        .zip(&ns)
        .map(|((f, s), n)| f - s - n)
        .collect();

    let mut columns = decomp.f().to_vec();
    columns[k] = f;
    let mut out = decomp.clone();
    out.features = FeatureTable::new(decomp.ids().to_vec(), columns)?;
    out.ns[k] = ns;
    out.nr[k] = nr;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_series_unchanged() {
        let x = vec![2.5; 8];
        assert_eq!(excise_and_interpolate(&x, 2..6).unwrap(), x);
    }

    #[test]
    fn bridges_two_points() {
        let x = [0.0, 100.0, -40.0, 3.0];
        assert_eq!(excise_and_interpolate(&x, 1..3).unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn outside_window_untouched() {
        let x: Vec<f64> = (0..10).map(|v| (v * v) as f64).collect();
        let y = excise_and_interpolate(&x, 4..7).unwrap();
        assert_eq!(&y[..4], &x[..4]);
        assert_eq!(&y[7..], &x[7..]);
    }

    #[test]
    fn edges_rejected() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!(excise_and_interpolate(&x, 0..2).is_err());
        assert!(excise_and_interpolate(&x, 2..4).is_err());
        assert!(excise_and_interpolate(&x, 2..2).is_err());
    }
}
