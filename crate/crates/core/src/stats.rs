//! Small robust statistics helpers.

use crate::error::{Error, Result};

/// Mean after discarding `fraction` of the samples from each tail.
///
/// With `fraction = 0.1` the lowest and highest 10% are dropped.
pub fn trimmed_mean(values: &[f64], fraction: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Degenerate("trimmed mean of an empty set".into()));
    }
    if !(0.0..0.5).contains(&fraction) {
        return Err(Error::invalid(format!("trim fraction {fraction} outside [0, 0.5)")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = (fraction * v.len() as f64).floor() as usize;
    let kept = &v[k..v.len() - k];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    Some((values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt())
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

pub fn rms(a: &[f64]) -> f64 {
    (a.iter().map(|x| x * x).sum::<f64>() / a.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trimmed_mean_drops_tails() {
        let mut v: Vec<f64> = (0..95).map(|_| 2.0).collect();
        v.extend((0..5).map(|_| 20.0));
        let m = trimmed_mean(&v, 0.1).unwrap();
        assert!((m - 2.0).abs() / 2.0 < 0.01);
        assert_eq!(trimmed_mean(&[3.0; 7], 0.1).unwrap(), 3.0);
        assert!(trimmed_mean(&[], 0.1).is_err());
    }

    #[test]
    fn std_dev_of_constant_is_zero() {
        assert_eq!(std_dev(&[4.0; 10]).unwrap(), 0.0);
    }
}
