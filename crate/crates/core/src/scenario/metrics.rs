use serde::Serialize;

use crate::error::{LhpError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// Maximum absolute deviation, K.
    pub mad: f64,
    /// Root mean square error, K.
    pub rmse: f64,
    /// Which signal pair was compared.
    pub reference: String,
}

/// Compares two sampled signals given as (t, value) pairs on the same grid.
pub fn compute_metrics(a: &[(f64, f64)], b: &[(f64, f64)], reference: &str) -> Result<Metrics> {
    if a.len() != b.len() {
        return Err(LhpError::Alignment(format!("{} samples vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(LhpError::Alignment("signals are empty".into()));
    }
    if let Some(((ta, _), (tb, _))) = a.iter().zip(b).find(|((ta, _), (tb, _))| ta != tb) {
        return Err(LhpError::Alignment(format!("sample times differ: {ta} s vs {tb} s")));
    }
    let (mad, sq) = a
        .iter()
        .zip(b)
        .map(|((_, x), (_, y))| (x - y).abs())
        .fold((0.0f64, 0.0), |(m, s), d| (m.max(d), s + d * d));
    Ok(Metrics {
        mad,
        rmse: (sq / a.len() as f64).sqrt(),
        reference: reference.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signal(v: &[f64]) -> Vec<(f64, f64)> {
        v.iter().enumerate().map(|(i, x)| (i as f64, *x)).collect()
    }

    #[test]
    fn identical_signals() {
        let a = signal(&[1.0, 2.0, 3.0]);
        let m = compute_metrics(&a, &a, "a").unwrap();
        assert_eq!((m.mad, m.rmse), (0.0, 0.0));
    }

    #[test]
    fn constant_offset() {
        let a = signal(&[1.0, 2.0, 3.0, 4.0]);
        let b = signal(&[1.25, 2.25, 3.25, 4.25]);
        let m = compute_metrics(&a, &b, "a").unwrap();
        assert_eq!(m.mad, 0.25);
        assert_eq!(m.rmse, 0.25);
    }

    #[test]
    fn single_spike() {
        let mut v = [0.0; 10];
        v[4] = 1.0;
        let m = compute_metrics(&signal(&v), &signal(&[0.0; 10]), "spike").unwrap();
        assert_eq!(m.mad, 1.0);
        assert!((m.rmse - 0.1f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn grid_mismatch() {
        let a = signal(&[0.0, 1.0]);
        let mut b = a.clone();
        b[1].0 = 1.5;
        assert!(matches!(compute_metrics(&a, &b, "x"), Err(LhpError::Alignment(_))));
        assert!(matches!(compute_metrics(&a, &a[..1], "x"), Err(LhpError::Alignment(_))));
    }
}
