use crate::error::{Error, Result};

/// Pointwise ensemble mean and population variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveStats {
    pub mean: Vec<f64>,
    /// `1/N_s sum (pred - mean)^2`.
    pub var: Vec<f64>,
    pub members: Option<Vec<Vec<f64>>>,
}

impl PredictiveStats {
    pub fn std(&self) -> Vec<f64> {
        self.var.iter().map(|v| v.sqrt()).collect()
    }
}

/// Two-pass mean and population variance of equally long member predictions.
pub fn population_stats(preds: &[Vec<f64>]) -> Result<PredictiveStats> {
    let first = preds.first().ok_or_else(|| Error::Shape("no member predictions".into()))?;
    let len = first.len();
    if preds.iter().any(|p| p.len() != len) {
        return Err(Error::Shape("member predictions differ in length".into()));
    }
    let n = preds.len() as f64;
    let mut mean = vec![0.0; len];
    for p in preds {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; len];
    for p in preds {
        for ((s, v), m) in var.iter_mut().zip(p).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    Ok(PredictiveStats {
        mean,
        var,
        members: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point() {
        let s = population_stats(&[vec![1.0], vec![3.0]]).unwrap();
        assert_eq!((s.mean[0], s.var[0]), (2.0, 1.0));
    }

    #[test]
    fn identical_members() {
        let s = population_stats(&vec![vec![0.3, -2.0]; 5]).unwrap();
        assert_eq!(s.var, vec![0.0, 0.0]);
    }

    #[test]
    fn three_point() {
        let s = population_stats(&[vec![0.0], vec![0.0], vec![3.0]]).unwrap();
        assert!((s.mean[0] - 1.0).abs() < 1e-15 && (s.var[0] - 2.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn variance_identity(vals in prop::collection::vec(-100.0f64..100.0, 1..20)) {
            let preds: Vec<Vec<f64>> = vals.iter().map(|v| vec![*v]).collect();
            let s = population_stats(&preds).unwrap();
            let n = vals.len() as f64;
            let second = vals.iter().map(|v| v * v).sum::<f64>() / n;
            prop_assert!((s.var[0] - (second - s.mean[0] * s.mean[0])).abs() < 1e-10 * second.max(1.0));
            prop_assert!(s.var[0] >= 0.0);
        }

        #[test]
        fn permutation_invariance(mut vals in prop::collection::vec(-10.0f64..10.0, 2..12), rot in 0usize..12) {
            let s = population_stats(&vals.iter().map(|v| vec![*v]).collect::<Vec<_>>()).unwrap();
            let k = rot % vals.len();
            vals.rotate_left(k);
            vals.reverse();
            let p = population_stats(&vals.iter().map(|v| vec![*v]).collect::<Vec<_>>()).unwrap();
            prop_assert!((s.mean[0] - p.mean[0]).abs() < 1e-12);
            prop_assert!((s.var[0] - p.var[0]).abs() < 1e-12);
        }
    }
}
