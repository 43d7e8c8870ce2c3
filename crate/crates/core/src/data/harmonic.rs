use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Harmonic features of a query location.
///
/// Each component `y_d` becomes `[y_d, sin(2 pi y_d), cos(2 pi y_d), ..,
/// sin(2^H pi y_d), cos(2^H pi y_d)]`; the per-component blocks are
/// concatenated in order, so the first slot of each block is the identity.
pub fn harmonic_expand(y: &[f64], order: usize) -> Result<Vec<f64>> {
    if order < 1 {
        return Err(Error::InvalidConfig("harmonic order must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(y.len() * (2 * order + 1));
    for &v in y {
        out.push(v);
        let mut freq = PI;
        for _ in 0..order {
            freq *= 2.0;
            let (s, c) = (freq * v).sin_cos();
            out.push(s);
            out.push(c);
        }
    }
    Ok(out)
}
