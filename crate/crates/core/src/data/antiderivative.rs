use crate::error::{Error, Result};

/// `s(x) = int_0^x u`, by the cumulative trapezoid rule on the sensor grid.
pub fn antiderivative_solve(u: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if u.len() != x.len() {
        return Err(Error::Shape(format!("{} values on a {}-point grid", u.len(), x.len())));
    }
    if x.len() < 2 {
        return Err(Error::InvalidGrid(format!("need at least 2 grid points, got {}", x.len())));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
    }
    let mut s = Vec::with_capacity(u.len());
    let mut acc = 0.0;
    s.push(0.0);
    for i in 1..u.len() {
        acc += 0.5 * (x[i] - x[i - 1]) * (u[i] + u[i - 1]);
        s.push(acc);
    }
    Ok(s)
}

/// `m` equispaced points on `[0, 1]`.
pub fn unit_grid(m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![0.0];
    }
    (0..m).map(|i| i as f64 / (m - 1) as f64).collect()
}
