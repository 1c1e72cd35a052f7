//! Experiment drivers: convergence of the boundary maps, conduction velocity
//! measurement and parameter sweeps.

pub mod config;
pub mod convergence;
pub mod cv;
pub mod sweep;

/// `(Σ w_j e_j²)^{1/2}`.
pub fn l2_norm(e: &[f64], w: &[f64]) -> f64 {
    e.iter().zip(w).map(|(x, w)| w * x * x).sum::<f64>().sqrt()
}

/// L² norm modulo constants: the weighted mean is removed first.
pub fn quotient_norm(e: &[f64], w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    let mean = e.iter().zip(w).map(|(x, w)| w * x).sum::<f64>() / total;
    let centered: Vec<f64> = e.iter().map(|x| x - mean).collect();
    l2_norm(&centered, w)
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotient_norm_ignores_constants() {
        let e = [0.3, -1.0, 2.0, 0.5];
        let w = [0.1, 0.2, 0.3, 0.4];
        let shifted: Vec<f64> = e.iter().map(|x| x + 7.0).collect();
        assert!((quotient_norm(&e, &w) - quotient_norm(&shifted, &w)).abs() < 1e-14);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.5)).collect();
        assert!((fit_loglog_slope(&x, &y) + 1.5).abs() < 1e-12);
    }
}
