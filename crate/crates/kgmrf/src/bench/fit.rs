//! Least-squares fits used by the scaling checks.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares y = slope·x + intercept. R² is clamped to [0, 1];
/// a constant series fitted exactly has R² = 1.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Fit {
    assert_eq!(xs.len(), ys.len(), "fit needs paired samples");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else if ss_res <= 1e-24 { 1.0 } else { 0.0 };
    Fit { slope, intercept, r2: r2.clamp(0.0, 1.0) }
}

/// Fit of ln y against ln x.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Fit {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly)
}

/// Fit of ln e(t) = c − κt; returns (κ, R²).
pub fn expdecay_fit(ts: &[f64], errs: &[f64]) -> (f64, f64) {
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let f = linear_fit(ts, &ly);
    (-f.slope, f.r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Rng;

    #[test]
    fn exact_power_law() {
        let xs: Vec<f64> = (1..=8).map(|k| k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 / x).collect();
        let f = loglog_fit(&xs, &ys);
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series() {
        let f = loglog_fit(&[1.0, 2.0, 4.0], &[3.0, 3.0, 3.0]);
        assert!(f.slope.abs() < 1e-15);
        assert_eq!(f.r2, 1.0);
    }

    #[test]
    fn noisy_slope_recovered() {
        let mut rng = Rng::new(42, "fit");
        let xs: Vec<f64> = (0..40).map(|k| 2f64.powf(k as f64 / 4.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-0.5) * (0.05 * rng.gaussian()).exp()).collect();
        let f = loglog_fit(&xs, &ys);
        assert!((f.slope + 0.5).abs() < 0.05, "{f:?}");
    }

    #[test]
    fn decay_rate() {
        let ts: Vec<f64> = (0..50).map(|t| t as f64).collect();
        let es: Vec<f64> = ts.iter().map(|t| 2.0 * (-0.19 * t).exp()).collect();
        let (k, r2) = expdecay_fit(&ts, &es);
        assert!((k - 0.19).abs() < 1e-12 && r2 > 0.999_999);
    }
}
