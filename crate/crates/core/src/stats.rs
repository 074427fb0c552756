//! Small statistical helpers used by the Monte-Carlo estimators.

use serde::{Deserialize, Serialize};

/// Sample mean and (unbiased) standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn from_slice(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MeanStd { n, mean: f64::NAN, std: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanStd { n, mean, std }
    }

    /// Standard error of the mean; zero for a single sample.
    pub fn stderr(&self) -> f64 {
        if self.n > 1 {
            self.std / (self.n as f64).sqrt()
        } else {
            0.0
        }
    }
}

/// Empirical frequency of `hits` among `trials` with its binomial error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub hits: usize,
    pub trials: usize,
}

impl Proportion {
    pub fn value(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.hits as f64 / self.trials as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        let p = self.value();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// `p_{k+1} ≤ p_k + k_sigma·√(se_k² + se_{k+1}²)` for every consecutive pair.
pub fn non_increasing_within(props: &[Proportion], k_sigma: f64) -> bool {
    props.windows(2).all(|w| {
        let tol = k_sigma * (w[0].stderr().powi(2) + w[1].stderr().powi(2)).sqrt();
        w[1].value() <= w[0].value() + tol
    })
}

/// Ordinary least-squares line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (zero with two points).
    pub slope_stderr: f64,
    pub r2: f64,
    pub n: usize,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let slope_stderr = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Some(LineFit { slope, intercept, slope_stderr, r2, n })
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("median of NaN"));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = fit_line(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-14);
        assert!(f.slope_stderr < 1e-14);
    }

    #[test]
    fn monotone_check_uses_combined_error() {
        let a = Proportion { hits: 50, trials: 100 };
        let b = Proportion { hits: 55, trials: 100 };
        assert!(non_increasing_within(&[a, b], 2.0));
        let c = Proportion { hits: 90, trials: 100 };
        assert!(!non_increasing_within(&[a, c], 2.0));
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
