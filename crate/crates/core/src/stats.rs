//! Small statistics helpers shared by the estimators.
//!
//! Every reduction here is a sequential fold over a slice whose order is fixed
//! by the caller, so results do not depend on how the inputs were produced.

use serde::{Deserialize, Serialize};

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

pub fn std_error(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    std_dev(values) / (values.len() as f64).sqrt()
}

/// Relative spread `sd / |mean|`.
pub fn relative_spread(values: &[f64]) -> f64 {
    let m = mean(values);
    if m == 0.0 {
        return if std_dev(values) == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
    }
    std_dev(values) / m.abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the residuals (0 for an exact fit or
    /// fewer than three points).
    pub slope_se: f64,
    /// Root mean square residual.
    pub residual_rms: f64,
}

/// Ordinary least squares fit of `ys` against `xs`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len(), "fit_line: length mismatch");
    let n = xs.len();
    assert!(n >= 1, "fit_line: no points");
    if n == 1 {
        return LineFit {
            slope: ys[0] / xs[0],
            intercept: 0.0,
            slope_se: 0.0,
            residual_rms: 0.0,
        };
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let slope_se = if n > 2 {
        (ss_res / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    LineFit {
        slope,
        intercept,
        slope_se,
        residual_rms: (ss_res / n as f64).sqrt(),
    }
}

/// Indices of the upper half of an increasing grid (at least two points when
/// the grid has two or more entries).
pub fn upper_half(len: usize) -> std::ops::Range<usize> {
    if len <= 2 {
        return 0..len;
    }
    let start = len / 2;
    let start = start.min(len - 2);
    start..len
}

/// Slope of `ys` against `ns` restricted to the upper half of the grid.
pub fn upper_half_slope(ns: &[usize], ys: &[f64]) -> LineFit {
    let r = upper_half(ns.len());
    let xs: Vec<f64> = ns[r.clone()].iter().map(|&n| n as f64).collect();
    fit_line(&xs, &ys[r])
}

/// `log(sum(exp(values)))` computed stably.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_has_zero_error() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x - 1.0).collect();
        let fit = fit_line(&xs, &ys);
        assert!((fit.slope - 0.5).abs() < 1e-14);
        assert!((fit.intercept + 1.0).abs() < 1e-14);
        assert!(fit.slope_se < 1e-12);
    }

    #[test]
    fn upper_half_keeps_two_points() {
        assert_eq!(upper_half(3), 1..3);
        assert_eq!(upper_half(2), 0..2);
        assert_eq!(upper_half(9), 4..9);
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let v = [0.1, -2.0, 3.0];
        let direct = v.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&v) - direct).abs() < 1e-14);
    }
}
