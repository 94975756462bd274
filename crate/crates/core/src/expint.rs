//! Exponential integral `E1(x) = ∫_x^∞ e^{-u}/u du`.
//!
//! Power series below [`SERIES_CUTOFF`], modified Lentz continued fraction
//! above it. The continued fraction also yields the scaled value
//! `e^x E1(x)`, which stays representable long after `E1` underflows.

use crate::error::{domain, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_CUTOFF: f64 = 1.1;
const MAX_ITER: usize = 500;
const TINY: f64 = 1e-300;

/// `E1(x)` for `x > 0`.
pub fn expint_e1(x: f64) -> Result<f64> {
    check(x)?;
    if x <= SERIES_CUTOFF {
        Ok(series(x))
    } else {
        Ok(continued_fraction(x) * (-x).exp())
    }
}

/// `e^x E1(x)` for `x > 0`.
pub fn expint_e1_scaled(x: f64) -> Result<f64> {
    check(x)?;
    if x <= SERIES_CUTOFF {
        Ok(series(x) * x.exp())
    } else {
        Ok(continued_fraction(x))
    }
}

/// `ln E1(x)`, finite for every finite `x > 0`.
pub fn ln_expint_e1(x: f64) -> Result<f64> {
    check(x)?;
    if x <= SERIES_CUTOFF {
        Ok(series(x).ln())
    } else {
        Ok(continued_fraction(x).ln() - x)
    }
}

fn check(x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain(format!("E1 requires finite x > 0, got {x}")));
    }
    Ok(())
}

fn series(x: f64) -> f64 {
    // E1(x) = -γ - ln x - Σ_{k≥1} (-x)^k / (k k!)
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..MAX_ITER {
        let kf = k as f64;
        term *= -x / kf;
        let add = term / kf;
        sum += add;
        if add.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

fn continued_fraction(x: f64) -> f64 {
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        // A&S table 5.1
        assert!((expint_e1(1.0).unwrap() - 0.219_383_934_395_520_3).abs() < 1e-15);
        assert!((expint_e1(0.1).unwrap() - 1.822_923_958_419_390_7).abs() < 1e-14);
        assert!((expint_e1(2.0).unwrap() - 0.048_900_510_708_061_12).abs() < 1e-15);
        assert!((expint_e1(10.0).unwrap() - 4.156_968_929_685_325e-6).abs() < 1e-19);
    }

    #[test]
    fn both_branches_agree_at_the_cutoff() {
        let s = series(SERIES_CUTOFF);
        let cf = continued_fraction(SERIES_CUTOFF) * (-SERIES_CUTOFF).exp();
        assert!((s - cf).abs() < 1e-13, "{s} vs {cf}");
    }

    #[test]
    fn rejects_non_positive() {
        assert!(expint_e1(0.0).is_err());
        assert!(expint_e1(-1.0).is_err());
        assert!(expint_e1(f64::NAN).is_err());
    }

    #[test]
    fn log_form_survives_underflow() {
        let l = ln_expint_e1(1e4).unwrap();
        assert!((l - (-1e4 - (1e4f64 + 1.0).ln())).abs() < 1e-3);
        assert_eq!(expint_e1(1e4).unwrap(), 0.0);
    }
}
