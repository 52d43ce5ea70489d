//! Standard normal density, distribution function and its logarithm.

use statrs::function::erf::erfc;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `Phi(x)`, accurate in the lower tail.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `ln Phi(x)`, finite far into the lower tail.
pub fn ln_cdf(x: f64) -> f64 {
    if x > -30.0 {
        cdf(x).ln()
    } else {
        // Mills-ratio expansion: Phi(x) ~ phi(x)/|x| (1 - 1/x^2 + 3/x^4 - 15/x^6).
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - (-x).ln() + INV_SQRT_2PI.ln() + series.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
        let q = cdf(1.959_963_984_540_054);
        assert!((q - 0.975).abs() < 1e-11, "{q}");
        assert!((pdf(0.0) - INV_SQRT_2PI).abs() < 1e-16);
    }

    #[test]
    fn log_tail_is_continuous() {
        let a = ln_cdf(-29.999_999);
        let b = ln_cdf(-30.000_001);
        assert!((a - b).abs() < 1e-4, "{a} {b}");
        assert!(ln_cdf(-100.0).is_finite());
    }
}
