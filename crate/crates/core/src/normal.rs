//! Standard-normal helpers for two-sided confidence levels.

use std::f64::consts::SQRT_2;

use statrs::function::erf::{erf, erf_inv};

/// Half-width multiplier `δ` of the two-sided interval with coverage `level`,
/// i.e. `F⁻¹((1 + level) / 2)` for the standard normal CDF `F`.
pub fn two_sided_quantile(level: f64) -> f64 {
    let mut y = erf_inv(level);
    if y.is_finite() && y != 0.0 {
        // one Newton step on erf(y) = level; erf_inv alone is good to ~1e-11
        y -= (erf(y) - level) * std::f64::consts::PI.sqrt() / 2.0 * (y * y).exp();
    }
    SQRT_2 * y
}

/// Coverage of the symmetric interval `[-z, z]` under the standard normal,
/// i.e. `2F(z) - 1`. Computed through `erf` so it keeps precision near 1.
pub fn two_sided_coverage(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else if z.is_infinite() {
        1.0
    } else {
        erf(z / SQRT_2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_and_coverage_invert_each_other() {
        for &level in &[1e-6, 0.1, 0.5, 0.9, 0.95, 0.999, 0.999_999] {
            let z = two_sided_quantile(level);
            assert!((two_sided_coverage(z) - level).abs() < 1e-12, "level {level}");
        }
    }

    #[test]
    fn coverage_edges() {
        assert_eq!(two_sided_coverage(0.0), 0.0);
        assert_eq!(two_sided_coverage(f64::INFINITY), 1.0);
        assert!(two_sided_coverage(40.0) == 1.0);
    }
}
