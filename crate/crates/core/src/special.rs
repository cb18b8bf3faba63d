//! Small exact special-function helpers.

use std::f64::consts::PI;

/// Gamma function at half-integer arguments: `gamma_half(n)` returns
/// `Γ(n/2)` for `n >= 1`, computed from the exact recursions
/// `Γ(m) = (m-1)!` and `Γ(m + 1/2) = (2m)! √π / (4^m m!)`.
pub fn gamma_half(n: u32) -> f64 {
    assert!(n >= 1, "gamma_half needs a positive half-integer numerator");
    if n % 2 == 0 {
        // Γ(m), m = n/2
        let m = n / 2;
        let mut g = 1.0;
        for j in 1..m {
            g *= j as f64;
        }
        g
    } else {
        // Γ(1/2) = √π, then multiply up by (k - 1/2)
        let mut g = PI.sqrt();
        let mut x = 0.5;
        while (2.0 * x) as u32 != n {
            g *= x;
            x += 1.0;
        }
        g
    }
}
