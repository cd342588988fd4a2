//! Diagonal Gaussian kernels `p_t^Σ` with covariance `tΣ`.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

/// `p_t^Σ(0, x)` for `Σ = diag(sigma)`.
pub fn density(x: &[f64], sigma: &[f64], t: f64) -> f64 {
    x.iter()
        .zip(sigma)
        .map(|(&xi, &s)| (-xi * xi / (2.0 * s * t)).exp() / (2.0 * PI * s * t).sqrt())
        .product()
}

/// Sum of `p_t^Σ` over all images `x + period·k`.
pub fn periodized_density(x: &[f64], sigma: &[f64], t: f64, period: f64) -> f64 {
    x.iter()
        .zip(sigma)
        .map(|(&xi, &s)| {
            let norm = 1.0 / (2.0 * PI * s * t).sqrt();
            let mut acc = 0.0;
            for k in 0.. {
                let mut term = 0.0;
                for y in [xi + k as f64 * period, xi - k as f64 * period] {
                    term += (-y * y / (2.0 * s * t)).exp();
                    if k == 0 {
                        break;
                    }
                }
                acc += term;
                if k > 0 && term < 1e-18 * acc {
                    break;
                }
            }
            norm * acc
        })
        .product()
}

/// `‖x‖_Σ = (Σ x_i² / σ_i)^{1/2}`.
pub fn sigma_norm(x: &[f64], sigma: &[f64]) -> f64 {
    x.iter().zip(sigma).map(|(a, s)| a * a / s).sum::<f64>().sqrt()
}

/// `∫_0^∞ p_t^Σ(0,x) dt = Γ(d/2 − 1) / (2 π^{d/2} √det Σ ‖x‖_Σ^{d−2})`, `d ≥ 3`.
pub fn green(x: &[f64], sigma: &[f64]) -> f64 {
    let d = x.len() as f64;
    assert!(d >= 3.0, "Green function of a Gaussian needs d >= 3");
    let det: f64 = sigma.iter().product();
    gamma(d / 2.0 - 1.0) / (2.0 * PI.powf(d / 2.0) * det.sqrt() * sigma_norm(x, sigma).powf(d - 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_value() {
        let v = density(&[0.0, 0.0], &[0.5, 0.5], 1.0);
        assert!((v - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn periodized_sums_to_one() {
        let (l, s, t) = (12.0, 0.7, 40.0);
        let total: f64 = (-6..6).map(|x| periodized_density(&[x as f64], &[s], t, l)).sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }
}
