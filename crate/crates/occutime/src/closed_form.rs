//! Exact Bessel-function occupation densities for the two chains that
//! admit them: the two-state chain and the equal-rate birth-death chain.
//!
//! Every exponential-times-Bessel product is assembled from the scaled
//! function `e^{-z} I_n(z)` with the exponents combined first; the raw
//! factors overflow long before the products leave `O(1)`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::bessel::{bessel_i_scaled, BesselOrder};
use crate::transforms::{cosine_grid, OccupationDensity, TransformError};

/// Grid resolution used when the caller does not supply one.
pub const DEFAULT_GRID_POINTS: usize = 400;

/// `I_0(z)` by direct series; only called with small `z`.
fn i0_series(z: f64) -> f64 {
    let q = 0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..60 {
        term *= q / ((k as f64 + 1.0) * (k as f64 + 1.0));
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

/// `2 I_1(z) / z`, continuous through `z = 0` where it equals 1.
fn i1_ratio(z: f64) -> f64 {
    let q = 0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..60 {
        term *= q / ((k as f64 + 1.0) * (k as f64 + 2.0));
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

/// Continuous part of the two-state density at one point, with the
/// `x -> t` limit built in (`I_1(z)/z -> 1/2` removes the apparent
/// division by zero).
pub fn two_state_density_at(lambda: f64, mu: f64, t: f64, x: f64) -> f64 {
    let x = x.clamp(0.0, t);
    let arg = lambda * mu * x * (t - x);
    let z = 2.0 * arg.sqrt();
    let exponent = -lambda * x - mu * (t - x);
    if z < 0.5 {
        (exponent).exp() * (lambda * i0_series(z) + lambda * mu * x * i1_ratio(z))
    } else {
        let i0 = bessel_i_scaled(BesselOrder::new(0).unwrap(), z).unwrap();
        let i1 = bessel_i_scaled(BesselOrder::new(1).unwrap(), z).unwrap();
        // exponent + z = -(sqrt(lambda x) - sqrt(mu (t-x)))^2 <= 0
        (exponent + z).exp() * (lambda * i0 + (lambda * mu * x / (t - x)).sqrt() * i1)
    }
}

/// Occupation density of state 0 for the two-state chain with generator
/// `[[-lambda, lambda], [mu, -mu]]`: atom `e^{-lambda t}` plus
/// `f(x) = e^{-lambda x - mu(t-x)} (lambda I_0(z) + sqrt(lambda mu x/(t-x)) I_1(z))`
/// with `z = 2 sqrt(lambda mu x (t-x))`.
pub fn two_state_density(
    lambda: f64,
    mu: f64,
    t: f64,
) -> Result<OccupationDensity, TransformError> {
    two_state_density_on_grid(lambda, mu, t, &cosine_grid(t, DEFAULT_GRID_POINTS))
}

pub fn two_state_density_on_grid(
    lambda: f64,
    mu: f64,
    t: f64,
    grid: &[f64],
) -> Result<OccupationDensity, TransformError> {
    if lambda <= 0.0 || mu <= 0.0 {
        return Err(TransformError::InvalidParameter(
            "two-state rates must be positive",
        ));
    }
    if t <= 0.0 {
        return Err(TransformError::BadHorizon(t));
    }
    let values: Vec<f64> = grid
        .iter()
        .map(|&x| two_state_density_at(lambda, mu, t, x))
        .collect();
    let f = move |x: f64| two_state_density_at(lambda, mu, t, x);
    OccupationDensity::new(
        t,
        (-lambda * t).exp(),
        grid.to_vec(),
        values,
        Some(Arc::new(f)),
    )
}

/// Time-Laplace transform of the full two-state density:
/// `e^{-x(s+lambda)} e^{lambda mu x/(s+mu)} (1 + lambda/(s+mu))`.
pub fn two_state_transform(
    lambda: f64,
    mu: f64,
    s1: Complex64,
    x: f64,
) -> Result<Complex64, TransformError> {
    if (s1 + mu).norm() < 1e-12 {
        return Err(TransformError::Chain(crate::chain::ChainError::PoleAtS(s1)));
    }
    let core = (-x * (s1 + lambda)).exp() * (lambda * mu * x / (s1 + mu)).exp();
    Ok(core * (1.0 + lambda / (s1 + mu)))
}

/// Continuous part of the equal-rate birth-death density at one point,
/// with the `x -> t` limit `r (1 + t) e^{-rt}` built in.
pub fn equal_rate_bd_density_at(r: f64, t: f64, x: f64) -> f64 {
    let x = x.clamp(0.0, t);
    let u = (t - x) * (t + (r - 1.0) * x);
    let z = 2.0 * u.max(0.0).sqrt();
    let exponent = (2.0 - r) * x - 2.0 * t;
    if z < 0.5 {
        exponent.exp() * (r * i0_series(z) + r * t * i1_ratio(z))
    } else {
        let i0 = bessel_i_scaled(BesselOrder::new(0).unwrap(), z).unwrap();
        let i1 = bessel_i_scaled(BesselOrder::new(1).unwrap(), z).unwrap();
        // exponent + z <= 0 for all 0 <= x <= t
        (exponent + z).exp() * (r * i0 + (r * t / u.sqrt()) * i1)
    }
}

/// Occupation density of state 0 for the birth-death chain with first
/// birth rate `r` and all other rates 1: atom `e^{-rt}` plus, with
/// `u = (t-x)(t + (r-1)x)` and `z = 2 sqrt(u)`,
/// `f(x) = e^{(2-r)x - 2t} (r I_0(z) + (rt/sqrt(u)) I_1(z))`.
pub fn equal_rate_bd_density(r: f64, t: f64) -> Result<OccupationDensity, TransformError> {
    equal_rate_bd_density_on_grid(r, t, &cosine_grid(t, DEFAULT_GRID_POINTS))
}

pub fn equal_rate_bd_density_on_grid(
    r: f64,
    t: f64,
    grid: &[f64],
) -> Result<OccupationDensity, TransformError> {
    if r <= 0.0 {
        return Err(TransformError::InvalidParameter("rate r must be positive"));
    }
    if t <= 0.0 {
        return Err(TransformError::BadHorizon(t));
    }
    let values: Vec<f64> = grid
        .iter()
        .map(|&x| equal_rate_bd_density_at(r, t, x))
        .collect();
    let f = move |x: f64| equal_rate_bd_density_at(r, t, x);
    OccupationDensity::new(t, (-r * t).exp(), grid.to_vec(), values, Some(Arc::new(f)))
}

/// Time-Laplace transform of the equal-rate density:
/// `(g(s)/s) exp(-x g(s))` with `g(s) = ((2-r)s + r sqrt(s) sqrt(s+4))/2`.
pub fn equal_rate_bd_transform(r: f64, s1: Complex64, x: f64) -> Complex64 {
    let root = s1.sqrt() * (s1 + 4.0).sqrt();
    let g = 0.5 * ((2.0 - r) * s1 + r * root);
    g / s1 * (-x * g).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{h_equal_rate, occupation_mean, two_state_generator, ChainError};
    use crate::transforms::laplace_f0;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn two_state_point_value() {
        // lambda = mu = 1, t = 1, x = 1/2: e^{-1}(I_0(1) + I_1(1))
        let want = (-1.0_f64).exp() * (1.2660658777520083356 + 0.56515910399248502721);
        let got = two_state_density_at(1.0, 1.0, 1.0, 0.5);
        assert!((got - want).abs() < 1e-13, "got {got}, want {want}");
    }

    #[test]
    fn two_state_atom() {
        let d = two_state_density(2.0, 1.0, 1.0).unwrap();
        assert_eq!(d.atom_at_t(), (-2.0_f64).exp());
    }

    #[test]
    fn two_state_normalization_and_mean() {
        for (l, m) in [(1.0, 1.0), (2.0, 3.0), (0.5, 4.0)] {
            for t in [0.5, 1.0, 3.0] {
                let d = two_state_density(l, m, t).unwrap();
                let defect = d.normalization_defect();
                assert!(defect.abs() < 5e-4, "l={l} m={m} t={t}: defect {defect:.2e}");
                let q = two_state_generator(l, m).unwrap();
                let diff = d.mean() - occupation_mean(&q, t);
                assert!(diff.abs() < 1e-5, "l={l} m={m} t={t}: mean diff {diff:.2e}");
            }
        }
    }

    #[test]
    fn two_state_large_horizon_no_overflow() {
        // raw I_0(2 sqrt(l m x (t-x))) would overflow near x = t/2 here
        let d = two_state_density(1.0, 1.0, 50.0).unwrap();
        let v = d.eval(25.0);
        assert!(v.is_finite() && v > 0.0);
        assert!(d.normalization_defect().abs() < 5e-4);
    }

    #[test]
    fn two_state_transform_values() {
        // x = 0: exponentials drop
        let v = two_state_transform(1.5, 0.7, c(2.0, 0.0), 0.0).unwrap();
        assert!((v - c(1.0 + 1.5 / 2.7, 0.0)).norm() < 1e-14);
        // frozen arithmetic instance
        let v = two_state_transform(1.0, 1.0, c(1.0, 0.0), 1.0).unwrap();
        assert!((v.re - 0.33469524022264474).abs() < 1e-14);
        // pole at s = -mu
        assert!(matches!(
            two_state_transform(1.0, 1.0, c(-1.0, 0.0), 0.5),
            Err(TransformError::Chain(ChainError::PoleAtS(_)))
        ));
    }

    #[test]
    fn two_state_transform_equals_laplace_f0() {
        let (l, m) = (1.3, 0.4);
        let h = move |s: Complex64| -> Result<Complex64, ChainError> {
            Ok((m + s) / (s * s + (l + m) * s))
        };
        for s in [c(1.0, 0.0), c(0.4, 2.2), c(3.0, -1.0)] {
            for x in [0.0, 0.6, 2.0] {
                let a = two_state_transform(l, m, s, x).unwrap();
                let b = laplace_f0(&h, s, x).unwrap();
                assert!((a - b).norm() < 1e-12 * a.norm().max(1.0));
            }
        }
    }

    #[test]
    fn equal_rate_point_value() {
        // r = 1, t = 1, x -> 0: u = 1, e^{-2}(I_0(2) + I_1(2))
        let want = 0.5237776118026087;
        let got = equal_rate_bd_density_at(1.0, 1.0, 0.0);
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }

    #[test]
    fn equal_rate_atom() {
        let d = equal_rate_bd_density(1.5, 2.0).unwrap();
        assert_eq!(d.atom_at_t(), (-3.0_f64).exp());
    }

    #[test]
    fn equal_rate_small_and_large_z_paths_agree() {
        // evaluate both branches just either side of the z = 0.5 switch
        let r = 1.0;
        let t = 1.0;
        // z = 2 sqrt((t-x) t) = 0.5 at x = t - 1/16
        let x0 = t - 1.0 / 16.0;
        let lo = equal_rate_bd_density_at(r, t, x0 + 1e-9);
        let hi = equal_rate_bd_density_at(r, t, x0 - 1e-9);
        assert!((lo - hi).abs() < 1e-7 * hi);
    }

    #[test]
    fn equal_rate_boundary_limit() {
        // continuous extension at x = t is r (1 + t) e^{-rt}
        for (r, t) in [(1.0_f64, 1.0_f64), (0.5, 2.0), (2.0, 0.7)] {
            let limit = r * (1.0 + t) * (-r * t).exp();
            let near = equal_rate_bd_density_at(r, t, t - 1e-6);
            assert!(
                (near - limit).abs() < 1e-4 * limit,
                "r={r} t={t}: {near} vs {limit}"
            );
            let exact = equal_rate_bd_density_at(r, t, t);
            assert!((exact - limit).abs() < 1e-12 * limit);
        }
    }

    #[test]
    fn equal_rate_normalization_and_nonnegativity() {
        for r in [0.3, 1.0, 1.5, 2.0, 5.0] {
            for t in [0.5, 1.0, 2.0, 5.0] {
                let d = equal_rate_bd_density(r, t).unwrap();
                let defect = d.normalization_defect();
                assert!(defect.abs() < 5e-4, "r={r} t={t}: defect {defect:.2e}");
                for &v in d.values() {
                    assert!(v >= 0.0);
                }
            }
        }
    }

    #[test]
    fn two_state_nonnegative_across_parameters() {
        for l in [0.3, 1.0, 1.5, 2.0, 5.0] {
            for t in [0.5, 1.0, 2.0, 5.0] {
                let d = two_state_density(l, 1.7, t).unwrap();
                for &v in d.values() {
                    assert!(v >= 0.0);
                }
            }
        }
    }

    #[test]
    fn equal_rate_transform_values() {
        // matches laplace_f0 with the closed-form h
        for r in [0.5, 1.0, 2.0] {
            let h = move |s: Complex64| -> Result<Complex64, ChainError> {
                Ok(h_equal_rate(r, s))
            };
            for s in [c(1.0, 0.0), c(0.7, 1.9), c(2.5, -0.4)] {
                for x in [0.0, 0.5, 1.5] {
                    let a = equal_rate_bd_transform(r, s, x);
                    let b = laplace_f0(&h, s, x).unwrap();
                    assert!(
                        (a - b).norm() < 1e-12 * a.norm().max(1.0),
                        "r={r} s={s} x={x}"
                    );
                }
            }
        }
        // x = 0, r = 2: sqrt(s)sqrt(s+4)/s
        let s = c(1.3, 0.8);
        let v = equal_rate_bd_transform(2.0, s, 0.0);
        assert!((v - s.sqrt() * (s + 4.0).sqrt() / s).norm() < 1e-14);
        // frozen arithmetic instance: r=1, s=1, x=1
        let v = equal_rate_bd_transform(1.0, c(1.0, 0.0), 1.0);
        let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
        assert!((v.re - phi * (-phi).exp()).abs() < 1e-14);
    }
}
