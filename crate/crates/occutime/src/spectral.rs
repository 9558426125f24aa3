//! Spectral machinery for reversible birth-death chains: stationary-style
//! weights, the orthogonal polynomial family attached to the generator, the
//! discrete spectral measure of a finite truncation, its moments, and a
//! moment-driven Bessel series for the occupation survival function.

use num_complex::Complex64;
use thiserror::Error;

use crate::bessel::{bessel_i_scaled, BesselOrder};
use crate::chain::{truncate_birth_death, BirthDeathSpec, ChainError, GeneratorMatrix};
use crate::linalg::{symmetric_tridiag_eigen, LinalgError};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("weight overflow at index {0}")]
    Overflow(usize),
    #[error("pole: evaluation point within 1e-12 of a support point")]
    PoleAtS(Complex64),
    #[error("need moments through order {needed}, got {got}")]
    InsufficientMoments { needed: usize, got: usize },
    #[error("degenerate measure: second central moment {0:.3e} below threshold")]
    DegenerateMeasure(f64),
    #[error("series tail {tail:.3e} exceeds 1e-10 of the partial sum at order {order}")]
    NonConverged { order: usize, tail: f64 },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Discrete spectral measure of a finite birth-death truncation at the
/// coordinate vector of state 0: eigenvalues of the generator (all <= 0)
/// with weights the squared first components of the eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralData {
    support: Vec<f64>,
    weights: Vec<f64>,
}

impl SpectralData {
    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `m_j = sum_i w_i (-x_i)^j`.
    pub fn moment(&self, j: u32) -> f64 {
        self.support
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * (-x).powi(j as i32))
            .sum()
    }

    /// `K = max |x_i|`; the measure lives in `[-K, 0]`.
    pub fn support_bound(&self) -> f64 {
        self.support.iter().fold(0.0, |a, &x| a.max(x.abs()))
    }
}

/// `pi_0 .. pi_kmax` with `pi_0 = 1` and
/// `pi_k = (lambda_0 ... lambda_{k-1}) / (mu_1 ... mu_k)`, accumulated in
/// log space so the detailed-balance relation
/// `pi_k lambda_k = pi_{k+1} mu_{k+1}` holds exactly on the logs.
pub fn pi_weights(spec: &BirthDeathSpec, kmax: usize) -> Result<Vec<f64>, SpectralError> {
    let mut out = Vec::with_capacity(kmax + 1);
    let mut log_pi = 0.0_f64;
    out.push(1.0);
    for k in 0..kmax {
        log_pi += spec.birth_rate(k)?.ln() - spec.death_rate(k + 1)?.ln();
        let pi = log_pi.exp();
        if !pi.is_finite() {
            return Err(SpectralError::Overflow(k + 1));
        }
        out.push(pi);
    }
    Ok(out)
}

/// Three-term recurrence for the polynomials `P_k` satisfying
/// `(Q - sI) P[s] = 0` row by row.
#[derive(Debug, Clone)]
pub struct PolynomialRecurrence {
    birth: Vec<f64>,
    death: Vec<f64>,
}

impl PolynomialRecurrence {
    /// Materializes rates through level `kmax` (enough to evaluate
    /// `P_0 .. P_kmax`).
    pub fn new(spec: &BirthDeathSpec, kmax: usize) -> Result<Self, SpectralError> {
        let mut birth = Vec::with_capacity(kmax + 1);
        let mut death = Vec::with_capacity(kmax + 1);
        for k in 0..=kmax {
            birth.push(spec.birth_rate(k)?);
            death.push(if k == 0 { 0.0 } else { spec.death_rate(k)? });
        }
        Ok(Self { birth, death })
    }
}

/// `P_0(s) .. P_kmax(s)` from `lambda_j P_{j+1} = (lambda_j + mu_j + s) P_j
/// - mu_j P_{j-1}` with `P_0 = 1` and `mu_0 = 0`.
pub fn eval_polynomials(rec: &PolynomialRecurrence, s: f64, kmax: usize) -> Vec<f64> {
    assert!(kmax < rec.birth.len(), "recurrence shorter than kmax");
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(1.0);
    if kmax == 0 {
        return out;
    }
    out.push((rec.birth[0] + s) / rec.birth[0]);
    for j in 1..kmax {
        let next = ((rec.birth[j] + rec.death[j] + s) * out[j] - rec.death[j] * out[j - 1])
            / rec.birth[j];
        out.push(next);
    }
    out
}

/// Spectral measure of the level-`n` truncation: symmetrize the tridiagonal
/// generator with `D = diag(sqrt(pi_k))`, which turns the off-diagonal pair
/// `(lambda_k, mu_{k+1})` into `sqrt(lambda_k mu_{k+1})`, then take the full
/// eigendecomposition tracking first components only.
pub fn discrete_spectral_measure(
    spec: &BirthDeathSpec,
    n: usize,
) -> Result<SpectralData, SpectralError> {
    assert!(n >= 2, "truncation must keep at least two states");
    let q = truncate_birth_death(spec, n)?;
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n - 1);
    for k in 0..n {
        diag.push(q.entry(k, k));
        if k + 1 < n {
            off.push((q.entry(k, k + 1) * q.entry(k + 1, k)).sqrt());
        }
    }
    let (support, first) = symmetric_tridiag_eigen(&diag, &off)?;
    let weights = first.iter().map(|&z| z * z).collect();
    Ok(SpectralData { support, weights })
}

/// `sum_i w_i / (x_i - s)`; the resolvent value is `h(s) = -cauchy(s)`.
pub fn cauchy_transform(measure: &SpectralData, s: Complex64) -> Result<Complex64, SpectralError> {
    let mut sum = Complex64::new(0.0, 0.0);
    for (&x, &w) in measure.support.iter().zip(&measure.weights) {
        let d = Complex64::new(x, 0.0) - s;
        if d.norm() < 1e-12 {
            return Err(SpectralError::PoleAtS(s));
        }
        sum += w / d;
    }
    Ok(sum)
}

/// `m_j = e_0^T (-Q)^j e_0` for `j = 0..jmax` by repeated products with the
/// row pattern of `-Q`. For a level-`N` truncation this equals the untruncated
/// chain's moment whenever `j < 2(N-1)`.
pub fn moments(q: &GeneratorMatrix, jmax: usize) -> Vec<f64> {
    let n = q.dim();
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    let mut out = Vec::with_capacity(jmax + 1);
    out.push(1.0);
    for _ in 0..jmax {
        let qv = q.apply(&v);
        for (vi, qi) in v.iter_mut().zip(&qv) {
            *vi = -qi;
        }
        out.push(v[0]);
    }
    out
}

/// Coefficients of the correction series `phi` in
/// `1/h(z) = z + m_1 - (m_2 - m_1^2) z^{-1} + phi(z^{-1}) z^{-2}`.
#[derive(Debug, Clone)]
pub struct SeriesCoefficients {
    phi: Vec<f64>,
    m1: f64,
    c2: f64,
}

impl SeriesCoefficients {
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn m1(&self) -> f64 {
        self.m1
    }

    /// Central second moment `m_2 - m_1^2`.
    pub fn central_second(&self) -> f64 {
        self.c2
    }

    /// `1/h` at `z` from the expansion; converges for `|z|` above the
    /// support bound.
    pub fn reciprocal_h(&self, z: f64) -> f64 {
        let w = 1.0 / z;
        let mut tail = 0.0;
        for &p in self.phi.iter().rev() {
            tail = tail * w + p;
        }
        z + self.m1 - self.c2 * w + tail * w * w
    }
}

/// Builds `phi` through order `k_series` from the moment sequence: take the
/// power-series reciprocal of `sum_j (-1)^j m_j w^j` (so that
/// `z / h = that reciprocal` with `w = 1/z`), then strip the leading
/// `1 + m_1 w - (m_2 - m_1^2) w^2` terms.
pub fn phi_coefficients(
    moments: &[f64],
    k_series: usize,
) -> Result<SeriesCoefficients, SpectralError> {
    let needed = k_series + 3;
    if moments.len() <= needed {
        return Err(SpectralError::InsufficientMoments {
            needed,
            got: moments.len().saturating_sub(1),
        });
    }
    // a_j = (-1)^j m_j are the coefficients of h(z) * z in w = 1/z
    let order = needed + 1;
    let a: Vec<f64> = (0..order)
        .map(|j| if j % 2 == 0 { moments[j] } else { -moments[j] })
        .collect();
    // r = 1/a as a power series; a_0 = m_0 = 1
    let mut r = vec![0.0; order];
    r[0] = 1.0;
    for k in 1..order {
        let mut acc = 0.0;
        for j in 1..=k {
            acc += a[j] * r[k - j];
        }
        r[k] = -acc;
    }
    let m1 = moments[1];
    let c2 = moments[2] - m1 * m1;
    debug_assert!((r[1] - m1).abs() <= 1e-12 * (1.0 + m1.abs()));
    debug_assert!((r[2] + c2).abs() <= 1e-10 * (1.0 + c2.abs()));
    // 1/h = z * r(w) = z + m_1 w^0 ... ; phi collects orders w^1 and up of
    // z * r shifted past the displayed head, i.e. phi_j = r_{j+3}
    let phi = r[3..3 + k_series + 1].to_vec();
    Ok(SeriesCoefficients { phi, m1, c2 })
}

/// `v_2(x) .. v_K(x)` from `exp(-x phi(w) w^2) = 1 + sum_{k>=2} v_k(x) w^k`,
/// via the exponential-of-a-series recurrence `B' = A' B`. Index 0 of the
/// returned vector is `v_2`.
pub fn v_coefficients(phi: &SeriesCoefficients, x: f64, k_series: usize) -> Vec<f64> {
    assert!(x >= 0.0, "x must be nonnegative");
    // A(w) = -x phi(w) w^2, so A has no constant or linear term
    let mut a = vec![0.0; k_series + 1];
    for (j, &p) in phi.phi.iter().enumerate() {
        if j + 2 <= k_series {
            a[j + 2] = -x * p;
        }
    }
    let mut b = vec![0.0; k_series + 1];
    b[0] = 1.0;
    for k in 1..=k_series {
        let mut acc = 0.0;
        for j in 1..=k {
            acc += (j as f64) * a[j] * b[k - j];
        }
        b[k] = acc / k as f64;
    }
    debug_assert_eq!(b[1], 0.0);
    if k_series < 2 {
        return Vec::new();
    }
    b[2..].to_vec()
}

/// Fused `R^{k/2} I_k(2 sqrt(beta))` with `R = (t-x)/(c x)` and
/// `beta = c x (t-x)`: expanding the Bessel series term by term gives
/// `(t-x)^k sum_j beta^j / (j! (j+k)!)`, which is finite as `x -> 0`.
fn ratio_bessel(k: usize, c: f64, x: f64, t: f64) -> f64 {
    let beta = c * x * (t - x);
    let z = 2.0 * beta.max(0.0).sqrt();
    if z < 25.0 {
        // direct fused series
        let mut kfact = 1.0;
        for j in 1..=k {
            kfact *= j as f64;
        }
        let mut term = 1.0 / kfact;
        let mut sum = term;
        for j in 0..400 {
            term *= beta / ((j as f64 + 1.0) * (j as f64 + 1.0 + k as f64));
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        (t - x).powi(k as i32) * sum
    } else {
        // log-space split is safe here: x is bounded away from 0 once z is large
        let ratio = ((t - x) / (c * x)).max(0.0);
        let scaled = bessel_i_scaled(BesselOrder::new(k as u32).unwrap(), z).unwrap();
        (0.5 * k as f64 * ratio.ln() + z + scaled.ln()).exp()
    }
}

/// Survival function `F_0(t, x) = P(occupation of state 0 on [0,t] > x)`
/// reconstructed from the first few spectral moments:
/// `e^{-m_1 x} [I_0(2 sqrt(beta)) + sum_{k>=2} v_k(x) R^{k/2} I_k(2 sqrt(beta))]`
/// with `c = m_2 - m_1^2`, `beta = c x (t-x)`, `R = (t-x)/(c x)`.
pub fn bessel_series_f0(
    moments: &[f64],
    phi: &SeriesCoefficients,
    t: f64,
    x: f64,
    k_series: usize,
) -> Result<f64, SpectralError> {
    assert!((0.0..=t).contains(&x), "x must lie in [0, t]");
    let m1 = moments[1];
    let c = moments[2] - m1 * m1;
    if c <= 1e-14 {
        return Err(SpectralError::DegenerateMeasure(c));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    let v = v_coefficients(phi, x, k_series);
    let mut sum = ratio_bessel(0, c, x, t);
    let mut last = 0.0;
    for (i, &vk) in v.iter().enumerate() {
        let k = i + 2;
        last = vk * ratio_bessel(k, c, x, t);
        sum += last;
    }
    if last.abs() > 1e-10 * sum.abs() {
        return Err(SpectralError::NonConverged {
            order: k_series,
            tail: last.abs(),
        });
    }
    Ok((-m1 * x).exp() * sum)
}

/// Occupation density from the series, `f_0 = -dF_0/dx`, by central
/// differencing with step `1e-5 t`. Valid away from the endpoints
/// (`x` within `(1e-4 t, t - 1e-4 t)`).
pub fn f0_from_series(
    moments: &[f64],
    phi: &SeriesCoefficients,
    t: f64,
    x: f64,
    k_series: usize,
) -> Result<f64, SpectralError> {
    let step = 1e-5 * t;
    assert!(
        x > step && x < t - step,
        "x too close to an endpoint for differencing"
    );
    let plus = bessel_series_f0(moments, phi, t, x + step, k_series)?;
    let minus = bessel_series_f0(moments, phi, t, x - step, k_series)?;
    Ok((minus - plus) / (2.0 * step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{h_equal_rate, h_value, RateSequence};
    use crate::closed_form::equal_rate_bd_density;
    use crate::quad::adaptive_simpson;

    fn equal_rate(r: f64) -> BirthDeathSpec {
        BirthDeathSpec::equal_rate(r, 200).unwrap()
    }

    #[test]
    fn pi_weights_all_ones() {
        let spec = BirthDeathSpec::new(
            RateSequence::new(vec![], Some(1.0)).unwrap(),
            RateSequence::new(vec![], Some(1.0)).unwrap(),
            50,
        )
        .unwrap();
        for w in pi_weights(&spec, 20).unwrap() {
            assert_eq!(w, 1.0);
        }
    }

    #[test]
    fn pi_weights_equal_rate() {
        let w = pi_weights(&equal_rate(2.5), 10).unwrap();
        assert_eq!(w[0], 1.0);
        for &wk in &w[1..] {
            assert!((wk - 2.5).abs() < 1e-14);
        }
    }

    #[test]
    fn pi_weights_detailed_balance_in_logs() {
        let spec = BirthDeathSpec::new(
            RateSequence::new(vec![2.0, 0.5, 3.0], Some(1.2)).unwrap(),
            RateSequence::new(vec![0.7, 1.1], Some(0.9)).unwrap(),
            50,
        )
        .unwrap();
        let w = pi_weights(&spec, 12).unwrap();
        for k in 0..12 {
            let lhs = w[k].ln() + spec.birth_rate(k).unwrap().ln();
            let rhs = w[k + 1].ln() + spec.death_rate(k + 1).unwrap().ln();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn polynomials_base_cases() {
        let rec = PolynomialRecurrence::new(&equal_rate(1.5), 5).unwrap();
        let p = eval_polynomials(&rec, -0.7, 5);
        assert_eq!(p[0], 1.0);
        assert!((p[1] - (1.5 - 0.7) / 1.5).abs() < 1e-15);
    }

    #[test]
    fn polynomials_match_closed_form_r1() {
        // with all rates 1 the recurrence has the constant-coefficient
        // solution a(s) rho_+^k + b(s) rho_-^k, rho_± roots of
        // rho^2 - (2+s) rho + 1 = 0; the boundary values P_0 = 1 and
        // P_1 = 1 + s pin a = (1 + s - rho_-)/disc and b = 1 - a.
        // Complex arithmetic handles s in (-4, 0) where the discriminant
        // is negative.
        let rec = PolynomialRecurrence::new(&equal_rate(1.0), 10).unwrap();
        for s in [-3.5, -2.0, -0.5, 0.3, 1.0, 2.0] {
            let p = eval_polynomials(&rec, s, 10);
            let sc = Complex64::new(s, 0.0);
            let disc = (sc * sc + 4.0 * sc).sqrt();
            let rho_p = (2.0 + sc + disc) / 2.0;
            let rho_m = (2.0 + sc - disc) / 2.0;
            let a = (1.0 + sc - rho_m) / disc;
            let b = 1.0 - a;
            for k in 0..=10 {
                let want = a * rho_p.powu(k as u32) + b * rho_m.powu(k as u32);
                assert!(
                    (p[k] - want.re).abs() < 1e-9 * (1.0 + want.re.abs()),
                    "s={s} k={k}: {} vs {}",
                    p[k],
                    want.re
                );
                assert!(want.im.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn two_state_measure_by_hand() {
        let spec = equal_rate(1.0);
        let m = discrete_spectral_measure(&spec, 2).unwrap();
        assert!((m.support()[0] + 2.0).abs() < 1e-14);
        assert!(m.support()[1].abs() < 1e-14);
        assert!((m.weights()[0] - 0.5).abs() < 1e-14);
        assert!((m.weights()[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn measure_weights_sum_to_one() {
        let spec = BirthDeathSpec::new(
            RateSequence::new(vec![2.0, 0.5], Some(1.3)).unwrap(),
            RateSequence::new(vec![0.8], Some(1.0)).unwrap(),
            60,
        )
        .unwrap();
        for n in [2, 5, 17, 60] {
            let m = discrete_spectral_measure(&spec, n).unwrap();
            let s: f64 = m.weights().iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "n={n}: {s}");
        }
    }

    #[test]
    fn equal_rate_support_in_minus_four_zero() {
        let m = discrete_spectral_measure(&equal_rate(1.0), 200).unwrap();
        for &x in m.support() {
            assert!(x <= 1e-10 && x >= -4.0 - 1e-8, "{x}");
        }
        assert!(m.support_bound() <= 4.0 + 1e-8);
    }

    #[test]
    fn cauchy_transform_two_state() {
        let m = discrete_spectral_measure(&equal_rate(1.0), 2).unwrap();
        let v = cauchy_transform(&m, Complex64::new(1.0, 0.0)).unwrap();
        assert!((v - Complex64::new(-2.0 / 3.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn cauchy_transform_matches_resolvent() {
        let spec = equal_rate(0.7);
        for n in [5, 30] {
            let q = truncate_birth_death(&spec, n).unwrap();
            let m = discrete_spectral_measure(&spec, n).unwrap();
            for s in [Complex64::new(0.3, 0.0), Complex64::new(1.0, 2.0)] {
                let a = -cauchy_transform(&m, s).unwrap();
                let b = h_value(&q, s).unwrap();
                assert!((a - b).norm() < 1e-10, "n={n} s={s}");
            }
        }
    }

    #[test]
    fn cauchy_transform_pole_detected() {
        let m = discrete_spectral_measure(&equal_rate(1.0), 2).unwrap();
        assert!(matches!(
            cauchy_transform(&m, Complex64::new(-2.0, 0.0)),
            Err(SpectralError::PoleAtS(_))
        ));
    }

    #[test]
    fn moments_low_order_equal_rate() {
        for r in [0.5, 1.0, 2.0] {
            let q = truncate_birth_death(&equal_rate(r), 20).unwrap();
            let m = moments(&q, 2);
            assert_eq!(m[0], 1.0);
            assert!((m[1] - r).abs() < 1e-14);
            assert!((m[2] - (r * r + r)).abs() < 1e-12);
        }
    }

    #[test]
    fn moments_match_spectral_measure() {
        let spec = equal_rate(1.3);
        let n = 40;
        let q = truncate_birth_death(&spec, n).unwrap();
        let meas = discrete_spectral_measure(&spec, n).unwrap();
        let mom = moments(&q, 12);
        for j in 0..=12 {
            let from_measure = meas.moment(j as u32);
            assert!(
                (mom[j] - from_measure).abs() < 1e-10 * (1.0 + from_measure.abs()),
                "j={j}: {} vs {}",
                mom[j],
                from_measure
            );
        }
    }

    #[test]
    fn phi_point_mass_is_zero() {
        let mut m = vec![0.0; 30];
        m[0] = 1.0;
        let phi = phi_coefficients(&m, 20).unwrap();
        for &p in phi.phi() {
            assert_eq!(p, 0.0);
        }
    }

    #[test]
    fn phi_reconstruction_round_trip() {
        // 1/h rebuilt from the head + phi must match the direct series
        // reciprocal of sum_j (-1)^j m_j w^j through the retained order
        let q = truncate_birth_death(&equal_rate(1.0), 40).unwrap();
        let m = moments(&q, 30);
        let phi = phi_coefficients(&m, 20).unwrap();
        let z = 10.0;
        let from_phi = phi.reciprocal_h(z);
        let direct = 1.0 / h_equal_rate(1.0, Complex64::new(z, 0.0)).re;
        assert!(
            (from_phi - direct).abs() < 1e-8 * direct.abs(),
            "{from_phi} vs {direct}"
        );
    }

    #[test]
    fn phi_insufficient_moments_rejected() {
        let m = vec![1.0, 1.0, 2.0];
        assert!(matches!(
            phi_coefficients(&m, 20),
            Err(SpectralError::InsufficientMoments { .. })
        ));
    }

    #[test]
    fn v_coefficients_basics() {
        let q = truncate_birth_death(&equal_rate(1.0), 40).unwrap();
        let m = moments(&q, 30);
        let phi = phi_coefficients(&m, 20).unwrap();
        // x = 0: exp(0) = 1
        for v in v_coefficients(&phi, 0.0, 20) {
            assert_eq!(v, 0.0);
        }
        // leading term of exp: v_2 = -x phi_0
        let x = 0.8;
        let v = v_coefficients(&phi, x, 20);
        assert!((v[0] + x * phi.phi()[0]).abs() < 1e-14);
        // round trip against direct composition at small w
        let w = 0.05_f64;
        let mut aw = 0.0;
        for (j, &p) in phi.phi().iter().enumerate() {
            aw += p * w.powi(j as i32 + 2);
        }
        let direct = (-x * aw).exp();
        let mut series = 1.0;
        for (i, &vk) in v.iter().enumerate() {
            series += vk * w.powi(i as i32 + 2);
        }
        assert!((series - direct).abs() < 1e-12);
    }

    #[test]
    fn series_f0_endpoint_and_degenerate() {
        let q = truncate_birth_death(&equal_rate(1.0), 40).unwrap();
        let m = moments(&q, 45);
        let phi = phi_coefficients(&m, 40).unwrap();
        assert_eq!(bessel_series_f0(&m, &phi, 1.0, 0.0, 40).unwrap(), 1.0);
        // point mass at 0: m_j = 0 for j >= 1
        let mut pm = vec![0.0; 50];
        pm[0] = 1.0;
        let phi0 = phi_coefficients(&pm, 40).unwrap();
        assert!(matches!(
            bessel_series_f0(&pm, &phi0, 1.0, 0.5, 40),
            Err(SpectralError::DegenerateMeasure(_))
        ));
    }

    #[test]
    fn series_f0_matches_closed_form_survival() {
        // oracle: 1 - CDF from the closed-form density
        for r in [0.5, 1.0, 2.0] {
            let q = truncate_birth_death(&equal_rate(r), 60).unwrap();
            let m = moments(&q, 45);
            let phi = phi_coefficients(&m, 40).unwrap();
            for t in [1.0, 2.0] {
                let d = equal_rate_bd_density(r, t).unwrap();
                for frac in [0.1, 0.3, 0.5, 0.7, 0.9] {
                    let x = frac * t;
                    let series = bessel_series_f0(&m, &phi, t, x, 40).unwrap();
                    let tail = adaptive_simpson(&|u| d.eval(u), x, t, 1e-10) + d.atom_at_t();
                    assert!(
                        (series - tail).abs() < 1e-6,
                        "r={r} t={t} x={x}: {series} vs {tail}"
                    );
                }
            }
        }
    }

    #[test]
    fn f0_from_series_matches_closed_form() {
        let q = truncate_birth_death(&equal_rate(1.0), 60).unwrap();
        let m = moments(&q, 45);
        let phi = phi_coefficients(&m, 40).unwrap();
        let t = 1.0;
        let d = equal_rate_bd_density(1.0, t).unwrap();
        for x in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let f = f0_from_series(&m, &phi, t, x, 40).unwrap();
            assert!((f - d.eval(x)).abs() < 1e-5, "x={x}: {f} vs {}", d.eval(x));
            assert!(f >= -1e-6);
        }
        // fundamental theorem of calculus over the interior
        let delta = 1e-4 * t;
        let integral = adaptive_simpson(
            &|x| f0_from_series(&m, &phi, t, x, 40).unwrap(),
            delta,
            t - delta,
            1e-9,
        );
        let drop = bessel_series_f0(&m, &phi, t, delta, 40).unwrap()
            - bessel_series_f0(&m, &phi, t, t - delta, 40).unwrap();
        assert!((integral - drop).abs() < 1e-5);
    }

    #[test]
    fn orthogonality_of_polynomials() {
        let spec = equal_rate(1.0);
        let n = 50;
        let meas = discrete_spectral_measure(&spec, n).unwrap();
        let pi = pi_weights(&spec, 10).unwrap();
        let rec = PolynomialRecurrence::new(&spec, 10).unwrap();
        let polys: Vec<Vec<f64>> = meas
            .support()
            .iter()
            .map(|&x| eval_polynomials(&rec, x, 10))
            .collect();
        for k in 0..=10 {
            for mth in 0..=10 {
                let mut acc = 0.0;
                for (i, &w) in meas.weights().iter().enumerate() {
                    acc += w * polys[i][k] * polys[i][mth];
                }
                let want = if k == mth { 1.0 / pi[k] } else { 0.0 };
                assert!(
                    (acc - want).abs() < 1e-8,
                    "k={k} m={mth}: {acc} vs {want}"
                );
            }
        }
    }
}
