//! Generator matrices, birth-death specifications, resolvent solves, and
//! the resolvent diagonal function `h(s) = -((Q - sI)^{-1} e_0, e_0)` that
//! drives every transform formula downstream.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::quad::adaptive_simpson;

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("matrix must be square with at least 2 states, got {0} rows")]
    BadShape(usize),
    #[error("negative off-diagonal rate {rate} at ({row}, {col})")]
    NegativeRate { row: usize, col: usize, rate: f64 },
    #[error("row {row} sums to {sum:.3e}, generator is not conservative")]
    NonConservative { row: usize, sum: f64 },
    #[error("positive-rate graph is not strongly connected (chain reducible)")]
    Reducible,
    #[error("rate at position {0} must be strictly positive")]
    RatePositivity(usize),
    #[error("rate sequence exhausted at index {0} and no repeating tail given")]
    RateSequenceExhausted(usize),
    #[error("log pi_{0} overflows the representable range")]
    PiOverflow(usize),
    #[error("truncation level must be >= 2, got {0}")]
    TruncationTooSmall(usize),
    #[error("s = {0} is a pole of the transform")]
    PoleAtS(Complex64),
    #[error("1/h vanishes at s = {0}")]
    ZeroDenominator(Complex64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("resolvent residual {residual:.3e} exceeds tolerance; s too close to spectrum")]
    ResidualTooLarge { residual: f64 },
}

/// Validated conservative, irreducible rate matrix, row-major dense.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    n: usize,
    rates: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.rates[row * self.n + col]
    }

    pub fn rows(&self) -> &[f64] {
        &self.rates
    }

    /// True when every entry off the three central diagonals is zero.
    pub fn is_tridiagonal(&self) -> bool {
        for i in 0..self.n {
            for j in 0..self.n {
                if (i as isize - j as isize).abs() > 1 && self.entry(i, j) != 0.0 {
                    return false;
                }
            }
        }
        true
    }

    /// Matrix-vector product `Q v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = 0.0;
            for j in 0..self.n {
                acc += self.entry(i, j) * v[j];
            }
            out[i] = acc;
        }
        out
    }
}

/// Validates off-diagonal nonnegativity, conservativeness (zero row sums)
/// and irreducibility of the positive-rate digraph.
pub fn validate_generator(raw: &[Vec<f64>]) -> Result<GeneratorMatrix, ChainError> {
    let n = raw.len();
    if n < 2 || raw.iter().any(|r| r.len() != n) {
        return Err(ChainError::BadShape(n));
    }
    let mut rates = Vec::with_capacity(n * n);
    for (i, row) in raw.iter().enumerate() {
        let mut off_abs = 0.0_f64;
        for (j, &v) in row.iter().enumerate() {
            if i != j {
                if v < 0.0 {
                    return Err(ChainError::NegativeRate {
                        row: i,
                        col: j,
                        rate: v,
                    });
                }
                off_abs += v;
            }
            rates.push(v);
        }
        let sum: f64 = row.iter().sum();
        let tol = 1e-12 * (1.0 + off_abs);
        if sum.abs() > tol {
            return Err(ChainError::NonConservative { row: i, sum });
        }
    }
    let q = GeneratorMatrix { n, rates };
    if !strongly_connected(&q) {
        return Err(ChainError::Reducible);
    }
    Ok(q)
}

fn strongly_connected(q: &GeneratorMatrix) -> bool {
    let n = q.dim();
    let reach = |transpose: bool| -> usize {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let rate = if transpose { q.entry(j, i) } else { q.entry(i, j) };
                if i != j && rate > 0.0 && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count
    };
    reach(false) == n && reach(true) == n
}

/// Total departure rate out of state `j`, i.e. `-Q_jj`.
pub fn exit_rate(q: &GeneratorMatrix, j: usize) -> f64 {
    -q.entry(j, j)
}

/// One birth or death rate per state, given as an explicit head plus an
/// optional repeating tail value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateSequence {
    head: Vec<f64>,
    repeat: Option<f64>,
}

impl RateSequence {
    pub fn new(head: Vec<f64>, repeat: Option<f64>) -> Result<Self, ChainError> {
        for (i, &r) in head.iter().enumerate() {
            if r <= 0.0 || !r.is_finite() {
                return Err(ChainError::RatePositivity(i));
            }
        }
        if let Some(r) = repeat {
            if r <= 0.0 || !r.is_finite() {
                return Err(ChainError::RatePositivity(head.len()));
            }
        }
        Ok(Self { head, repeat })
    }

    pub fn rate(&self, k: usize) -> Result<f64, ChainError> {
        self.head
            .get(k)
            .copied()
            .or(self.repeat)
            .ok_or(ChainError::RateSequenceExhausted(k))
    }
}

/// Birth/death rate sequences with a default truncation level. Birth rate
/// `lambda_k` applies to state `k >= 0`; death rate `mu_k` to `k >= 1`.
#[derive(Debug, Clone)]
pub struct BirthDeathSpec {
    birth: RateSequence,
    death: RateSequence,
    truncation_hint: usize,
}

impl BirthDeathSpec {
    pub fn new(
        birth: RateSequence,
        death: RateSequence,
        truncation_hint: usize,
    ) -> Result<Self, ChainError> {
        if truncation_hint < 2 {
            return Err(ChainError::TruncationTooSmall(truncation_hint));
        }
        Ok(Self {
            birth,
            death,
            truncation_hint,
        })
    }

    /// The chain with first birth rate `r` and every other rate 1.
    pub fn equal_rate(r: f64, truncation_hint: usize) -> Result<Self, ChainError> {
        Self::new(
            RateSequence::new(vec![r], Some(1.0))?,
            RateSequence::new(vec![], Some(1.0))?,
            truncation_hint,
        )
    }

    pub fn birth_rate(&self, k: usize) -> Result<f64, ChainError> {
        self.birth.rate(k)
    }

    /// `mu_k` for `k >= 1`.
    pub fn death_rate(&self, k: usize) -> Result<f64, ChainError> {
        debug_assert!(k >= 1);
        self.death.rate(k - 1)
    }

    pub fn truncation_hint(&self) -> usize {
        self.truncation_hint
    }
}

/// N x N tridiagonal finite section with a reflecting last row (diagonal
/// `-mu_{N-1}`), which keeps the truncated generator conservative.
pub fn truncate_birth_death(
    spec: &BirthDeathSpec,
    n: usize,
) -> Result<GeneratorMatrix, ChainError> {
    if n < 2 {
        return Err(ChainError::TruncationTooSmall(n));
    }
    let mut raw = vec![vec![0.0; n]; n];
    for k in 0..n - 1 {
        raw[k][k + 1] = spec.birth_rate(k)?;
    }
    for k in 1..n {
        raw[k][k - 1] = spec.death_rate(k)?;
    }
    for k in 0..n {
        let off: f64 = raw[k].iter().sum();
        raw[k][k] = -off;
    }
    validate_generator(&raw)
}

/// Solves `(Q - sI) y = e_0` by dense complex LU, or by a pivoted
/// tridiagonal elimination when the structure allows it.
pub fn resolvent_e0(q: &GeneratorMatrix, s: Complex64) -> Result<Vec<Complex64>, ChainError> {
    let n = q.dim();
    let mut e0 = vec![Complex64::new(0.0, 0.0); n];
    e0[0] = Complex64::new(1.0, 0.0);
    let y = if q.is_tridiagonal() {
        let sub: Vec<Complex64> = (1..n)
            .map(|i| Complex64::new(q.entry(i, i - 1), 0.0))
            .collect();
        let sup: Vec<Complex64> = (0..n - 1)
            .map(|i| Complex64::new(q.entry(i, i + 1), 0.0))
            .collect();
        let diag: Vec<Complex64> = (0..n).map(|i| Complex64::new(q.entry(i, i), 0.0) - s).collect();
        linalg::tridiag_solve_complex(sub, diag, sup, e0)?
    } else {
        let mut a = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = Complex64::new(q.entry(i, j), 0.0);
            }
            a[i * n + i] -= s;
        }
        linalg::lu_solve_complex(&mut a, &mut e0, n)?;
        e0
    };
    // Residual check scaled by the matrix size; for s far out on an
    // inversion contour the attainable residual grows with |s|.
    let scale = 1.0 + s.norm() + (0..n).map(|i| exit_rate(q, i)).fold(0.0, f64::max) * 2.0;
    let norm_y = y.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut resid = 0.0_f64;
    for i in 0..n {
        let mut acc = -if i == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
        acc -= s * y[i];
        if q.is_tridiagonal() {
            let lo = i.saturating_sub(1);
            let hi = (i + 2).min(n);
            for j in lo..hi {
                acc += Complex64::new(q.entry(i, j), 0.0) * y[j];
            }
        } else {
            for j in 0..n {
                acc += Complex64::new(q.entry(i, j), 0.0) * y[j];
            }
        }
        resid = resid.max(acc.norm());
    }
    if resid > 1e-10 * scale * norm_y.max(f64::MIN_POSITIVE) {
        return Err(ChainError::ResidualTooLarge { residual: resid });
    }
    Ok(y)
}

/// `h(s) = -((Q - sI)^{-1} e_0, e_0)`, the Laplace transform of
/// `p_t(0,0)`.
pub fn h_value(q: &GeneratorMatrix, s: Complex64) -> Result<Complex64, ChainError> {
    Ok(-resolvent_e0(q, s)?[0])
}

/// `w(s) = s - 1/h(s)` without the large-`|s|` cancellation.
///
/// By the Schur complement of the (0,0) entry of `sI - Q`,
/// `1/h(s) = s - Q_00 - Q_{0r}(sI - Q_{rr})^{-1} Q_{r0}` with `r` the
/// remaining states, so `w = Q_00 + Q_{0r}(sI - Q_{rr})^{-1} Q_{r0}` stays
/// `O(q_0)` on an inversion contour while `s` and `1/h` both blow up;
/// forming `s - 1/h` from `h` directly would lose `log2 |s|` bits.
pub fn resolvent_shift(q: &GeneratorMatrix, s: Complex64) -> Result<Complex64, ChainError> {
    let n = q.dim();
    let m = n - 1;
    let mut rhs: Vec<Complex64> = (1..n)
        .map(|i| Complex64::new(q.entry(i, 0), 0.0))
        .collect();
    let v = if q.is_tridiagonal() {
        let sub: Vec<Complex64> = (2..n)
            .map(|i| Complex64::new(-q.entry(i, i - 1), 0.0))
            .collect();
        let sup: Vec<Complex64> = (1..m)
            .map(|i| Complex64::new(-q.entry(i, i + 1), 0.0))
            .collect();
        let diag: Vec<Complex64> = (1..n).map(|i| s - q.entry(i, i)).collect();
        linalg::tridiag_solve_complex(sub, diag, sup, rhs)?
    } else {
        let mut a = vec![Complex64::new(0.0, 0.0); m * m];
        for i in 0..m {
            for j in 0..m {
                a[i * m + j] = -Complex64::new(q.entry(i + 1, j + 1), 0.0);
            }
            a[i * m + i] += s;
        }
        linalg::lu_solve_complex(&mut a, &mut rhs, m)?;
        rhs
    };
    let mut w = Complex64::new(q.entry(0, 0), 0.0);
    for (j, vj) in v.iter().enumerate() {
        w += q.entry(0, j + 1) * vj;
    }
    Ok(w)
}

/// Three-state resolvent function in its partial-fraction form:
/// `1/h(s) = s - g1/(s + b1) - g2/(s + b2)`.
pub fn h_three_state(
    gamma1: f64,
    gamma2: f64,
    beta1: f64,
    beta2: f64,
    s: Complex64,
) -> Result<Complex64, ChainError> {
    let pole_tol = 1e-12;
    if (s + beta1).norm() < pole_tol || (s + beta2).norm() < pole_tol {
        return Err(ChainError::PoleAtS(s));
    }
    let inv_h = s - gamma1 / (s + beta1) - gamma2 / (s + beta2);
    if inv_h.norm() < 1e-14 * (1.0 + s.norm()) {
        return Err(ChainError::ZeroDenominator(s));
    }
    Ok(Complex64::new(1.0, 0.0) / inv_h)
}

/// Closed-form `h` for the equal-rate birth-death chain:
/// `h(s) = 2 / ((2 - r) s + r sqrt(s^2 + 4 s))`.
///
/// The root is taken as `sqrt(s) sqrt(s + 4)` with principal factors,
/// which is the branch analytic off the spectral support `[-4, 0]` and
/// has positive real part on `Re s > 0`; the principal root of the
/// product would jump across the second quadrant and break contour
/// integration.
pub fn h_equal_rate(r: f64, s: Complex64) -> Complex64 {
    let root = s.sqrt() * (s + 4.0).sqrt();
    2.0 / ((2.0 - r) * s + r * root)
}

/// Row distribution `e_0^T e^{Q u}` by uniformization, chunked so no
/// single Poisson expansion exceeds rate-time 500.
pub fn transient_row(q: &GeneratorMatrix, u: f64) -> Vec<f64> {
    let n = q.dim();
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    if u <= 0.0 {
        return v;
    }
    let lambda = (0..n).map(|i| exit_rate(q, i)).fold(0.0, f64::max) * 1.000001 + 1e-30;
    let chunks = (lambda * u / 500.0).ceil().max(1.0);
    let du = u / chunks;
    for _ in 0..chunks as usize {
        v = uniformization_step(q, &v, lambda, du);
    }
    v
}

fn uniformization_step(q: &GeneratorMatrix, v: &[f64], lambda: f64, u: f64) -> Vec<f64> {
    let n = q.dim();
    let a = lambda * u;
    let kmax = (a + 12.0 * a.sqrt() + 30.0) as usize;
    let mut w = v.to_vec(); // e_0^T P^k, row vector iterate
    let mut acc = vec![0.0; n];
    let mut pois = (-a).exp();
    for i in 0..n {
        acc[i] += pois * w[i];
    }
    for k in 1..=kmax {
        // w <- w P with P = I + Q/lambda (row vector times matrix).
        let mut next = vec![0.0; n];
        for i in 0..n {
            let wi = w[i];
            if wi == 0.0 {
                continue;
            }
            for j in 0..n {
                next[j] += wi * q.entry(i, j) / lambda;
            }
            next[i] += wi;
        }
        w = next;
        pois *= a / k as f64;
        for i in 0..n {
            acc[i] += pois * w[i];
        }
        if pois < 1e-18 && k as f64 > a {
            break;
        }
    }
    acc
}

/// `p_u(0,0)`, the return probability of state 0 at time `u`.
pub fn p00(q: &GeneratorMatrix, u: f64) -> f64 {
    transient_row(q, u)[0]
}

/// Expected occupation of state 0 over `[0, t]`:
/// `E[O_t] = \int_0^t p_u(0,0) du`, to absolute accuracy ~1e-8.
pub fn occupation_mean(q: &GeneratorMatrix, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    adaptive_simpson(&|u| p00(q, u), 0.0, t, 1e-9)
}

/// Two-state generator `[[-lambda, lambda], [mu, -mu]]`.
pub fn two_state_generator(lambda: f64, mu: f64) -> Result<GeneratorMatrix, ChainError> {
    validate_generator(&[vec![-lambda, lambda], vec![mu, -mu]])
}

/// Chain specification as consumed by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ChainSpec {
    #[serde(rename = "two-state")]
    TwoState { lambda: f64, mu: f64 },
    #[serde(rename = "equal-rate-bd")]
    EqualRateBd {
        r: f64,
        #[serde(default = "default_truncation")]
        truncate: usize,
    },
    #[serde(rename = "birth-death")]
    BirthDeath {
        birth: Vec<f64>,
        death: Vec<f64>,
        #[serde(default = "default_truncation")]
        truncate: usize,
    },
    #[serde(rename = "dense")]
    Dense { rates: Vec<Vec<f64>> },
}

fn default_truncation() -> usize {
    200
}

impl ChainSpec {
    pub fn to_generator(&self) -> Result<GeneratorMatrix, ChainError> {
        match self {
            ChainSpec::TwoState { lambda, mu } => two_state_generator(*lambda, *mu),
            ChainSpec::EqualRateBd { r, truncate } => {
                let spec = BirthDeathSpec::equal_rate(*r, *truncate)?;
                truncate_birth_death(&spec, *truncate)
            }
            ChainSpec::BirthDeath { truncate, .. } => {
                let spec = self
                    .to_birth_death()?
                    .expect("birth-death variant always yields a spec");
                truncate_birth_death(&spec, *truncate)
            }
            ChainSpec::Dense { rates } => validate_generator(rates),
        }
    }

    /// The birth-death view, when the spec has one.
    pub fn to_birth_death(&self) -> Result<Option<BirthDeathSpec>, ChainError> {
        match self {
            ChainSpec::EqualRateBd { r, truncate } => {
                Ok(Some(BirthDeathSpec::equal_rate(*r, *truncate)?))
            }
            ChainSpec::BirthDeath {
                birth,
                death,
                truncate,
            } => Ok(Some(BirthDeathSpec::new(
                RateSequence::new(birth.clone(), None)?,
                RateSequence::new(death.clone(), None)?,
                *truncate,
            )?)),
            _ => Ok(None),
        }
    }
}
