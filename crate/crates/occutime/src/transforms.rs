//! Transform identities for the occupation-time density and their
//! numerical inversion.
//!
//! For a chain started at state 0, the time-Laplace transform of the
//! occupation density is `L(s, x) = (1/(s h(s))) exp(-x/h(s))` with `h`
//! the resolvent diagonal from [`crate::chain`]; the joint
//! Fourier-Laplace transform is `(1/s) / (1 - i s2 h(s))`. Densities for
//! chains without a closed form come from inverting `L` on a Talbot
//! contour, after the known point mass at `x = t` is removed
//! analytically.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::chain::{exit_rate, h_value, ChainError, GeneratorMatrix};
use crate::quad::adaptive_simpson;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("|h(s)| below representable range at s = {0}")]
    ZeroH(Complex64),
    #[error("contour summation produced a non-finite value")]
    NonFiniteResult,
    #[error("grid point {x} outside the open interval (0, {t})")]
    GridOutOfRange { x: f64, t: f64 },
    #[error("node count must be a positive even number, got {0}")]
    BadNodeCount(usize),
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("density values and grid lengths differ: {values} vs {grid}")]
    ShapeMismatch { values: usize, grid: usize },
    #[error("grid must be strictly increasing inside (0, t)")]
    BadGrid,
    #[error("atom mass {0} outside [0, 1]")]
    BadAtom(f64),
    #[error("density value {value:.3e} below tolerated undershoot at x = {x}")]
    NegativeDensity { x: f64, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Evaluator of the resolvent function `h(s)`. Blanket-implemented for
/// closures so analytic `h` formulas can stand in for a generator.
pub trait HFunction {
    fn h(&self, s: Complex64) -> Result<Complex64, ChainError>;
}

impl HFunction for GeneratorMatrix {
    fn h(&self, s: Complex64) -> Result<Complex64, ChainError> {
        h_value(self, s)
    }
}

impl<F> HFunction for F
where
    F: Fn(Complex64) -> Result<Complex64, ChainError>,
{
    fn h(&self, s: Complex64) -> Result<Complex64, ChainError> {
        self(s)
    }
}

/// Memoizing wrapper keyed on the bit pattern of `s`; one resolvent solve
/// per distinct contour node regardless of how many grid points share it.
pub struct CachedH<'a, H: HFunction + ?Sized> {
    inner: &'a H,
    cache: RefCell<HashMap<(u64, u64), Complex64>>,
}

impl<'a, H: HFunction + ?Sized> CachedH<'a, H> {
    pub fn new(inner: &'a H) -> Self {
        Self {
            inner,
            cache: RefCell::new(HashMap::new()),
        }
    }
}

impl<H: HFunction + ?Sized> HFunction for CachedH<'_, H> {
    fn h(&self, s: Complex64) -> Result<Complex64, ChainError> {
        let key = (s.re.to_bits(), s.im.to_bits());
        if let Some(v) = self.cache.borrow().get(&key) {
            return Ok(*v);
        }
        let v = self.inner.h(s)?;
        self.cache.borrow_mut().insert(key, v);
        Ok(v)
    }
}

/// A point in the joint transform domain.
#[derive(Debug, Clone, Copy)]
pub struct TransformPoint {
    pub s1: Complex64,
    pub s2: f64,
    pub x: f64,
}

/// `L_{f0}(s1, x) = (1/(s1 h(s1))) exp(-x / h(s1))`.
pub fn laplace_f0<H: HFunction + ?Sized>(
    h: &H,
    s1: Complex64,
    x: f64,
) -> Result<Complex64, TransformError> {
    let hv = h.h(s1)?;
    if hv.norm() < 1e-300 {
        return Err(TransformError::ZeroH(s1));
    }
    Ok((-x / hv).exp() / (s1 * hv))
}

/// `L_{\hat f0}(s1, s2) = (1/s1) / (1 - i s2 h(s1))`.
pub fn fourier_laplace_f0<H: HFunction + ?Sized>(
    h: &H,
    s1: Complex64,
    s2: f64,
) -> Result<Complex64, TransformError> {
    let hv = h.h(s1)?;
    Ok((1.0 / s1) / (Complex64::new(1.0, 0.0) - Complex64::i() * s2 * hv))
}

/// `L_{F0}(s1, x) = (1/s1) exp(-x / h(s1))`, the transform of the
/// survival function `F_0(t, x) = P(occupation > x)`.
pub fn survival_transform<H: HFunction + ?Sized>(
    h: &H,
    s1: Complex64,
    x: f64,
) -> Result<Complex64, TransformError> {
    let hv = h.h(s1)?;
    if hv.norm() < 1e-300 {
        return Err(TransformError::ZeroH(s1));
    }
    Ok((-x / hv).exp() / s1)
}

// Talbot contour parameters (cotangent contour with tuned coefficients):
// s(theta) = (M/t) (SIGMA + MU theta cot(ALPHA theta) + i NU theta).
const TALBOT_SIGMA: f64 = -0.6122;
const TALBOT_MU: f64 = 0.5017;
const TALBOT_ALPHA: f64 = 0.6407;
const TALBOT_NU: f64 = 0.2645;

/// Inverse Laplace transform of `f` at time `t` by midpoint summation
/// over a Talbot contour with `nodes` midpoints on the full contour
/// (so `nodes/2` transform evaluations by conjugate symmetry).
pub fn invert_laplace<F>(f: F, t: f64, nodes: usize) -> Result<f64, TransformError>
where
    F: Fn(Complex64) -> Result<Complex64, TransformError>,
{
    if t <= 0.0 {
        return Err(TransformError::BadHorizon(t));
    }
    if nodes == 0 || nodes % 2 != 0 {
        return Err(TransformError::BadNodeCount(nodes));
    }
    let m = nodes as f64;
    let scale = m / t;
    let step = 2.0 * std::f64::consts::PI / m;
    let mut sum = 0.0_f64;
    for j in 0..nodes / 2 {
        let theta = (j as f64 + 0.5) * step;
        let a = TALBOT_ALPHA * theta;
        let cot = a.cos() / a.sin();
        let s = scale
            * Complex64::new(
                TALBOT_SIGMA + TALBOT_MU * theta * cot,
                TALBOT_NU * theta,
            );
        // d s / d theta
        let dcot = TALBOT_MU * (cot - TALBOT_ALPHA * theta * (1.0 + cot * cot));
        let ds = scale * Complex64::new(dcot, TALBOT_NU);
        let term = ((s * t).exp() * f(s)? * ds).im;
        sum += term;
    }
    let result = 2.0 / m * sum;
    if !result.is_finite() {
        return Err(TransformError::NonFiniteResult);
    }
    Ok(result)
}

pub const DEFAULT_NODES: usize = 64;

/// Atom-at-`t` mass plus a continuous density on `(0, t)`.
///
/// The continuous part is carried both as samples on a grid and, when the
/// producer has one, as an exact evaluator; integration and CDF queries
/// use the evaluator if present and interpolate otherwise.
#[derive(Clone)]
pub struct OccupationDensity {
    t: f64,
    atom_at_t: f64,
    grid: Vec<f64>,
    values: Vec<f64>,
    density_fn: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl std::fmt::Debug for OccupationDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OccupationDensity")
            .field("t", &self.t)
            .field("atom_at_t", &self.atom_at_t)
            .field("grid_len", &self.grid.len())
            .field("has_density_fn", &self.density_fn.is_some())
            .finish()
    }
}

/// Numerical undershoot tolerated before a value is treated as an error.
const NEGATIVE_TOLERANCE: f64 = 1e-9;

impl OccupationDensity {
    pub fn new(
        t: f64,
        atom_at_t: f64,
        grid: Vec<f64>,
        values: Vec<f64>,
        density_fn: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    ) -> Result<Self, TransformError> {
        if t <= 0.0 {
            return Err(TransformError::BadHorizon(t));
        }
        if !(0.0..=1.0).contains(&atom_at_t) {
            return Err(TransformError::BadAtom(atom_at_t));
        }
        if values.len() != grid.len() {
            return Err(TransformError::ShapeMismatch {
                values: values.len(),
                grid: grid.len(),
            });
        }
        for w in grid.windows(2) {
            if w[1] <= w[0] {
                return Err(TransformError::BadGrid);
            }
        }
        if let (Some(first), Some(last)) = (grid.first(), grid.last()) {
            if *first <= 0.0 || *last >= t {
                return Err(TransformError::BadGrid);
            }
        }
        for (&x, &v) in grid.iter().zip(values.iter()) {
            if v < -NEGATIVE_TOLERANCE {
                return Err(TransformError::NegativeDensity { x, value: v });
            }
        }
        Ok(Self {
            t,
            atom_at_t,
            grid,
            values,
            density_fn,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.t
    }

    pub fn atom_at_t(&self) -> f64 {
        self.atom_at_t
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Continuous-part density at `x`, clamped at zero on output.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 || x >= self.t {
            return 0.0;
        }
        let raw = match &self.density_fn {
            Some(f) => f(x),
            None => self.interpolate(x),
        };
        raw.max(0.0)
    }

    fn interpolate(&self, x: f64) -> f64 {
        match self.grid.binary_search_by(|g| g.partial_cmp(&x).unwrap()) {
            Ok(i) => self.values[i],
            Err(0) => self.values.first().copied().unwrap_or(0.0),
            Err(i) if i == self.grid.len() => self.values.last().copied().unwrap_or(0.0),
            Err(i) => {
                let (x0, x1) = (self.grid[i - 1], self.grid[i]);
                let (y0, y1) = (self.values[i - 1], self.values[i]);
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// Trapezoid mass of the sampled continuous part on its own grid.
    pub fn trapezoid_mass(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }

    /// Continuous-part mass by adaptive quadrature of the evaluator.
    pub fn continuous_mass(&self, tol: f64) -> f64 {
        adaptive_simpson(&|x| self.eval(x), 0.0, self.t, tol)
    }

    /// `atom + \int_0^t f` minus one.
    pub fn normalization_defect(&self) -> f64 {
        self.atom_at_t + self.continuous_mass(1e-9) - 1.0
    }

    /// `atom * t + \int x f(x) dx`, the mean occupation time.
    pub fn mean(&self) -> f64 {
        self.atom_at_t * self.t + adaptive_simpson(&|x| x * self.eval(x), 0.0, self.t, 1e-10)
    }

    /// CDF of the full law at `x` (right-continuous; jumps by the atom at
    /// `x = t`).
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x >= self.t {
            return 1.0;
        }
        adaptive_simpson(&|u| self.eval(u), 0.0, x, 1e-9).clamp(0.0, 1.0)
    }
}

pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Chebyshev-style grid of `n` interior points on `(0, t)`, clustered at
/// both endpoints where the continuous part varies fastest.
pub fn cosine_grid(t: f64, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|j| 0.5 * t * (1.0 - (std::f64::consts::PI * j as f64 / (n + 1) as f64).cos()))
        .collect()
}

/// `e^z - 1` at full relative precision even for tiny `z`.
fn expm1_complex(z: Complex64) -> Complex64 {
    let half = 0.5 * z.im;
    Complex64::new(
        z.re.exp_m1() * z.im.cos() - 2.0 * half.sin() * half.sin(),
        z.re.exp() * z.im.sin(),
    )
}

/// Continuous-part density at the grid points by Talbot inversion of the
/// atom-free transform, plus the exact atom `e^{-q0 t}`.
///
/// For each `x` the delta component's transform `e^{-q0 x} e^{-s x}` is
/// removed analytically and the remainder is shifted by `e^{s x}` so the
/// inversion runs at the elapsed time `t - x`; the shift keeps the
/// contour scale matched to the decay actually available, which is what
/// makes grid points arbitrarily close to `t` resolvable.
pub fn density_via_inversion(
    q: &GeneratorMatrix,
    t: f64,
    grid: &[f64],
    nodes: usize,
) -> Result<OccupationDensity, TransformError> {
    let q0 = exit_rate(q, 0);
    let cache: RefCell<HashMap<(u64, u64), Complex64>> = RefCell::new(HashMap::new());
    let w = |s: Complex64| -> Result<Complex64, ChainError> {
        let key = (s.re.to_bits(), s.im.to_bits());
        if let Some(&v) = cache.borrow().get(&key) {
            return Ok(v);
        }
        let v = crate::chain::resolvent_shift(q, s)?;
        cache.borrow_mut().insert(key, v);
        Ok(v)
    };
    density_via_inversion_shift(&w, q0, t, grid, nodes)
}

/// As [`density_via_inversion`] but with the shift `w(s) = s - 1/h(s)`
/// supplied directly.
///
/// `w` must be evaluated cancellation-free (it is `O(q_0)` everywhere, so
/// forming it as a difference of two `O(|s|)` quantities squanders
/// precision); every other factor of the integrand is then assembled
/// without large cancellations, which is what keeps the contour's
/// `e^{0.17 nodes}` roundoff amplification harmless for grid points close
/// to the horizon.
pub fn density_via_inversion_shift<W>(
    w: &W,
    q0: f64,
    t: f64,
    grid: &[f64],
    nodes: usize,
) -> Result<OccupationDensity, TransformError>
where
    W: Fn(Complex64) -> Result<Complex64, ChainError>,
{
    if t <= 0.0 {
        return Err(TransformError::BadHorizon(t));
    }
    for &x in grid {
        if x <= 0.0 || x >= t {
            return Err(TransformError::GridOutOfRange { x, t });
        }
    }
    let mut values = Vec::with_capacity(grid.len());
    for &x in grid {
        let atom_free = |s: Complex64| -> Result<Complex64, TransformError> {
            let ws = w(s)?;
            // e^{sx} L(s, x) - e^{-q0 x}
            //   = e^{-q0 x} [expm1(x(w + q0)) (s - w)/s - w/s]
            let delta = x * (ws + q0);
            Ok((-q0 * x).exp() * (expm1_complex(delta) * (s - ws) / s - ws / s))
        };
        values.push(invert_laplace(atom_free, t - x, nodes)?);
    }
    OccupationDensity::new(t, (-q0 * t).exp(), grid.to_vec(), values, None)
}
