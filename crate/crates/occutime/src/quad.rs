//! Adaptive Simpson quadrature and a fixed 5-point Gauss-Legendre rule.

/// Adaptive Simpson integration of `f` on `[a, b]` to absolute tolerance
/// `tol`. Recursion depth is capped; on hitting the cap the best estimate
/// is used, which keeps the routine total on rough integrands.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let c = 0.5 * (a + b);
    let fa = f(a);
    let fb = f(b);
    let fc = f(c);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_step(f, a, b, fa, fb, fc, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (a + c);
    let e = 0.5 * (c + b);
    let fd = f(d);
    let fe = f(e);
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, c, fa, fc, fd, left, 0.5 * tol, depth - 1)
            + simpson_step(f, c, b, fc, fb, fe, right, 0.5 * tol, depth - 1)
    }
}

// Nodes/weights for 5-point Gauss-Legendre on [-1, 1].
const GL5_X: [f64; 5] = [
    -0.906179845938663992797626878299,
    -0.538469310105683091036314420700,
    0.0,
    0.538469310105683091036314420700,
    0.906179845938663992797626878299,
];
const GL5_W: [f64; 5] = [
    0.236926885056189087514264040720,
    0.478628670499366468041291514836,
    0.568888888888888888888888888889,
    0.478628670499366468041291514836,
    0.236926885056189087514264040720,
];

/// 5-point Gauss-Legendre quadrature on `[a, b]`; exact for degree <= 9.
pub fn gauss5<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in GL5_X.iter().zip(GL5_W.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_exp() {
        let v = adaptive_simpson(&|x: f64| (-x).exp(), 0.0, 5.0, 1e-10);
        assert!((v - (1.0 - (-5.0f64).exp())).abs() < 1e-9);
    }

    #[test]
    fn simpson_sqrt_singularity_endpoint() {
        // integrable endpoint behavior like the densities near x = t
        let v = adaptive_simpson(&|x: f64| 1.0 / x.sqrt(), 1e-12, 1.0, 1e-9);
        assert!((v - 2.0).abs() < 1e-5);
    }

    #[test]
    fn gauss5_polynomial_exact() {
        let v = gauss5(&|x: f64| x.powi(9) - 3.0 * x.powi(4) + 1.0, -1.0, 2.0);
        let exact = (2.0f64.powi(10) - 1.0) / 10.0 - 3.0 * (2.0f64.powi(5) + 1.0) / 5.0 + 3.0;
        assert!((v - exact).abs() < 1e-12);
    }
}
