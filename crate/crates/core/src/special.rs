//! Special functions used by the Dirichlet machinery.

pub use statrs::function::gamma::{digamma, ln_gamma};

/// Trigamma function, the derivative of [`digamma`].
pub fn trigamma(mut x: f64) -> f64 {
    if x <= 0.0 && x.fract() == 0.0 {
        return f64::INFINITY;
    }
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // asymptotic expansion, Bernoulli-number coefficients
    let series = inv
        + 0.5 * inv2
        + inv * inv2
            * (1.0 / 6.0
                - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0)))));
    acc + series
}

/// Regularized lower incomplete gamma function P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= a + 1.0 {
        return statrs::function::gamma::gamma_lr(a, x);
    }
    // power series, in log space so tiny x does not underflow before the end
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = a;
    while term > 1e-17 * sum {
        k += 1.0;
        term *= x / k;
        sum += term;
    }
    (a * x.ln() - x - ln_gamma(a + 1.0) + sum.ln()).exp()
}

/// Log density of Gamma(shape, 1) evaluated at `exp(log_x)`.
pub fn gamma_log_pdf_at_log(shape: f64, log_x: f64) -> f64 {
    (shape - 1.0) * log_x - log_x.exp() - ln_gamma(shape)
}

/// Implicit reparameterization derivative `d ln x / d shape` for `x ~ Gamma(shape, 1)`.
///
/// Holding the CDF value `u = P(shape, x)` fixed, `dx/dshape = -(dP/dshape) / pdf(x)`.
/// The ratio is evaluated in log space so that very small draws (shape well
/// below one) do not underflow.
pub fn gamma_log_sample_grad(shape: f64, log_x: f64) -> f64 {
    let x = log_x.exp();
    if x > 400.0 {
        return gamma_log_sample_grad_fd(shape, log_x);
    }
    // R = Gamma(a) * sum_n x^n / Gamma(a+n+1) * (ln x - psi(a+n+1)) ; d ln x / da = -R
    let lg_a = ln_gamma(shape);
    let mut log_coef = lg_a - ln_gamma(shape + 1.0); // n = 0
    let mut psi = digamma(shape + 1.0);
    let mut sum = 0.0;
    let mut n = 0usize;
    loop {
        let term = log_coef.exp();
        let contrib = term * (log_x - psi);
        sum += contrib;
        let an = shape + n as f64 + 1.0;
        if (n as f64) > x - shape && term < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
        if n > 100_000 {
            break;
        }
        log_coef += log_x - an.ln();
        psi += 1.0 / an;
        n += 1;
    }
    -sum
}

fn gamma_log_sample_grad_fd(shape: f64, log_x: f64) -> f64 {
    let x = log_x.exp();
    let h = 1e-5 * shape.max(1.0);
    let dp = (gamma_p(shape + h, x) - gamma_p((shape - h).max(1e-12), x)) / (2.0 * h);
    let log_xpdf = shape * log_x - x - ln_gamma(shape);
    -dp / log_xpdf.exp()
}

/// Inverse CDF of Gamma(shape, 1), returned as `ln x`.
///
/// Newton iterations on `t = ln x` guarded by bisection.
pub fn gamma_log_quantile(shape: f64, u: f64) -> f64 {
    let u = u.clamp(1e-300, 1.0 - 1e-16);
    // small-x limit P ~ x^a / Gamma(a+1) gives a good start for small shapes
    let mut t = if shape < 1.0 {
        ((u.ln() + ln_gamma(shape + 1.0)) / shape).min(0.0)
    } else {
        // Wilson-Hilferty start
        let z = normal_quantile(u);
        let c = 1.0 / (9.0 * shape);
        let v = (1.0 - c + z * c.sqrt()).max(1e-3);
        (shape * v * v * v).ln()
    };
    let (mut lo, mut hi) = (-1e4_f64, 1e4_f64.ln().max(t + 10.0));
    for _ in 0..200 {
        let p = gamma_p(shape, t.exp());
        let f = p - u;
        if f > 0.0 {
            hi = hi.min(t);
        } else {
            lo = lo.max(t);
        }
        let slope = gamma_log_pdf_at_log(shape, t).exp() * t.exp();
        let mut next = if slope > 0.0 && slope.is_finite() {
            t - f / slope
        } else {
            f64::NAN
        };
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() < 1e-14 * t.abs().max(1.0) {
            return next;
        }
        t = next;
    }
    t
}

/// Standard normal quantile (Acklam's rational approximation).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let p = p.clamp(1e-300, 1.0 - 1e-16);
    let plow = 0.02425;
    if p < plow {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trigamma_known_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((trigamma(1.0) - pi2_6).abs() < 1e-12);
        assert!((trigamma(0.5) - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-11);
        assert!((trigamma(2.0) - (pi2_6 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn trigamma_is_digamma_derivative() {
        for &x in &[0.3, 1.7, 4.2, 12.0] {
            let h = 1e-5;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!((fd - trigamma(x)).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &a in &[0.05, 0.5, 1.0, 3.0, 40.0] {
            for &u in &[0.01, 0.3, 0.5, 0.9, 0.999] {
                let t = gamma_log_quantile(a, u);
                let p = gamma_p(a, t.exp());
                assert!((p - u).abs() < 1e-9, "a={a} u={u} p={p}");
            }
        }
    }

    #[test]
    fn implicit_grad_matches_quantile_difference() {
        // d ln x / da at fixed u equals the derivative of the log quantile
        for &a in &[0.2, 1.0, 2.5, 30.0] {
            for &u in &[0.1, 0.5, 0.9] {
                let t = gamma_log_quantile(a, u);
                let h = 1e-5 * a;
                let fd = (gamma_log_quantile(a + h, u) - gamma_log_quantile(a - h, u)) / (2.0 * h);
                let g = gamma_log_sample_grad(a, t);
                assert!((fd - g).abs() < 1e-5 * g.abs().max(1.0), "a={a} u={u} fd={fd} g={g}");
            }
        }
    }

    #[test]
    fn implicit_grad_large_draw_branch() {
        let a = 450.0;
        let u = 0.6;
        let t = gamma_log_quantile(a, u);
        let h = 1e-4 * a;
        let fd = (gamma_log_quantile(a + h, u) - gamma_log_quantile(a - h, u)) / (2.0 * h);
        let g = gamma_log_sample_grad(a, t);
        assert!((fd - g).abs() < 1e-4 * g.abs(), "fd={fd} g={g}");
    }
}
