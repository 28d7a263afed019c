use statrs::function::gamma::gamma;

/// Modified Bessel function of the second kind `K_nu(x)` for real order,
/// from `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt` with the
/// trapezoid rule (exponentially convergent for this integrand).
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k needs x > 0");
    if x > 700.0 {
        return 0.0;
    }
    const STEP: f64 = 0.02;
    let mut sum = 0.5 * (-x).exp();
    let mut k = 1usize;
    loop {
        let t = k as f64 * STEP;
        let term = (-x * t.cosh() + nu.abs() * t).exp() * 0.5 * (1.0 + (-2.0 * nu.abs() * t).exp());
        sum += term;
        if term < 1e-18 * sum || k > 200_000 {
            break;
        }
        k += 1;
    }
    sum * STEP
}

/// Matérn covariance `sigma2 2^{1-nu} / Gamma(nu) (kappa d)^nu K_nu(kappa d)`.
pub fn matern_cov(d: f64, sigma2: f64, kappa: f64, nu: f64) -> f64 {
    assert!(d >= 0.0 && sigma2 > 0.0 && kappa > 0.0 && nu > 0.0, "invalid matern arguments");
    let x = kappa * d;
    if x == 0.0 {
        return sigma2;
    }
    sigma2 * 2f64.powf(1.0 - nu) / gamma(nu) * x.powf(nu) * bessel_k(nu, x)
}
