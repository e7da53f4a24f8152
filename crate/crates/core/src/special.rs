//! Scalar special functions for Erlang-type integrals.

pub fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

// Above this argument the integration-by-parts recursions are stable and the
// power series would need too many terms.
fn recursion_threshold(k: u32) -> f64 {
    30.0 + 2.0 * k as f64
}

/// `∫_0^1 t^{k-1} e^{-z t} dt` for `k >= 1`, `z >= 0`.
pub fn g_lower(k: u32, z: f64) -> f64 {
    debug_assert!(k >= 1 && z >= 0.0);
    if z == 0.0 {
        return 1.0 / k as f64;
    }
    if z > recursion_threshold(k) {
        // ∫ t^{m} e^{-zt} = -e^{-z}/z + (m/z) ∫ t^{m-1} e^{-zt}
        let ez = (-z).exp();
        let mut g = -(-z).exp_m1() / z;
        for m in 1..k {
            g = -ez / z + (m as f64 / z) * g;
        }
        return g;
    }
    // e^{-z} Σ_n z^n / (k (k+1) ... (k+n))
    let mut term = 1.0 / k as f64;
    let mut sum = term;
    let mut n = 0u32;
    loop {
        n += 1;
        term *= z / (k + n) as f64;
        sum += term;
        if term < 1e-17 * sum || n > 10_000 {
            break;
        }
    }
    (-z).exp() * sum
}

/// `∫_0^1 (1-t)^{k-1} e^{-z t} dt` for `k >= 1`, `z >= 0`.
pub fn g_upper(k: u32, z: f64) -> f64 {
    debug_assert!(k >= 1 && z >= 0.0);
    if z == 0.0 {
        return 1.0 / k as f64;
    }
    if z > recursion_threshold(k) {
        // ∫ (1-t)^{m} e^{-zt} = 1/z - (m/z) ∫ (1-t)^{m-1} e^{-zt}
        let mut g = -(-z).exp_m1() / z;
        for m in 1..k {
            g = 1.0 / z - (m as f64 / z) * g;
        }
        return g;
    }
    // e^{-z} Σ_n z^n / (n! (k+n))
    let mut pois = 1.0;
    let mut sum = 1.0 / k as f64;
    let mut n = 0u32;
    loop {
        n += 1;
        pois *= z / n as f64;
        let term = pois / (k + n) as f64;
        sum += term;
        if (n as f64 > z && term < 1e-17 * sum) || n > 10_000 {
            break;
        }
    }
    (-z).exp() * sum
}

/// Regularized lower incomplete gamma `P(k, z)` for integer `k >= 1`.
pub fn gamma_p(k: u32, z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z > recursion_threshold(k) {
        return 1.0 - gamma_q(k, z);
    }
    // z^k/(k-1)! * g_lower(k, z), evaluated in logs to avoid overflow
    let log = k as f64 * z.ln() - ln_factorial(k - 1);
    (log.exp() * g_lower(k, z)).min(1.0)
}

/// `1 - P(k, z) = e^{-z} Σ_{m<k} z^m/m!`.
pub fn gamma_q(k: u32, z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    if z <= recursion_threshold(k) {
        return 1.0 - gamma_p(k, z);
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..k {
        term *= z / m as f64;
        sum += term;
    }
    (-z).exp() * sum
}

pub fn ln_factorial(n: u32) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// `∫_x^∞ w^n e^{-λ w} dw / n!  =  e^{-λx} Σ_{r<=n} (λx)^r/r! / λ^{n+1}`.
pub fn upper_poly_exp(n: u32, rate: f64, x: f64) -> f64 {
    gamma_q(n + 1, rate * x.max(0.0)) / rate.powi(n as i32 + 1)
}

/// `∫_0^x e^{-q(x-u)} f(u) du` for the Erlang(k, λ) density `f`, `q > 0`.
pub fn erlang_exp_convolution(k: u32, rate: f64, q: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let s = rate - q;
    let log_pow = k as f64 * (rate * x).ln() - ln_factorial(k - 1);
    if s >= 0.0 {
        (log_pow - q * x).exp() * g_lower(k, s * x)
    } else {
        (log_pow - rate * x).exp() * g_upper(k, -s * x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // composite Simpson on a smooth integrand; independent of the series above
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn g_functions_match_quadrature() {
        for k in [1u32, 2, 3, 5, 9] {
            for z in [0.0, 1e-9, 0.3, 2.0, 17.0, 48.0, 80.0, 300.0] {
                let lo = simpson(|t| t.powi(k as i32 - 1) * (-z * t).exp(), 0.0, 1.0, 200_000);
                let up = simpson(|t| (1.0 - t).powi(k as i32 - 1) * (-z * t).exp(), 0.0, 1.0, 200_000);
                assert!((g_lower(k, z) - lo).abs() <= 1e-10 * lo.max(1e-300) + 1e-15, "g_lower k={k} z={z}");
                assert!((g_upper(k, z) - up).abs() <= 1e-10 * up + 1e-15, "g_upper k={k} z={z}");
            }
        }
    }

    #[test]
    fn gamma_p_q_complement() {
        for k in [1u32, 2, 4, 7] {
            for z in [0.01, 0.5, 3.0, 10.0, 60.0] {
                let p = gamma_p(k, z);
                let q = gamma_q(k, z);
                assert!((p + q - 1.0).abs() < 1e-14);
                let direct: f64 = 1.0 - (-z as f64).exp() * (0..k).map(|m| z.powi(m as i32) / factorial(m)).sum::<f64>();
                assert!((p - direct).abs() < 1e-12, "k={k} z={z}");
            }
        }
        assert!((gamma_p(1, 1e-10) - 1e-10).abs() < 1e-20);
    }

    #[test]
    fn erlang_convolution_matches_quadrature() {
        for (k, rate) in [(1u32, 2.0f64), (2, 3.0), (4, 1.5)] {
            for q in [0.5, 3.0, 7.0] {
                for x in [0.1, 1.0, 4.0] {
                    let f = |u: f64| {
                        (-q * (x - u)).exp() * rate.powi(k as i32) * u.powi(k as i32 - 1) * (-rate * u).exp()
                            / factorial(k - 1)
                    };
                    let num = simpson(f, 0.0, x, 100_000);
                    let got = erlang_exp_convolution(k, rate, q, x);
                    assert!((got - num).abs() < 1e-11, "k={k} rate={rate} q={q} x={x}: {got} vs {num}");
                }
            }
        }
    }

    #[test]
    fn upper_poly_exp_values() {
        // n = 0: e^{-λx}/λ
        assert!((upper_poly_exp(0, 2.0, 1.5) - (-3.0f64).exp() / 2.0).abs() < 1e-15);
        // n = 1, λ = 1: (1 + x) e^{-x}
        assert!((upper_poly_exp(1, 1.0, 2.0) - 3.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert!((upper_poly_exp(3, 1.3, 0.0) - 1.0 / 1.3f64.powi(4)).abs() < 1e-14);
    }
}
