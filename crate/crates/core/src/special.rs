//! Integrals of Pareto-Lomax type kernels `(1 + r)^-c` that every closed form
//! in the crate reduces to.

use statrs::function::gamma::ln_gamma;

/// `expm1(z) / z`, continuous at 0.
pub fn expm1_ratio(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 + z / 2.0 + z * z / 6.0
    } else {
        z.exp_m1() / z
    }
}

/// `∫_lo^hi (1 + x)^-c dx` for `-1 < lo <= hi`, any real `c` (logarithmic at `c = 1`).
pub fn lomax_kernel_integral(c: f64, lo: f64, hi: f64) -> f64 {
    let base = (1.0 + lo).powf(1.0 - c);
    let l = ((hi - lo) / (1.0 + lo)).ln_1p();
    base * l * expm1_ratio((1.0 - c) * l)
}

/// Lower-incomplete beta-prime integral
/// `J(a, b, y) = ∫_0^y r^(a-1) (1 + r)^-(a+b) dr` for integer `a >= 1` and any
/// real `b` (the integral is finite for finite `y` even when `b <= 0`).
///
/// With `s = r / (1 + r)` this is `B_x(a, b)` at `x = y / (1 + y)`. Below
/// `x = 1/2` the hypergeometric power series converges geometrically; above it
/// the binomial expansion of `s^(a-1)` in powers of `1 - s` is a finite sum of
/// `(1 - (1 + y)^-c) / c` terms, each evaluated through `expm1` so that the
/// poles of the Gamma-function form at `b ∈ {0, -1, ...}` never appear.
pub fn beta_prime_partial(a: u32, b: f64, y: f64) -> f64 {
    assert!(a >= 1, "beta_prime_partial needs a >= 1");
    if y <= 0.0 {
        return 0.0;
    }
    let x = y / (1.0 + y);
    if x <= 0.5 {
        let a = a as f64;
        let mut coef = 1.0;
        let mut xp = x.powf(a);
        let mut sum = 0.0;
        let mut comp = 0.0;
        for n in 0..400 {
            let nf = n as f64;
            let term = coef * xp / (a + nf);
            // Kahan
            let t = term - comp;
            let s = sum + t;
            comp = (s - sum) - t;
            sum = s;
            if n > 2 && term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            coef *= (nf + 1.0 - b) / (nf + 1.0);
            xp *= x;
        }
        sum
    } else {
        let l = y.ln_1p();
        let m = a - 1;
        let mut binom = 1.0;
        let mut sum = 0.0;
        for j in 0..=m {
            let c = b + j as f64;
            let g = l * expm1_ratio(-c * l);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * binom * g;
            binom *= (m - j) as f64 / (j + 1) as f64;
        }
        sum
    }
}

/// Rising factorial ratio `Γ(b + a) / Γ(b)` for integer `a`, as an exact product.
pub fn rising(b: f64, a: u32) -> f64 {
    (0..a).map(|i| b + i as f64).product()
}

pub fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Gamma-sum survival of a beta-prime(`a`, `b`) law evaluated in log space:
/// `Σ_{k<a} Γ(b+k) / (Γ(k+1) Γ(b)) · t^k / (1+t)^(b+k)`, valid for `b > 0`.
pub fn gamma_sum_survival(a: u32, b: f64, t: f64) -> f64 {
    let lg_b = ln_gamma(b);
    let l1p = t.ln_1p();
    (0..a)
        .map(|k| {
            let kf = k as f64;
            let mut log_term = ln_gamma(b + kf) - ln_gamma(kf + 1.0) - lg_b - (b + kf) * l1p;
            if k > 0 {
                if t == 0.0 {
                    return 0.0;
                }
                log_term += kf * t.ln();
            }
            log_term.exp()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson in `v = ln(1 + r)`, independent of the series/binomial split.
    fn quad_beta_prime(a: u32, b: f64, y: f64) -> f64 {
        let vmax = y.ln_1p();
        let n = 200_000;
        let h = vmax / n as f64;
        let f = |v: f64| {
            let r = v.exp_m1();
            r.powi(a as i32 - 1) * (-(a as f64 + b) * v).exp() * v.exp()
        };
        let mut s = f(0.0) + f(vmax);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn beta_prime_partial_matches_quadrature() {
        for &a in &[1u32, 2, 3, 4, 5] {
            for &b in &[-1.5, -0.7, 0.0, 0.3, 1.0, 1.3, 2.3, 3.5] {
                for &y in &[0.01, 0.3, 1.0, 1.7, 5.0, 40.0, 1e3] {
                    let got = beta_prime_partial(a, b, y);
                    let want = quad_beta_prime(a, b, y);
                    let rel = (got - want).abs() / want.abs();
                    assert!(rel < 1e-9, "a={a} b={b} y={y}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn beta_prime_partial_limit_is_beta_function() {
        // B(a, b) = (a-1)! / (b (b+1) ... (b+a-1))
        for &a in &[1u32, 3, 5] {
            for &b in &[0.3, 1.3, 2.3] {
                let full = factorial(a - 1) / rising(b, a);
                let tail = full * gamma_sum_survival(a, b, 1e12);
                let got = beta_prime_partial(a, b, 1e12);
                assert!((got + tail - full).abs() / full < 1e-9);
            }
        }
    }

    #[test]
    fn kernel_integral_closed_forms() {
        let v = lomax_kernel_integral(2.3, 0.0, 1.0);
        assert!((v - (1.0 - 2f64.powf(-1.3)) / 1.3).abs() < 1e-14);
        let v = lomax_kernel_integral(1.0, 1.0, 3.0);
        assert!((v - 2f64.ln()).abs() < 1e-14);
    }
}
