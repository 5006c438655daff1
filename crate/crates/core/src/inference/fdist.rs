//! F-distribution quantiles through the regularized incomplete beta function.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const MAX_CF_ITER: usize = 10_000;
const CF_EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Continued fraction for `I_x(a, b)` (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_CF_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            return Ok(h);
        }
    }
    Err(Error::Numeric(format!(
        "incomplete beta continued fraction did not converge after {MAX_CF_ITER} iterations (a={a}, b={b}, x={x})"
    )))
}

/// Regularized incomplete beta `I_x(a, b)` together with its complement
/// `1 − I_x(a, b)`, each computed without cancellation. `y` must equal `1 − x`
/// and is passed separately so callers can supply it exactly.
fn beta_reg_pair(a: f64, b: f64, x: f64, y: f64) -> Result<(f64, f64)> {
    if x <= 0.0 {
        return Ok((0.0, 1.0));
    }
    if y <= 0.0 {
        return Ok((1.0, 0.0));
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * y.ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        let v = front * beta_cf(a, b, x)? / a;
        Ok((v, 1.0 - v))
    } else {
        let w = front * beta_cf(b, a, y)? / b;
        Ok((1.0 - w, w))
    }
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn beta_reg(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::contract(format!("beta parameters must be positive (a={a}, b={b})")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::contract(format!("x = {x} outside [0, 1]")));
    }
    Ok(beta_reg_pair(a, b, x, 1.0 - x)?.0)
}

fn check_dof(d1: f64, d2: f64) -> Result<()> {
    if !(d1 >= 1.0 && d2 >= 1.0) {
        return Err(Error::contract(format!("degrees of freedom must be ≥ 1 (got {d1}, {d2})")));
    }
    Ok(())
}

/// CDF and survival function of `F(d1, d2)` at `x`.
fn f_cdf_sf(d1: f64, d2: f64, x: f64) -> Result<(f64, f64)> {
    if x <= 0.0 {
        return Ok((0.0, 1.0));
    }
    if x.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let denom = d1 * x + d2;
    beta_reg_pair(0.5 * d1, 0.5 * d2, d1 * x / denom, d2 / denom)
}

pub fn f_cdf(d1: f64, d2: f64, x: f64) -> Result<f64> {
    check_dof(d1, d2)?;
    Ok(f_cdf_sf(d1, d2, x)?.0)
}

fn f_ln_pdf(d1: f64, d2: f64, x: f64) -> f64 {
    let (a, b) = (0.5 * d1, 0.5 * d2);
    let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    a * (d1 / d2).ln() + (a - 1.0) * x.ln() - (a + b) * (1.0 + d1 * x / d2).ln() - ln_beta
}

/// Inverse CDF of the F-distribution with `(d1, d2)` degrees of freedom.
///
/// Brackets the root in `ln x`, then alternates safeguarded Newton steps
/// with bisection until the bracket is relatively tighter than 1e-14.
pub fn f_quantile(d1: f64, d2: f64, p: f64) -> Result<f64> {
    check_dof(d1, d2)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::contract(format!("probability {p} outside (0, 1)")));
    }
    // residual measured on whichever tail is smaller, to keep precision for p near 1
    let resid = |x: f64| -> Result<f64> {
        let (cdf, sf) = f_cdf_sf(d1, d2, x)?;
        Ok(if p <= 0.5 { cdf - p } else { (1.0 - p) - sf })
    };

    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    let mut r = resid(1.0)?;
    if r == 0.0 {
        return Ok(1.0);
    }
    let mut expansions = 0;
    if r < 0.0 {
        while resid(hi)? < 0.0 {
            lo = hi;
            hi *= 4.0;
            expansions += 1;
            if expansions > 600 {
                return Err(Error::Numeric(format!("could not bracket F({d1},{d2}) quantile for p={p}")));
            }
        }
    } else {
        while resid(lo)? > 0.0 {
            hi = lo;
            lo /= 4.0;
            expansions += 1;
            if expansions > 600 {
                return Err(Error::Numeric(format!("could not bracket F({d1},{d2}) quantile for p={p}")));
            }
        }
    }

    let mut x = (lo * hi).sqrt();
    for iter in 0..500 {
        r = resid(x)?;
        if r == 0.0 {
            return Ok(x);
        }
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if (hi - lo) <= 1e-14 * hi {
            return Ok(0.5 * (lo + hi));
        }
        let newton = x - r / f_ln_pdf(d1, d2, x).exp();
        x = if newton > lo && newton < hi && newton.is_finite() && iter % 8 != 7 {
            newton
        } else {
            (lo * hi).sqrt()
        };
    }
    Err(Error::Numeric(format!(
        "F({d1},{d2}) quantile for p={p} did not converge; bracket [{lo:e}, {hi:e}], residual {r:e}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_independent_beta_implementation() {
        for &(a, b) in &[(0.5, 0.5), (0.5, 30.0), (2.0, 3.0), (10.0, 60.0), (0.5, 60.0)] {
            for i in 1..40 {
                let x = i as f64 / 40.0;
                let ours = beta_reg(a, b, x).unwrap();
                let theirs = statrs::function::beta::beta_reg(a, b, x);
                assert!((ours - theirs).abs() < 1e-12, "a={a} b={b} x={x}: {ours} vs {theirs}");
            }
        }
    }

    #[test]
    fn median_of_f11_is_one() {
        assert!((f_quantile(1.0, 1.0, 0.5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf_and_is_monotone() {
        let mut prev = 0.0;
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let x = f_quantile(1.0, 27.0, p).unwrap();
            assert!(x > prev);
            prev = x;
            assert!((f_cdf(1.0, 27.0, x).unwrap() - p).abs() < 1e-12);
        }
        let x = f_quantile(3.0, 5.0, 0.999999).unwrap();
        assert!((1.0 - f_cdf(3.0, 5.0, x).unwrap() - 1e-6).abs() < 1e-15);
    }

    #[test]
    fn table_value_f_1_60() {
        // tabulated upper 5% point of F(1, 60)
        assert!((f_quantile(1.0, 60.0, 0.95).unwrap() - 4.0012).abs() < 1e-4);
    }

    #[test]
    fn bad_arguments() {
        assert!(f_quantile(0.0, 3.0, 0.5).is_err());
        assert!(f_quantile(1.0, 3.0, 1.0).is_err());
        assert!(beta_reg(1.0, 1.0, 1.5).is_err());
    }
}
