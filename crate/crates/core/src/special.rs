//! Chi-square distribution and Kolmogorov–Smirnov distances.

use alloc::vec::Vec;

use crate::error::{Error, Result};

const MAX_TERMS: usize = 500;
const EPS: f64 = 1e-14;
const TINY: f64 = 1e-300;

/// Regularized lower incomplete gamma `P(a, x)` and its complement `Q(a, x)`.
///
/// Series expansion below `x = a + 1`, Lentz continued fraction above.
fn incomplete_gamma(a: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    let log_prefactor = -x + a * libm::log(x) - libm::lgamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..MAX_TERMS {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        let p = (sum * libm::exp(log_prefactor)).min(1.0);
        (p, 1.0 - p)
    } else {
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=MAX_TERMS {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        let q = (libm::exp(log_prefactor) * h).min(1.0);
        (1.0 - q, q)
    }
}

fn check_args(x: f64, df: usize) -> Result<()> {
    if df == 0 {
        return Err(Error::DomainError("chi-square degrees of freedom must be positive"));
    }
    if !(x >= 0.0) {
        return Err(Error::DomainError("chi-square argument must be non-negative"));
    }
    Ok(())
}

/// `P(X ≤ x)` for `X ~ χ²_df`.
pub fn chisq_cdf(x: f64, df: usize) -> Result<f64> {
    check_args(x, df)?;
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    Ok(incomplete_gamma(df as f64 / 2.0, x / 2.0).0)
}

/// Upper tail `P(X > x)`, computed directly so small p-values keep their precision.
pub fn chisq_sf(x: f64, df: usize) -> Result<f64> {
    check_args(x, df)?;
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(incomplete_gamma(df as f64 / 2.0, x / 2.0).1)
}

/// One-sample Kolmogorov–Smirnov distance between `samples` and `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max(((i + 1) as f64 / n - f).max(f - i as f64 / n))
    })
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn closed_form_two_degrees_of_freedom() {
        assert_eq!(chisq_cdf(0.0, 2).unwrap(), 0.0);
        assert!(rel(chisq_cdf(2.0 * core::f64::consts::LN_2, 2).unwrap(), 0.5) < 1e-10);
        assert!(rel(chisq_cdf(4.605170, 2).unwrap(), 1.0 - libm::exp(-4.605170 / 2.0)) < 1e-10);
        assert!((chisq_cdf(4.605170, 2).unwrap() - 0.9).abs() < 1e-6);
        for &x in &[0.01, 0.3, 1.0, 2.5, 3.0, 7.0, 20.0, 60.0] {
            let exact = 1.0 - libm::exp(-x / 2.0);
            assert!(rel(chisq_cdf(x, 2).unwrap(), exact) < 1e-10, "x={x}");
            assert!(rel(chisq_sf(x, 2).unwrap(), libm::exp(-x / 2.0)) < 1e-10, "x={x}");
        }
    }

    #[test]
    fn one_degree_of_freedom_matches_erf() {
        for &x in &[0.001, 0.2, 1.0, 1.9, 2.1, 5.0, 9.0, 30.0] {
            let exact = libm::erf(libm::sqrt(x / 2.0));
            assert!(rel(chisq_cdf(x, 1).unwrap(), exact) < 1e-10, "x={x}");
            let upper = libm::erfc(libm::sqrt(x / 2.0));
            assert!(rel(chisq_sf(x, 1).unwrap(), upper) < 1e-9, "x={x}");
        }
        assert!((chisq_sf(9.0, 1).unwrap() - 0.0026997960632601866).abs() < 1e-12);
    }

    #[test]
    fn four_degrees_of_freedom_closed_form() {
        // P(2, x/2) = 1 - e^{-x/2}(1 + x/2)
        for &x in &[0.5, 3.0, 5.9, 6.1, 12.0] {
            let exact = 1.0 - libm::exp(-x / 2.0) * (1.0 + x / 2.0);
            assert!(rel(chisq_cdf(x, 4).unwrap(), exact) < 1e-10);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(chisq_cdf(-1.0, 2).is_err());
        assert!(chisq_cdf(1.0, 0).is_err());
        assert_eq!(chisq_cdf(f64::INFINITY, 3).unwrap(), 1.0);
    }

    #[test]
    fn monotone_and_tends_to_one() {
        for df in 1..6 {
            let mut prev = 0.0;
            for i in 0..400 {
                let c = chisq_cdf(i as f64 * 0.25, df).unwrap();
                assert!(c >= prev);
                prev = c;
            }
            assert!(chisq_cdf(500.0, df).unwrap() > 1.0 - 1e-12);
        }
    }

    #[test]
    fn ks_distances() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!(ks_distance(&xs, |x| x.clamp(0.0, 1.0)) <= 0.005 + 1e-12);
        assert_eq!(ks_two_sample(&xs, &xs), 0.0);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.5).collect();
        assert!((ks_two_sample(&xs, &shifted) - 0.5).abs() < 0.011);
    }
}
