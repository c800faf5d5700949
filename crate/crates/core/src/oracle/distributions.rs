use statrs::distribution::{Binomial, DiscreteCDF};
use statrs::function::factorial::ln_binomial;

use crate::{Error, Result};

fn check(r: u64, p: f64) -> Result<()> {
    if r == 0 {
        return Err(Error::invalid("negative binomial needs at least one success"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("success rate {p} not in (0, 1]")));
    }
    Ok(())
}

/// Probability that the `r`-th success of independent rate-`p` trials
/// happens on trial `t`: `C(t-1, r-1) p^r (1-p)^(t-r)`, evaluated in logs.
pub fn negbinom_pmf(t: u64, r: u64, p: f64) -> Result<f64> {
    check(r, p)?;
    if t < r {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(if t == r { 1.0 } else { 0.0 });
    }
    let ln = ln_binomial(t - 1, r - 1) + r as f64 * p.ln() + (t - r) as f64 * (-p).ln_1p();
    Ok(ln.exp())
}

/// `P(T <= t)`, through the binomial identity `P(T <= t) = P(Bin(t, p) >= r)`.
pub fn negbinom_cdf(t: u64, r: u64, p: f64) -> Result<f64> {
    check(r, p)?;
    if t < r {
        return Ok(0.0);
    }
    let bin = Binomial::new(p, t).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(bin.sf(r - 1))
}

pub fn geometric_pmf(t: u64, p: f64) -> Result<f64> {
    negbinom_pmf(t, 1, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_head() {
        assert!((negbinom_pmf(1, 1, 0.25).unwrap() - 0.25).abs() < 1e-15);
        assert!((geometric_pmf(3, 0.25).unwrap() - 0.75 * 0.75 * 0.25).abs() < 1e-15);
        assert_eq!(negbinom_pmf(3, 5, 0.1).unwrap(), 0.0);
        assert!(negbinom_pmf(3, 0, 0.1).is_err());
        assert!(negbinom_pmf(3, 1, 0.0).is_err());
        assert_eq!(negbinom_pmf(5, 5, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn geometric_normalizes() {
        for p in [0.5, 0.1, 1.0 / 7.0] {
            let n = 200;
            let head: f64 = (1..=n).map(|t| negbinom_pmf(t, 1, p).unwrap()).sum();
            let tail = (1.0 - p).powi(n as i32);
            assert!((head + tail - 1.0).abs() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn mean_matches_r_over_p() {
        let mean: f64 = (5..=6000).map(|t| t as f64 * negbinom_pmf(t, 5, 0.02).unwrap()).sum();
        assert!((mean - 250.0).abs() < 1e-6, "{mean}");
    }

    #[test]
    fn cdf_routes_agree() {
        for (r, p) in [(1, 0.25), (5, 0.02), (3, 0.5)] {
            let mut acc = 0.0;
            for t in 1..400 {
                acc += negbinom_pmf(t, r, p).unwrap();
                assert!((acc - negbinom_cdf(t, r, p).unwrap()).abs() < 1e-10, "r={r} p={p} t={t}");
            }
        }
    }
}
