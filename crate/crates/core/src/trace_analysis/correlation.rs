use serde::{Deserialize, Serialize};

use crate::dynamics::Announcement;
use crate::{Error, Result};

pub const MIN_CORRELATION_TRIALS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCovariance {
    pub u: usize,
    pub v: usize,
    pub covariance: f64,
    pub std_error: f64,
    pub trials: usize,
}

/// Sample covariance of the indicators `C^T(u) = 1` and `C^T(v) = 1` across
/// independent trials. `states[i]` holds trial `i`'s announcements at the
/// common step `T`.
///
/// The standard error is that of the mean of `(a_i - mean_a)(b_i - mean_b)`.
pub fn pair_correlation(states: &[Vec<Announcement>], pairs: &[(usize, usize)]) -> Result<Vec<PairCovariance>> {
    let m = states.len();
    if m < MIN_CORRELATION_TRIALS {
        return Err(Error::Underpowered(format!(
            "{m} trials; pair correlation needs at least {MIN_CORRELATION_TRIALS}"
        )));
    }
    let n = states[0].len();
    if states.iter().any(|s| s.len() != n) {
        return Err(Error::invalid("trials disagree on node count"));
    }
    let mf = m as f64;
    pairs
        .iter()
        .map(|&(u, v)| {
            if u >= n || v >= n {
                return Err(Error::invalid(format!("pair ({u}, {v}) out of range")));
            }
            let ind = |s: &Vec<Announcement>, x: usize| (s[x] == Announcement::Correct) as u8 as f64;
            let mean_a = states.iter().map(|s| ind(s, u)).sum::<f64>() / mf;
            let mean_b = states.iter().map(|s| ind(s, v)).sum::<f64>() / mf;
            let z: Vec<f64> = states
                .iter()
                .map(|s| (ind(s, u) - mean_a) * (ind(s, v) - mean_b))
                .collect();
            let mean_z = z.iter().sum::<f64>() / mf;
            let var_z = z.iter().map(|x| (x - mean_z).powi(2)).sum::<f64>() / (mf - 1.0);
            Ok(PairCovariance {
                u,
                v,
                covariance: mean_z * mf / (mf - 1.0),
                std_error: (var_z / mf).sqrt(),
                trials: m,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, stream_rng};
    use rand::Rng;

    fn indicator_states(m: usize, seed: u64, coupled: bool) -> Vec<Vec<Announcement>> {
        let mut rng = stream_rng(seed, stream::AUX);
        (0..m)
            .map(|_| {
                let a = rng.random::<f64>() < 0.7;
                let b = if coupled { a } else { rng.random::<f64>() < 0.4 };
                vec![Announcement::from_bit(a), Announcement::from_bit(b)]
            })
            .collect()
    }

    #[test]
    fn self_pair_is_variance() {
        let s = indicator_states(5000, 1, false);
        let c = pair_correlation(&s, &[(0, 0)]).unwrap()[0];
        let p = s.iter().filter(|x| x[0] == Announcement::Correct).count() as f64 / 5000.0;
        let var = p * (1.0 - p) * 5000.0 / 4999.0;
        assert!((c.covariance - var).abs() < 1e-12);
    }

    #[test]
    fn independent_pair_is_near_zero() {
        let s = indicator_states(20_000, 2, false);
        let c = pair_correlation(&s, &[(0, 1)]).unwrap()[0];
        assert!(c.covariance.abs() <= 3.0 * c.std_error, "{c:?}");
        let coupled = pair_correlation(&indicator_states(20_000, 3, true), &[(0, 1)]).unwrap()[0];
        assert!(coupled.covariance > 0.2);
    }

    #[test]
    fn too_few_trials() {
        let s = indicator_states(999, 4, false);
        assert!(matches!(pair_correlation(&s, &[(0, 1)]), Err(Error::Underpowered(_))));
    }
}
