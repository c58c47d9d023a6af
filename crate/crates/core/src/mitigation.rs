//! Dummy-count sampler, its DP check, and the noise-and-threshold histogram.
//!
//! The dummy count is `m = max(0, A + Z)` where `Z` is a two-sided
//! geometric variable with `Pr[Z = z] ∝ α^|z|`, `α = e^-ε`. Clamping at zero
//! piles the lower tail onto `m = 0`; that mass is `α^A / (1 + α)` and is
//! charged to `δ`, which is why `A` is the smallest shift keeping it `≤ δ`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum MitigationError {
    #[error("epsilon must be positive and finite, got {0}")]
    Epsilon(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    Delta(f64),
}

fn check_params(eps: f64, delta: f64) -> Result<(), MitigationError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(MitigationError::Epsilon(eps));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(MitigationError::Delta(delta));
    }
    Ok(())
}

/// Mass the clamp puts on zero: `Pr[A + Z <= 0] = α^A / (1 + α)`.
fn clamp_mass(alpha: f64, shift: u64) -> f64 {
    libm::pow(alpha, shift as f64) / (1.0 + alpha)
}

/// Smallest shift `A >= 0` with `α^A / (1 + α) <= δ`.
pub fn dummy_shift(eps: f64, delta: f64) -> Result<u64, MitigationError> {
    check_params(eps, delta)?;
    let alpha = libm::exp(-eps);
    let guess = libm::ceil(libm::log(delta * (1.0 + alpha)) / -eps).max(0.0) as u64;
    let mut a = guess;
    while a > 0 && clamp_mass(alpha, a - 1) <= delta {
        a -= 1;
    }
    while clamp_mass(alpha, a) > delta {
        a += 1;
    }
    Ok(a)
}

/// Two-sided geometric variable as the difference of two geometrics.
fn two_sided_geometric<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> i64 {
    let ln_alpha = libm::log(alpha);
    let mut geometric = || {
        // u in (0, 1]
        let u = 1.0 - rng.gen::<f64>();
        libm::floor(libm::log(u) / ln_alpha) as i64
    };
    geometric() - geometric()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DummySampler {
    eps: f64,
    delta: f64,
    shift: u64,
    alpha: f64,
}

impl DummySampler {
    pub fn new(eps: f64, delta: f64) -> Result<Self, MitigationError> {
        let shift = dummy_shift(eps, delta)?;
        Ok(DummySampler {
            eps,
            delta,
            shift,
            alpha: libm::exp(-eps),
        })
    }

    /// A sampler with an explicit shift, e.g. one too small for its δ.
    pub fn with_shift(eps: f64, delta: f64, shift: u64) -> Result<Self, MitigationError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(MitigationError::Epsilon(eps));
        }
        Ok(DummySampler {
            eps,
            delta,
            shift,
            alpha: libm::exp(-eps),
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn shift(&self) -> u64 {
        self.shift
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let z = two_sided_geometric(rng, self.alpha);
        (self.shift as i64 + z).max(0) as u64
    }

    /// Exact probability of drawing `m`.
    pub fn pmf(&self, m: u64) -> f64 {
        let a = self.alpha;
        if m == 0 {
            return clamp_mass(a, self.shift);
        }
        let d = (m as i64 - self.shift as i64).unsigned_abs();
        (1.0 - a) / (1.0 + a) * libm::pow(a, d as f64)
    }

    /// Upper end of the support enumerated by [`check_dp`].
    pub fn support_max(&self) -> u64 {
        self.shift + libm::ceil(50.0 / self.eps) as u64
    }
}

/// Draws one dummy count for the given parameters.
pub fn sample_dummy_count<R: Rng + ?Sized>(eps: f64, delta: f64, rng: &mut R) -> Result<u64, MitigationError> {
    Ok(DummySampler::new(eps, delta)?.sample(rng))
}

/// Checks `(eps, delta)`-DP of the loop length `k + m` against `k + 1 + m`.
///
/// Enumerates both pmfs over `[0, support_max + 1]` and tests every upper
/// and lower threshold set in both directions, which suffices for a
/// one-dimensional shift family. The exact hockey-stick divergence is
/// checked as well.
pub fn check_dp(sampler: &DummySampler, eps: f64, delta: f64) -> bool {
    let n = sampler.support_max() as usize + 2;
    let p: Vec<f64> = (0..n).map(|l| sampler.pmf(l as u64)).collect();
    let q: Vec<f64> = (0..n).map(|l| if l == 0 { 0.0 } else { p[l - 1] }).collect();
    let e = libm::exp(eps);
    // Relative slack only: exact ratios of e^ε occur on the upper tail.
    let slack = 1.0 + 1e-12;
    let holds = |a: f64, b: f64| a <= (e * b + delta) * slack;

    let suffix = |v: &[f64]| {
        let mut s = v.to_vec();
        for i in (0..s.len() - 1).rev() {
            s[i] += s[i + 1];
        }
        s
    };
    let (ps, qs) = (suffix(&p), suffix(&q));
    let (mut pp, mut qp) = (0.0, 0.0);
    for t in 0..n {
        pp += p[t];
        qp += q[t];
        let checks = [
            holds(ps[t], qs[t]),
            holds(qs[t], ps[t]),
            holds(pp, qp),
            holds(qp, pp),
        ];
        if !checks.iter().all(|&c| c) {
            return false;
        }
    }
    let hockey = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - e * y * slack).max(0.0))
            .sum::<f64>()
    };
    hockey(&p, &q) <= delta * slack && hockey(&q, &p) <= delta * slack
}

/// Brute-force DP check of the sampler built for `(eps, delta)`.
///
/// With `delta = 0` no finite shift is valid; the sampler is then given
/// the shift of the enumerated margin, and the check reports the failure.
pub fn verify_dummy_dp(eps: f64, delta: f64) -> bool {
    let sampler = if delta == 0.0 {
        match DummySampler::with_shift(eps, 0.0, libm::ceil(50.0 / eps) as u64) {
            Ok(s) => s,
            Err(_) => return false,
        }
    } else {
        match DummySampler::new(eps, delta) {
            Ok(s) => s,
            Err(_) => return false,
        }
    };
    check_dp(&sampler, eps, delta)
}

/// Release threshold `T = 1 + ln(1/(2δ))/ε`.
pub fn threshold(eps: f64, delta: f64) -> f64 {
    1.0 + libm::log(1.0 / (2.0 * delta)) / eps
}

/// Laplace(0, scale) by inverse CDF.
pub fn laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        if u == -0.5 {
            continue;
        }
        let mag = -scale * libm::log(1.0 - 2.0 * u.abs());
        return if u < 0.0 { -mag } else { mag };
    }
}

/// Probability that `count + Laplace(1/ε)` reaches the threshold.
pub fn survival_probability(count: f64, eps: f64, delta: f64) -> f64 {
    let gap = threshold(eps, delta) - count;
    if gap >= 0.0 {
        0.5 * libm::exp(-eps * gap)
    } else {
        1.0 - 0.5 * libm::exp(eps * gap)
    }
}

/// Adds Laplace(1/ε) noise to every count and keeps those at or above the
/// threshold.
pub fn noise_and_threshold<K: Ord + Clone, R: Rng + ?Sized>(
    counts: &BTreeMap<K, i64>,
    eps: f64,
    delta: f64,
    rng: &mut R,
) -> Result<BTreeMap<K, f64>, MitigationError> {
    check_params(eps, delta)?;
    let t = threshold(eps, delta);
    let mut out = BTreeMap::new();
    for (k, &c) in counts {
        let noisy = c as f64 + laplace(rng, 1.0 / eps);
        if noisy >= t {
            out.insert(k.clone(), noisy);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    /// Shift found by summing the pmf of Z directly rather than the closed form.
    fn shift_by_pmf_sum(eps: f64, delta: f64) -> u64 {
        let a = libm::exp(-eps);
        let c = (1.0 - a) / (1.0 + a);
        let lower_tail = |shift: u64| -> f64 {
            // Pr[Z <= -shift]
            (shift..shift + 20_000).map(|k| c * libm::pow(a, k as f64)).sum()
        };
        (0..).find(|&s| lower_tail(s) <= delta).unwrap()
    }

    #[test]
    fn shift_values() {
        assert_eq!(dummy_shift(0.1, 1e-9).unwrap(), 201);
        assert_eq!(shift_by_pmf_sum(0.1, 1e-9), 201);
        let ln2 = core::f64::consts::LN_2;
        assert_eq!(dummy_shift(ln2, 0.5).unwrap(), 1);
        assert_eq!(shift_by_pmf_sum(ln2, 0.5), 1);
    }

    #[test]
    fn shift_monotone_in_eps() {
        for delta in [1e-9, 1e-6, 1e-3, 0.1, 0.4] {
            assert!(dummy_shift(0.05, delta).unwrap() >= dummy_shift(0.1, delta).unwrap());
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(dummy_shift(0.0, 0.1).is_err());
        assert!(dummy_shift(0.1, 0.0).is_err());
        assert!(dummy_shift(0.1, 1.0).is_err());
        assert!(noise_and_threshold(&BTreeMap::<u8, i64>::new(), -1.0, 0.1, &mut rng_from(0)).is_err());
    }

    #[test]
    fn pmf_sums_to_one() {
        let s = DummySampler::new(0.1, 1e-9).unwrap();
        let total: f64 = (0..=s.support_max()).map(|m| s.pmf(m)).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn samples_nonnegative_and_reproducible() {
        let s = DummySampler::new(0.1, 1e-9).unwrap();
        let a: Vec<u64> = {
            let mut r = rng_from(5);
            (0..100).map(|_| s.sample(&mut r)).collect()
        };
        let b: Vec<u64> = {
            let mut r = rng_from(5);
            (0..100).map(|_| s.sample(&mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_regime_mostly_small() {
        let s = DummySampler::new(5.0, 0.49).unwrap();
        let mut r = rng_from(1);
        let small = (0..1000).filter(|_| s.sample(&mut r) <= 1).count();
        assert!(small > 950);
    }

    #[test]
    fn empirical_pmf_matches() {
        let s = DummySampler::new(0.5, 1e-3).unwrap();
        let mut r = rng_from(2);
        let n = 200_000;
        let mut hist = alloc::vec![0u64; s.support_max() as usize + 1];
        for _ in 0..n {
            let m = s.sample(&mut r) as usize;
            if m < hist.len() {
                hist[m] += 1;
            }
        }
        let tv: f64 = hist
            .iter()
            .enumerate()
            .map(|(m, &c)| (c as f64 / n as f64 - s.pmf(m as u64)).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "tv = {tv}");
    }

    #[test]
    fn dp_oracle() {
        assert!(verify_dummy_dp(0.1, 1e-9));
        assert!(!verify_dummy_dp(0.1, 0.0));
        let s = DummySampler::new(0.1, 1e-9).unwrap();
        assert!(check_dp(&s, 1.0, 1e-9));
        // one short of the required shift leaves too much mass on zero
        let short = DummySampler::with_shift(0.1, 1e-9, s.shift() - 1).unwrap();
        assert!(!check_dp(&short, 0.1, 1e-9));
    }

    #[test]
    fn threshold_survival() {
        assert!(survival_probability(1e6, 1.0, 1e-9) >= 1.0 - 1e-6);
        let p = survival_probability(1.0, 0.1, 1e-9);
        assert!(p <= 2e-9);
        assert!((p - 1e-9).abs() < 1e-15);
        let empty: BTreeMap<u8, i64> = BTreeMap::new();
        assert!(noise_and_threshold(&empty, 1.0, 1e-9, &mut rng_from(0)).unwrap().is_empty());
        let mut big = BTreeMap::new();
        big.insert("a", 1_000_000i64);
        big.insert("b", 1);
        let out = noise_and_threshold(&big, 1.0, 1e-9, &mut rng_from(0)).unwrap();
        assert!(out.contains_key("a") && !out.contains_key("b"));
    }

    #[test]
    fn laplace_is_centered() {
        let mut r = rng_from(3);
        let n = 50_000;
        let xs: Vec<f64> = (0..n).map(|_| laplace(&mut r, 2.0)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let mad = xs.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.05);
        assert!((mad - 2.0).abs() < 0.05);
    }
}
